use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use snc_core::analysis::{
    admission_max_flows, compare_experiment, scaling_experiment, verify, write_rows_csv, AdmissionQuery,
    BoundMethod, ExperimentSpec, PalmMode, SUITES,
};
use snc_core::queue_sim::{replicate, SimConfig};
use snc_core::traffic_model::ScenarioFile;
use snc_core::{MmooParams, Scenario, SchedulerSpec};

#[derive(Parser)]
#[command(name = "snc", version, about = "Delay bounds and simulation for multiplexed On-Off traffic")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Martingale and Standard bounds over a delay grid.
    Bound {
        #[command(flatten)]
        common: Common,
    },
    /// Simulated through-flow delay CCDF, summarized over replications.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Bounds next to simulation box statistics.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Bounds as the number of flows grows at fixed per-flow capacity.
    Scaling {
        #[command(flatten)]
        common: Common,
        /// Comma-separated, increasing flow counts.
        #[arg(long, value_delimiter = ',', default_value = "10,20,50,100,200,500,1000")]
        ns: Vec<usize>,
    },
    /// Largest even number of flows meeting a delay target.
    Admission {
        #[command(flatten)]
        common: Common,
        /// Server capacity C.
        #[arg(long)]
        capacity: f64,
        /// Violation probability.
        #[arg(long)]
        epsilon: f64,
        #[arg(long, value_enum, default_value_t = MethodArg::Martingale)]
        method: MethodArg,
    },
    /// Runs a named property suite; `all` runs every suite.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON scenario file; replaces the traffic and flow-count flags.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    peak: f64,
    /// Utilization pP/c.
    #[arg(long, conflicts_with = "per_flow_capacity")]
    rho: Option<f64>,
    #[arg(long)]
    per_flow_capacity: Option<f64>,
    #[arg(long, default_value_t = 5)]
    n1: usize,
    #[arg(long, default_value_t = 5)]
    n2: usize,
    #[arg(long, value_enum, default_value_t = SchedArg::Fifo)]
    scheduler: SchedArg,
    /// EDF relative deadline of the through flow.
    #[arg(long)]
    d1: Option<f64>,
    /// EDF relative deadline of the cross flow.
    #[arg(long)]
    d2: Option<f64>,
    /// GPS weight of the through flow.
    #[arg(long, default_value_t = 0.5)]
    phi1: f64,
    /// A value, a comma list, or start:stop:step.
    #[arg(long, default_value = "0:50:1")]
    d: String,
    #[arg(long, value_enum, default_value_t = PalmArg::Total)]
    palm: PalmArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Through packets per replication, warm-up included.
    #[arg(long, default_value_t = 100_000)]
    packets: u64,
    #[arg(long, default_value_t = 10_000)]
    warmup: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchedArg {
    Fifo,
    Sp,
    Edf,
    Gps,
}

#[derive(Clone, Copy, ValueEnum)]
enum PalmArg {
    Total,
    Through,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Martingale,
    Standard,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        if let Some(path) = &self.scenario {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let spec: ScenarioFile = serde_json::from_reader(file).context("parsing scenario file")?;
            return Ok(spec.into_scenario()?);
        }
        let params = MmooParams::new(self.lambda, self.mu, self.peak)?;
        Ok(match (self.rho, self.per_flow_capacity) {
            (_, Some(c)) => Scenario::new(params, self.n1, self.n2, c)?,
            (rho, None) => Scenario::with_utilization(params, self.n1, self.n2, rho.unwrap_or(0.75))?,
        })
    }

    fn params(&self) -> Result<MmooParams> {
        if self.scenario.is_some() {
            return Ok(self.scenario()?.params);
        }
        Ok(MmooParams::new(self.lambda, self.mu, self.peak)?)
    }

    fn scheduler(&self) -> Result<SchedulerSpec> {
        let s = match self.scheduler {
            SchedArg::Fifo => SchedulerSpec::Fifo,
            SchedArg::Sp => SchedulerSpec::Sp,
            SchedArg::Edf => match (self.d1, self.d2) {
                (Some(d1_star), Some(d2_star)) => SchedulerSpec::Edf { d1_star, d2_star },
                _ => bail!("--scheduler edf needs --d1 and --d2"),
            },
            SchedArg::Gps => SchedulerSpec::Gps { phi1: self.phi1 },
        };
        s.validate()?;
        Ok(s)
    }

    fn palm(&self) -> PalmMode {
        match self.palm {
            PalmArg::Total => PalmMode::Total,
            PalmArg::Through => PalmMode::Through,
        }
    }

    fn grid(&self) -> Result<Vec<f64>> {
        parse_grid(&self.d)
    }

    fn single_d(&self) -> Result<f64> {
        match self.grid()?.as_slice() {
            [d] => Ok(*d),
            _ => bail!("--d must be a single value here"),
        }
    }
}

impl SimArgs {
    fn config(&self, grid: Vec<f64>) -> SimConfig {
        SimConfig {
            measured_packets: self.packets,
            warmup_packets: self.warmup,
            replications: self.reps,
            delay_grid: grid,
            master_seed: self.seed,
        }
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let s = s.trim();
    if let [a, b, step] = s.split(':').collect::<Vec<_>>().as_slice() {
        let (a, b, step): (f64, f64, f64) = (a.parse()?, b.parse()?, step.parse()?);
        if !(step > 0.0) || b < a {
            bail!("grid needs start <= stop and a positive step");
        }
        let count = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=count).map(|i| a + i as f64 * step).collect());
    }
    let grid = s.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>()?;
    if grid.is_empty() {
        bail!("empty delay grid");
    }
    Ok(grid)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit<T: Serialize>(rows: &[T], format: Format, out: &Option<PathBuf>) -> Result<()> {
    let mut w = sink(out)?;
    match format {
        Format::Csv => write_rows_csv(rows, &mut w)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Bound { common } => {
            let spec = ExperimentSpec {
                scenario: common.scenario()?,
                scheduler: common.scheduler()?,
                delay_grid: common.grid()?,
                sim: None,
                palm: common.palm(),
                output: common.out.clone(),
            };
            emit(&compare_experiment(&spec)?.rows, common.format, &common.out)?;
        }
        Command::Simulate { common, sim } => {
            let scenario = common.scenario()?;
            let cfg = sim.config(common.grid()?);
            let stats = replicate(&scenario, &common.scheduler()?, &cfg)?;
            if stats.unstable_replications > 0 {
                eprintln!("warning: {} replication(s) flagged unstable", stats.unstable_replications);
            }
            let mut w = sink(&common.out)?;
            match common.format {
                Format::Csv => stats.write_csv(&mut w)?,
                Format::Json => {
                    serde_json::to_writer_pretty(&mut w, &stats)?;
                    writeln!(w)?;
                }
            }
            w.flush()?;
        }
        Command::Compare { common, sim } => {
            let grid = common.grid()?;
            let spec = ExperimentSpec {
                scenario: common.scenario()?,
                scheduler: common.scheduler()?,
                sim: Some(sim.config(grid.clone())),
                delay_grid: grid,
                palm: common.palm(),
                output: common.out.clone(),
            };
            let result = compare_experiment(&spec)?;
            if let Some(b) = &result.sim {
                if b.unstable_replications > 0 {
                    eprintln!("warning: {} replication(s) flagged unstable", b.unstable_replications);
                }
            }
            emit(&result.rows, common.format, &common.out)?;
        }
        Command::Scaling { common, ns } => {
            let report = scaling_experiment(&common.scenario()?, &ns, common.single_d()?, &common.scheduler()?)?;
            eprintln!("fitted slope {:.6e}, -ln K {:.6e}", report.slope, report.neg_log_k);
            match common.format {
                Format::Csv => emit(&report.rows, Format::Csv, &common.out)?,
                Format::Json => {
                    let mut w = sink(&common.out)?;
                    serde_json::to_writer_pretty(&mut w, &report)?;
                    writeln!(w)?;
                    w.flush()?;
                }
            }
        }
        Command::Admission { common, capacity, epsilon, method } => {
            let q = AdmissionQuery {
                params: common.params()?,
                capacity,
                d: common.single_d()?,
                epsilon,
                scheduler: common.scheduler()?,
                method: match method {
                    MethodArg::Martingale => BoundMethod::Martingale,
                    MethodArg::Standard => BoundMethod::Standard,
                },
                palm: common.palm(),
            };
            emit(&[admission_max_flows(&q)?], common.format, &common.out)?;
        }
        Command::Verify { suite, format, out } => {
            let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite.as_str()] };
            let mut reports = Vec::new();
            for name in names {
                reports.push(verify(name)?);
            }
            let ok = reports.iter().all(|r| r.passed());
            match format {
                Format::Json => emit(&reports, Format::Json, &out)?,
                Format::Csv => {
                    #[derive(Serialize)]
                    struct Line<'a> {
                        suite: &'a str,
                        check: &'a str,
                        passed: bool,
                        detail: &'a str,
                    }
                    let lines: Vec<Line> = reports
                        .iter()
                        .flat_map(|r| {
                            r.checks.iter().map(|c| Line { suite: &r.suite, check: &c.name, passed: c.passed, detail: &c.detail })
                        })
                        .collect();
                    emit(&lines, Format::Csv, &out)?;
                }
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::parse_grid;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("5").unwrap(), vec![5.0]);
        assert_eq!(parse_grid("1, 2,4").unwrap(), vec![1.0, 2.0, 4.0]);
        assert_eq!(parse_grid("0:2:0.5").unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(parse_grid("3:1:1").is_err());
        assert!(parse_grid("x").is_err());
    }
}
