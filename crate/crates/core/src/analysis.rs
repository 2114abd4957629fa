//! Experiment harness: bound-vs-simulation tables, many-sources scaling,
//! admission control and named verification suites.

use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SncError};
use crate::exec::Execution;
use crate::general_bounds::{fluid_effective_bandwidth, generalized_decay, mmoo_consistency_check};
use crate::martingale_bounds::{martingale_constants, martingale_delay_bound, SchedulerSpec};
use crate::queue_sim::{replicate_with, BoxStats, SimConfig};
use crate::standard_bounds::{solve_eb_equation, standard_delay_bound};
use crate::traffic_model::{aggregate_source, MmooParams, Scenario};

/// Which flow count enters the packet-delay correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PalmMode {
    /// `1/(1-(1-p)^n)` with all `n` flows.
    #[default]
    Total,
    /// `1/(1-(1-p)^{n1})`, conditioning on through-flow arrivals only.
    Through,
}

/// Factor turning a virtual-delay bound into a packet-delay bound.
pub fn palm_prefactor(scenario: &Scenario, mode: PalmMode) -> f64 {
    let n = match mode {
        PalmMode::Total => scenario.n(),
        PalmMode::Through => scenario.n1,
    };
    1.0 / (1.0 - (1.0 - scenario.p()).powi(n as i32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub scheduler: SchedulerSpec,
    pub delay_grid: Vec<f64>,
    /// Bounds only when absent.
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub palm: PalmMode,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.scheduler.validate()?;
        if self.delay_grid.is_empty() {
            return Err(SncError::InvalidParams("delay grid is empty".into()));
        }
        if self.delay_grid.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(SncError::InvalidParams("delays must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// One line of the comparison table. Bound columns include the Palm factor;
/// `*_disp` columns are clamped to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub scheduler: String,
    pub n1: usize,
    pub n2: usize,
    pub rho: f64,
    pub d: f64,
    pub martingale_raw: f64,
    pub martingale_disp: f64,
    pub standard_raw: Option<f64>,
    pub standard_disp: Option<f64>,
    pub theta_star: Option<f64>,
    pub sim_median: Option<f64>,
    pub sim_q25: Option<f64>,
    pub sim_q75: Option<f64>,
    pub sim_n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOutput {
    pub rows: Vec<CompareRow>,
    pub sim: Option<BoxStats>,
}

pub fn compare_experiment(spec: &ExperimentSpec) -> Result<CompareOutput> {
    compare_experiment_with(spec, Execution::default())
}

pub fn compare_experiment_with(spec: &ExperimentSpec, exec: Execution) -> Result<CompareOutput> {
    spec.validate()?;
    let s = &spec.scenario;
    let palm = palm_prefactor(s, spec.palm);
    let sim = match &spec.sim {
        Some(cfg) => {
            let cfg = SimConfig { delay_grid: spec.delay_grid.clone(), ..cfg.clone() };
            Some(replicate_with(s, &spec.scheduler, &cfg, exec)?)
        }
        None => None,
    };
    let mut rows = Vec::with_capacity(spec.delay_grid.len());
    for (i, &d) in spec.delay_grid.iter().enumerate() {
        let m = martingale_delay_bound(s, &spec.scheduler, d)?.value * palm;
        let st = match standard_delay_bound(s, &spec.scheduler, d) {
            Ok(r) => Some(r),
            Err(SncError::GpsInfeasible) => None,
            Err(e) => return Err(e),
        };
        let b = sim.as_ref().map(|b| &b.boxes[i]);
        rows.push(CompareRow {
            scheduler: spec.scheduler.name().to_string(),
            n1: s.n1,
            n2: s.n2,
            rho: s.rho(),
            d,
            martingale_raw: m,
            martingale_disp: m.min(1.0),
            standard_raw: st.as_ref().map(|r| r.value * palm),
            standard_disp: st.as_ref().map(|r| (r.value * palm).min(1.0)),
            theta_star: st.as_ref().map(|r| r.theta_star),
            sim_median: b.map(|b| b.median),
            sim_q25: b.map(|b| b.q25),
            sim_q75: b.map(|b| b.q75),
            sim_n: sim.as_ref().map(|b| b.sample_count),
        });
    }
    Ok(CompareOutput { rows, sim })
}

pub fn write_rows_csv<W: Write, T: Serialize>(rows: &[T], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub martingale: f64,
    pub standard: f64,
    /// `ln(standard / martingale)`.
    pub log_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `log_ratio` against `n`.
    pub slope: f64,
    /// `-ln K` of the per-flow constants, the asymptotic slope.
    pub neg_log_k: f64,
}

/// Scales the flow count at fixed per-flow capacity, with `n1 = ceil(n/2)`.
pub fn scaling_experiment(template: &Scenario, ns: &[usize], d: f64, sched: &SchedulerSpec) -> Result<ScalingReport> {
    template.validate()?;
    if ns.is_empty() || ns.iter().any(|&n| n == 0) || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SncError::InvalidParams("flow counts must be positive and strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let n1 = n.div_ceil(2);
        let s = Scenario::new(template.params, n1, n - n1, template.per_flow_capacity)?;
        let m = martingale_delay_bound(&s, sched, d)?.value;
        let st = standard_delay_bound(&s, sched, d)?.value;
        rows.push(ScalingRow { n, n1, n2: n - n1, martingale: m, standard: st, log_ratio: st.ln() - m.ln() });
    }
    let slope = ols_slope(&rows.iter().map(|r| (r.n as f64, r.log_ratio)).collect::<Vec<_>>());
    let neg_log_k = -martingale_constants(template)?.k.ln();
    Ok(ScalingReport { rows, slope, neg_log_k })
}

fn ols_slope(points: &[(f64, f64)]) -> f64 {
    let k = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMethod {
    #[default]
    Martingale,
    Standard,
}

/// Admission query with the mix rule `n1 = n2 = n/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionQuery {
    pub params: MmooParams,
    pub capacity: f64,
    pub d: f64,
    pub epsilon: f64,
    pub scheduler: SchedulerSpec,
    pub method: BoundMethod,
    #[serde(default)]
    pub palm: PalmMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissionResult {
    pub n_max: usize,
    /// `n_max p P / C`.
    pub utilization: f64,
    /// Largest even `n` with `n p P < C`.
    pub stability_cap: usize,
}

impl AdmissionQuery {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.scheduler.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(SncError::InvalidParams(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.d >= 0.0 && self.d.is_finite()) {
            return Err(SncError::InvalidParams(format!("delay must be non-negative, got {}", self.d)));
        }
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return Err(SncError::InvalidParams(format!("capacity must be positive, got {}", self.capacity)));
        }
        Ok(())
    }

    /// Palm-corrected bound for `n` flows split evenly, clamped to 1.
    fn violation_bound(&self, n: usize) -> Result<f64> {
        let s = Scenario { n1: n / 2, n2: n / 2, per_flow_capacity: self.capacity / n as f64, params: self.params };
        let raw = match s.validate() {
            Err(SncError::Trivial { .. }) => return Ok(0.0),
            Err(e) => return Err(e),
            Ok(()) => match self.method {
                BoundMethod::Martingale => martingale_delay_bound(&s, &self.scheduler, self.d)?.value,
                BoundMethod::Standard => match standard_delay_bound(&s, &self.scheduler, self.d) {
                    Ok(r) => r.value,
                    Err(SncError::GpsInfeasible) => f64::INFINITY,
                    Err(e) => return Err(e),
                },
            },
        };
        Ok((raw * palm_prefactor(&s, self.palm)).min(1.0))
    }

    fn admits(&self, n: usize) -> Result<bool> {
        Ok(self.violation_bound(n)? <= self.epsilon)
    }
}

/// Largest admissible even flow count, by binary search over the stable range.
/// An `epsilon` of 1 or more is vacuous and admits the stability cap.
pub fn admission_max_flows(q: &AdmissionQuery) -> Result<AdmissionResult> {
    let vacuous = q.epsilon >= 1.0;
    if !vacuous {
        q.validate()?;
    } else {
        q.params.validate()?;
    }
    let mean = q.params.mean_rate();
    let mut cap_pairs = (q.capacity / mean / 2.0).floor() as usize;
    while cap_pairs > 0 && 2.0 * cap_pairs as f64 * mean >= q.capacity {
        cap_pairs -= 1;
    }
    let stability_cap = 2 * cap_pairs;
    let result = |pairs: usize| AdmissionResult {
        n_max: 2 * pairs,
        utilization: 2.0 * pairs as f64 * mean / q.capacity,
        stability_cap,
    };
    if vacuous || cap_pairs == 0 {
        return Ok(result(cap_pairs));
    }
    if !q.admits(2)? {
        return Ok(result(0));
    }
    let (mut lo, mut hi) = (1usize, cap_pairs);
    if q.admits(2 * hi)? {
        return Ok(result(hi));
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if q.admits(2 * mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(result(lo))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub suite: String,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const SUITES: &[&str] = &["theta-star-equals-gamma", "mmoo-consistency", "reductions", "alpha-gamma", "bound-ordering"];

fn base_params() -> MmooParams {
    MmooParams { lambda: 0.5, mu: 0.1, peak: 1.0 }
}

pub fn verify(suite: &str) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let mut check = |name: String, passed: bool, detail: String| checks.push(CheckResult { name, passed, detail });
    match suite {
        "theta-star-equals-gamma" => {
            for rho in [0.5, 0.75, 0.9, 0.99] {
                let s = Scenario::with_utilization(base_params(), 5, 5, rho)?;
                let theta = solve_eb_equation(s.params, s.per_flow_capacity)?;
                let gamma = martingale_constants(&s)?.gamma;
                let delta = (theta - gamma).abs();
                check(format!("rho={rho}"), delta <= 1e-8, format!("theta*={theta:.12} gamma={gamma:.12} delta={delta:.2e}"));
            }
        }
        "mmoo-consistency" => {
            for (rho, n) in [(0.75, 1), (0.75, 10), (0.9, 20)] {
                let s = Scenario::with_utilization(base_params(), n, 0, rho)?;
                let r = mmoo_consistency_check(&s)?;
                check(
                    format!("rho={rho} n={n}"),
                    r.passed(1e-8),
                    format!("gamma delta={:.2e} prefactor rel err={:.2e}", r.gamma_delta, r.prefactor_rel_error),
                );
            }
        }
        "reductions" => {
            for rho in [0.6, 0.75, 0.9] {
                let alone = Scenario::with_utilization(base_params(), 6, 0, rho)?;
                let mixed = Scenario::with_utilization(base_params(), 4, 4, rho)?;
                let edf = SchedulerSpec::Edf { d1_star: 3.0, d2_star: 3.0 };
                for d in [0.0, 2.0, 10.0] {
                    let pairs = [
                        ("martingale sp/fifo", martingale_delay_bound(&alone, &SchedulerSpec::Sp, d)?.value, martingale_delay_bound(&alone, &SchedulerSpec::Fifo, d)?.value),
                        ("martingale edf/fifo", martingale_delay_bound(&mixed, &edf, d)?.value, martingale_delay_bound(&mixed, &SchedulerSpec::Fifo, d)?.value),
                        ("standard sp/fifo", standard_delay_bound(&alone, &SchedulerSpec::Sp, d)?.value, standard_delay_bound(&alone, &SchedulerSpec::Fifo, d)?.value),
                        ("standard edf/fifo", standard_delay_bound(&mixed, &edf, d)?.value, standard_delay_bound(&mixed, &SchedulerSpec::Fifo, d)?.value),
                    ];
                    for (what, a, b) in pairs {
                        let rel = (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
                        check(format!("{what} rho={rho} d={d}"), rel <= 1e-12, format!("{a:e} vs {b:e}"));
                    }
                }
            }
        }
        "alpha-gamma" => {
            for (n, rho) in [(1, 0.75), (3, 0.9), (6, 0.5)] {
                let src = aggregate_source(n, base_params());
                let c = n as f64 * base_params().mean_rate() / rho;
                let d = generalized_decay(&src, c)?;
                let alpha = fluid_effective_bandwidth(d.gamma, &src)?;
                check(format!("n={n} rho={rho}"), (alpha - c).abs() <= 1e-6 * c, format!("alpha={alpha:.12} C={c:.12}"));
            }
        }
        "bound-ordering" => {
            let s = Scenario::with_utilization(base_params(), 5, 5, 0.75)?;
            for d in [0.0, 1.0, 5.0, 20.0, 50.0] {
                let m = martingale_delay_bound(&s, &SchedulerSpec::Fifo, d)?.value;
                let st = standard_delay_bound(&s, &SchedulerSpec::Fifo, d)?.value;
                check(format!("fifo d={d}"), st > m, format!("standard={st:e} martingale={m:e}"));
            }
        }
        other => return Err(SncError::UnknownSuite(other.to_string())),
    }
    Ok(VerifyReport { suite: suite.to_string(), checks })
}
