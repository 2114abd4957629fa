//! Packet-level simulation of one server shared by a through and a cross
//! aggregate of On-Off sources.
//!
//! Each source is packetized independently (unit packets plus a fractional
//! tail per On period) and the streams are merged by timestamp. Service is
//! non-preemptive at rate `C`; within a class packets are served in arrival
//! order, so a scheduler only decides which class head goes next:
//!
//! - FIFO: earliest arrival.
//! - SP: cross traffic first.
//! - EDF: earliest `arrival + d_k*`, then earliest arrival, then through first.
//! - GPS: packetized as WFQ, smallest virtual finish tag (see [`engine`]).
//!
//! Simultaneous arrivals are ordered through first, then by sub-flow index.

mod engine;
mod stats;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

pub use engine::{EventKind, SimEvent, SimObserver};
pub use stats::{ccdf_sorted, quantile_sorted, BoxStats, DelayStats, GridBox};

use crate::error::{Result, SncError};
use crate::exec::Execution;
use crate::martingale_bounds::{martingale_constants, SchedulerSpec};
use crate::seed::rng_for;
use crate::traffic_model::Scenario;
use engine::{run, RunLimits};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Through packets considered, warm-up included.
    pub measured_packets: u64,
    /// Leading through packets discarded.
    pub warmup_packets: u64,
    pub replications: usize,
    pub delay_grid: Vec<f64>,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            measured_packets: 10_000_000,
            warmup_packets: 1_000_000,
            replications: 100,
            delay_grid: default_grid(),
            master_seed: 1,
        }
    }
}

fn default_grid() -> Vec<f64> {
    (0..=50).map(f64::from).collect()
}

impl SimConfig {
    /// 10^5 measured packets, 10^4 warm-up, 10 replications.
    pub fn desk() -> Self {
        SimConfig { measured_packets: 100_000, warmup_packets: 10_000, replications: 10, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_packets >= self.measured_packets {
            return Err(SncError::InvalidParams(format!(
                "warm-up ({}) must be below measured packets ({})",
                self.warmup_packets, self.measured_packets
            )));
        }
        if self.replications == 0 {
            return Err(SncError::InvalidParams("at least one replication required".into()));
        }
        if self.delay_grid.is_empty() {
            return Err(SncError::InvalidParams("delay grid is empty".into()));
        }
        if self.delay_grid.iter().any(|d| !(*d >= 0.0 && d.is_finite())) || self.delay_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SncError::InvalidParams("delay grid must be finite, non-negative and strictly increasing".into()));
        }
        Ok(())
    }
}

fn check_inputs(scenario: &Scenario, sched: &SchedulerSpec, cfg: &SimConfig) -> Result<()> {
    match scenario.validate() {
        Ok(()) | Err(SncError::Trivial { .. }) => {}
        Err(e) => return Err(e),
    }
    sched.validate()?;
    cfg.validate()
}

/// Runs replication `replication` and summarizes the through-flow delays.
pub fn simulate(scenario: &Scenario, sched: &SchedulerSpec, cfg: &SimConfig, replication: u64) -> Result<DelayStats> {
    check_inputs(scenario, sched, cfg)?;
    let limits = RunLimits { measured: cfg.measured_packets, warmup: cfg.warmup_packets, drain: false };
    let out = run(scenario, sched, cfg.master_seed, replication, &limits, &mut ());
    Ok(DelayStats::from_delays(out.delays, &cfg.delay_grid, out.unstable))
}

/// Like [`simulate`], but reports every event to `observer`. With `drain`,
/// arrivals stop after the last measured through packet and the server runs
/// until empty.
pub fn simulate_observed<O: SimObserver>(
    scenario: &Scenario,
    sched: &SchedulerSpec,
    cfg: &SimConfig,
    replication: u64,
    drain: bool,
    observer: &mut O,
) -> Result<DelayStats> {
    check_inputs(scenario, sched, cfg)?;
    let limits = RunLimits { measured: cfg.measured_packets, warmup: cfg.warmup_packets, drain };
    let out = run(scenario, sched, cfg.master_seed, replication, &limits, observer);
    Ok(DelayStats::from_delays(out.delays, &cfg.delay_grid, out.unstable))
}

pub fn replicate(scenario: &Scenario, sched: &SchedulerSpec, cfg: &SimConfig) -> Result<BoxStats> {
    replicate_with(scenario, sched, cfg, Execution::default())
}

pub fn replicate_with(scenario: &Scenario, sched: &SchedulerSpec, cfg: &SimConfig, exec: Execution) -> Result<BoxStats> {
    check_inputs(scenario, sched, cfg)?;
    let reps: Vec<u64> = (0..cfg.replications as u64).collect();
    let runs = exec.map(reps, |k| simulate(scenario, sched, cfg, k));
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(BoxStats::from_runs(&cfg.delay_grid, runs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte-Carlo mean of
/// `M(t) = exp(-theta (Z(t) - Z(0))) exp(gamma * int_0^t (P Z(s) - C1) ds)`
/// for the chain of the `n1` through sources started with none of them On.
pub fn martingale_mc_estimate(scenario: &Scenario, t: f64, samples: usize, seed: u64) -> Result<MartingaleEstimate> {
    martingale_mc_estimate_from(scenario, t, samples, seed, 0)
}

pub fn martingale_mc_estimate_from(
    scenario: &Scenario,
    t: f64,
    samples: usize,
    seed: u64,
    initial: usize,
) -> Result<MartingaleEstimate> {
    scenario.validate()?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(SncError::InvalidParams(format!("t must be finite and non-negative, got {t}")));
    }
    if samples < 2 {
        return Err(SncError::InvalidParams("need at least two samples".into()));
    }
    let n = scenario.n1;
    if initial > n {
        return Err(SncError::InvalidParams(format!("initial state {initial} exceeds {n} sources")));
    }
    if t == 0.0 {
        return Ok(MartingaleEstimate { mean: 1.0, stderr: 0.0 });
    }
    let mc = martingale_constants(scenario)?;
    let params = scenario.params;
    let c1 = n as f64 * scenario.per_flow_capacity;
    let mut rng = rng_for(seed, &[]);
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let mut z = initial;
        let mut now = 0.0;
        let mut integral = 0.0;
        loop {
            let up = (n - z) as f64 * params.mu;
            let down = z as f64 * params.lambda;
            let dwell = Exp::new(up + down).expect("positive total rate").sample(&mut rng);
            let drift = params.peak * z as f64 - c1;
            if now + dwell >= t {
                integral += drift * (t - now);
                break;
            }
            integral += drift * dwell;
            now += dwell;
            if rng.gen::<f64>() * (up + down) < up {
                z += 1;
            } else {
                z -= 1;
            }
        }
        let m = (-mc.theta * (z as f64 - initial as f64) + mc.gamma * integral).exp();
        sum += m;
        sum_sq += m * m;
    }
    let k = samples as f64;
    let mean = sum / k;
    let var = (sum_sq / k - mean * mean).max(0.0) * k / (k - 1.0);
    Ok(MartingaleEstimate { mean, stderr: (var / k).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traffic_model::MmooParams;

    fn small() -> SimConfig {
        SimConfig { measured_packets: 3000, warmup_packets: 300, replications: 3, delay_grid: vec![0.0, 1.0, 5.0], master_seed: 9 }
    }

    fn scenario() -> Scenario {
        Scenario::with_utilization(MmooParams::new(0.5, 0.1, 1.0).unwrap(), 5, 5, 0.75).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = small();
        c.warmup_packets = c.measured_packets;
        assert!(c.validate().is_err());
        let mut c = small();
        c.delay_grid = vec![1.0, 1.0];
        assert!(c.validate().is_err());
        let mut c = small();
        c.delay_grid.clear();
        assert!(c.validate().is_err());
        assert!(SimConfig::desk().validate().is_ok());
    }

    #[test]
    fn sample_count_excludes_warmup() {
        let s = simulate(&scenario(), &SchedulerSpec::Fifo, &small(), 0).unwrap();
        assert_eq!(s.sample_count, 2700);
        assert!(!s.unstable);
        assert!(s.ccdf.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn martingale_estimate_at_zero() {
        let e = martingale_mc_estimate(&scenario(), 0.0, 1000, 3).unwrap();
        assert_eq!((e.mean, e.stderr), (1.0, 0.0));
    }
}
