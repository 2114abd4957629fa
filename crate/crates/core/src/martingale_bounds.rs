//! Martingale delay bounds for homogeneous On-Off aggregates.
//!
//! All bounds derive from one sample-path inequality: for the through and
//! cross aggregates sharing a server of rate `C`,
//!
//! ```text
//! P( sup_s { A1(s, t-u) + A2(s, t) - C(t-s) } > sigma ) <= K^n exp(-gamma (C1 u + sigma))
//! ```
//!
//! with `K = rho ((rho-p)/(1-p))^(p/rho - 1)` and
//! `gamma = (lambda+mu)(1-rho)/(P-c)`. Each scheduler picks `u` and `sigma`.
//! Values are returned raw, so they may exceed one.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SncError};
use crate::traffic_model::{MmooParams, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleConstants {
    /// Prefactor base, in (0, 1).
    pub k: f64,
    /// Decay rate per bit.
    pub gamma: f64,
    /// Exponential twist of the modulating chain, negative under stability.
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SchedulerSpec {
    Fifo,
    /// Static priority with the cross flow served first.
    Sp,
    /// Earliest deadline first with relative deadlines for through and cross data.
    Edf { d1_star: f64, d2_star: f64 },
    /// Generalized processor sharing; the cross weight is `1 - phi1`.
    Gps { phi1: f64 },
}

impl SchedulerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SchedulerSpec::Edf { d1_star, d2_star } => {
                if !(d1_star >= 0.0 && d2_star >= 0.0 && d1_star.is_finite() && d2_star.is_finite()) {
                    return Err(SncError::InvalidParams("EDF deadlines must be finite and non-negative".into()));
                }
            }
            SchedulerSpec::Gps { phi1 } => {
                if !(phi1 > 0.0 && phi1 < 1.0) {
                    return Err(SncError::InvalidParams(format!("GPS weight phi1 must lie in (0,1), got {phi1}")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            SchedulerSpec::Fifo => "fifo",
            SchedulerSpec::Sp => "sp",
            SchedulerSpec::Edf { .. } => "edf",
            SchedulerSpec::Gps { .. } => "gps",
        }
    }
}

/// Which flow count raises `K` in bounds that reduce the sample-path inequality
/// to the through flow alone (GPS, and the second EDF term when the through
/// deadline is shorter).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExponentMode {
    /// `K^n` with `n = n1 + n2`, as the closed forms are usually printed.
    #[default]
    Total,
    /// `K^n1`, the count left after removing the cross aggregate.
    Through,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MartingaleOptions {
    pub reduced_exponent: ExponentMode,
}

/// A bound evaluated at one delay.
///
/// For single-term bounds `value == prefactor * exp(-decay_rate * d)`. For the
/// two-term EDF bound the prefactor is the effective one, `value * exp(decay_rate * d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBound {
    pub value: f64,
    pub decay_rate: f64,
    pub prefactor: f64,
    /// The decay parameter used: `gamma` here, the optimizing `theta` for standard bounds.
    pub achieving_parameter: f64,
}

/// Constants of the sample-path bound for a source served at per-flow capacity `c`.
pub(crate) fn constants_for(params: MmooParams, c: f64) -> Result<MartingaleConstants> {
    params.validate()?;
    let p = params.on_probability();
    let rho = params.mean_rate() / c;
    if !(rho < 1.0) {
        return Err(SncError::Unstable { rho });
    }
    if params.peak <= c {
        return Err(SncError::Trivial { peak: params.peak, capacity: c });
    }
    let k = rho * ((rho - p) / (1.0 - p)).powf(p / rho - 1.0);
    let gamma = (params.lambda + params.mu) * (1.0 - rho) / (params.peak - c);
    let theta = ((params.mu / params.lambda) * (params.peak - c) / c).ln();
    Ok(MartingaleConstants { k, gamma, theta })
}

pub fn martingale_constants(scenario: &Scenario) -> Result<MartingaleConstants> {
    constants_for(scenario.params, scenario.per_flow_capacity)
}

/// `K^n exp(-gamma (C1 u + sigma))`.
pub fn martingale_sample_path_bound(scenario: &Scenario, u: f64, sigma: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(SncError::InvalidParams(format!("u must be non-negative, got {u}")));
    }
    let mc = martingale_constants(scenario)?;
    Ok(mc.k.powi(scenario.n() as i32) * (-mc.gamma * (scenario.c1() * u + sigma)).exp())
}

fn check_delay(d: f64) -> Result<()> {
    if d >= 0.0 && d.is_finite() {
        Ok(())
    } else {
        Err(SncError::InvalidParams(format!("delay must be finite and non-negative, got {d}")))
    }
}

fn exponent(mode: ExponentMode, scenario: &Scenario) -> i32 {
    match mode {
        ExponentMode::Total => scenario.n() as i32,
        ExponentMode::Through => scenario.n1 as i32,
    }
}

/// GPS-instantiated constants: the through flow alone on a share `phi1 C`.
fn gps_constants(scenario: &Scenario, phi1: f64) -> Result<MartingaleConstants> {
    let share = phi1 * scenario.capacity();
    let c_gps = share / scenario.n1 as f64;
    let rho = scenario.params.mean_rate() / c_gps;
    if !(rho < 1.0) {
        return Err(SncError::GpsUnstable { rho });
    }
    constants_for(scenario.params, c_gps)
}

pub fn martingale_delay_bound(scenario: &Scenario, sched: &SchedulerSpec, d: f64) -> Result<DelayBound> {
    martingale_delay_bound_with(scenario, sched, d, MartingaleOptions::default())
}

pub fn martingale_delay_bound_with(
    scenario: &Scenario,
    sched: &SchedulerSpec,
    d: f64,
    opts: MartingaleOptions,
) -> Result<DelayBound> {
    check_delay(d)?;
    sched.validate()?;
    let n = scenario.n() as i32;
    let cap = scenario.capacity();
    // log-domain prefactors: the EDF one can overflow while the bound itself is tiny
    let single = |ln_pre: f64, rate: f64, gamma: f64| DelayBound {
        value: (ln_pre - rate * d).exp(),
        decay_rate: rate,
        prefactor: ln_pre.exp(),
        achieving_parameter: gamma,
    };
    match *sched {
        SchedulerSpec::Fifo => {
            let mc = martingale_constants(scenario)?;
            Ok(single(n as f64 * mc.k.ln(), mc.gamma * cap, mc.gamma))
        }
        SchedulerSpec::Sp => {
            let mc = martingale_constants(scenario)?;
            Ok(single(n as f64 * mc.k.ln(), mc.gamma * scenario.c1(), mc.gamma))
        }
        SchedulerSpec::Edf { d1_star, d2_star } => {
            let mc = martingale_constants(scenario)?;
            let y = d1_star - d2_star;
            if y >= 0.0 {
                let ln_pre = n as f64 * mc.k.ln() + mc.gamma * scenario.c2() * y.min(d);
                return Ok(single(ln_pre, mc.gamma * cap, mc.gamma));
            }
            let first_pre = mc.k.powi(n) * (mc.gamma * scenario.c2() * y).exp();
            let first_rate = mc.gamma * cap;
            // through flow alone at the full rate C
            let c_alone = cap / scenario.n1 as f64;
            let (second_pre, second_rate) = if scenario.params.peak <= c_alone {
                (0.0, f64::INFINITY)
            } else {
                let alone = constants_for(scenario.params, c_alone)?;
                (alone.k.powi(exponent(opts.reduced_exponent, scenario)), alone.gamma * cap)
            };
            let rate = first_rate.min(second_rate);
            let term = |pre: f64, r: f64| if pre == 0.0 { 0.0 } else { pre * (-(r - rate) * d).exp() };
            let prefactor = term(first_pre, first_rate) + term(second_pre, second_rate);
            Ok(DelayBound { value: prefactor * (-rate * d).exp(), decay_rate: rate, prefactor, achieving_parameter: mc.gamma })
        }
        SchedulerSpec::Gps { phi1 } => {
            let mc = gps_constants(scenario, phi1)?;
            let ln_pre = exponent(opts.reduced_exponent, scenario) as f64 * mc.k.ln();
            Ok(single(ln_pre, mc.gamma * phi1 * cap, mc.gamma))
        }
    }
}

/// Asymptotic decay rate in `d` of the martingale bound.
pub fn martingale_decay_rate(scenario: &Scenario, sched: &SchedulerSpec) -> Result<f64> {
    sched.validate()?;
    match *sched {
        SchedulerSpec::Fifo | SchedulerSpec::Edf { .. } => {
            let mc = martingale_constants(scenario)?;
            Ok(mc.gamma * scenario.capacity())
        }
        SchedulerSpec::Sp => {
            let mc = martingale_constants(scenario)?;
            Ok(mc.gamma * scenario.c1())
        }
        SchedulerSpec::Gps { phi1 } => {
            let mc = gps_constants(scenario, phi1)?;
            Ok(mc.gamma * phi1 * scenario.capacity())
        }
    }
}
