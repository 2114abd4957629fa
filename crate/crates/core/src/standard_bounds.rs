//! Standard (union-bound) delay bounds built on the effective bandwidth of
//! an On-Off source.
//!
//! The MGF of one source is dominated by `exp(theta r_theta t)`, where
//! `r_theta` is the effective bandwidth. Each bound is an infimum over the
//! feasible exponents `{theta : c > r_theta}`, which is the open interval
//! `(0, theta_max)` with `r_{theta_max} = c`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SncError};
use crate::martingale_bounds::SchedulerSpec;
use crate::traffic_model::{MmooParams, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveBandwidthEval {
    pub theta: f64,
    /// Dominant rate (the effective bandwidth).
    pub r_theta: f64,
    /// Subdominant rate.
    pub r_prime_theta: f64,
    pub w: f64,
    pub w_prime: f64,
}

/// Both roots of `theta r^2 + b r - mu P = 0`, computed without cancellation.
fn eb_roots(params: &MmooParams, theta: f64) -> (f64, f64) {
    let MmooParams { lambda, mu, peak } = *params;
    let b = lambda + mu - theta * peak;
    let sq = (b * b + 4.0 * mu * theta * peak).sqrt();
    if b > 0.0 {
        let r = 2.0 * mu * peak / (sq + b);
        let r_prime = -(b + sq) / (2.0 * theta);
        (r, r_prime)
    } else {
        let r = (sq - b) / (2.0 * theta);
        let r_prime = -2.0 * mu * peak / (sq - b);
        (r, r_prime)
    }
}

pub(crate) fn eb_rate(params: &MmooParams, theta: f64) -> f64 {
    eb_roots(params, theta).0
}

pub fn effective_bandwidth(theta: f64, params: MmooParams) -> Result<EffectiveBandwidthEval> {
    params.validate()?;
    if !(theta > 0.0) {
        return Err(SncError::NonPositiveTheta(theta));
    }
    let (r, rp) = eb_roots(&params, theta);
    let MmooParams { lambda, mu, peak } = params;
    let denom = (r - rp) * (lambda + mu);
    let w_prime = (lambda * r + mu * (r - peak)) / denom;
    let w = (-lambda * rp + mu * (peak - rp)) / denom;
    Ok(EffectiveBandwidthEval { theta, r_theta: r, r_prime_theta: rp, w, w_prime })
}

/// Solves `r_theta = c` by bisection on the increasing map `theta -> r_theta`.
pub fn solve_eb_equation(params: MmooParams, c: f64) -> Result<f64> {
    params.validate()?;
    let mean = params.mean_rate();
    if !(c > mean && c < params.peak) {
        return Err(SncError::OutOfRange { c, mean, peak: params.peak });
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while eb_rate(&params, hi) < c {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(SncError::OutOfRange { c, mean, peak: params.peak });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eb_rate(&params, mid) < c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lo_err = if lo > 0.0 { (eb_rate(&params, lo) - c).abs() } else { f64::INFINITY };
    let hi_err = (eb_rate(&params, hi) - c).abs();
    Ok(if lo_err < hi_err { lo } else { hi })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardTerm {
    pub value: f64,
    pub theta_star: f64,
    pub prefactor: f64,
}

/// An optimized standard bound. Two-term bounds list both terms; the top-level
/// `theta_star` and `prefactor` then refer to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardBoundResult {
    pub value: f64,
    pub theta_star: f64,
    /// The prefactor `L` at the optimizer.
    pub prefactor: f64,
    pub terms: Vec<StandardTerm>,
}

impl StandardBoundResult {
    fn single(term: StandardTerm) -> Self {
        StandardBoundResult { value: term.value, theta_star: term.theta_star, prefactor: term.prefactor, terms: vec![term] }
    }
}

const PRESCAN_POINTS: usize = 256;

/// Minimizes `f` over `(0, upper)`.
///
/// A 256-point pre-scan, log-spaced towards both ends of the interval, picks a
/// bracket; golden-section search refines it. The pre-scan minimum is kept if
/// the refinement does not improve on it (multimodal objectives). Returns the
/// minimizer and minimum.
pub(crate) fn minimize_on_interval(upper: f64, f: impl Fn(f64) -> f64) -> Option<(f64, f64)> {
    let eps = 1e-9 * upper;
    let half = PRESCAN_POINTS / 2;
    let mut grid = Vec::with_capacity(PRESCAN_POINTS);
    let (la, lb) = (eps.ln(), (0.5 * upper).ln());
    for i in 0..half {
        grid.push((la + (lb - la) * i as f64 / (half - 1) as f64).exp());
    }
    // the lower half ends at the midpoint; the upper half stops short of it
    for i in (0..half).rev() {
        grid.push(upper - (la + (lb - la) * i as f64 / half as f64).exp());
    }
    grid.dedup_by(|a, b| *a <= *b * (1.0 + 1e-12));

    let values: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
    let (best, &best_val) = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))?;

    let mut a = if best == 0 { eps } else { grid[best - 1] };
    let mut b = if best + 1 == grid.len() { upper - eps } else { grid[best + 1] };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (b - a) <= 1e-15 * b.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    let (x, fx) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if fx.is_finite() && fx <= best_val {
        Some((x, fx))
    } else {
        Some((grid[best], best_val))
    }
}

/// Minimizes `ln L(theta) + exponent(theta)` over `(0, theta_max)` where
/// `L = cap_share * e^{with_e} / (cap_share - flows * r_theta)`.
fn optimize_term(
    params: &MmooParams,
    theta_max: f64,
    cap_share: f64,
    flows: f64,
    with_e: bool,
    exponent: impl Fn(f64, f64) -> f64,
) -> Result<StandardTerm> {
    let ln_num = cap_share.ln() + if with_e { 1.0 } else { 0.0 };
    let objective = |theta: f64| {
        let r = eb_rate(params, theta);
        let slack = cap_share - flows * r;
        if slack <= 0.0 {
            return f64::INFINITY;
        }
        ln_num - slack.ln() + exponent(theta, r)
    };
    let (theta, log_value) = minimize_on_interval(theta_max, objective).ok_or(SncError::OptimizationFailure)?;
    let r = eb_rate(params, theta);
    let prefactor = (ln_num - (cap_share - flows * r).ln()).exp();
    Ok(StandardTerm { value: log_value.exp(), theta_star: theta, prefactor })
}

/// The feasible exponent range `(0, theta_max)` for per-flow share `c`, or
/// `None` when every exponent is feasible (`c >= P`).
fn feasible_upper(params: &MmooParams, c: f64) -> Result<Option<f64>> {
    if c >= params.peak {
        return Ok(None);
    }
    solve_eb_equation(*params, c).map(Some)
}

/// Infimum over the feasible exponents of
/// `L exp(-theta (C - n2 r_theta) u) exp(-theta sigma)`, `L = ce/(c - r_theta)`.
pub fn standard_sample_path_bound(scenario: &Scenario, u: f64, sigma: f64) -> Result<StandardBoundResult> {
    scenario.validate()?;
    if !(u >= 0.0) {
        return Err(SncError::InvalidParams(format!("u must be non-negative, got {u}")));
    }
    let params = scenario.params;
    let c = scenario.per_flow_capacity;
    let cap = scenario.capacity();
    let n2 = scenario.n2 as f64;
    let upper = solve_eb_equation(params, c)?;
    let term = optimize_term(&params, upper, c, 1.0, true, |theta, r| -theta * (cap - n2 * r) * u - theta * sigma)?;
    Ok(StandardBoundResult::single(term))
}

pub fn standard_delay_bound(scenario: &Scenario, sched: &SchedulerSpec, d: f64) -> Result<StandardBoundResult> {
    scenario.validate()?;
    sched.validate()?;
    if !(d >= 0.0 && d.is_finite()) {
        return Err(SncError::InvalidParams(format!("delay must be finite and non-negative, got {d}")));
    }
    let params = scenario.params;
    let c = scenario.per_flow_capacity;
    let cap = scenario.capacity();
    let n1 = scenario.n1 as f64;
    let n2 = scenario.n2 as f64;
    match *sched {
        SchedulerSpec::Fifo => {
            let upper = solve_eb_equation(params, c)?;
            let t = optimize_term(&params, upper, c, 1.0, true, |theta, _| -theta * cap * d)?;
            Ok(StandardBoundResult::single(t))
        }
        SchedulerSpec::Sp => {
            let upper = solve_eb_equation(params, c)?;
            let t = optimize_term(&params, upper, c, 1.0, true, |theta, r| -theta * (cap - n2 * r) * d)?;
            Ok(StandardBoundResult::single(t))
        }
        SchedulerSpec::Edf { d1_star, d2_star } => {
            let y = d1_star - d2_star;
            let upper = solve_eb_equation(params, c)?;
            if y >= 0.0 {
                let m = y.min(d);
                let t = optimize_term(&params, upper, c, 1.0, true, |theta, r| theta * n2 * r * m - theta * cap * d)?;
                return Ok(StandardBoundResult::single(t));
            }
            let first =
                optimize_term(&params, upper, c, 1.0, true, |theta, r| theta * (cap - n1 * r) * y - theta * cap * d)?;
            let c_alone = cap / n1;
            let second = match feasible_upper(&params, c_alone)? {
                Some(upper2) => optimize_term(&params, upper2, c_alone, 1.0, true, |theta, _| -theta * cap * d)?,
                None if d > 0.0 => StandardTerm { value: 0.0, theta_star: f64::INFINITY, prefactor: 1.0 },
                None => {
                    let l = c_alone * std::f64::consts::E / (c_alone - params.mean_rate());
                    StandardTerm { value: l, theta_star: 0.0, prefactor: l }
                }
            };
            Ok(StandardBoundResult {
                value: first.value + second.value,
                theta_star: first.theta_star,
                prefactor: first.prefactor,
                terms: vec![first, second],
            })
        }
        SchedulerSpec::Gps { phi1 } => {
            let share = phi1 * cap;
            let per_flow = share / n1;
            if per_flow <= params.mean_rate() {
                return Err(SncError::GpsInfeasible);
            }
            match feasible_upper(&params, per_flow)? {
                Some(upper) => {
                    let t = optimize_term(&params, upper, share, n1, false, |theta, _| -theta * share * d)?;
                    Ok(StandardBoundResult::single(t))
                }
                None if d > 0.0 => {
                    Ok(StandardBoundResult::single(StandardTerm { value: 0.0, theta_star: f64::INFINITY, prefactor: 1.0 }))
                }
                None => {
                    let l = share / (share - n1 * params.mean_rate());
                    Ok(StandardBoundResult::single(StandardTerm { value: l, theta_star: 0.0, prefactor: l }))
                }
            }
        }
    }
}

/// Asymptotic decay rate in `d` of the optimized standard bound.
///
/// FIFO and EDF decay at `theta* C`, GPS at `theta* phi1 C`, where `theta*`
/// solves the effective-bandwidth equation for the relevant share. SP decays
/// at `sup_{theta <= theta*} theta (C - n2 r_theta)`.
pub fn standard_decay_rate(scenario: &Scenario, sched: &SchedulerSpec) -> Result<f64> {
    scenario.validate()?;
    sched.validate()?;
    let params = scenario.params;
    let cap = scenario.capacity();
    match *sched {
        SchedulerSpec::Fifo | SchedulerSpec::Edf { .. } => Ok(solve_eb_equation(params, scenario.per_flow_capacity)? * cap),
        SchedulerSpec::Sp => {
            let upper = solve_eb_equation(params, scenario.per_flow_capacity)?;
            let n2 = scenario.n2 as f64;
            let rate = |theta: f64| theta * (cap - n2 * eb_rate(&params, theta));
            let (_, neg) = minimize_on_interval(upper, |t| -rate(t)).ok_or(SncError::OptimizationFailure)?;
            Ok((-neg).max(rate(upper)))
        }
        SchedulerSpec::Gps { phi1 } => {
            let share = phi1 * cap;
            let per_flow = share / scenario.n1 as f64;
            if per_flow <= params.mean_rate() {
                return Err(SncError::GpsInfeasible);
            }
            match feasible_upper(&params, per_flow)? {
                Some(theta) => Ok(theta * share),
                None => Ok(f64::INFINITY),
            }
        }
    }
}
