//! Decay rates and backlog bounds for general reversible Markov fluid
//! sources.
//!
//! The decay rate of a source served at rate `C_k` comes from the generalized
//! eigenproblem `Q h = -gamma diag(u) h`, `u = r - C_k`. The relevant solution
//! is the smallest positive `gamma` whose eigenvector is positive.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SncError};
use crate::exec::Execution;
use crate::martingale_bounds::martingale_constants;
use crate::traffic_model::{aggregate_source, MarkovFluidSource, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedDecay {
    pub gamma: f64,
    /// Positive eigenvector, normalized to minimum entry 1.
    pub h: Vec<f64>,
    /// `r_j - C_k` at the capacity actually used (after any perturbation).
    pub drifts: Vec<f64>,
}

impl GeneralizedDecay {
    /// `max |Q h + gamma diag(u) h|`.
    pub fn residual(&self, src: &MarkovFluidSource) -> f64 {
        let q = src.generator();
        let n = self.h.len();
        (0..n)
            .map(|i| {
                let qh: f64 = (0..n).map(|j| q[(i, j)] * self.h[j]).sum();
                (qh + self.gamma * self.drifts[i] * self.h[i]).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitySplit {
    pub c1: f64,
    pub c2: f64,
}

impl CapacitySplit {
    /// Checks both per-class stability conditions.
    pub fn new(c1: f64, c2: f64, src1: &MarkovFluidSource, src2: &MarkovFluidSource) -> Result<Self> {
        if !(c1 >= 0.0 && c2 >= 0.0) {
            return Err(SncError::InvalidParams(format!("capacity split ({c1}, {c2}) must be non-negative")));
        }
        for (src, c) in [(src1, c1), (src2, c2)] {
            if !src.is_null() && src.mean_rate() >= c {
                return Err(SncError::UnstableSource { mean: src.mean_rate(), capacity: c });
            }
        }
        Ok(CapacitySplit { c1, c2 })
    }
}

/// Resolution of the double infimum. Refinement maps `N -> 2N+1` capacity
/// points and `M -> 2M-1` exponent points, so refined grids contain the coarse
/// ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub capacity_points: usize,
    pub gamma_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { capacity_points: 64, gamma_points: 64 }
    }
}

impl GridConfig {
    pub fn refined(self) -> Self {
        GridConfig { capacity_points: 2 * self.capacity_points + 1, gamma_points: 2 * self.gamma_points - 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralBound {
    pub value: f64,
    pub gamma: f64,
    pub split: CapacitySplit,
    pub prefactor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingleFlowVariant {
    /// Denominator is the minimum of `h` over states with nonnegative drift.
    #[default]
    Constrained,
    /// Denominator is the minimum of `h` over all states.
    Legacy,
    /// Denominator is `h` interpolated log-linearly in the rate at the level
    /// where the drift crosses zero. For aggregates of identical On-Off
    /// sources this gives exactly the closed-form prefactor `K^n`.
    LevelCrossing,
}

fn drift_scale(src: &MarkovFluidSource, capacity: f64) -> f64 {
    capacity.abs().max(src.max_rate().abs())
}

pub fn generalized_decay(src: &MarkovFluidSource, allocated_capacity: f64) -> Result<GeneralizedDecay> {
    let mean = src.mean_rate();
    if !(mean < allocated_capacity) {
        return Err(SncError::UnstableSource { mean, capacity: allocated_capacity });
    }
    if src.states() < 2 || src.max_rate() <= allocated_capacity {
        return Err(SncError::DegenerateSource(allocated_capacity));
    }
    let tol = 1e-12 * drift_scale(src, allocated_capacity);
    let has_zero = |c: f64| src.rates().iter().any(|r| (r - c).abs() <= tol);
    let mut capacity = allocated_capacity;
    if has_zero(capacity) {
        capacity += 1e-9 * allocated_capacity;
        if has_zero(capacity) {
            return Err(SncError::ZeroDriftState);
        }
    }
    let drifts: Vec<f64> = src.rates().iter().map(|r| r - capacity).collect();
    let (gamma, h) = solve_pencil(src.generator(), src.stationary(), &drifts)?;
    Ok(GeneralizedDecay { gamma, h, drifts })
}

/// Smallest positive eigenvalue of `-diag(u)^{-1} Q` with a positive
/// eigenvector, refined by Newton steps on the bordered system.
///
/// For a reversible chain the matching left eigenvector is `pi * h`; the
/// anchor state maximizes it, which keeps the reduced system well separated
/// from singular.
fn solve_pencil(q: &DMatrix<f64>, pi: &DVector<f64>, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = u.len();
    let a = DMatrix::from_fn(n, n, |i, j| -q[(i, j)] / u[i]);
    let scale = a.amax();
    let mut candidates: Vec<f64> = a
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.re > 1e-10 * scale && z.im.abs() <= 1e-6 * z.re)
        .map(|z| z.re)
        .collect();
    candidates.sort_by(f64::total_cmp);

    for gamma0 in candidates {
        let m = pencil_matrix(q, u, gamma0);
        let svd = m.clone().svd(false, true);
        let v_t = match svd.v_t {
            Some(v) => v,
            None => continue,
        };
        let k = svd.singular_values.imin();
        let mut h: DVector<f64> = v_t.row(k).transpose();
        if h.sum() < 0.0 {
            h = -h;
        }
        // entries can span many orders of magnitude; only the sign pattern is
        // trusted here and the small ones are recomputed below
        let hmax = h.amax();
        if h.iter().any(|&x| x < -1e-9 * hmax) {
            continue;
        }
        let anchor = (0..n).max_by(|&i, &j| (pi[i] * h[i]).total_cmp(&(pi[j] * h[j]))).expect("non-empty");
        let Some(h) = anchored_solve(&m, anchor) else { continue };
        let (gamma, h) = newton_polish(q, u, gamma0, h);
        if !(gamma > 0.0) || h.iter().any(|&x| !(x > 0.0)) {
            continue;
        }
        let hmin = h.min();
        return Ok((gamma, h.iter().map(|x| x / hmin).collect()));
    }
    Err(SncError::NoPositiveEigenvector)
}

/// Null vector of `m` normalized by `h[k] = 1`, from the system with row and
/// column `k` removed. `None` unless every entry is positive.
fn anchored_solve(m: &DMatrix<f64>, k: usize) -> Option<DVector<f64>> {
    let n = m.nrows();
    let keep: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    let reduced = DMatrix::from_fn(n - 1, n - 1, |i, j| m[(keep[i], keep[j])]);
    let rhs = DVector::from_fn(n - 1, |i, _| -m[(keep[i], k)]);
    let x = reduced.lu().solve(&rhs)?;
    let mut h = DVector::from_element(n, 1.0);
    for (i, &r) in keep.iter().enumerate() {
        h[r] = x[i];
    }
    h.iter().all(|&v| v > 0.0).then_some(h)
}

fn pencil_matrix(q: &DMatrix<f64>, u: &[f64], gamma: f64) -> DMatrix<f64> {
    let mut m = q.clone();
    for (i, ui) in u.iter().enumerate() {
        m[(i, i)] += gamma * ui;
    }
    m
}

/// Newton steps on `(Q + gamma diag(u)) h = 0`, `h[k] = 1`, with each `h`
/// unknown measured relative to its current value.
fn newton_polish(q: &DMatrix<f64>, u: &[f64], mut gamma: f64, h: DVector<f64>) -> (f64, DVector<f64>) {
    let n = u.len();
    let k = h.iamax();
    let mut h = &h / h[k];
    for _ in 0..10 {
        let m = pencil_matrix(q, u, gamma);
        let r = &m * &h;
        let converged = (0..n).all(|i| {
            let row: f64 = (0..n).map(|j| (m[(i, j)] * h[j]).abs()).sum();
            r[i].abs() <= 1e-15 * row
        });
        if converged {
            break;
        }
        let mut j = DMatrix::zeros(n + 1, n + 1);
        for c in 0..n {
            for i in 0..n {
                j[(i, c)] = m[(i, c)] * h[c];
            }
        }
        for i in 0..n {
            j[(i, n)] = u[i] * h[i];
        }
        j[(n, k)] = 1.0;
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(-r));
        let Some(step) = j.lu().solve(&rhs) else { break };
        for i in 0..n {
            h[i] *= 1.0 + step[i];
        }
        gamma += step[n];
    }
    (gamma, h)
}

/// Per-class decay data inside the two-flow bound. Sources that never exceed
/// their share do not constrain the exponent: `gamma = inf`, `h = 1`.
struct ClassDecay {
    gamma: f64,
    ln_h: Vec<f64>,
}

fn class_decay(src: &MarkovFluidSource, c: f64) -> Result<ClassDecay> {
    if src.is_null() || src.max_rate() <= c {
        return Ok(ClassDecay { gamma: f64::INFINITY, ln_h: vec![0.0; src.states()] });
    }
    let d = generalized_decay(src, c)?;
    Ok(ClassDecay { gamma: d.gamma, ln_h: d.h.iter().map(|x| x.ln()).collect() })
}

fn ln_weighted_mean(pi: &DVector<f64>, ln_h: &[f64], w: f64) -> f64 {
    let shift = ln_h.iter().map(|x| w * x).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = pi.iter().zip(ln_h).map(|(p, x)| p * (w * x - shift).exp()).sum();
    shift + s.ln()
}

fn capacity_grid(src1: &MarkovFluidSource, src2: &MarkovFluidSource, capacity: f64, points: usize) -> Vec<f64> {
    let lo = src1.mean_rate();
    let hi = capacity - src2.mean_rate();
    let mut grid: Vec<f64> = (1..=points).map(|j| lo + (hi - lo) * j as f64 / (points + 1) as f64).collect();
    grid.push(0.5 * (lo + hi));
    if src2.is_null() {
        grid.push(capacity);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Double infimum over capacity splits and exponents of
/// `K exp(-gamma (C1 u + sigma))`.
pub fn general_sample_path_bound(
    src1: &MarkovFluidSource,
    src2: &MarkovFluidSource,
    capacity: f64,
    u: f64,
    sigma: f64,
    grid: &GridConfig,
) -> Result<GeneralBound> {
    if grid.capacity_points == 0 || grid.gamma_points < 2 {
        return Err(SncError::InvalidParams("grid needs >= 1 capacity point and >= 2 exponent points".into()));
    }
    if !(u >= 0.0 && sigma >= 0.0) {
        return Err(SncError::InvalidParams(format!("u and sigma must be non-negative, got {u}, {sigma}")));
    }
    if !(src1.mean_rate() + src2.mean_rate() < capacity) {
        return Err(SncError::NoFeasibleSplit);
    }
    let r1 = src1.rates();
    let r2 = src2.rates();
    let tol = 1e-9 * capacity;
    let pairs: Vec<(usize, usize)> = (0..r1.len())
        .flat_map(|i| (0..r2.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| r1[i] + r2[j] - capacity >= -tol)
        .collect();
    let splits = capacity_grid(src1, src2, capacity, grid.capacity_points);
    if pairs.is_empty() {
        let c1 = splits[splits.len() / 2];
        return Ok(GeneralBound {
            value: 0.0,
            gamma: f64::INFINITY,
            split: CapacitySplit { c1, c2: capacity - c1 },
            prefactor: 0.0,
        });
    }

    let m = grid.gamma_points;
    let evaluate = |c1: f64| -> Result<(f64, f64, f64, f64)> {
        let c2 = (capacity - c1).max(0.0);
        let d1 = class_decay(src1, c1)?;
        let d2 = class_decay(src2, c2)?;
        let gmax = d1.gamma.min(d2.gamma);
        let exposure = c1 * u + sigma;
        if gmax.is_infinite() {
            let value: f64 = if exposure > 0.0 { 0.0 } else { 1.0 };
            return Ok((value.ln(), f64::INFINITY, c1, 0.0));
        }
        let mut best = (f64::INFINITY, 0.0, c1, 0.0);
        for k in 0..m {
            let gamma = gmax * k as f64 / (m - 1) as f64;
            let w1 = if d1.gamma.is_finite() { gamma / d1.gamma } else { 0.0 };
            let w2 = if d2.gamma.is_finite() { gamma / d2.gamma } else { 0.0 };
            let num = ln_weighted_mean(src1.stationary(), &d1.ln_h, w1) + ln_weighted_mean(src2.stationary(), &d2.ln_h, w2);
            let den = pairs.iter().map(|&(i, j)| w1 * d1.ln_h[i] + w2 * d2.ln_h[j]).fold(f64::INFINITY, f64::min);
            let ln_k = num - den;
            let ln_value = ln_k - gamma * exposure;
            if ln_value < best.0 {
                best = (ln_value, gamma, c1, ln_k);
            }
        }
        Ok(best)
    };

    let results = Execution::default().map(splits, evaluate);
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for r in results {
        let r = r?;
        if best.map_or(true, |b| r.0 < b.0) {
            best = Some(r);
        }
    }
    let (ln_value, gamma, c1, ln_k) = best.ok_or(SncError::NoFeasibleSplit)?;
    Ok(GeneralBound {
        value: ln_value.exp(),
        gamma,
        split: CapacitySplit { c1, c2: (capacity - c1).max(0.0) },
        prefactor: ln_k.exp(),
    })
}

pub fn single_flow_fluid_bound(src: &MarkovFluidSource, capacity: f64, sigma: f64, variant: SingleFlowVariant) -> Result<f64> {
    let mean = src.mean_rate();
    if !(mean < capacity) {
        return Err(SncError::UnstableSource { mean, capacity });
    }
    if src.max_rate() <= capacity {
        return Ok(if sigma > 0.0 { 0.0 } else { 1.0 });
    }
    let d = generalized_decay(src, capacity)?;
    let num: f64 = src.stationary().iter().zip(&d.h).map(|(p, h)| p * h).sum();
    let den = match variant {
        SingleFlowVariant::Legacy => d.h.iter().cloned().fold(f64::INFINITY, f64::min),
        SingleFlowVariant::Constrained => {
            d.h.iter().zip(&d.drifts).filter(|(_, u)| **u >= 0.0).map(|(h, _)| *h).fold(f64::INFINITY, f64::min)
        }
        SingleFlowVariant::LevelCrossing => level_crossing_height(src.rates().as_slice(), &d.h, capacity),
    };
    Ok(num / den * (-d.gamma * sigma).exp())
}

fn level_crossing_height(rates: &[f64], h: &[f64], capacity: f64) -> f64 {
    let mut levels: Vec<(f64, f64)> = Vec::new();
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]));
    let tol = 1e-12 * rates.iter().fold(capacity.abs(), |m, r| m.max(r.abs()));
    for i in order {
        match levels.last_mut() {
            Some((r, hmin)) if (rates[i] - *r).abs() <= tol => *hmin = hmin.min(h[i]),
            _ => levels.push((rates[i], h[i])),
        }
    }
    let above = levels.iter().position(|(r, _)| *r >= capacity).expect("some rate exceeds capacity");
    if above == 0 {
        return levels[0].1;
    }
    let (r0, h0) = levels[above - 1];
    let (r1, h1) = levels[above];
    let t = (capacity - r0) / (r1 - r0);
    (h0.ln() + t * (h1.ln() - h0.ln())).exp()
}

/// Largest eigenvalue of `Q + theta diag(r)`, divided by `theta`.
///
/// Computed on the symmetrized matrix `D (Q + theta R) D^{-1}`,
/// `D = diag(sqrt(pi))`, which is symmetric for reversible chains.
pub fn fluid_effective_bandwidth(theta: f64, src: &MarkovFluidSource) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(SncError::NonPositiveTheta(theta));
    }
    let q = src.generator();
    let pi = src.stationary();
    let n = src.states();
    let s = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            q[(i, i)] + theta * src.rates()[i]
        } else {
            let a = (pi[i] / pi[j]).sqrt() * q[(i, j)];
            let b = (pi[j] / pi[i]).sqrt() * q[(j, i)];
            0.5 * (a + b)
        }
    });
    let zeta = SymmetricEigen::new(s).eigenvalues.max();
    Ok(zeta / theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub n: usize,
    pub gamma_general: f64,
    pub gamma_closed: f64,
    pub gamma_delta: f64,
    /// Level-crossing prefactor of the aggregate chain.
    pub prefactor: f64,
    pub k_pow_n: f64,
    pub prefactor_rel_error: f64,
    /// Constrained prefactor, for reference; equals `K^n` when `C/P` is an integer.
    pub constrained_prefactor: f64,
}

impl ConsistencyReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.gamma_delta <= tol * self.gamma_closed && self.prefactor_rel_error <= tol
    }
}

/// Compares the eigenproblem route on the `n`-fold aggregate chain against
/// the closed-form constants.
pub fn mmoo_consistency_check(scenario: &Scenario) -> Result<ConsistencyReport> {
    scenario.validate()?;
    let closed = martingale_constants(scenario)?;
    let n = scenario.n();
    let src = aggregate_source(n, scenario.params);
    let capacity = scenario.capacity();
    let decay = generalized_decay(&src, capacity)?;
    let prefactor = single_flow_fluid_bound(&src, capacity, 0.0, SingleFlowVariant::LevelCrossing)?;
    let constrained_prefactor = single_flow_fluid_bound(&src, capacity, 0.0, SingleFlowVariant::Constrained)?;
    let k_pow_n = closed.k.powi(n as i32);
    Ok(ConsistencyReport {
        n,
        gamma_general: decay.gamma,
        gamma_closed: closed.gamma,
        gamma_delta: (decay.gamma - closed.gamma).abs(),
        prefactor,
        k_pow_n,
        prefactor_rel_error: (prefactor - k_pow_n).abs() / k_pow_n,
        constrained_prefactor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::standard_bounds::effective_bandwidth;
    use crate::traffic_model::MmooParams;
    use approx::assert_relative_eq;

    fn base() -> MmooParams {
        MmooParams::new(0.5, 0.1, 1.0).unwrap()
    }

    #[test]
    fn two_state_decay_matches_closed_form() {
        let d = generalized_decay(&base().source(), 2.0 / 9.0).unwrap();
        assert_relative_eq!(d.gamma, 0.15 / (7.0 / 9.0), max_relative = 1e-12);
        assert_eq!(d.h.iter().cloned().fold(f64::INFINITY, f64::min), 1.0);
        assert!(d.residual(&base().source()) <= 1e-10 * d.h.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn aggregate_decay_is_per_flow() {
        let src = aggregate_source(5, base());
        let d = generalized_decay(&src, 5.0 * 2.0 / 9.0).unwrap();
        assert_relative_eq!(d.gamma, 0.15 / (7.0 / 9.0), max_relative = 1e-10);
    }

    #[test]
    fn degenerate_and_unstable_sources_rejected() {
        let constant = MarkovFluidSource::new(DMatrix::zeros(1, 1), DVector::from_element(1, 0.5)).unwrap();
        assert!(matches!(generalized_decay(&constant, 1.0), Err(SncError::DegenerateSource(_))));
        assert!(matches!(generalized_decay(&base().source(), 0.1), Err(SncError::UnstableSource { .. })));
        assert!(matches!(generalized_decay(&base().source(), 1.0), Err(SncError::DegenerateSource(_))));
    }

    #[test]
    fn zero_drift_state_is_perturbed() {
        // nine sources at capacity 2: the state with two sources on has zero drift
        let src = aggregate_source(9, base());
        let d = generalized_decay(&src, 2.0).unwrap();
        assert!(d.drifts.iter().all(|u| u.abs() > 1e-12));
        assert_relative_eq!(d.gamma, 0.15 / (7.0 / 9.0), max_relative = 1e-8);
    }

    #[test]
    fn fluid_eb_matches_two_state_formula() {
        for theta in [1e-3, 0.1, 0.5, 2.0, 10.0] {
            let a = fluid_effective_bandwidth(theta, &base().source()).unwrap();
            let b = effective_bandwidth(theta, base()).unwrap().r_theta;
            assert!((a - b).abs() <= 1e-10, "theta {theta}: {a} vs {b}");
        }
        let small = fluid_effective_bandwidth(1e-7, &base().source()).unwrap();
        assert_relative_eq!(small, 1.0 / 6.0, max_relative = 1e-6);
        assert!(fluid_effective_bandwidth(0.0, &base().source()).is_err());
    }

    #[test]
    fn alpha_at_gamma_is_capacity() {
        let src = aggregate_source(4, base());
        let c = 4.0 * 5.0 / 27.0;
        let d = generalized_decay(&src, c).unwrap();
        assert_relative_eq!(fluid_effective_bandwidth(d.gamma, &src).unwrap(), c, max_relative = 1e-9);
    }

    #[test]
    fn single_flow_variants() {
        let src = aggregate_source(10, base());
        let cap = 10.0 * 2.0 / 9.0;
        let k10 = martingale_constants(&Scenario::with_utilization(base(), 10, 0, 0.75).unwrap()).unwrap().k.powi(10);
        let lc = single_flow_fluid_bound(&src, cap, 0.0, SingleFlowVariant::LevelCrossing).unwrap();
        let con = single_flow_fluid_bound(&src, cap, 0.0, SingleFlowVariant::Constrained).unwrap();
        let leg = single_flow_fluid_bound(&src, cap, 0.0, SingleFlowVariant::Legacy).unwrap();
        assert_relative_eq!(lc, k10, max_relative = 1e-9);
        assert!(con <= k10 && con <= 1.0);
        assert!(leg >= con);
        let far = single_flow_fluid_bound(&src, cap, 30.0, SingleFlowVariant::Constrained).unwrap();
        assert_relative_eq!(far, con * (-30.0 * 0.15 / (7.0 / 9.0) as f64).exp(), max_relative = 1e-9);
    }

    #[test]
    fn consistency_report() {
        let r = mmoo_consistency_check(&Scenario::with_utilization(base(), 10, 0, 0.75).unwrap()).unwrap();
        assert!(r.passed(1e-8), "{r:?}");
        let r = mmoo_consistency_check(&Scenario::with_utilization(base(), 20, 0, 0.9).unwrap()).unwrap();
        assert!(r.passed(1e-8), "{r:?}");
        let r = mmoo_consistency_check(&Scenario::with_utilization(base(), 1, 0, 0.75).unwrap()).unwrap();
        assert!(r.passed(1e-8), "{r:?}");
    }

    #[test]
    fn null_cross_flow_reduces_to_single_flow() {
        let src1 = aggregate_source(5, base());
        let null = MarkovFluidSource::null(1);
        let cap = 5.0 * 2.0 / 9.0;
        let sigma = 40.0;
        let g = general_sample_path_bound(&src1, &null, cap, 0.0, sigma, &GridConfig::default()).unwrap();
        let s = single_flow_fluid_bound(&src1, cap, sigma, SingleFlowVariant::Constrained).unwrap();
        assert!(g.value <= s * (1.0 + 1e-12));
        assert_relative_eq!(g.value, s, max_relative = 1e-9);
        assert_eq!(g.split.c1, cap);
    }

    #[test]
    fn two_flow_matches_closed_form_at_integer_capacity() {
        // n1 = n2 = 9 at utilization 0.75 gives C = 4
        let src = aggregate_source(9, base());
        let cap = 18.0 * 2.0 / 9.0;
        let sigma = 5.0 * cap;
        let g = general_sample_path_bound(&src, &src, cap, 0.0, sigma, &GridConfig::default()).unwrap();
        let mc = martingale_constants(&Scenario::with_utilization(base(), 9, 9, 0.75).unwrap()).unwrap();
        let closed = mc.k.powi(18) * (-mc.gamma * sigma).exp();
        assert_relative_eq!(g.value, closed, max_relative = 1e-6);
    }

    #[test]
    fn two_flow_at_most_closed_form() {
        let src = aggregate_source(5, base());
        let cap = 10.0 * 2.0 / 9.0;
        let sigma = 5.0 * cap;
        let g = general_sample_path_bound(&src, &src, cap, 0.0, sigma, &GridConfig::default()).unwrap();
        let mc = martingale_constants(&Scenario::with_utilization(base(), 5, 5, 0.75).unwrap()).unwrap();
        assert!(g.value <= mc.k.powi(10) * (-mc.gamma * sigma).exp() * (1.0 + 1e-9));
    }

    #[test]
    fn refinement_never_increases_bound() {
        let src1 = aggregate_source(3, base());
        let src2 = aggregate_source(4, base());
        let cap = 7.0 * 0.21;
        let coarse = GridConfig { capacity_points: 8, gamma_points: 8 };
        let a = general_sample_path_bound(&src1, &src2, cap, 1.0, 2.0, &coarse).unwrap();
        let b = general_sample_path_bound(&src1, &src2, cap, 1.0, 2.0, &coarse.refined()).unwrap();
        assert!(b.value <= a.value);
    }

    #[test]
    fn infeasible_split_rejected() {
        let src = aggregate_source(5, base());
        let r = general_sample_path_bound(&src, &src, 1.5, 0.0, 1.0, &GridConfig::default());
        assert!(matches!(r, Err(SncError::NoFeasibleSplit)));
    }
}
