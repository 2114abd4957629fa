//! Markov-modulated fluid sources.
//!
//! An On-Off source ([`MmooParams`]) alternates between a silent state and a
//! state in which it emits at its peak rate; `n` independent copies lump into
//! an `(n+1)`-state birth-death chain counting the active sources. General
//! reversible fluid sources ([`MarkovFluidSource`]) carry an arbitrary
//! generator and per-state rates. Sample paths are drawn with an explicit
//! seed and can be cut into packets for the simulator.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SncError};
use crate::seed;

/// One Markov-modulated On-Off source.
///
/// `lambda` is the On→Off rate, `mu` the Off→On rate and `peak` the emission
/// rate while On.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmooParams {
    pub lambda: f64,
    pub mu: f64,
    pub peak: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmooDerived {
    /// Stationary On probability.
    pub p: f64,
    pub mean_rate: f64,
}

impl MmooParams {
    pub fn new(lambda: f64, mu: f64, peak: f64) -> Result<Self> {
        let params = MmooParams { lambda, mu, peak };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu), ("peak", self.peak)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SncError::InvalidParams(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn on_probability(&self) -> f64 {
        self.mu / (self.lambda + self.mu)
    }

    pub fn mean_rate(&self) -> f64 {
        self.on_probability() * self.peak
    }

    /// The two-state source with state 0 = Off and state 1 = On.
    pub fn source(&self) -> MarkovFluidSource {
        aggregate_source(1, *self)
    }
}

pub fn mmoo_derived(params: MmooParams) -> Result<MmooDerived> {
    params.validate()?;
    Ok(MmooDerived { p: params.on_probability(), mean_rate: params.mean_rate() })
}

/// Through/cross multiplexing scenario on a single constant-rate server.
///
/// The server rate is `C = (n1 + n2) * c` where `c` is the per-flow capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n1: usize,
    pub n2: usize,
    pub per_flow_capacity: f64,
    pub params: MmooParams,
}

impl Scenario {
    pub fn new(params: MmooParams, n1: usize, n2: usize, per_flow_capacity: f64) -> Result<Self> {
        let s = Scenario { n1, n2, per_flow_capacity, params };
        s.validate()?;
        Ok(s)
    }

    /// Builds a scenario whose per-flow capacity gives utilization `rho = pP/c`.
    pub fn with_utilization(params: MmooParams, n1: usize, n2: usize, rho: f64) -> Result<Self> {
        params.validate()?;
        if !(rho.is_finite() && rho > 0.0) {
            return Err(SncError::InvalidParams(format!("utilization must be positive, got {rho}")));
        }
        Self::new(params, n1, n2, params.mean_rate() / rho)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n1 < 1 {
            return Err(SncError::InvalidParams("n1 must be at least 1".into()));
        }
        let c = self.per_flow_capacity;
        if !(c.is_finite() && c > 0.0) {
            return Err(SncError::InvalidParams(format!("per-flow capacity must be positive, got {c}")));
        }
        let rho = self.rho();
        if rho >= 1.0 {
            return Err(SncError::Unstable { rho });
        }
        if self.params.peak <= c {
            return Err(SncError::Trivial { peak: self.params.peak, capacity: c });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn capacity(&self) -> f64 {
        self.n() as f64 * self.per_flow_capacity
    }

    pub fn c1(&self) -> f64 {
        self.n1 as f64 * self.per_flow_capacity
    }

    pub fn c2(&self) -> f64 {
        self.n2 as f64 * self.per_flow_capacity
    }

    pub fn rho(&self) -> f64 {
        self.params.mean_rate() / self.per_flow_capacity
    }

    pub fn p(&self) -> f64 {
        self.params.on_probability()
    }
}

/// On-disk scenario description. Exactly one of `rho` and
/// `per_flow_capacity` must be given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub lambda: f64,
    pub mu: f64,
    pub peak: f64,
    pub n1: usize,
    #[serde(default)]
    pub n2: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_flow_capacity: Option<f64>,
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario> {
        let params = MmooParams::new(self.lambda, self.mu, self.peak)?;
        match (self.rho, self.per_flow_capacity) {
            (Some(rho), None) => Scenario::with_utilization(params, self.n1, self.n2, rho),
            (None, Some(c)) => Scenario::new(params, self.n1, self.n2, c),
            _ => Err(SncError::InvalidParams("give exactly one of rho and per_flow_capacity".into())),
        }
    }
}

/// Generator of the lumped chain of `n` independent On-Off sources; state `i`
/// counts the sources that are On.
pub fn aggregate_generator(n: usize, params: MmooParams) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(n + 1, n + 1);
    for i in 0..=n {
        if i < n {
            q[(i, i + 1)] = (n - i) as f64 * params.mu;
        }
        if i > 0 {
            q[(i, i - 1)] = i as f64 * params.lambda;
        }
        let out: f64 = (0..=n).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
        q[(i, i)] = -out;
    }
    q
}

pub fn aggregate_source(n: usize, params: MmooParams) -> MarkovFluidSource {
    let rates = DVector::from_fn(n + 1, |i, _| i as f64 * params.peak);
    MarkovFluidSource::new(aggregate_generator(n, params), rates)
        .expect("aggregate On-Off chain is an irreducible birth-death generator")
}

fn check_generator(q: &DMatrix<f64>) -> Result<()> {
    if !q.is_square() || q.nrows() == 0 {
        return Err(SncError::InvalidParams("generator must be a non-empty square matrix".into()));
    }
    let n = q.nrows();
    let scale = q.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..n {
            let v = q[(i, j)];
            if !v.is_finite() {
                return Err(SncError::InvalidParams("generator has non-finite entries".into()));
            }
            if i != j && v < 0.0 {
                return Err(SncError::InvalidParams(format!("negative off-diagonal rate at ({i},{j})")));
            }
            sum += v;
        }
        if sum.abs() > 1e-9 * scale {
            return Err(SncError::InvalidParams(format!("row {i} sums to {sum}, not 0")));
        }
    }
    Ok(())
}

fn reachable(q: &DMatrix<f64>, transpose: bool) -> Vec<bool> {
    let n = q.nrows();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            let rate = if transpose { q[(j, i)] } else { q[(i, j)] };
            if i != j && rate > 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen
}

/// Stationary law of an irreducible generator.
///
/// Grassmann-Taksar-Heyman state reduction: only off-diagonal rates enter and
/// no subtraction occurs, so tiny probabilities keep full relative accuracy.
pub fn stationary_distribution(q: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_generator(q)?;
    let n = q.nrows();
    if !reachable(q, false).iter().all(|&s| s) || !reachable(q, true).iter().all(|&s| s) {
        return Err(SncError::Reducible("chain is not irreducible".into()));
    }
    let mut a = q.clone();
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| a[(k, j)]).sum();
        if !(s > 0.0) {
            return Err(SncError::Reducible("state reduction hit an absorbing class".into()));
        }
        for i in 0..k {
            a[(i, k)] /= s;
        }
        for i in 0..k {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            for j in 0..k {
                if i != j {
                    a[(i, j)] += aik * a[(k, j)];
                }
            }
        }
    }
    let mut pi = DVector::zeros(n);
    pi[0] = 1.0;
    for k in 1..n {
        pi[k] = (0..k).map(|i| pi[i] * a[(i, k)]).sum();
    }
    pi /= pi.sum();
    if pi.iter().any(|&v| !(v > 0.0)) {
        return Err(SncError::Reducible("stationary vector is not strictly positive".into()));
    }
    let scale = q.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let residual = (pi.transpose() * q).amax();
    if residual > 1e-12 * scale {
        return Err(SncError::Reducible(format!("balance residual {residual:e} too large")));
    }
    Ok(pi)
}

/// A fluid source modulated by a reversible continuous-time Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovFluidSource {
    generator: DMatrix<f64>,
    rates: DVector<f64>,
    stationary: DVector<f64>,
}

/// Serializable form: `{"generator": [[...]], "rates": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FluidSourceSpec {
    pub generator: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
}

impl MarkovFluidSource {
    pub fn new(generator: DMatrix<f64>, rates: DVector<f64>) -> Result<Self> {
        if rates.len() != generator.nrows() {
            return Err(SncError::InvalidParams("one rate per state is required".into()));
        }
        if rates.iter().any(|&r| !(r.is_finite() && r >= 0.0)) {
            return Err(SncError::InvalidParams("rates must be finite and non-negative".into()));
        }
        let stationary = stationary_distribution(&generator)?;
        let n = generator.nrows();
        let mut worst: f64 = 0.0;
        let mut flux_scale: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let fwd = stationary[i] * generator[(i, j)];
                let bwd = stationary[j] * generator[(j, i)];
                worst = worst.max((fwd - bwd).abs());
                flux_scale = flux_scale.max(fwd).max(bwd);
            }
        }
        if worst > 1e-9 * flux_scale.max(f64::MIN_POSITIVE) {
            return Err(SncError::NotReversible(worst));
        }
        Ok(MarkovFluidSource { generator, rates, stationary })
    }

    pub fn from_spec(spec: &FluidSourceSpec) -> Result<Self> {
        let n = spec.generator.len();
        if spec.generator.iter().any(|row| row.len() != n) {
            return Err(SncError::InvalidParams("generator rows must all have length n".into()));
        }
        let q = DMatrix::from_fn(n, n, |i, j| spec.generator[i][j]);
        Self::new(q, DVector::from_vec(spec.rates.clone()))
    }

    pub fn to_spec(&self) -> FluidSourceSpec {
        let n = self.states();
        FluidSourceSpec {
            generator: (0..n).map(|i| (0..n).map(|j| self.generator[(i, j)]).collect()).collect(),
            rates: self.rates.iter().copied().collect(),
        }
    }

    /// A source that never emits; useful as an absent cross flow.
    pub fn null(states: usize) -> Self {
        let states = states.max(1);
        let mut q = DMatrix::zeros(states, states);
        for i in 0..states {
            if states > 1 {
                let j = (i + 1) % states;
                q[(i, j)] += 1.0;
                q[(j, i)] += 1.0;
            }
        }
        for i in 0..states {
            let s: f64 = q.row(i).sum();
            q[(i, i)] = -s;
        }
        MarkovFluidSource::new(q, DVector::zeros(states)).expect("symmetric ring generator is reversible")
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn rates(&self) -> &DVector<f64> {
        &self.rates
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.stationary
    }

    pub fn states(&self) -> usize {
        self.rates.len()
    }

    pub fn mean_rate(&self) -> f64 {
        self.stationary.dot(&self.rates)
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.max()
    }

    pub fn is_null(&self) -> bool {
        self.rates.iter().all(|&r| r == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub state: usize,
    pub duration: f64,
}

/// A piecewise-constant trajectory of the modulating chain starting at time 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StatePath {
    pub segments: Vec<Segment>,
}

impl StatePath {
    pub fn horizon(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Time spent in each state.
    pub fn occupation(&self, states: usize) -> Vec<f64> {
        let mut occ = vec![0.0; states];
        for s in &self.segments {
            occ[s.state] += s.duration;
        }
        occ
    }
}

/// Endless stream of dwell segments of a chain started from its stationary law.
pub struct PathSampler<'a> {
    source: &'a MarkovFluidSource,
    rng: ChaCha8Rng,
    state: usize,
}

impl<'a> PathSampler<'a> {
    pub fn new(source: &'a MarkovFluidSource, mut rng: ChaCha8Rng) -> Self {
        let state = sample_index(&mut rng, source.stationary.iter().copied());
        PathSampler { source, rng, state }
    }

    /// Starts from a fixed state instead of the stationary law.
    pub fn from_state(source: &'a MarkovFluidSource, rng: ChaCha8Rng, state: usize) -> Self {
        PathSampler { source, rng, state }
    }
}

fn sample_index<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = i;
        if u < w {
            return i;
        }
        u -= w;
    }
    last
}

impl Iterator for PathSampler<'_> {
    type Item = Segment;

    fn next(&mut self) -> Option<Segment> {
        let q = &self.source.generator;
        let i = self.state;
        let exit = -q[(i, i)];
        if exit <= 0.0 {
            // absorbing only for a single-state chain
            return Some(Segment { state: i, duration: f64::INFINITY });
        }
        let duration = Exp::new(exit).expect("positive exit rate").sample(&mut self.rng);
        let n = self.source.states();
        let next = sample_index(&mut self.rng, (0..n).map(|j| if j == i { 0.0 } else { q[(i, j)] }));
        self.state = next;
        Some(Segment { state: i, duration })
    }
}

/// Samples a path over `[0, horizon)` starting from the stationary law.
pub fn sample_path(source: &MarkovFluidSource, horizon: f64, seed: u64) -> Result<StatePath> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(SncError::InvalidParams(format!("horizon must be positive, got {horizon}")));
    }
    let mut path = StatePath::default();
    let mut elapsed = 0.0;
    for seg in PathSampler::new(source, seed::rng_for(seed, &[])) {
        let remaining = horizon - elapsed;
        if seg.duration >= remaining {
            path.segments.push(Segment { state: seg.state, duration: remaining });
            break;
        }
        elapsed += seg.duration;
        path.segments.push(seg);
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowClass {
    Through,
    Cross,
}

impl FlowClass {
    pub fn index(self) -> usize {
        match self {
            FlowClass::Through => 0,
            FlowClass::Cross => 1,
        }
    }
}

/// A packet whose last bit arrives at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketArrival {
    pub time: f64,
    pub size: f64,
    pub flow: FlowClass,
    pub subflow: u32,
}

/// Cuts one dwell at constant `rate` into unit packets plus a fractional tail.
///
/// The k-th unit packet is stamped at `start + k/rate`; a remainder of
/// `rate*duration - floor(rate*duration)` bits is stamped at the dwell end.
/// Stamps are strictly increasing across calls sharing `last_time`.
pub(crate) fn emit_dwell(start: f64, duration: f64, rate: f64, last_time: &mut f64, mut emit: impl FnMut(f64, f64)) {
    if rate <= 0.0 || duration <= 0.0 {
        return;
    }
    let volume = rate * duration;
    let whole = volume.floor();
    let units = whole as u64;
    for k in 1..=units {
        let mut t = start + k as f64 / rate;
        if t <= *last_time {
            t = last_time.next_up();
        }
        *last_time = t;
        emit(t, 1.0);
    }
    let frac = volume - whole;
    if frac > 0.0 {
        let mut t = start + duration;
        if t <= *last_time {
            t = last_time.next_up();
        }
        *last_time = t;
        emit(t, frac);
    }
}

/// Packets emitted along `path` by a source with per-state `rates`.
pub fn packetize(path: &StatePath, rates: &[f64], flow: FlowClass, subflow: u32) -> Vec<PacketArrival> {
    let mut out = Vec::new();
    let mut start = 0.0;
    let mut last = f64::NEG_INFINITY;
    for seg in &path.segments {
        emit_dwell(start, seg.duration, rates[seg.state], &mut last, |time, size| {
            out.push(PacketArrival { time, size, flow, subflow });
        });
        start += seg.duration;
    }
    out
}

/// Lazily packetized stream of one source, starting in steady state.
pub struct PacketStream<'a> {
    sampler: PathSampler<'a>,
    rates: Vec<f64>,
    flow: FlowClass,
    subflow: u32,
    clock: f64,
    last: f64,
    pending: std::collections::VecDeque<(f64, f64)>,
}

impl<'a> PacketStream<'a> {
    pub fn new(source: &'a MarkovFluidSource, rng: ChaCha8Rng, flow: FlowClass, subflow: u32) -> Self {
        PacketStream {
            rates: source.rates.iter().copied().collect(),
            sampler: PathSampler::new(source, rng),
            flow,
            subflow,
            clock: 0.0,
            last: f64::NEG_INFINITY,
            pending: Default::default(),
        }
    }
}

impl Iterator for PacketStream<'_> {
    type Item = PacketArrival;

    fn next(&mut self) -> Option<PacketArrival> {
        while self.pending.is_empty() {
            let seg = self.sampler.next()?;
            if !seg.duration.is_finite() {
                if self.rates[seg.state] > 0.0 {
                    // constant-rate source: emit one unit at a time forever
                    let t = self.clock + 1.0 / self.rates[seg.state];
                    self.clock = t;
                    self.last = t;
                    self.pending.push_back((t, 1.0));
                    continue;
                }
                return None;
            }
            let pending = &mut self.pending;
            emit_dwell(self.clock, seg.duration, self.rates[seg.state], &mut self.last, |t, s| {
                pending.push_back((t, s))
            });
            self.clock += seg.duration;
        }
        let (time, size) = self.pending.pop_front()?;
        Some(PacketArrival { time, size, flow: self.flow, subflow: self.subflow })
    }
}
