//! Event loop of the single-server packet simulator.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::martingale_bounds::SchedulerSpec;
use crate::seed::rng_for;
use crate::traffic_model::{FlowClass, PacketStream, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Arrival,
    ServiceStart,
    Departure,
}

/// One entry of the audit log. `queued` and `busy` describe the state right
/// after the event; `seq` counts packets per flow class in arrival order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub flow: FlowClass,
    pub subflow: u32,
    pub seq: u64,
    pub size: f64,
    pub delay: f64,
    pub queued: usize,
    pub busy: bool,
}

pub trait SimObserver {
    fn observe(&mut self, event: &SimEvent);
}

impl SimObserver for () {
    fn observe(&mut self, _: &SimEvent) {}
}

impl SimObserver for Vec<SimEvent> {
    fn observe(&mut self, event: &SimEvent) {
        self.push(*event);
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: f64,
    size: f64,
    flow: FlowClass,
    subflow: u32,
    stream: usize,
}

impl Pending {
    fn key(&self) -> (f64, usize, u32) {
        (self.time, self.flow.index(), self.subflow)
    }
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    }
}

#[derive(Debug, Clone, Copy)]
struct Queued {
    arrival: f64,
    size: f64,
    subflow: u32,
    seq: u64,
    /// Global arrival rank, consistent with the merge order.
    order: u64,
    /// Scheduler priority key: deadline for EDF, finish tag for WFQ.
    tag: f64,
}

/// Virtual time of the fluid GPS reference system for two flows.
///
/// `dV/dt = C / sum of phi_k over flows still backlogged in GPS`, where flow
/// `k` is backlogged while `V` is below its last assigned finish tag. Flows
/// leaving the GPS system are deleted exactly at the instant `V` reaches their
/// last tag. A packet of size `s` of flow `k` arriving at `t` gets the finish
/// tag `max(F_k, V(t)) + s / phi_k`.
struct GpsClock {
    v: f64,
    t: f64,
    last_finish: [f64; 2],
    phi: [f64; 2],
    capacity: f64,
}

impl GpsClock {
    fn new(phi1: f64, capacity: f64) -> Self {
        GpsClock { v: 0.0, t: 0.0, last_finish: [0.0; 2], phi: [phi1, 1.0 - phi1], capacity }
    }

    fn advance(&mut self, t: f64) {
        while self.t < t {
            let active: f64 = (0..2).filter(|&k| self.last_finish[k] > self.v).map(|k| self.phi[k]).sum();
            if active == 0.0 {
                self.t = t;
                return;
            }
            let rate = self.capacity / active;
            let next = (0..2)
                .filter(|&k| self.last_finish[k] > self.v)
                .map(|k| self.last_finish[k])
                .fold(f64::INFINITY, f64::min);
            let dt = (next - self.v) / rate;
            if self.t + dt >= t {
                self.v += rate * (t - self.t);
                self.t = t;
            } else {
                self.v = next;
                self.t += dt;
            }
        }
    }

    fn tag(&mut self, t: f64, flow: usize, size: f64) -> f64 {
        self.advance(t);
        let f = self.last_finish[flow].max(self.v) + size / self.phi[flow];
        self.last_finish[flow] = f;
        f
    }
}

pub(crate) struct RunLimits {
    pub measured: u64,
    pub warmup: u64,
    /// Stop admitting arrivals once `measured` through packets arrived and
    /// serve until empty.
    pub drain: bool,
}

pub(crate) struct RunOutcome {
    pub delays: Vec<f64>,
    pub unstable: bool,
}

pub(crate) fn run<O: SimObserver>(
    scenario: &Scenario,
    sched: &SchedulerSpec,
    master_seed: u64,
    replication: u64,
    limits: &RunLimits,
    observer: &mut O,
) -> RunOutcome {
    let source = scenario.params.source();
    let capacity = scenario.capacity();
    let mut streams: Vec<PacketStream<'_>> = Vec::with_capacity(scenario.n());
    for (flow, count) in [(FlowClass::Through, scenario.n1), (FlowClass::Cross, scenario.n2)] {
        for j in 0..count {
            let rng = rng_for(master_seed, &[replication, flow.index() as u64, j as u64]);
            streams.push(PacketStream::new(&source, rng, flow, j as u32));
        }
    }
    let mut heap = BinaryHeap::with_capacity(streams.len());
    for (i, s) in streams.iter_mut().enumerate() {
        if let Some(p) = s.next() {
            heap.push(Reverse(Pending { time: p.time, size: p.size, flow: p.flow, subflow: p.subflow, stream: i }));
        }
    }

    let mut gps = match *sched {
        SchedulerSpec::Gps { phi1 } => Some(GpsClock::new(phi1, capacity)),
        _ => None,
    };
    let mut queues: [VecDeque<Queued>; 2] = [VecDeque::new(), VecDeque::new()];
    let mut in_service: Option<(FlowClass, Queued)> = None;
    let mut busy_until = 0.0f64;
    let mut seqs = [0u64; 2];
    let mut order = 0u64;
    let mut backlog = 0.0f64;
    let mut through_departed = 0u64;
    let mut accepting = true;
    let mut delays = Vec::with_capacity(limits.measured.saturating_sub(limits.warmup) as usize);
    let (mid_lo, mid_hi) = (limits.measured / 3, 2 * limits.measured / 3);
    let mut mid_max = 0.0f64;

    let queued = |q: &[VecDeque<Queued>; 2]| q[0].len() + q[1].len();

    loop {
        let next_arrival = if accepting { heap.peek().map(|Reverse(p)| p.time) } else { None };
        let depart_first = match (in_service.is_some(), next_arrival) {
            (true, Some(t)) => busy_until <= t,
            (true, None) => true,
            (false, Some(_)) => false,
            (false, None) => break,
        };

        let now;
        if depart_first {
            let (flow, pkt) = in_service.take().expect("server busy");
            now = busy_until;
            backlog -= pkt.size;
            let delay = now - pkt.arrival;
            if flow == FlowClass::Through {
                if pkt.seq >= limits.warmup && pkt.seq < limits.measured {
                    delays.push(delay);
                }
                through_departed += 1;
                if through_departed > mid_lo && through_departed <= mid_hi {
                    mid_max = mid_max.max(backlog);
                }
            }
            observer.observe(&SimEvent {
                time: now,
                kind: EventKind::Departure,
                flow,
                subflow: pkt.subflow,
                seq: pkt.seq,
                size: pkt.size,
                delay,
                queued: queued(&queues),
                busy: false,
            });
            if !limits.drain && through_departed >= limits.measured {
                break;
            }
        } else {
            let Reverse(p) = heap.pop().expect("pending arrival");
            now = p.time;
            if let Some(next) = streams[p.stream].next() {
                heap.push(Reverse(Pending {
                    time: next.time,
                    size: next.size,
                    flow: next.flow,
                    subflow: next.subflow,
                    stream: p.stream,
                }));
            }
            let k = p.flow.index();
            let seq = seqs[k];
            seqs[k] += 1;
            let tag = match *sched {
                SchedulerSpec::Edf { d1_star, d2_star } => p.time + if k == 0 { d1_star } else { d2_star },
                SchedulerSpec::Gps { .. } => gps.as_mut().expect("gps clock").tag(p.time, k, p.size),
                _ => 0.0,
            };
            queues[k].push_back(Queued { arrival: p.time, size: p.size, subflow: p.subflow, seq, order, tag });
            order += 1;
            backlog += p.size;
            observer.observe(&SimEvent {
                time: now,
                kind: EventKind::Arrival,
                flow: p.flow,
                subflow: p.subflow,
                seq,
                size: p.size,
                delay: 0.0,
                queued: queued(&queues),
                busy: in_service.is_some(),
            });
            if limits.drain && p.flow == FlowClass::Through && seqs[0] >= limits.measured {
                accepting = false;
            }
        }

        if in_service.is_none() {
            if let Some(k) = select(sched, &queues) {
                let pkt = queues[k].pop_front().expect("nonempty queue");
                let flow = if k == 0 { FlowClass::Through } else { FlowClass::Cross };
                busy_until = now + pkt.size / capacity;
                in_service = Some((flow, pkt));
                observer.observe(&SimEvent {
                    time: now,
                    kind: EventKind::ServiceStart,
                    flow,
                    subflow: pkt.subflow,
                    seq: pkt.seq,
                    size: pkt.size,
                    delay: 0.0,
                    queued: queued(&queues),
                    busy: true,
                });
            }
        }
    }

    RunOutcome { delays, unstable: backlog > 10.0 * mid_max }
}

/// Which class head goes into service next.
fn select(sched: &SchedulerSpec, queues: &[VecDeque<Queued>; 2]) -> Option<usize> {
    match (queues[0].front(), queues[1].front()) {
        (None, None) => None,
        (Some(_), None) => Some(0),
        (None, Some(_)) => Some(1),
        (Some(a), Some(b)) => Some(match sched {
            SchedulerSpec::Fifo => {
                if a.order < b.order {
                    0
                } else {
                    1
                }
            }
            SchedulerSpec::Sp => 1,
            SchedulerSpec::Edf { .. } => match a.tag.total_cmp(&b.tag).then(a.arrival.total_cmp(&b.arrival)) {
                Ordering::Greater => 1,
                _ => 0,
            },
            SchedulerSpec::Gps { .. } => {
                if b.tag < a.tag {
                    1
                } else {
                    0
                }
            }
        }),
    }
}
