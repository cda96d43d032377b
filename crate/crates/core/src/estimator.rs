//! Pairwise slot-counting identification of presynaptic neurons.
//!
//! The observation window is cut into slots `(m*delta, (m+1)*delta]`. For a
//! target `i` and candidate `j`:
//!
//! * on the 2-slot grid, block `k` has `a_k = 1` when `i` spikes in slot
//!   `2k-2`, and `b_k = 1` when additionally `i` spikes in slot `2k-1`;
//! * on the 3-slot grid, `c_k = 1` when `i` spikes in slot `3k-3` and `j` in
//!   slot `3k-2`, and `d_k = 1` when additionally `i` spikes in slot `3k-1`.
//!
//! `R` estimates `P(B)/P(A)` and `G` estimates `P(D)/P(C)`; both are frozen
//! as soon as their denominator count reaches `m_n`. A large positive
//! `G - R` marks `j` as excitatory onto `i`, a large negative one as
//! inhibitory.
//!
//! Indicator sequences are stored sparsely (the 1-based block indices where
//! the indicator is 1), so memory scales with the number of spikes rather
//! than the number of slots.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{failure_bounds, FailureBounds};
use crate::model::{thresholds, DerivedConstants, ModelError, NeuronId, Regime, ThresholdPair};
use crate::simulator::SpikeRecording;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("horizon {horizon} is shorter than one 3-slot block ({needed})")]
    HorizonTooShort { horizon: f64, needed: f64 },
    #[error("a pair needs two distinct neurons, got {0} twice")]
    SamePair(NeuronId),
    #[error("slot length must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("slot length {delta} gives alpha*delta = {ad} > 1; the 2-slot budget would exceed the horizon")]
    SlotTooLong { delta: f64, ad: f64 },
    #[error("no rate bounds available for external data; pass a config or --alpha, --beta, --rate-gap and --in-degree")]
    NoBoundsProvided,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Slot index `m` with `m*delta < t <= (m+1)*delta`, boundaries evaluated
/// as `(m as f64) * delta`.
pub fn slot_index(t: f64, delta: f64) -> u64 {
    let mut m = ((t / delta).ceil() as u64).saturating_sub(1);
    while m > 0 && t <= m as f64 * delta {
        m -= 1;
    }
    while t > (m + 1) as f64 * delta {
        m += 1;
    }
    m
}

/// Number of whole blocks of `width` slots inside `(0, horizon]`.
pub fn whole_blocks(horizon: f64, delta: f64, width: u64) -> u64 {
    let mut k = (horizon / (width as f64 * delta)).floor().max(0.0) as u64;
    while k > 0 && (width * k) as f64 * delta > horizon {
        k -= 1;
    }
    while (width * (k + 1)) as f64 * delta <= horizon {
        k += 1;
    }
    k
}

/// Sorted, deduplicated slot indices holding at least one spike.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OccupiedSlots(Vec<u64>);

impl OccupiedSlots {
    pub fn from_times(times: &[f64], delta: f64) -> Self {
        let mut slots: Vec<u64> = times.iter().map(|&t| slot_index(t, delta)).collect();
        // Times are increasing so slots already are; dedup handles repeats.
        slots.dedup();
        Self(slots)
    }

    #[inline]
    pub fn contains(&self, m: u64) -> bool {
        self.0.binary_search(&m).is_ok()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }
}

/// Block indicators of one ordered pair `from -> to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotStatistics {
    pub delta: f64,
    /// Blocks on the 2-slot grid.
    pub t_max: u64,
    /// Blocks on the 3-slot grid.
    pub n: u64,
    pub a: Vec<u64>,
    pub b: Vec<u64>,
    pub c: Vec<u64>,
    pub d: Vec<u64>,
}

fn running_sum(ones: &[u64], upto: u64) -> u64 {
    ones.partition_point(|&k| k <= upto) as u64
}

fn dense(ones: &[u64], len: u64) -> Vec<u8> {
    let mut v = vec![0u8; len as usize];
    for &k in ones {
        v[(k - 1) as usize] = 1;
    }
    v
}

fn sparse(bits: &[u8]) -> Vec<u64> {
    bits.iter()
        .enumerate()
        .filter(|(_, &b)| b != 0)
        .map(|(k, _)| k as u64 + 1)
        .collect()
}

impl SlotStatistics {
    /// Builds statistics from dense 0/1 sequences (`a`, `b` on the 2-slot
    /// grid, `c`, `d` on the 3-slot grid).
    pub fn from_dense(delta: f64, a: &[u8], b: &[u8], c: &[u8], d: &[u8]) -> Self {
        Self {
            delta,
            t_max: a.len() as u64,
            n: c.len() as u64,
            a: sparse(a),
            b: sparse(b),
            c: sparse(c),
            d: sparse(d),
        }
    }

    pub fn sum_a(&self, upto: u64) -> u64 {
        running_sum(&self.a, upto)
    }
    pub fn sum_b(&self, upto: u64) -> u64 {
        running_sum(&self.b, upto)
    }
    pub fn sum_c(&self, upto: u64) -> u64 {
        running_sum(&self.c, upto)
    }
    pub fn sum_d(&self, upto: u64) -> u64 {
        running_sum(&self.d, upto)
    }

    /// First block at which the A count reaches `m` (`K_m`).
    pub fn k_m(&self, m: u64) -> Option<u64> {
        m.checked_sub(1)
            .and_then(|i| self.a.get(i as usize).copied())
    }

    /// First block at which the C count reaches `m` (`H_m`).
    pub fn h_m(&self, m: u64) -> Option<u64> {
        m.checked_sub(1)
            .and_then(|i| self.c.get(i as usize).copied())
    }

    pub fn dense_a(&self) -> Vec<u8> {
        dense(&self.a, self.t_max)
    }
    pub fn dense_b(&self) -> Vec<u8> {
        dense(&self.b, self.t_max)
    }
    pub fn dense_c(&self) -> Vec<u8> {
        dense(&self.c, self.n)
    }
    pub fn dense_d(&self) -> Vec<u8> {
        dense(&self.d, self.n)
    }
}

/// Forward-only membership test over a sorted slot list.
struct Cursor<'a> {
    slots: &'a [u64],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(slots: &'a OccupiedSlots) -> Self {
        Self {
            slots: slots.as_slice(),
            pos: 0,
        }
    }

    /// Whether `m` is occupied; queries must be nondecreasing.
    #[inline]
    fn has(&mut self, m: u64) -> bool {
        while self.pos < self.slots.len() && self.slots[self.pos] < m {
            self.pos += 1;
        }
        self.slots.get(self.pos) == Some(&m)
    }
}

fn indicators(
    target: &OccupiedSlots,
    source: &OccupiedSlots,
    delta: f64,
    t_max: u64,
    n: u64,
) -> SlotStatistics {
    let (mut a, mut b, mut c, mut d) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut ahead = Cursor::new(target);
    let mut src = Cursor::new(source);
    for &m in target.as_slice() {
        if m % 2 == 0 {
            let k = m / 2 + 1;
            if k <= t_max {
                a.push(k);
                if ahead.has(m + 1) {
                    b.push(k);
                }
            }
        }
        if m % 3 == 0 {
            let k = m / 3 + 1;
            if k <= n && src.has(m + 1) {
                c.push(k);
                if ahead.has(m + 2) {
                    d.push(k);
                }
            }
        }
    }
    SlotStatistics {
        delta,
        t_max,
        n,
        a,
        b,
        c,
        d,
    }
}

/// Indicators for the pair `j -> i` at slot length `delta`.
pub fn slot_events(
    rec: &SpikeRecording,
    i: NeuronId,
    j: NeuronId,
    delta: f64,
) -> Result<SlotStatistics, EstimateError> {
    if i == j {
        return Err(EstimateError::SamePair(i));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(EstimateError::InvalidDelta(delta));
    }
    let n = whole_blocks(rec.horizon(), delta, 3);
    if n == 0 {
        return Err(EstimateError::HorizonTooShort {
            horizon: rec.horizon(),
            needed: 3.0 * delta,
        });
    }
    let t_max = whole_blocks(rec.horizon(), delta, 2);
    let target = OccupiedSlots::from_times(rec.train(i), delta);
    let source = OccupiedSlots::from_times(rec.train(j), delta);
    Ok(indicators(&target, &source, delta, t_max, n))
}

/// Block budget `n`, A-stream budget `t_n` and stopping level `m_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub n: u64,
    pub t_n: u64,
    pub m_n: u64,
}

/// `t_n = ceil(alpha*delta*n)`,
/// `m_n = ceil(19/20 * alpha^2 delta^2 (1 - tau/10 * sqrt(alpha*delta)) n)`.
pub fn schedule_from(n: u64, alpha: f64, tau: f64, delta: f64) -> Schedule {
    let ad = alpha * delta;
    let nf = n as f64;
    let t_n = (ad * nf).ceil() as u64;
    let m_n = (0.95 * ad * ad * (1.0 - tau / 10.0 * ad.sqrt()) * nf).ceil() as u64;
    Schedule {
        n,
        t_n: t_n.max(1),
        m_n: m_n.max(1),
    }
}

pub fn schedule(
    n: u64,
    constants: &DerivedConstants,
    delta: f64,
) -> Result<Schedule, EstimateError> {
    let tau = constants.tau.ok_or(ModelError::NoEdgesDeclared)?;
    Ok(schedule_from(n, constants.alpha, tau, delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioStatus {
    /// Denominator reached `m_n` within budget.
    Stopped,
    /// Budget exhausted first; plain ratio over the budget.
    Fallback,
    /// No denominator events at all.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub value: f64,
    pub numerator: u64,
    pub denominator: u64,
    /// `K_{m_n}` or `H_{m_n}` when reached within budget.
    pub stopped_at: Option<u64>,
    pub status: RatioStatus,
}

impl RatioEstimate {
    pub fn sufficient(&self) -> bool {
        self.status == RatioStatus::Stopped
    }
}

fn stopped_ratio(
    stop: Option<u64>,
    budget: u64,
    m: u64,
    numerator_upto: impl Fn(u64) -> u64,
    denominator_upto: impl Fn(u64) -> u64,
) -> RatioEstimate {
    match stop {
        Some(k) if k <= budget => {
            let num = numerator_upto(k);
            RatioEstimate {
                value: num as f64 / m as f64,
                numerator: num,
                denominator: m,
                stopped_at: Some(k),
                status: RatioStatus::Stopped,
            }
        }
        _ => {
            let den = denominator_upto(budget);
            let num = numerator_upto(budget);
            if den == 0 {
                RatioEstimate {
                    value: 0.0,
                    numerator: 0,
                    denominator: 0,
                    stopped_at: None,
                    status: RatioStatus::Degenerate,
                }
            } else {
                RatioEstimate {
                    value: num as f64 / den as f64,
                    numerator: num,
                    denominator: den,
                    stopped_at: None,
                    status: RatioStatus::Fallback,
                }
            }
        }
    }
}

/// Stopped estimator of `P(B)/P(A)` with budget `t_n` blocks.
pub fn ratio_r(stats: &SlotStatistics, sched: &Schedule) -> RatioEstimate {
    let budget = sched.t_n.min(stats.t_max);
    stopped_ratio(
        stats.k_m(sched.m_n),
        budget,
        sched.m_n,
        |k| stats.sum_b(k),
        |k| stats.sum_a(k),
    )
}

/// Stopped estimator of `P(D)/P(C)` with budget `n` blocks.
pub fn ratio_g(stats: &SlotStatistics, sched: &Schedule) -> RatioEstimate {
    let budget = sched.n.min(stats.n);
    stopped_ratio(
        stats.h_m(sched.m_n),
        budget,
        sched.m_n,
        |k| stats.sum_d(k),
        |k| stats.sum_c(k),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Excitatory,
    Inhibitory,
    Absent,
    InsufficientData,
}

/// Threshold rule on `G - R`: `<= -xi1` inhibitory, `>= xi2` excitatory,
/// absent in between. A degenerate denominator on either side yields
/// insufficient data.
pub fn classify_pair(r: &RatioEstimate, g: &RatioEstimate, th: &ThresholdPair) -> Decision {
    if r.status == RatioStatus::Degenerate || g.status == RatioStatus::Degenerate {
        return Decision::InsufficientData;
    }
    classify_difference(g.value - r.value, th)
}

pub fn classify_difference(diff: f64, th: &ThresholdPair) -> Decision {
    if diff <= -th.xi1 {
        Decision::Inhibitory
    } else if diff >= th.xi2 {
        Decision::Excitatory
    } else {
        Decision::Absent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsSource {
    /// Computed from a known network.
    Derived,
    /// Supplied by the user for external data.
    UserAsserted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Slot length; defaults to `delta_star`.
    pub delta: Option<f64>,
    /// Permit `delta > delta_star`.
    pub heuristic: bool,
    pub bounds_source: BoundsSource,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            delta: None,
            heuristic: false,
            bounds_source: BoundsSource::Derived,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub from: NeuronId,
    pub to: NeuronId,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "G")]
    pub g: f64,
    pub diff: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub decision: Decision,
    /// Both ratios stopped at `m_n`.
    pub sufficient: bool,
    pub r_status: RatioStatus,
    pub g_status: RatioStatus,
    pub r_denominator: u64,
    pub g_denominator: u64,
    pub m_n: u64,
    pub t_n: u64,
    pub n: u64,
    pub delta_used: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionCounts {
    pub excitatory: usize,
    pub inhibitory: usize,
    pub absent: usize,
    pub insufficient_data: usize,
}

impl DecisionCounts {
    pub fn tally<'a>(decisions: impl IntoIterator<Item = &'a Decision>) -> Self {
        let mut c = Self::default();
        for d in decisions {
            match d {
                Decision::Excitatory => c.excitatory += 1,
                Decision::Inhibitory => c.inhibitory += 1,
                Decision::Absent => c.absent += 1,
                Decision::InsufficientData => c.insufficient_data += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub constants: DerivedConstants,
    pub bounds_source: BoundsSource,
    pub horizon: f64,
    pub horizon_inferred: bool,
    pub delta_used: f64,
    pub delta_star: f64,
    pub regime: Regime,
    pub thresholds: ThresholdPair,
    pub schedule: Schedule,
    /// `6 exp(-omega T)` and `4 exp(-omega T)` at the observed horizon.
    pub null_failure_bound: f64,
    pub signed_failure_bound: f64,
    /// Bounds evaluated at `n = floor(T / (3 delta_star))` blocks of the
    /// certified slot length; `None` when the horizon holds no such block.
    pub failure_bounds: Option<FailureBounds>,
    pub summary: DecisionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub header: ReportHeader,
    pub pairs: Vec<PairResult>,
}

impl EstimationReport {
    pub fn pair(&self, from: NeuronId, to: NeuronId) -> Option<&PairResult> {
        self.pairs.iter().find(|p| p.from == from && p.to == to)
    }
}

/// Runs the whole procedure on every ordered pair of neurons in the
/// recording. Pairs are evaluated in parallel and reported in
/// `(to, from)` order.
pub fn estimate_graph(
    rec: &SpikeRecording,
    bounds: &DerivedConstants,
    opts: &EstimateOptions,
) -> Result<EstimationReport, EstimateError> {
    let gap = bounds.gap_params()?;
    let delta_star = gap.delta_star();
    let delta = opts.delta.unwrap_or(delta_star);
    if !(delta.is_finite() && delta > 0.0) {
        return Err(EstimateError::InvalidDelta(delta));
    }
    let th = thresholds(bounds, delta, opts.heuristic)?;
    let ad = bounds.alpha * delta;
    if ad > 1.0 {
        return Err(EstimateError::SlotTooLong { delta, ad });
    }
    let horizon = rec.horizon();
    let n = whole_blocks(horizon, delta, 3);
    if n == 0 {
        return Err(EstimateError::HorizonTooShort {
            horizon,
            needed: 3.0 * delta,
        });
    }
    let t_max = whole_blocks(horizon, delta, 2);
    let sched = schedule(n, bounds, delta)?;
    let certified = th.regime == Regime::Certified;

    let ids: Vec<NeuronId> = rec.neurons().collect();
    let occupied: Vec<OccupiedSlots> = ids
        .par_iter()
        .map(|&id| OccupiedSlots::from_times(rec.train(id), delta))
        .collect();
    let mut pairs_idx = Vec::new();
    for to in 0..ids.len() {
        for from in 0..ids.len() {
            if from != to {
                pairs_idx.push((from, to));
            }
        }
    }
    let pairs: Vec<PairResult> = pairs_idx
        .par_iter()
        .map(|&(from, to)| {
            let stats = indicators(&occupied[to], &occupied[from], delta, t_max, n);
            let r = ratio_r(&stats, &sched);
            let g = ratio_g(&stats, &sched);
            PairResult {
                from: ids[from],
                to: ids[to],
                r: r.value,
                g: g.value,
                diff: g.value - r.value,
                xi1: th.xi1,
                xi2: th.xi2,
                decision: classify_pair(&r, &g, &th),
                sufficient: r.sufficient() && g.sufficient(),
                r_status: r.status,
                g_status: g.status,
                r_denominator: r.denominator,
                g_denominator: g.denominator,
                m_n: sched.m_n,
                t_n: sched.t_n,
                n: sched.n,
                delta_used: delta,
                certified,
            }
        })
        .collect();

    let omega = gap.omega();
    let n_star = whole_blocks(horizon, delta_star, 3);
    let header = ReportHeader {
        constants: bounds.clone(),
        bounds_source: opts.bounds_source,
        horizon,
        horizon_inferred: rec.horizon_inferred,
        delta_used: delta,
        delta_star,
        regime: th.regime,
        thresholds: th,
        schedule: sched,
        null_failure_bound: (6.0 * (-omega * horizon).exp()).min(1.0),
        signed_failure_bound: (4.0 * (-omega * horizon).exp()).min(1.0),
        failure_bounds: (n_star > 0)
            .then(|| failure_bounds(bounds, n_star))
            .transpose()?,
        summary: DecisionCounts::tally(pairs.iter().map(|p| &p.decision)),
    };
    Ok(EstimationReport { header, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn rec(trains: &[(NeuronId, Vec<f64>)], horizon: f64) -> SpikeRecording {
        let map: BTreeMap<NeuronId, Vec<f64>> = trains.iter().cloned().collect();
        SpikeRecording::from_trains(map, horizon).unwrap()
    }

    #[test]
    fn hand_placed_spikes() {
        let dl = 1.0;
        let r = rec(&[(1, vec![0.5, 2.5]), (2, vec![1.5])], 6.0);
        let s = slot_events(&r, 1, 2, dl).unwrap();
        assert_eq!((s.t_max, s.n), (3, 2));
        assert_eq!(s.dense_a(), vec![1, 1, 0]);
        assert_eq!(s.dense_b(), vec![0, 0, 0]);
        assert_eq!(s.dense_c(), vec![1, 0]);
        assert_eq!(s.dense_d(), vec![1, 0]);
    }

    #[test]
    fn boundary_spike_belongs_to_earlier_slot() {
        let dl = 0.1;
        let r = rec(&[(1, vec![0.1]), (2, vec![])], 0.6);
        let s = slot_events(&r, 1, 2, dl).unwrap();
        assert_eq!(s.dense_a()[0], 1);
        assert_eq!(slot_index(0.1, 0.1), 0);
        assert_eq!(slot_index(0.1f64.next_up(), 0.1), 1);
        assert_eq!(slot_index(0.3, 0.1), 2);
    }

    #[test]
    fn no_spikes_no_indicators() {
        let r = rec(&[(1, vec![]), (2, vec![])], 10.0);
        let s = slot_events(&r, 1, 2, 0.5).unwrap();
        assert!(s.a.is_empty() && s.b.is_empty() && s.c.is_empty() && s.d.is_empty());
        assert_eq!(s.n, 6);
    }

    #[test]
    fn slot_events_errors() {
        let r = rec(&[(1, vec![]), (2, vec![])], 1.0);
        assert!(matches!(
            slot_events(&r, 1, 2, 0.5),
            Err(EstimateError::HorizonTooShort { .. })
        ));
        assert_eq!(slot_events(&r, 1, 1, 0.1), Err(EstimateError::SamePair(1)));
        assert!(slot_events(&r, 1, 2, -1.0).is_err());
    }

    #[test]
    fn schedule_values() {
        let s = schedule_from(1_000_000, 0.75, 0.25, 3.1021e-3);
        assert_eq!(s.t_n, 2327);
        assert!(s.m_n <= s.t_n);
        let one = schedule_from(1, 0.75, 0.25, 3.1021e-3);
        assert_eq!((one.t_n, one.m_n), (1, 1));
    }

    #[test]
    fn ratio_r_examples() {
        let st = SlotStatistics::from_dense(1.0, &[1, 1, 1, 0, 1], &[1, 0, 1, 0, 0], &[], &[]);
        let sched = Schedule {
            n: 5,
            t_n: 5,
            m_n: 3,
        };
        let r = ratio_r(&st, &sched);
        assert_eq!(r.stopped_at, Some(3));
        assert!((r.value - 2.0 / 3.0).abs() < 1e-15);
        assert!(r.sufficient());

        let st = SlotStatistics::from_dense(1.0, &[1, 0, 0, 0, 0], &[1, 0, 0, 0, 0], &[], &[]);
        let r = ratio_r(&st, &sched);
        assert_eq!(r.status, RatioStatus::Fallback);
        assert_eq!(r.value, 1.0);

        let st = SlotStatistics::from_dense(1.0, &[0; 5], &[0; 5], &[], &[]);
        let r = ratio_r(&st, &sched);
        assert_eq!((r.value, r.status), (0.0, RatioStatus::Degenerate));
    }

    #[test]
    fn ratio_g_examples() {
        let sched = Schedule {
            n: 3,
            t_n: 3,
            m_n: 2,
        };
        let st = SlotStatistics::from_dense(1.0, &[], &[], &[1, 1, 1], &[0, 1, 1]);
        let g = ratio_g(&st, &sched);
        assert_eq!(g.stopped_at, Some(2));
        assert_eq!(g.value, 0.5);

        let st = SlotStatistics::from_dense(1.0, &[], &[], &[1, 0, 0], &[1, 0, 0]);
        let g = ratio_g(&st, &sched);
        assert_eq!((g.value, g.status), (1.0, RatioStatus::Fallback));

        let st = SlotStatistics::from_dense(1.0, &[], &[], &[0, 0, 0], &[0, 0, 0]);
        assert_eq!(ratio_g(&st, &sched).status, RatioStatus::Degenerate);
    }

    fn th(xi1: f64, xi2: f64) -> ThresholdPair {
        ThresholdPair {
            xi1,
            xi2,
            lambda1: 0.0,
            lambda2: 0.0,
            regime: Regime::Certified,
        }
    }

    #[test]
    fn classification_rule() {
        let t = th(0.01, 0.02);
        assert_eq!(classify_difference(-0.02, &t), Decision::Inhibitory);
        assert_eq!(classify_difference(-0.01, &t), Decision::Inhibitory);
        assert_eq!(classify_difference(0.0, &t), Decision::Absent);
        assert_eq!(classify_difference(0.02, &t), Decision::Excitatory);
        assert_eq!(classify_difference(0.019_999, &t), Decision::Absent);
        let ok = RatioEstimate {
            value: 0.1,
            numerator: 1,
            denominator: 10,
            stopped_at: Some(3),
            status: RatioStatus::Stopped,
        };
        let degenerate = RatioEstimate {
            value: 0.0,
            numerator: 0,
            denominator: 0,
            stopped_at: None,
            status: RatioStatus::Degenerate,
        };
        assert_eq!(
            classify_pair(&ok, &degenerate, &t),
            Decision::InsufficientData
        );
        assert_eq!(
            classify_pair(&degenerate, &ok, &t),
            Decision::InsufficientData
        );
    }

    #[test]
    fn single_neuron_gives_empty_report() {
        let bounds = DerivedConstants::from_bounds(0.75, 1.0, Some(0.25), 1).unwrap();
        let r = rec(&[(1, vec![0.3, 0.9])], 10.0);
        let report = estimate_graph(&r, &bounds, &EstimateOptions::default()).unwrap();
        assert!(report.pairs.is_empty());
        assert_eq!(report.header.regime, Regime::Certified);
    }

    #[test]
    fn estimate_refuses_without_edges_or_large_delta() {
        let r = rec(&[(1, vec![0.3]), (2, vec![0.5])], 10.0);
        let no_edges = DerivedConstants::from_bounds(0.5, 1.0, None, 0).unwrap();
        assert!(matches!(
            estimate_graph(&r, &no_edges, &EstimateOptions::default()),
            Err(EstimateError::Model(ModelError::NoEdgesDeclared))
        ));
        let bounds = DerivedConstants::from_bounds(0.75, 1.0, Some(0.25), 1).unwrap();
        let opts = EstimateOptions {
            delta: Some(0.1),
            ..Default::default()
        };
        assert!(matches!(
            estimate_graph(&r, &bounds, &opts),
            Err(EstimateError::Model(ModelError::DeltaTooLarge { .. }))
        ));
        let opts = EstimateOptions {
            delta: Some(0.1),
            heuristic: true,
            ..Default::default()
        };
        let rep = estimate_graph(&r, &bounds, &opts).unwrap();
        assert_eq!(rep.header.regime, Regime::Heuristic);
        assert!(rep.pairs.iter().all(|p| !p.certified));
        let opts = EstimateOptions {
            delta: Some(5.0),
            heuristic: true,
            ..Default::default()
        };
        assert!(matches!(
            estimate_graph(&r, &bounds, &opts),
            Err(EstimateError::SlotTooLong { .. })
        ));
        let short = rec(&[(1, vec![0.3]), (2, vec![0.5])], 1.0);
        let opts = EstimateOptions {
            delta: Some(0.5),
            heuristic: true,
            ..Default::default()
        };
        assert!(matches!(
            estimate_graph(&short, &bounds, &opts),
            Err(EstimateError::HorizonTooShort { .. })
        ));
    }
}
