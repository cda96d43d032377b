//! Verification machinery: Monte Carlo event probabilities on short
//! windows, closed-form oracles for constant-rate networks, binomial tail
//! bounds and the failure-probability calculators.
//!
//! Monte Carlo probabilities are estimated with "binomial skipping": of `N`
//! virtual replicas only those holding a candidate in every cell an event
//! needs can realise it, and their number is `Binomial(N, q)`. Only those
//! are simulated (conditioned through [`WindowSampler::force`]), so rare
//! events cost time proportional to their conditional rarity, while the
//! reported frequencies are plain unconditional binomial proportions over
//! `N`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::estimator::slot_index;
use crate::model::{
    constants_of, theta0_exact, thresholds, DerivedConstants, GapParams, ModelError, Network,
    NeuronId, THETA0,
};
use crate::rng::{self, derive_seed};
use crate::simulator::{simulate, SimError, SimulationConfig, WindowSampler, WindowScratch};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("neuron {0} is not part of the network")]
    UnknownNeuron(NeuronId),
    #[error("a pair needs two distinct neurons, got {0} twice")]
    SamePair(NeuronId),
    #[error("slot length {delta} exceeds the admissible bound {limit}")]
    DeltaOutOfRange { delta: f64, limit: f64 },
    #[error("initial potential vector has {got} entries, network has {want}")]
    InitialPotentialLength { got: usize, want: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Outcome of a single check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    /// Estimate on the wrong side of the bound by at most 4 standard errors.
    PassWithinTolerance,
    /// The standard error exceeds the distance to the bound.
    Inconclusive,
    Fail,
}

impl Verdict {
    pub fn passed(self) -> bool {
        matches!(self, Verdict::Pass | Verdict::PassWithinTolerance)
    }
}

/// Monte Carlo verdict from a signed margin (positive on the correct side).
pub fn mc_verdict(margin: f64, se: f64) -> Verdict {
    if !se.is_finite() || margin.is_nan() || margin.abs() < se {
        Verdict::Inconclusive
    } else if margin >= 0.0 {
        Verdict::Pass
    } else if margin >= -4.0 * se {
        Verdict::PassWithinTolerance
    } else {
        Verdict::Fail
    }
}

pub fn exact_verdict(margin: f64) -> Verdict {
    if margin >= 0.0 {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Worst verdict of a suite: any failure fails, then any inconclusive.
pub fn overall(reports: &[CheckReport]) -> Verdict {
    if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        Verdict::Fail
    } else if reports.iter().any(|r| r.verdict == Verdict::Inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub inputs: serde_json::Value,
    pub estimate: f64,
    pub bound: f64,
    pub standard_error: f64,
    pub verdict: Verdict,
    /// Signed distance to the bound, positive on the passing side.
    pub margin: f64,
}

impl CheckReport {
    pub fn exact(
        name: impl Into<String>,
        inputs: serde_json::Value,
        estimate: f64,
        bound: f64,
        margin: f64,
    ) -> Self {
        Self {
            name: name.into(),
            inputs,
            estimate,
            bound,
            standard_error: 0.0,
            verdict: exact_verdict(margin),
            margin,
        }
    }

    fn monte_carlo(
        name: impl Into<String>,
        inputs: serde_json::Value,
        estimate: f64,
        bound: f64,
        se: f64,
        margin: f64,
    ) -> Self {
        Self {
            name: name.into(),
            inputs,
            estimate,
            bound,
            standard_error: se,
            verdict: mc_verdict(margin, se),
            margin,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    /// Binomial proportion `k / n`.
    pub fn proportion(k: u64, n: u64) -> Self {
        if n == 0 {
            return Self {
                value: 0.0,
                se: f64::INFINITY,
            };
        }
        let p = k as f64 / n as f64;
        Self {
            value: p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
        }
    }
}

/// Raw counts behind an [`EventProbEstimate`]. `n_ab` and `n_cd` count
/// virtual replicas; `forced_*` the windows actually simulated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub n_ab: u64,
    pub n_cd: u64,
    pub forced_ab: u64,
    pub forced_cd: u64,
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl EventCounts {
    fn merge(self, o: Self) -> Self {
        Self {
            n_ab: self.n_ab + o.n_ab,
            n_cd: self.n_cd + o.n_cd,
            forced_ab: self.forced_ab + o.forced_ab,
            forced_cd: self.forced_cd + o.forced_cd,
            a: self.a + o.a,
            b: self.b + o.b,
            c: self.c + o.c,
            d: self.d + o.d,
        }
    }

    pub fn ratio_ba(&self) -> Estimate {
        Estimate::proportion(self.b, self.a)
    }

    pub fn ratio_dc(&self) -> Estimate {
        Estimate::proportion(self.d, self.c)
    }

    /// `D/C - B/A`; the two streams are independent.
    pub fn gap(&self) -> Estimate {
        let r = self.ratio_ba();
        let g = self.ratio_dc();
        Estimate {
            value: g.value - r.value,
            se: (r.se * r.se + g.se * g.se).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventProbEstimate {
    pub from: NeuronId,
    pub to: NeuronId,
    pub delta: f64,
    /// Initial potentials of the A/B windows (dense order).
    pub u_ab: Vec<f64>,
    /// Initial potentials of the C/D windows.
    pub u_cd: Vec<f64>,
    pub p_a: Estimate,
    pub p_b: Estimate,
    pub p_c: Estimate,
    pub p_d: Estimate,
    pub ratio_ba: Estimate,
    pub ratio_dc: Estimate,
    pub gap: Estimate,
    pub counts: EventCounts,
}

impl EventProbEstimate {
    fn from_counts(setup: &EventSetup, counts: EventCounts) -> Self {
        Self {
            from: setup.from,
            to: setup.to,
            delta: setup.delta,
            u_ab: setup.u_ab.clone(),
            u_cd: setup.u_cd.clone(),
            p_a: Estimate::proportion(counts.a, counts.n_ab),
            p_b: Estimate::proportion(counts.b, counts.n_ab),
            p_c: Estimate::proportion(counts.c, counts.n_cd),
            p_d: Estimate::proportion(counts.d, counts.n_cd),
            ratio_ba: counts.ratio_ba(),
            ratio_dc: counts.ratio_dc(),
            gap: counts.gap(),
            counts,
        }
    }
}

/// The pair `from -> to`, slot length and the two initial potential
/// vectors (`u_ab` for the A/B windows, `u_cd` for the C/D windows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSetup {
    pub from: NeuronId,
    pub to: NeuronId,
    pub delta: f64,
    pub u_ab: Vec<f64>,
    pub u_cd: Vec<f64>,
}

impl EventSetup {
    pub fn at_rest(net: &Network, from: NeuronId, to: NeuronId, delta: f64) -> Self {
        Self {
            from,
            to,
            delta,
            u_ab: vec![0.0; net.len()],
            u_cd: vec![0.0; net.len()],
        }
    }

    fn resolve(&self, net: &Network) -> Result<(usize, usize), AnalysisError> {
        if self.from == self.to {
            return Err(AnalysisError::SamePair(self.from));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(ModelError::InvalidDelta(self.delta).into());
        }
        for u in [&self.u_ab, &self.u_cd] {
            if u.len() != net.len() {
                return Err(AnalysisError::InitialPotentialLength {
                    got: u.len(),
                    want: net.len(),
                });
            }
            if let Some(k) = u.iter().position(|x| !x.is_finite()) {
                return Err(SimError::NonFiniteInitialPotential(net.ids()[k]).into());
            }
        }
        let j = net
            .index_of(self.from)
            .ok_or(AnalysisError::UnknownNeuron(self.from))?;
        let i = net
            .index_of(self.to)
            .ok_or(AnalysisError::UnknownNeuron(self.to))?;
        Ok((j, i))
    }
}

/// Forced windows simulated per parallel task.
const CHUNK: u64 = 1 << 15;

fn run_stream(
    sampler: &WindowSampler<'_>,
    u0: &[f64],
    forced: u64,
    seed: u64,
    stream_offset: u64,
    hit: impl Fn(&[u8]) -> (bool, bool) + Sync,
) -> (u64, u64) {
    let chunks = forced.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, 1 + 2 * k + stream_offset);
            let mut scratch = WindowScratch::default();
            let len = CHUNK.min(forced - k * CHUNK);
            let (mut first, mut second) = (0u64, 0u64);
            for _ in 0..len {
                sampler.sample(u0, &mut rng, &mut scratch);
                let (x, y) = hit(&scratch.occupancy);
                first += x as u64;
                second += (x && y) as u64;
            }
            (first, second)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

fn sample_counts(
    net: &Network,
    setup: &EventSetup,
    (j, i): (usize, usize),
    n_ab: u64,
    n_cd: u64,
    seed: u64,
) -> EventCounts {
    let ab = WindowSampler::new(net, setup.delta, 2).force(i, 0);
    let cd = WindowSampler::new(net, setup.delta, 3)
        .force(i, 0)
        .force(j, 1);
    let mut head = rng::stream(seed, 0);
    let mut skip = |n: u64, q: f64| -> u64 {
        if n == 0 {
            0
        } else {
            Binomial::new(n, q.min(1.0))
                .expect("valid binomial")
                .sample(&mut head)
        }
    };
    let forced_ab = skip(n_ab, ab.forcing_probability());
    let forced_cd = skip(n_cd, cd.forcing_probability());
    let (a, b) = run_stream(&ab, &setup.u_ab, forced_ab, seed, 0, |occ| {
        (occ[i] & 1 != 0, occ[i] & 2 != 0)
    });
    let (c, d) = run_stream(&cd, &setup.u_cd, forced_cd, seed, 1, |occ| {
        (occ[i] & 1 != 0 && occ[j] & 2 != 0, occ[i] & 4 != 0)
    });
    EventCounts {
        n_ab,
        n_cd,
        forced_ab,
        forced_cd,
        a,
        b,
        c,
        d,
    }
}

/// One-shot event probabilities over `replicas` independent windows per
/// event family, each window started from the setup's initial potentials.
pub fn mc_event_probs(
    net: &Network,
    setup: &EventSetup,
    replicas: u64,
    seed: u64,
) -> Result<EventProbEstimate, AnalysisError> {
    let pair = setup.resolve(net)?;
    let counts = sample_counts(net, setup, pair, replicas, replicas, seed);
    Ok(EventProbEstimate::from_counts(setup, counts))
}

/// Keeps adding replicas until the standard error of `D/C - B/A` is at
/// most `target_se`, or until `max_windows` windows have been simulated.
/// Each ratio gets half of the variance budget; the two event families
/// grow independently.
pub fn mc_event_probs_adaptive(
    net: &Network,
    setup: &EventSetup,
    target_se: f64,
    max_windows: u64,
    seed: u64,
) -> Result<EventProbEstimate, AnalysisError> {
    if !(target_se.is_finite() && target_se > 0.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "target standard error must be positive, got {target_se}"
        )));
    }
    let pair = setup.resolve(net)?;
    let per_ratio = target_se / std::f64::consts::SQRT_2;
    let q_ab = WindowSampler::new(net, setup.delta, 2)
        .force(pair.1, 0)
        .forcing_probability();
    let q_cd = WindowSampler::new(net, setup.delta, 3)
        .force(pair.1, 0)
        .force(pair.0, 1)
        .forcing_probability();
    let pilot = 1u64 << 17;
    // Forced windows still wanted by a stream, from its current counts.
    let wanted = |denominator: u64, est: Estimate, forced: u64| -> u64 {
        if forced == 0 {
            return pilot;
        }
        if est.se <= per_ratio {
            return 0;
        }
        let p = est.value.clamp(1e-9, 1.0 - 1e-9);
        let need_den = p * (1.0 - p) / (per_ratio * per_ratio);
        let yield_rate = (denominator as f64 / forced as f64).max(1e-6);
        let extra = (need_den - denominator as f64) / yield_rate;
        (extra * 1.1).ceil().max((pilot / 2) as f64) as u64
    };
    let mut total = EventCounts::default();
    for batch in 0.. {
        let want_ab = wanted(total.a, total.ratio_ba(), total.forced_ab);
        let want_cd = wanted(total.c, total.ratio_dc(), total.forced_cd);
        let used = total.forced_ab + total.forced_cd;
        if (want_ab == 0 && want_cd == 0) || used >= max_windows {
            break;
        }
        let room = max_windows - used;
        let want_ab = want_ab.min(room);
        let want_cd = want_cd.min(room - want_ab);
        let n_ab = (want_ab as f64 / q_ab).ceil() as u64;
        let n_cd = (want_cd as f64 / q_cd).ceil() as u64;
        let counts = sample_counts(net, setup, pair, n_ab, n_cd, derive_seed(seed, batch));
        total = total.merge(counts);
    }
    Ok(EventProbEstimate::from_counts(setup, total))
}

/// Same quantities from full simulations, one per replica. Much slower;
/// kept as an independent cross-check of the conditioned sampler.
pub fn mc_event_probs_naive(
    net: &Network,
    setup: &EventSetup,
    replicas: u64,
    seed: u64,
) -> Result<EventProbEstimate, AnalysisError> {
    setup.resolve(net)?;
    let ids = net.ids().to_vec();
    let dl = setup.delta;
    let occupied = |rec: &crate::simulator::SpikeRecording, id: NeuronId, slot: u64| {
        rec.train(id).iter().any(|&t| slot_index(t, dl) == slot)
    };
    let run = |u: &[f64], horizon: f64, seed: u64| -> Result<_, SimError> {
        let mut cfg = SimulationConfig::new(horizon, seed);
        for (k, &id) in ids.iter().enumerate() {
            cfg = cfg.with_u0(id, u[k]);
        }
        Ok(simulate(net, &cfg)?.recording)
    };
    let counts = (0..replicas)
        .into_par_iter()
        .map(|k| -> Result<EventCounts, SimError> {
            let rec = run(&setup.u_ab, 2.0 * dl, derive_seed(seed, 2 * k))?;
            let a = occupied(&rec, setup.to, 0);
            let b = a && occupied(&rec, setup.to, 1);
            let rec = run(&setup.u_cd, 3.0 * dl, derive_seed(seed, 2 * k + 1))?;
            let c = occupied(&rec, setup.to, 0) && occupied(&rec, setup.from, 1);
            let d = c && occupied(&rec, setup.to, 2);
            Ok(EventCounts {
                n_ab: 1,
                n_cd: 1,
                forced_ab: 1,
                forced_cd: 1,
                a: a as u64,
                b: b as u64,
                c: c as u64,
                d: d as u64,
            })
        })
        .try_reduce(EventCounts::default, |x, y| Ok(x.merge(y)))?;
    Ok(EventProbEstimate::from_counts(setup, counts))
}

/// Closed-form event probabilities when every rate is constant (so spike
/// trains are independent Poisson processes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullOracle {
    pub p_a: f64,
    pub ratio_ba: f64,
    pub p_c: f64,
    pub ratio_dc: f64,
}

/// `rate` is the target's constant rate, `partner_rate` the source's.
pub fn null_oracle(rate: f64, partner_rate: f64, delta: f64) -> NullOracle {
    let p = -(-rate * delta).exp_m1();
    let q = -(-partner_rate * delta).exp_m1();
    NullOracle {
        p_a: p,
        ratio_ba: p,
        p_c: p * q,
        ratio_dc: p,
    }
}

/// True class of `from -> to` in a known network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairClass {
    Absent,
    Excitatory,
    Inhibitory,
}

pub fn pair_class(net: &Network, from: NeuronId, to: NeuronId) -> PairClass {
    let w = net.spec().weight(from, to);
    if w > 0.0 {
        PairClass::Excitatory
    } else if w < 0.0 {
        PairClass::Inhibitory
    } else {
        PairClass::Absent
    }
}

/// How many replicas a Monte Carlo check may use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Budget {
    Replicas(u64),
    TargetSe { se: f64, max_windows: u64 },
}

fn estimate_with(
    net: &Network,
    setup: &EventSetup,
    budget: Budget,
    seed: u64,
) -> Result<EventProbEstimate, AnalysisError> {
    match budget {
        Budget::Replicas(n) => mc_event_probs(net, setup, n, seed),
        Budget::TargetSe { se, max_windows } => {
            mc_event_probs_adaptive(net, setup, se, max_windows, seed)
        }
    }
}

/// Checks that `D/C - B/A` falls in the region of the pair's true class:
/// `(-xi1, xi2)` without an edge, `[xi2, inf)` for an excitatory edge and
/// `(-inf, -xi1]` for an inhibitory one. The slot length must not exceed
/// `delta_star`.
pub fn check_theorem_gap(
    net: &Network,
    setup: &EventSetup,
    budget: Budget,
    seed: u64,
) -> Result<(CheckReport, EventProbEstimate), AnalysisError> {
    let c = constants_of(net)?;
    let th = thresholds(&c, setup.delta, false)?;
    let est = estimate_with(net, setup, budget, seed)?;
    let class = pair_class(net, setup.from, setup.to);
    let diff = est.gap.value;
    let (margin, bound) = match class {
        PairClass::Absent => {
            let lo = diff + th.xi1;
            let hi = th.xi2 - diff;
            if lo < hi {
                (lo, -th.xi1)
            } else {
                (hi, th.xi2)
            }
        }
        PairClass::Excitatory => (diff - th.xi2, th.xi2),
        PairClass::Inhibitory => (-th.xi1 - diff, -th.xi1),
    };
    let inputs = json!({
        "from": setup.from,
        "to": setup.to,
        "class": class,
        "delta": setup.delta,
        "xi1": th.xi1,
        "xi2": th.xi2,
        "seed": seed,
        "replicas_ab": est.counts.n_ab,
        "replicas_cd": est.counts.n_cd,
        "u_ab": setup.u_ab,
        "u_cd": setup.u_cd,
    });
    let report = CheckReport::monte_carlo(
        format!("theorem-gap {}->{}", setup.from, setup.to),
        inputs,
        diff,
        bound,
        est.gap.se,
        margin,
    );
    Ok((report, est))
}

/// Checks the envelopes around `B/A` for neuron `to` and around `D/C` for
/// every other neuron as source. The in-degree bound used is at least 1.
/// Requires `delta < s^2 / (5 d beta)`.
pub fn check_lemma_ratio_bounds(
    net: &Network,
    to: NeuronId,
    delta: f64,
    budget: Budget,
    seed: u64,
) -> Result<Vec<CheckReport>, AnalysisError> {
    let i = net.index_of(to).ok_or(AnalysisError::UnknownNeuron(to))?;
    let beta = net.beta();
    let s = net.alpha() / beta;
    let d = net.max_in_degree().max(1) as f64;
    let limit = s * s / (5.0 * d * beta);
    if !(delta > 0.0 && delta < limit) {
        return Err(AnalysisError::DeltaOutOfRange { delta, limit });
    }
    // The rate gap is only needed for signed pairs.
    let delta_gap = constants_of(net).ok().and_then(|c| c.delta);
    let phi0 = net.rate(i).eval(0.0);
    let dbd = d * beta * delta;
    let ab_lo = (1.0 - 3.0 * dbd / s) * phi0 * delta;
    let ab_hi = (1.0 + 4.0 * dbd / (s * s)) * phi0 * delta;
    let cd_lo = 1.0 - 5.0 * dbd / (s * s);
    let cd_hi = 1.0 + 5.0 * dbd / s.powi(3);
    let mut out = Vec::new();
    let base = |extra: serde_json::Value| {
        let mut v = json!({ "to": to, "delta": delta, "d": d, "s": s, "beta": beta, "phi0": phi0, "seed": seed });
        if let (Some(m), serde_json::Value::Object(e)) = (v.as_object_mut(), extra) {
            m.extend(e);
        }
        v
    };
    for (k, &from) in net.ids().iter().enumerate() {
        if k == i {
            continue;
        }
        let setup = EventSetup::at_rest(net, from, to, delta);
        let est = estimate_with(net, &setup, budget, derive_seed(seed, k as u64))?;
        if out.is_empty() {
            let r = est.ratio_ba;
            out.push(CheckReport::monte_carlo(
                format!("envelope B/A lower {to}"),
                base(json!({})),
                r.value,
                ab_lo,
                r.se,
                r.value - ab_lo,
            ));
            out.push(CheckReport::monte_carlo(
                format!("envelope B/A upper {to}"),
                base(json!({})),
                r.value,
                ab_hi,
                r.se,
                ab_hi - r.value,
            ));
        }
        let g = est.ratio_dc;
        let class = pair_class(net, from, to);
        let inputs = base(json!({ "from": from, "class": class }));
        let mut push = |name: &str, bound: f64, lower: bool| {
            let margin = if lower {
                g.value - bound
            } else {
                bound - g.value
            };
            out.push(CheckReport::monte_carlo(
                format!("envelope D/C {name} {from}->{to}"),
                inputs.clone(),
                g.value,
                bound,
                g.se,
                margin,
            ));
        };
        match (class, delta_gap) {
            (PairClass::Absent, _) => {
                push("lower", cd_lo * phi0 * delta, true);
                push("upper", cd_hi * phi0 * delta, false);
            }
            (PairClass::Excitatory, Some(gap)) => push("lower", cd_lo * (phi0 + gap) * delta, true),
            (PairClass::Inhibitory, Some(gap)) => {
                push("upper", cd_hi * (phi0 - gap) * delta, false)
            }
            // Signed pairs always come with a rate gap.
            (_, None) => unreachable!("signed pair without a rate gap"),
        }
    }
    Ok(out)
}

/// `ln P(X = k)` for `X ~ Binomial(n, p)`.
pub fn ln_binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if p <= 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let (n, k) = (n as f64, k as f64);
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
        + k * p.ln()
        + (n - k) * (-p).ln_1p()
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `P(X <= k)`, summed in log space.
pub fn binomial_lower_tail(n: u64, p: f64, k: u64) -> f64 {
    if k >= n {
        return 1.0;
    }
    log_sum_exp((0..=k).map(|x| ln_binomial_pmf(n, x, p)))
        .exp()
        .min(1.0)
}

/// `P(X >= k)`, summed in log space.
pub fn binomial_upper_tail(n: u64, p: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    log_sum_exp((k..=n).map(|x| ln_binomial_pmf(n, x, p)))
        .exp()
        .min(1.0)
}

/// Largest integer `<= x`, tolerant to rounding just below an integer.
fn floor_tol(x: f64) -> i64 {
    (x + 1e-9 * x.abs().max(1.0)).floor() as i64
}

/// Smallest integer `>= x`, tolerant to rounding just above an integer.
fn ceil_tol(x: f64) -> i64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil() as i64
}

/// Exact tails of the events `X <= np(1-gamma)` and `X >= np(1+gamma)`
/// with their exponential bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffTails {
    pub lower_exact: f64,
    pub lower_bound: f64,
    pub upper_exact: f64,
    pub upper_bound: f64,
}

pub fn chernoff_tails(n: u64, p: f64, gamma: f64) -> ChernoffTails {
    let mean = n as f64 * p;
    let lo = floor_tol(mean * (1.0 - gamma));
    let hi = ceil_tol(mean * (1.0 + gamma)).max(0) as u64;
    ChernoffTails {
        lower_exact: if lo < 0 {
            0.0
        } else {
            binomial_lower_tail(n, p, lo as u64)
        },
        lower_bound: (-mean * gamma * gamma / 2.0).exp(),
        upper_exact: binomial_upper_tail(n, p, hi),
        upper_bound: (-mean * gamma * gamma / 3.0).exp(),
    }
}

fn check_probability(name: &str, x: f64, open: bool) -> Result<(), AnalysisError> {
    let ok = if open {
        x > 0.0 && x < 1.0
    } else {
        (0.0..=1.0).contains(&x)
    };
    if ok {
        Ok(())
    } else {
        Err(AnalysisError::InvalidParameter(format!(
            "{name} = {x} out of range"
        )))
    }
}

/// Exact and sampled binomial tails against the exponential bounds.
/// Returns four reports: exact lower, exact upper, sampled lower, sampled
/// upper. `p = 1` and `p = 0` are accepted as degenerate cases.
pub fn chernoff_check(
    n: u64,
    p: f64,
    gamma: f64,
    draws: u64,
    seed: u64,
) -> Result<Vec<CheckReport>, AnalysisError> {
    check_probability("gamma", gamma, true)?;
    check_probability("p", p, false)?;
    let tails = chernoff_tails(n, p, gamma);
    let mean = n as f64 * p;
    let lo = mean * (1.0 - gamma);
    let hi = mean * (1.0 + gamma);
    let dist = Binomial::new(n, p).map_err(|e| AnalysisError::InvalidParameter(e.to_string()))?;
    let (below, above) = (0..draws.div_ceil(CHUNK))
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k);
            let mut c = (0u64, 0u64);
            for _ in 0..CHUNK.min(draws - k * CHUNK) {
                let x = dist.sample(&mut rng) as f64;
                c.0 += (x <= lo) as u64;
                c.1 += (x >= hi) as u64;
            }
            c
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let inputs = json!({ "n": n, "p": p, "gamma": gamma, "draws": draws, "seed": seed });
    let f_lo = Estimate::proportion(below, draws);
    let f_hi = Estimate::proportion(above, draws);
    // The sampled tail passes when it stays within 4 standard errors of
    // the bound; the standard error uses the larger of estimate and bound.
    let se_at = |f: f64, b: f64| {
        (f.max(b.min(1.0)) * (1.0 - f.max(b.min(1.0))) / draws.max(1) as f64).sqrt()
    };
    let sampled = |name: &str, f: Estimate, bound: f64| {
        let se = se_at(f.value, bound);
        let margin = bound + 4.0 * se - f.value;
        CheckReport {
            name: name.into(),
            inputs: inputs.clone(),
            estimate: f.value,
            bound,
            standard_error: se,
            verdict: exact_verdict(margin),
            margin,
        }
    };
    Ok(vec![
        CheckReport::exact(
            "chernoff lower exact",
            inputs.clone(),
            tails.lower_exact,
            tails.lower_bound,
            tails.lower_bound - tails.lower_exact,
        ),
        CheckReport::exact(
            "chernoff upper exact",
            inputs.clone(),
            tails.upper_exact,
            tails.upper_bound,
            tails.upper_bound - tails.upper_exact,
        ),
        sampled("chernoff lower sampled", f_lo, tails.lower_bound),
        sampled("chernoff upper sampled", f_hi, tails.upper_bound),
    ])
}

/// The `(n, p, gamma)` grid used by the `chernoff` suite.
pub fn chernoff_grid() -> Vec<(u64, f64, f64)> {
    let mut g = vec![(100, 0.5, 0.4)];
    for &n in &[1u64, 10, 50, 100, 500, 2000] {
        for &p in &[0.01, 0.1, 0.3, 0.5, 0.9, 0.99] {
            for &gamma in &[0.05, 0.2, 0.4, 0.7, 0.95] {
                g.push((n, p, gamma));
            }
        }
    }
    g
}

/// Rule giving the conditional success probability from the running sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dependence {
    /// Always `c`.
    Constant,
    /// `c` after an even running sum, `C` after an odd one.
    Alternating,
    /// Grows linearly from `c` to `C` as the running sum grows.
    SelfExciting,
}

impl Dependence {
    pub const ALL: [Dependence; 3] = [
        Dependence::Constant,
        Dependence::Alternating,
        Dependence::SelfExciting,
    ];

    fn prob(self, c: f64, big_c: f64, sum: u64, k: u64) -> f64 {
        match self {
            Dependence::Constant => c,
            Dependence::Alternating => {
                if sum.is_multiple_of(2) {
                    c
                } else {
                    big_c
                }
            }
            Dependence::SelfExciting => {
                let frac = if k == 0 { 0.0 } else { sum as f64 / k as f64 };
                c + (big_c - c) * frac
            }
        }
    }
}

/// Dependent Bernoulli sequences with conditional success probability in
/// `[c, C]`. Checks the lower tail at `nc(1-gamma)`, the upper tail at
/// `nC(1+gamma)` (both within 4 standard errors over `draws` sequences),
/// and the coupling `Bin(n, c) <= S <= Bin(n, C)` pathwise.
pub fn domination_check(
    c: f64,
    big_c: f64,
    n: u64,
    gamma: f64,
    dependence: Dependence,
    draws: u64,
    seed: u64,
) -> Result<Vec<CheckReport>, AnalysisError> {
    if !(c > 0.0 && c <= big_c && big_c < 1.0) {
        return Err(AnalysisError::InvalidParameter(format!(
            "need 0 < c <= C < 1, got c = {c}, C = {big_c}"
        )));
    }
    check_probability("gamma", gamma, true)?;
    let lo = n as f64 * c * (1.0 - gamma);
    let hi = n as f64 * big_c * (1.0 + gamma);
    let (below, above, broken) = (0..draws.div_ceil(CHUNK))
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k);
            let mut acc = (0u64, 0u64, 0u64);
            for _ in 0..CHUNK.min(draws - k * CHUNK) {
                let (mut sum, mut low, mut high) = (0u64, 0u64, 0u64);
                for step in 0..n {
                    let u: f64 = rng.random();
                    let p = dependence.prob(c, big_c, sum, step);
                    sum += (u <= p) as u64;
                    low += (u <= c) as u64;
                    high += (u <= big_c) as u64;
                }
                acc.0 += (sum as f64 <= lo) as u64;
                acc.1 += (sum as f64 >= hi) as u64;
                acc.2 += !(low <= sum && sum <= high) as u64;
            }
            acc
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let inputs = json!({
        "c": c, "C": big_c, "n": n, "gamma": gamma,
        "dependence": dependence, "draws": draws, "seed": seed,
    });
    let bound_lo = (-(n as f64) * c * gamma * gamma / 2.0).exp();
    let bound_hi = (-(n as f64) * big_c * gamma * gamma / 3.0).exp();
    let mk = |name: &str, k: u64, bound: f64| {
        let f = k as f64 / draws as f64;
        let pv = f.max(bound.min(1.0));
        let se = (pv * (1.0 - pv) / draws as f64).sqrt();
        let margin = bound + 4.0 * se - f;
        CheckReport {
            name: name.into(),
            inputs: inputs.clone(),
            estimate: f,
            bound,
            standard_error: se,
            verdict: exact_verdict(margin),
            margin,
        }
    };
    Ok(vec![
        mk("domination lower", below, bound_lo),
        mk("domination upper", above, bound_hi),
        CheckReport::exact(
            "domination coupling",
            inputs.clone(),
            broken as f64,
            0.0,
            -(broken as f64),
        ),
    ])
}

/// Failure probabilities of the stopped estimators after `n` blocks of
/// length `delta_star`, and the horizon the headline bounds need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureBounds {
    pub n: u64,
    /// `3 delta_star n`.
    pub horizon: f64,
    pub omega: f64,
    pub rho_n: f64,
    pub sigma_n: f64,
    pub two_sigma: f64,
    pub four_sigma: f64,
    pub eight_sigma: f64,
    /// `6 exp(-omega T)`, clamped to at most 1.
    pub null_bound: f64,
    /// `4 exp(-omega T)`, clamped to at most 1.
    pub signed_bound: f64,
    pub null_bound_raw: f64,
    pub signed_bound_raw: f64,
    /// Smallest `T` with `6 exp(-omega T) <= 0.05`.
    pub required_horizon: f64,
    pub required_n: f64,
    /// Smallest `T` with `4 exp(-omega T) <= 0.05`.
    pub required_horizon_signed: f64,
}

/// Level the required horizons are computed for.
pub const TARGET_FAILURE: f64 = 0.05;

/// `ln(factor / level) / omega`.
pub fn required_horizon(omega: f64, factor: f64, level: f64) -> f64 {
    (factor / level).ln() / omega
}

pub fn failure_bounds(c: &DerivedConstants, n: u64) -> Result<FailureBounds, ModelError> {
    let gap = c.gap_params()?;
    let ds = gap.delta_star();
    let omega = gap.omega();
    let base = c.alpha.powi(3) * ds.powi(3) * gap.tau * gap.tau * n as f64;
    let rho_n = (-(19.0 / 4000.0) * base).exp();
    let sigma_n = (-(361.0 / 116_000.0) * base).exp();
    let horizon = 3.0 * ds * n as f64;
    let e = (-omega * horizon).exp();
    let required = required_horizon(omega, 6.0, TARGET_FAILURE);
    Ok(FailureBounds {
        n,
        horizon,
        omega,
        rho_n,
        sigma_n,
        two_sigma: (2.0 * sigma_n).min(1.0),
        four_sigma: (4.0 * sigma_n).min(1.0),
        eight_sigma: (8.0 * sigma_n).min(1.0),
        null_bound: (6.0 * e).min(1.0),
        signed_bound: (4.0 * e).min(1.0),
        null_bound_raw: 6.0 * e,
        signed_bound_raw: 4.0 * e,
        required_horizon: required,
        required_n: (required / (3.0 * ds)).ceil(),
        required_horizon_signed: required_horizon(omega, 4.0, TARGET_FAILURE),
    })
}

/// Sweeps both separation inequalities over random `(s, tau, d, beta)` and
/// `delta` uniform in `(0, delta_star]`. Reports the smallest slack.
pub fn separation_sweep(tuples: usize, seed: u64) -> CheckReport {
    let mut rng = rng::stream(seed, 0);
    let mut worst = f64::INFINITY;
    let mut worst_at = json!(null);
    for _ in 0..tuples {
        let (s, tau) = loop {
            let s: f64 = 1.0 - rng.random::<f64>();
            let tau: f64 = 1.0 - rng.random::<f64>();
            if s < 1.0 && tau < 1.0 && s + tau <= 1.0 {
                break (s, tau);
            }
        };
        let d = rng.random_range(1..=10) as f64;
        let beta = 10.0 * (1.0 - rng.random::<f64>());
        let gap = GapParams { s, tau, d, beta };
        let delta = gap.delta_star() * (1.0 - rng.random::<f64>());
        let th = gap.threshold_formulas(delta);
        // Slacks are relative to the scale beta*delta of the thresholds.
        let scale = beta * delta;
        let slack = th.inhibitory_slack(tau).min(th.excitatory_slack(tau)) / scale;
        if slack < worst {
            worst = slack;
            worst_at = json!({ "s": s, "tau": tau, "d": d, "beta": beta, "delta": delta });
        }
    }
    CheckReport::exact(
        "thresholds separation sweep",
        json!({ "tuples": tuples, "seed": seed, "worst_at": worst_at, "slack": 1e-12 }),
        worst,
        0.0,
        worst + 1e-12,
    )
}

/// Exact rational value of the universal constant, its decimal, the two
/// ways of computing `omega`, and the exponent identity between the two
/// failure rates.
pub fn constants_checks(c: &DerivedConstants) -> Result<Vec<CheckReport>, ModelError> {
    let exact = theta0_exact();
    let expected = num_rational::Ratio::new(361u64, 402_288_000u64);
    let mut out = vec![
        CheckReport::exact(
            "theta0 rational",
            json!({ "numerator": *exact.numer(), "denominator": *exact.denom() }),
            *exact.numer() as f64 / *exact.denom() as f64,
            361.0 / 402_288_000.0,
            if exact == expected { 0.0 } else { -1.0 },
        ),
        CheckReport::exact(
            "theta0 decimal",
            json!({}),
            THETA0,
            8.9737e-7,
            5e-11 - (THETA0 - 8.9737e-7).abs(),
        ),
    ];
    let w1 = c.gap_params()?.omega();
    let w2 = c.omega_from_rates()?;
    let rel = ((w1 - w2) / w1).abs();
    out.push(CheckReport::exact(
        "omega two forms",
        json!({ "alpha": c.alpha, "beta": c.beta, "delta": c.delta, "d": c.d }),
        rel,
        1e-12,
        1e-12 - rel,
    ));
    let fb = failure_bounds(c, 1_000_000)?;
    let via_sigma = fb.sigma_n.powf(29.0 / 19.0);
    let rel = ((fb.rho_n - via_sigma) / fb.rho_n).abs();
    out.push(CheckReport::exact(
        "rho sigma exponent",
        json!({ "n": fb.n }),
        rel,
        1e-12,
        1e-12 - rel,
    ));
    let rel = ((fb.sigma_n - (-fb.omega * fb.horizon).exp()) / fb.sigma_n).abs();
    out.push(CheckReport::exact(
        "sigma equals exp(-omega T)",
        json!({ "n": fb.n, "horizon": fb.horizon }),
        rel,
        1e-12,
        1e-12 - rel,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NetworkSpec, RateFunction};
    use statrs::distribution::{Binomial as SBinomial, DiscreteCDF};

    fn constant_pair(c: f64) -> Network {
        Network::new(NetworkSpec::new(vec![1, 2]).with_uniform_rate(RateFunction::constant(c)))
            .unwrap()
    }

    #[test]
    fn verdict_rule() {
        assert_eq!(mc_verdict(5.0, 1.0), Verdict::Pass);
        assert_eq!(mc_verdict(0.5, 1.0), Verdict::Inconclusive);
        assert_eq!(mc_verdict(-3.0, 1.0), Verdict::PassWithinTolerance);
        assert_eq!(mc_verdict(-5.0, 1.0), Verdict::Fail);
        assert_eq!(mc_verdict(0.0, 0.0), Verdict::Pass);
        assert_eq!(mc_verdict(1.0, f64::INFINITY), Verdict::Inconclusive);
    }

    #[test]
    fn oracle_values() {
        let o = null_oracle(2f64.ln(), 1.0, 1.0);
        assert!((o.p_a - 0.5).abs() < 1e-15);
        let small = null_oracle(1.0, 1.0, 1e-8);
        assert!((small.ratio_ba / 1e-8 - 1.0).abs() < 1e-7);
    }

    #[test]
    fn single_replica_gives_zero_or_one() {
        let net = constant_pair(1.0);
        let setup = EventSetup::at_rest(&net, 2, 1, 0.5);
        for seed in 0..20 {
            let e = mc_event_probs(&net, &setup, 1, seed).unwrap();
            for p in [e.p_a, e.p_b, e.p_c, e.p_d] {
                assert!(p.value == 0.0 || p.value == 1.0);
            }
        }
    }

    #[test]
    fn constant_rate_matches_oracle() {
        let net = constant_pair(0.8);
        let delta = 0.3;
        let setup = EventSetup::at_rest(&net, 2, 1, delta);
        let e = mc_event_probs(&net, &setup, 400_000, 7).unwrap();
        let o = null_oracle(0.8, 0.8, delta);
        assert!(e.p_b.value <= e.p_a.value && e.p_d.value <= e.p_c.value);
        for (est, exact) in [
            (e.p_a, o.p_a),
            (e.ratio_ba, o.ratio_ba),
            (e.p_c, o.p_c),
            (e.ratio_dc, o.ratio_dc),
        ] {
            assert!(
                (est.value - exact).abs() <= 4.0 * est.se,
                "{est:?} vs {exact}"
            );
        }
    }

    #[test]
    fn conditioned_sampler_agrees_with_full_simulation() {
        let net = Network::new(
            NetworkSpec::new(vec![1, 2])
                .with_edge(2, 1, 1.0)
                .with_uniform_rate(RateFunction::clipped_affine(0.75, 0.25, 0.75, 1.0)),
        )
        .unwrap();
        let setup = EventSetup::at_rest(&net, 2, 1, 0.4);
        let fast = mc_event_probs(&net, &setup, 200_000, 3).unwrap();
        let slow = mc_event_probs_naive(&net, &setup, 40_000, 4).unwrap();
        for (a, b) in [
            (fast.p_a, slow.p_a),
            (fast.p_b, slow.p_b),
            (fast.p_c, slow.p_c),
            (fast.p_d, slow.p_d),
        ] {
            let se = (a.se * a.se + b.se * b.se).sqrt();
            assert!((a.value - b.value).abs() <= 4.0 * se, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn adaptive_reaches_target() {
        let net = constant_pair(1.0);
        let setup = EventSetup::at_rest(&net, 2, 1, 0.05);
        let e = mc_event_probs_adaptive(&net, &setup, 2e-3, 10_000_000, 1).unwrap();
        assert!(e.gap.se <= 2e-3, "{:?}", e.gap);
        assert!(e.gap.value.abs() <= 4.0 * e.gap.se);
    }

    #[test]
    fn envelope_constant_rate() {
        // Constant rates with an edge: the in-degree bound is 1.
        let net = Network::new(
            NetworkSpec::new(vec![1, 2])
                .with_edge(1, 2, 1.0)
                .with_uniform_rate(RateFunction::constant(1.0)),
        )
        .unwrap();
        let delta = 0.05;
        let o = null_oracle(1.0, 1.0, delta);
        let lo = (1.0 - 3.0 * delta) * delta;
        let hi = (1.0 + 4.0 * delta) * delta;
        assert!(lo <= o.ratio_ba && o.ratio_ba <= hi);
        let reports =
            check_lemma_ratio_bounds(&net, 1, delta, Budget::Replicas(2_000_000), 5).unwrap();
        assert_eq!(reports.len(), 4);
        assert!(reports.iter().all(|r| r.verdict.passed()), "{reports:#?}");
        assert!(matches!(
            check_lemma_ratio_bounds(&net, 1, 0.5, Budget::Replicas(10), 5),
            Err(AnalysisError::DeltaOutOfRange { .. })
        ));
    }

    #[test]
    fn binomial_tails_match_statrs() {
        for &(n, p) in &[(10u64, 0.3), (100, 0.5), (400, 0.02), (1000, 0.9)] {
            let b = SBinomial::new(p, n).unwrap();
            for k in [0, 1, n / 4, n / 2, n - 1] {
                let mine = binomial_lower_tail(n, p, k);
                let theirs = b.cdf(k);
                assert!(
                    (mine - theirs).abs() <= 1e-9 * theirs.max(1e-300) + 1e-15,
                    "{n} {p} {k}"
                );
                let up = binomial_upper_tail(n, p, k + 1);
                assert!((up + mine - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn chernoff_reference_values() {
        let t = chernoff_tails(100, 0.5, 0.4);
        assert!((t.lower_bound - (-4f64).exp()).abs() < 1e-15);
        assert!(
            (t.lower_exact - 3.925_069_83e-5).abs() < 1e-11,
            "{}",
            t.lower_exact
        );
        let t = chernoff_tails(100, 1.0, 0.3);
        assert_eq!(t.lower_exact, 0.0);
        let r = chernoff_check(100, 0.5, 0.4, 50_000, 1).unwrap();
        assert!(r.iter().all(|c| c.verdict == Verdict::Pass));
    }

    #[test]
    fn domination_bounds_hold() {
        for dep in Dependence::ALL {
            let r = domination_check(0.2, 0.35, 400, 0.5, dep, 20_000, 2).unwrap();
            assert!(
                r.iter().all(|c| c.verdict == Verdict::Pass),
                "{dep:?} {r:#?}"
            );
        }
        let r = domination_check(0.2, 0.35, 400, 0.5, Dependence::Constant, 10, 2).unwrap();
        assert!((r[0].bound - (-10f64).exp()).abs() < 1e-15);
        assert!(domination_check(0.5, 0.2, 10, 0.5, Dependence::Constant, 10, 2).is_err());
    }

    #[test]
    fn failure_bound_identities() {
        let c = DerivedConstants::from_bounds(0.75, 1.0, Some(0.25), 1).unwrap();
        let fb = failure_bounds(&c, 1000).unwrap();
        assert!((fb.rho_n / fb.sigma_n.powf(29.0 / 19.0) - 1.0).abs() < 1e-12);
        assert!((fb.sigma_n / (-fb.omega * fb.horizon).exp() - 1.0).abs() < 1e-12);
        assert!(fb.null_bound <= 1.0 && fb.null_bound_raw > 5.0);
        let more = failure_bounds(&c, 10_000_000_000).unwrap();
        assert!(more.rho_n < fb.rho_n && more.null_bound_raw < fb.null_bound_raw);
        // ln(120) / omega with omega from the two forms.
        assert!((fb.required_horizon / (120f64.ln() / 2.6316e-10) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn sweep_and_constants_pass() {
        assert_eq!(separation_sweep(1000, 3).verdict, Verdict::Pass);
        let c = DerivedConstants::from_bounds(0.75, 1.0, Some(0.25), 1).unwrap();
        let r = constants_checks(&c).unwrap();
        assert!(r.iter().all(|x| x.verdict == Verdict::Pass), "{r:#?}");
    }
}
