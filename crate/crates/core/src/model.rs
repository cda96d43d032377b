//! Network description, admissible rate functions and the closed-form
//! constants that calibrate the identification procedure.
//!
//! A [`NetworkSpec`] is plain data. [`Network::new`] checks its structure
//! (no self-loops, finite weights, monotone bounded rates) and compiles it
//! into dense, index-addressed form for the simulator. [`validate_network`]
//! additionally requires every synaptic weight to move the target's rate
//! away from its rest value and returns the [`DerivedConstants`].

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer label of a neuron.
pub type NeuronId = u32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("self-loop on neuron {neuron}: weight {weight} (w(j->j) must be 0)")]
    SelfLoop { neuron: NeuronId, weight: f64 },
    #[error("edge {from}->{to}: weight {weight} does not change the rate of neuron {to} at rest")]
    ZeroDelta {
        from: NeuronId,
        to: NeuronId,
        weight: f64,
    },
    #[error("rate function of neuron {neuron} decreases between u={lo} and u={hi}")]
    NonMonotone { neuron: NeuronId, lo: f64, hi: f64 },
    #[error("network declares no edges (d = 0); slot length and thresholds are undefined")]
    NoEdgesDeclared,
    #[error("slot length {delta} exceeds the certified maximum {delta_star}; pass the heuristic override to proceed")]
    DeltaTooLarge { delta: f64, delta_star: f64 },
    #[error("slot length must be a positive finite number, got {0}")]
    InvalidDelta(f64),
    #[error("edge {from}->{to} references unknown neuron {missing}")]
    UnknownNeuron {
        from: NeuronId,
        to: NeuronId,
        missing: NeuronId,
    },
    #[error("neuron {0} has no rate function")]
    MissingRate(NeuronId),
    #[error("rate function of neuron {neuron}: {reason}")]
    InvalidRate { neuron: NeuronId, reason: String },
    #[error("edge {from}->{to} has non-finite weight {weight}")]
    NonFiniteWeight {
        from: NeuronId,
        to: NeuronId,
        weight: f64,
    },
    #[error("duplicate neuron id {0}")]
    DuplicateNeuron(NeuronId),
    #[error("network has no neurons")]
    Empty,
    #[error("invalid rate bounds: {0}")]
    InvalidBounds(String),
}

/// Parametric shape of a rate function. Every shape is evaluated and then
/// clamped into the declared `[floor, ceiling]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RateShape {
    /// `intercept + slope * u`.
    ClippedAffine { intercept: f64, slope: f64 },
    /// `floor + (ceiling - floor) / (1 + exp(-gain * (u - midpoint)))`.
    ClippedLogistic { midpoint: f64, gain: f64 },
    /// Piecewise constant: `levels[k]` where `k` counts the thresholds `<= u`.
    Step {
        thresholds: Vec<f64>,
        levels: Vec<f64>,
    },
}

/// A spiking rate function `phi: R -> [floor, ceiling]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    #[serde(flatten)]
    pub shape: RateShape,
    pub floor: f64,
    pub ceiling: f64,
}

impl RateFunction {
    pub fn clipped_affine(intercept: f64, slope: f64, floor: f64, ceiling: f64) -> Self {
        Self {
            shape: RateShape::ClippedAffine { intercept, slope },
            floor,
            ceiling,
        }
    }

    pub fn clipped_logistic(midpoint: f64, gain: f64, floor: f64, ceiling: f64) -> Self {
        Self {
            shape: RateShape::ClippedLogistic { midpoint, gain },
            floor,
            ceiling,
        }
    }

    pub fn step(thresholds: Vec<f64>, levels: Vec<f64>, floor: f64, ceiling: f64) -> Self {
        Self {
            shape: RateShape::Step { thresholds, levels },
            floor,
            ceiling,
        }
    }

    /// Constant rate `c` (floor = ceiling = c).
    pub fn constant(c: f64) -> Self {
        Self::clipped_affine(c, 0.0, c, c)
    }

    /// Evaluates the rate at potential `u`. Total: `-inf` and NaN map to
    /// the floor, `+inf` to the ceiling.
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        if u.is_nan() {
            return self.floor;
        }
        let raw = match &self.shape {
            RateShape::ClippedAffine { intercept, slope } => {
                if *slope == 0.0 {
                    *intercept
                } else {
                    intercept + slope * u
                }
            }
            RateShape::ClippedLogistic { midpoint, gain } => {
                let z = gain * (u - midpoint);
                self.floor + (self.ceiling - self.floor) / (1.0 + (-z).exp())
            }
            RateShape::Step { thresholds, levels } => {
                let k = thresholds.partition_point(|&t| t <= u);
                levels[k]
            }
        };
        if raw.is_nan() {
            // slope * inf with slope 0 is excluded above; inf - inf cannot occur.
            return self.floor;
        }
        raw.clamp(self.floor, self.ceiling)
    }

    fn check_parameters(&self, neuron: NeuronId) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::InvalidRate { neuron, reason };
        if !(self.floor.is_finite() && self.floor > 0.0) {
            return Err(bad(format!(
                "floor must be finite and > 0, got {}",
                self.floor
            )));
        }
        if !self.ceiling.is_finite() {
            return Err(bad(format!("ceiling must be finite, got {}", self.ceiling)));
        }
        if self.ceiling < self.floor {
            return Err(bad(format!(
                "ceiling {} is below floor {}",
                self.ceiling, self.floor
            )));
        }
        match &self.shape {
            RateShape::ClippedAffine { intercept, slope } => {
                if !intercept.is_finite() || !slope.is_finite() {
                    return Err(bad("affine coefficients must be finite".into()));
                }
            }
            RateShape::ClippedLogistic { midpoint, gain } => {
                if !midpoint.is_finite() || !gain.is_finite() {
                    return Err(bad("logistic parameters must be finite".into()));
                }
            }
            RateShape::Step { thresholds, levels } => {
                if levels.len() != thresholds.len() + 1 {
                    return Err(bad(format!(
                        "step needs exactly one more level than thresholds ({} thresholds, {} levels)",
                        thresholds.len(),
                        levels.len()
                    )));
                }
                if thresholds.iter().chain(levels).any(|x| !x.is_finite()) {
                    return Err(bad("step thresholds and levels must be finite".into()));
                }
                if thresholds.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(bad("step thresholds must be strictly increasing".into()));
                }
            }
        }
        Ok(())
    }

    /// Probes monotonicity on a uniform grid over `[-50, 50]` plus `extra`
    /// points (typically the incoming weights and 0).
    fn check_monotone(&self, neuron: NeuronId, extra: &[f64]) -> Result<(), ModelError> {
        let mut grid: Vec<f64> = (0..=MONOTONE_GRID_POINTS)
            .map(|k| -50.0 + 100.0 * k as f64 / MONOTONE_GRID_POINTS as f64)
            .collect();
        grid.extend_from_slice(extra);
        if let RateShape::Step { thresholds, .. } = &self.shape {
            for &t in thresholds {
                grid.push(t);
                grid.push(t.next_down());
            }
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        for w in grid.windows(2) {
            if self.eval(w[0]) > self.eval(w[1]) {
                return Err(ModelError::NonMonotone {
                    neuron,
                    lo: w[0],
                    hi: w[1],
                });
            }
        }
        Ok(())
    }
}

const MONOTONE_GRID_POINTS: usize = 1000;

/// User-facing description of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub neurons: Vec<NeuronId>,
    /// `(from, to) -> weight`.
    pub weights: BTreeMap<(NeuronId, NeuronId), f64>,
    pub rates: BTreeMap<NeuronId, RateFunction>,
}

impl NetworkSpec {
    pub fn new(neurons: Vec<NeuronId>) -> Self {
        Self {
            neurons,
            weights: BTreeMap::new(),
            rates: BTreeMap::new(),
        }
    }

    pub fn with_edge(mut self, from: NeuronId, to: NeuronId, weight: f64) -> Self {
        self.weights.insert((from, to), weight);
        self
    }

    pub fn with_rate(mut self, neuron: NeuronId, rate: RateFunction) -> Self {
        self.rates.insert(neuron, rate);
        self
    }

    /// Same rate function for every declared neuron.
    pub fn with_uniform_rate(mut self, rate: RateFunction) -> Self {
        for &id in &self.neurons {
            self.rates.insert(id, rate.clone());
        }
        self
    }

    /// Presynaptic set of `i`: neurons with a nonzero weight onto `i`.
    pub fn presynaptic(&self, i: NeuronId) -> Vec<NeuronId> {
        self.weights
            .iter()
            .filter(|(&(from, to), &w)| to == i && from != i && w != 0.0)
            .map(|(&(from, _), _)| from)
            .collect()
    }

    pub fn weight(&self, from: NeuronId, to: NeuronId) -> f64 {
        self.weights.get(&(from, to)).copied().unwrap_or(0.0)
    }

    /// Nonzero edges, i.e. the ground-truth connectivity graph.
    pub fn edges(&self) -> impl Iterator<Item = (NeuronId, NeuronId, f64)> + '_ {
        self.weights
            .iter()
            .filter(|(_, &w)| w != 0.0)
            .map(|(&(f, t), &w)| (f, t, w))
    }

    /// Stable hex fingerprint of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        #[derive(Serialize)]
        struct Canonical<'a> {
            neurons: &'a [NeuronId],
            edges: Vec<(NeuronId, NeuronId, u64)>,
            rates: &'a BTreeMap<NeuronId, RateFunction>,
        }
        let canonical = Canonical {
            neurons: &self.neurons,
            edges: self
                .weights
                .iter()
                .map(|(&(f, t), w)| (f, t, w.to_bits()))
                .collect(),
            rates: &self.rates,
        };
        let bytes = serde_json::to_vec(&canonical).expect("network serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Structurally validated network in dense form.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    ids: Vec<NeuronId>,
    index: BTreeMap<NeuronId, usize>,
    rates: Vec<RateFunction>,
    /// CSR outgoing adjacency: targets of neuron `k` live in
    /// `out_targets[out_offsets[k]..out_offsets[k + 1]]`.
    out_offsets: Vec<usize>,
    out_targets: Vec<(usize, f64)>,
    /// Incoming (presynaptic index, weight) per neuron.
    incoming: Vec<Vec<(usize, f64)>>,
    beta: f64,
}

impl Network {
    /// Checks everything except the rate-gap condition.
    pub fn new(spec: NetworkSpec) -> Result<Self, ModelError> {
        if spec.neurons.is_empty() {
            return Err(ModelError::Empty);
        }
        let mut ids = spec.neurons.clone();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(ModelError::DuplicateNeuron(w[0]));
        }
        let index: BTreeMap<NeuronId, usize> =
            ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();

        let mut incoming = vec![Vec::new(); ids.len()];
        let mut outgoing = vec![Vec::new(); ids.len()];
        for (&(from, to), &weight) in &spec.weights {
            for id in [from, to] {
                if !index.contains_key(&id) {
                    return Err(ModelError::UnknownNeuron {
                        from,
                        to,
                        missing: id,
                    });
                }
            }
            if !weight.is_finite() {
                return Err(ModelError::NonFiniteWeight { from, to, weight });
            }
            if from == to {
                if weight != 0.0 {
                    return Err(ModelError::SelfLoop {
                        neuron: from,
                        weight,
                    });
                }
                continue;
            }
            if weight == 0.0 {
                continue;
            }
            incoming[index[&to]].push((index[&from], weight));
            outgoing[index[&from]].push((index[&to], weight));
        }

        let mut rates = Vec::with_capacity(ids.len());
        for (k, &id) in ids.iter().enumerate() {
            let rate = spec.rates.get(&id).ok_or(ModelError::MissingRate(id))?;
            rate.check_parameters(id)?;
            let mut probes: Vec<f64> = incoming[k].iter().map(|&(_, w)| w).collect();
            probes.push(0.0);
            rate.check_monotone(id, &probes)?;
            rates.push(rate.clone());
        }

        let mut out_offsets = Vec::with_capacity(ids.len() + 1);
        let mut out_targets = Vec::new();
        out_offsets.push(0);
        for list in outgoing {
            out_targets.extend(list);
            out_offsets.push(out_targets.len());
        }
        let beta = rates.iter().map(|r| r.ceiling).fold(0.0, f64::max);

        Ok(Self {
            spec,
            ids,
            index,
            rates,
            out_offsets,
            out_targets,
            incoming,
            beta,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Neuron ids in ascending order; position = dense index.
    pub fn ids(&self) -> &[NeuronId] {
        &self.ids
    }

    pub fn index_of(&self, id: NeuronId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn rate(&self, k: usize) -> &RateFunction {
        &self.rates[k]
    }

    #[inline]
    pub fn outgoing(&self, k: usize) -> &[(usize, f64)] {
        &self.out_targets[self.out_offsets[k]..self.out_offsets[k + 1]]
    }

    pub fn incoming(&self, k: usize) -> &[(usize, f64)] {
        &self.incoming[k]
    }

    /// Largest ceiling: the per-neuron rate of the dominating candidate stream.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.rates
            .iter()
            .map(|r| r.floor)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_in_degree(&self) -> usize {
        self.incoming.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// `19^2 / (3 * 116 * 34^2 * 10^3)` as an exact rational.
pub fn theta0_exact() -> Ratio<u64> {
    Ratio::new(19 * 19, 3 * 116 * 34 * 34 * 1000)
}

pub const THETA0: f64 = 361.0 / 402_288_000.0;

/// The dimensionless shape of the problem that the slot length and the
/// thresholds depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapParams {
    /// `alpha / beta`.
    pub s: f64,
    /// `delta / beta`.
    pub tau: f64,
    pub d: f64,
    pub beta: f64,
}

impl GapParams {
    /// `s^3 tau / (34 d beta)`.
    pub fn delta_star(&self) -> f64 {
        self.s.powi(3) * self.tau / (34.0 * self.d * self.beta)
    }

    /// Separation thresholds and the envelope slopes at slot length `delta`,
    /// straight from the closed forms (no range check).
    pub fn threshold_formulas(&self, delta: f64) -> ThresholdPair {
        let GapParams { s, tau, d, beta } = *self;
        let bd = beta * delta;
        let dbd = d * beta * delta;
        let xi1 = bd * (tau / 5.0 + (9.0 - tau / 10.0) * dbd / (s * s));
        let xi2 = bd
            * (tau / 5.0
                + (5.0 + 3.0 * s * s + (tau / 10.0) * (5.0 - 3.0 * s * s)) * dbd / s.powi(3));
        let lambda1 = bd * (1.0 - 5.0 * dbd / (s * s)) * (1.0 - tau / 10.0);
        let lambda2 = bd * (1.0 + 5.0 * dbd / s.powi(3)) * (1.0 + tau / 10.0);
        ThresholdPair {
            xi1,
            xi2,
            lambda1,
            lambda2,
            regime: Regime::Certified,
        }
    }

    /// `theta0 * tau^4 * s^9 * beta / d^2`.
    pub fn omega(&self) -> f64 {
        THETA0 * self.tau.powi(4) * self.s.powi(9) * self.beta / (self.d * self.d)
    }
}

/// Whether the slot length lies inside the range where the population gap
/// is guaranteed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Certified,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub xi1: f64,
    pub xi2: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub regime: Regime,
}

impl ThresholdPair {
    /// `xi2 - tau*lambda2 <= -xi1`, returned as the slack (>= 0 when it holds).
    pub fn inhibitory_slack(&self, tau: f64) -> f64 {
        -self.xi1 - (self.xi2 - tau * self.lambda2)
    }

    /// `xi2 <= tau*lambda1 - xi1`, returned as the slack.
    pub fn excitatory_slack(&self, tau: f64) -> f64 {
        (tau * self.lambda1 - self.xi1) - self.xi2
    }
}

/// Rate bounds and in-degree, plus everything derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub alpha: f64,
    pub beta: f64,
    /// Smallest rate change caused by a single presynaptic weight; `None`
    /// when no neuron has presynaptic inputs.
    pub delta: Option<f64>,
    pub d: usize,
    pub s: f64,
    pub tau: Option<f64>,
    pub delta_star: Option<f64>,
    pub omega: Option<f64>,
    pub theta0: f64,
}

impl DerivedConstants {
    /// Builds constants from (possibly user-asserted) bounds.
    pub fn from_bounds(
        alpha: f64,
        beta: f64,
        delta: Option<f64>,
        d: usize,
    ) -> Result<Self, ModelError> {
        let bad = |m: String| Err(ModelError::InvalidBounds(m));
        if !(alpha.is_finite() && alpha > 0.0) {
            return bad(format!("alpha must be finite and > 0, got {alpha}"));
        }
        if !(beta.is_finite() && beta >= alpha) {
            return bad(format!("beta must be finite and >= alpha, got {beta}"));
        }
        if let Some(delta) = delta {
            if !(delta.is_finite() && delta > 0.0) {
                return bad(format!("delta must be finite and > 0, got {delta}"));
            }
            if alpha + delta > beta * (1.0 + 1e-12) {
                return bad(format!(
                    "alpha + delta = {} exceeds beta = {beta}",
                    alpha + delta
                ));
            }
        }
        if d > 0 && delta.is_none() {
            return bad("d >= 1 requires delta".into());
        }
        let s = alpha / beta;
        let tau = delta.map(|dl| dl / beta);
        let gap = match tau {
            Some(tau) if d > 0 => Some(GapParams {
                s,
                tau,
                d: d as f64,
                beta,
            }),
            _ => None,
        };
        Ok(Self {
            alpha,
            beta,
            delta: if d > 0 { delta } else { None },
            d,
            s,
            tau: if d > 0 { tau } else { None },
            delta_star: gap.map(|g| g.delta_star()),
            omega: gap.map(|g| g.omega()),
            theta0: THETA0,
        })
    }

    pub fn gap_params(&self) -> Result<GapParams, ModelError> {
        match (self.tau, self.d) {
            (Some(tau), d) if d > 0 => Ok(GapParams {
                s: self.s,
                tau,
                d: d as f64,
                beta: self.beta,
            }),
            _ => Err(ModelError::NoEdgesDeclared),
        }
    }

    /// `omega` through the raw rate bounds: `theta0 delta^4 alpha^9 / (d^2 beta^12)`.
    pub fn omega_from_rates(&self) -> Result<f64, ModelError> {
        let delta = self.delta.ok_or(ModelError::NoEdgesDeclared)?;
        let d = self.d as f64;
        Ok(THETA0 * delta.powi(4) * self.alpha.powi(9) / (d * d * self.beta.powi(12)))
    }
}

/// Checks the full set of conditions and computes the constants.
pub fn validate_network(spec: &NetworkSpec) -> Result<DerivedConstants, ModelError> {
    let net = Network::new(spec.clone())?;
    constants_of(&net)
}

/// Constants of an already compiled network.
pub fn constants_of(net: &Network) -> Result<DerivedConstants, ModelError> {
    let mut delta = f64::INFINITY;
    for k in 0..net.len() {
        let rate = net.rate(k);
        let at_rest = rate.eval(0.0);
        for &(from, w) in net.incoming(k) {
            let gap = (rate.eval(w) - at_rest).abs();
            if gap == 0.0 {
                return Err(ModelError::ZeroDelta {
                    from: net.ids()[from],
                    to: net.ids()[k],
                    weight: w,
                });
            }
            delta = delta.min(gap);
        }
    }
    let d = net.max_in_degree();
    let delta = (d > 0).then_some(delta);
    DerivedConstants::from_bounds(net.alpha(), net.beta(), delta, d)
}

pub fn eval_rate(rate: &RateFunction, u: f64) -> f64 {
    rate.eval(u)
}

/// `s^3 tau / (34 d beta)`.
pub fn delta_star(c: &DerivedConstants) -> Result<f64, ModelError> {
    Ok(c.gap_params()?.delta_star())
}

/// Decision thresholds at slot length `delta`.
///
/// Inside `(0, delta_star]` the closed forms are returned as is. Beyond
/// `delta_star` the call fails unless `allow_heuristic` is set; then the
/// thresholds keep the ratio `xi / (beta * delta)` they have at
/// `delta_star`, because the quadratic terms of the closed forms grow past
/// any achievable rate gap once `delta` is a large multiple of `delta_star`.
pub fn thresholds(
    c: &DerivedConstants,
    delta: f64,
    allow_heuristic: bool,
) -> Result<ThresholdPair, ModelError> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(ModelError::InvalidDelta(delta));
    }
    let gap = c.gap_params()?;
    let delta_star = gap.delta_star();
    if delta <= delta_star {
        return Ok(gap.threshold_formulas(delta));
    }
    if !allow_heuristic {
        return Err(ModelError::DeltaTooLarge { delta, delta_star });
    }
    let at_star = gap.threshold_formulas(delta_star);
    let scale = delta / delta_star;
    let formulas = gap.threshold_formulas(delta);
    Ok(ThresholdPair {
        xi1: at_star.xi1 * scale,
        xi2: at_star.xi2 * scale,
        lambda1: formulas.lambda1,
        lambda2: formulas.lambda2,
        regime: Regime::Heuristic,
    })
}
