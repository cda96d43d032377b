//! Exact event-driven simulation by Poisson thinning.
//!
//! Candidates arrive on a single merged exponential clock of rate
//! `|I| * beta`; each candidate gets a uniform label and a uniform mark in
//! `[0, beta]`, and is accepted as a spike of its label `z` iff the mark
//! does not exceed `phi_z(U^z(t-))`. An accepted spike resets `U^z` to 0 and
//! adds `w(z -> i)` to every postsynaptic `U^i`. Per-candidate work is
//! `O(out-degree)`.

mod window;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Network, NeuronId};
use crate::rng;

pub use window::{WindowSampler, WindowScratch};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("initial potential of neuron {0} is not finite")]
    NonFiniteInitialPotential(NeuronId),
    #[error("neuron {0} is not part of the network")]
    UnknownNeuron(NeuronId),
    #[error("time {t} lies outside [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },
    #[error("no candidate log was recorded for this run")]
    NoCandidateLog,
    #[error("mark threshold must lie in (0, {beta}], got {threshold}")]
    InvalidThreshold { threshold: f64, beta: f64 },
    #[error("spike train of neuron {neuron} is not strictly increasing at position {position}")]
    NotIncreasing { neuron: NeuronId, position: usize },
    #[error("spike of neuron {neuron} at {time} lies outside (0, {horizon}]")]
    SpikeOutOfRange {
        neuron: NeuronId,
        time: f64,
        horizon: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Initial potentials; neurons not listed start at 0.
    pub u0: BTreeMap<NeuronId, f64>,
    pub horizon: f64,
    pub seed: u64,
    pub log_candidates: bool,
}

impl SimulationConfig {
    pub fn new(horizon: f64, seed: u64) -> Self {
        Self {
            u0: BTreeMap::new(),
            horizon,
            seed,
            log_candidates: false,
        }
    }

    pub fn with_candidate_log(mut self) -> Self {
        self.log_candidates = true;
        self
    }

    pub fn with_u0(mut self, neuron: NeuronId, u: f64) -> Self {
        self.u0.insert(neuron, u);
        self
    }

    /// Initial potentials aligned with `net.ids()`.
    pub fn dense_u0(&self, net: &Network) -> Result<Vec<f64>, SimError> {
        let mut u = vec![0.0; net.len()];
        for (&id, &v) in &self.u0 {
            let k = net.index_of(id).ok_or(SimError::UnknownNeuron(id))?;
            if !v.is_finite() {
                return Err(SimError::NonFiniteInitialPotential(id));
            }
            u[k] = v;
        }
        Ok(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub time: f64,
    pub mark: f64,
    pub neuron: NeuronId,
    pub accepted: bool,
}

/// Every candidate of the dominating Poisson measure, in time order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateLog {
    pub candidates: Vec<Candidate>,
    pub beta: f64,
}

impl CandidateLog {
    /// Number of candidates labelled `neuron` in `(t0, t1]` whose mark is at
    /// most `threshold`. With threshold `alpha` this is the lower bounding
    /// count, with `beta` the upper one.
    pub fn bounding_count(
        &self,
        threshold: f64,
        t0: f64,
        t1: f64,
        neuron: NeuronId,
    ) -> Result<u64, SimError> {
        if !(threshold > 0.0 && threshold <= self.beta) {
            return Err(SimError::InvalidThreshold {
                threshold,
                beta: self.beta,
            });
        }
        if t1 <= t0 {
            return Ok(0);
        }
        let lo = self.candidates.partition_point(|c| c.time <= t0);
        let hi = self.candidates.partition_point(|c| c.time <= t1);
        Ok(self.candidates[lo..hi]
            .iter()
            .filter(|c| c.neuron == neuron && c.mark <= threshold)
            .count() as u64)
    }
}

/// Bounding count on an optional log (`None` when logging was off).
pub fn bounding_counts(
    log: Option<&CandidateLog>,
    threshold: f64,
    interval: (f64, f64),
    neuron: NeuronId,
) -> Result<u64, SimError> {
    log.ok_or(SimError::NoCandidateLog)?
        .bounding_count(threshold, interval.0, interval.1, neuron)
}

/// Accepted spike times per neuron over `(0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRecording {
    trains: BTreeMap<NeuronId, Vec<f64>>,
    horizon: f64,
    /// Set when the horizon was not stored with the data and was taken
    /// from the last spike.
    pub horizon_inferred: bool,
    pub network_fingerprint: Option<String>,
    pub seed: Option<u64>,
}

impl SpikeRecording {
    pub fn empty(neurons: &[NeuronId], horizon: f64) -> Self {
        Self {
            trains: neurons.iter().map(|&id| (id, Vec::new())).collect(),
            horizon,
            horizon_inferred: false,
            network_fingerprint: None,
            seed: None,
        }
    }

    /// Validated construction: every train strictly increasing inside
    /// `(0, horizon]`.
    pub fn from_trains(
        trains: BTreeMap<NeuronId, Vec<f64>>,
        horizon: f64,
    ) -> Result<Self, SimError> {
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(SimError::InvalidHorizon(horizon));
        }
        for (&neuron, times) in &trains {
            for (position, &time) in times.iter().enumerate() {
                if !(time > 0.0 && time <= horizon) {
                    return Err(SimError::SpikeOutOfRange {
                        neuron,
                        time,
                        horizon,
                    });
                }
                if position > 0 && times[position - 1] >= time {
                    return Err(SimError::NotIncreasing { neuron, position });
                }
            }
        }
        Ok(Self {
            trains,
            horizon,
            horizon_inferred: false,
            network_fingerprint: None,
            seed: None,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Replaces the horizon. Fails if a spike lies beyond the new one.
    pub fn with_horizon(mut self, horizon: f64) -> Result<Self, SimError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SimError::InvalidHorizon(horizon));
        }
        for (&neuron, train) in &self.trains {
            if let Some(&time) = train.last().filter(|&&t| t > horizon) {
                return Err(SimError::SpikeOutOfRange {
                    neuron,
                    time,
                    horizon,
                });
            }
        }
        self.horizon = horizon;
        self.horizon_inferred = false;
        Ok(self)
    }

    pub fn neurons(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.trains.keys().copied()
    }

    pub fn trains(&self) -> &BTreeMap<NeuronId, Vec<f64>> {
        &self.trains
    }

    pub fn train(&self, neuron: NeuronId) -> &[f64] {
        self.trains.get(&neuron).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `N^neuron(t0, t1]`.
    pub fn count(&self, neuron: NeuronId, t0: f64, t1: f64) -> u64 {
        let train = self.train(neuron);
        if t1 <= t0 {
            return 0;
        }
        (train.partition_point(|&x| x <= t1) - train.partition_point(|&x| x <= t0)) as u64
    }

    pub fn total_spikes(&self) -> usize {
        self.trains.values().map(Vec::len).sum()
    }

    /// All spikes as `(time, neuron)` sorted by time, ties by neuron id.
    pub fn merged(&self) -> Vec<(f64, NeuronId)> {
        let mut all: Vec<(f64, NeuronId)> = self
            .trains
            .iter()
            .flat_map(|(&id, ts)| ts.iter().map(move |&t| (t, id)))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all
    }

    /// Spike trains equal, ignoring neurons without spikes.
    pub fn same_spikes(&self, other: &Self) -> bool {
        let nonempty = |r: &Self| -> Vec<(NeuronId, Vec<u64>)> {
            r.trains
                .iter()
                .filter(|(_, v)| !v.is_empty())
                .map(|(&id, v)| (id, v.iter().map(|t| t.to_bits()).collect()))
                .collect()
        };
        nonempty(self) == nonempty(other)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub candidates: u64,
    pub accepted: u64,
    /// Candidates whose timestamp collided with the previous one in
    /// floating point and was moved up by one ulp.
    pub nudged: u64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub recording: SpikeRecording,
    pub log: Option<CandidateLog>,
    pub stats: SimStats,
}

/// Runs one trajectory over `(0, cfg.horizon]`. Deterministic in `cfg.seed`.
pub fn simulate(net: &Network, cfg: &SimulationConfig) -> Result<SimOutput, SimError> {
    if !(cfg.horizon.is_finite() && cfg.horizon > 0.0) {
        return Err(SimError::InvalidHorizon(cfg.horizon));
    }
    let mut potential = cfg.dense_u0(net)?;
    let n = net.len();
    let beta = net.beta();
    let total_rate = n as f64 * beta;
    let mut rng = rng::stream(cfg.seed, 0);

    let expected = (total_rate * cfg.horizon).min(1e8) as usize;
    let mut trains: Vec<Vec<f64>> = vec![Vec::with_capacity(expected / n.max(1) / 2); n];
    let mut log = cfg.log_candidates.then(|| CandidateLog {
        candidates: Vec::with_capacity(expected),
        beta,
    });
    let mut stats = SimStats::default();

    let mut t = 0.0f64;
    loop {
        let gap: f64 = rng.sample::<f64, _>(Exp1) / total_rate;
        let mut next = t + gap;
        if next <= t {
            next = t.next_up();
            stats.nudged += 1;
        }
        if next > cfg.horizon {
            break;
        }
        t = next;
        let z = rng.random_range(0..n);
        let mark = rng.random::<f64>() * beta;
        let accepted = mark <= net.rate(z).eval(potential[z]);
        stats.candidates += 1;
        if accepted {
            stats.accepted += 1;
            potential[z] = 0.0;
            for &(target, w) in net.outgoing(z) {
                potential[target] += w;
            }
            trains[z].push(t);
        }
        if let Some(log) = log.as_mut() {
            log.candidates.push(Candidate {
                time: t,
                mark,
                neuron: net.ids()[z],
                accepted,
            });
        }
    }

    let recording = SpikeRecording {
        trains: net.ids().iter().copied().zip(trains).collect(),
        horizon: cfg.horizon,
        horizon_inferred: false,
        network_fingerprint: Some(net.spec().fingerprint()),
        seed: Some(cfg.seed),
    };
    Ok(SimOutput {
        recording,
        log,
        stats,
    })
}

fn last_spike_at_or_before(train: &[f64], t: f64, strict: bool) -> Option<f64> {
    let k = if strict {
        train.partition_point(|&x| x < t)
    } else {
        train.partition_point(|&x| x <= t)
    };
    k.checked_sub(1).map(|k| train[k])
}

fn reconstruct(
    rec: &SpikeRecording,
    net: &Network,
    u0: &[f64],
    t: f64,
    strict: bool,
) -> Result<Vec<f64>, SimError> {
    if !(0.0..=rec.horizon()).contains(&t) {
        return Err(SimError::OutOfHorizon {
            t,
            horizon: rec.horizon(),
        });
    }
    // Spikes counted in (since, t] or (since, t) depending on `strict`.
    let count_upto = |train: &[f64], since: f64| -> f64 {
        let hi = if strict {
            train.partition_point(|&x| x < t)
        } else {
            train.partition_point(|&x| x <= t)
        };
        let lo = train.partition_point(|&x| x <= since);
        hi.saturating_sub(lo) as f64
    };
    let ids = net.ids();
    Ok((0..net.len())
        .map(|k| {
            let own = rec.train(ids[k]);
            let (base, since) = match last_spike_at_or_before(own, t, strict) {
                Some(last) => (0.0, last),
                None => (u0[k], 0.0),
            };
            base + net
                .incoming(k)
                .iter()
                .map(|&(j, w)| w * count_upto(rec.train(ids[j]), since))
                .sum::<f64>()
        })
        .collect())
}

/// `U(t)` rebuilt from the recording alone, right-continuous: a spike at
/// exactly `t` is already applied (the spiking neuron reads 0, its targets
/// include the new increment).
pub fn potential_at(
    rec: &SpikeRecording,
    net: &Network,
    u0: &[f64],
    t: f64,
) -> Result<Vec<f64>, SimError> {
    reconstruct(rec, net, u0, t, false)
}

/// Left limit `U(t-)`: the potentials a candidate at time `t` is tested
/// against.
pub fn potential_before(
    rec: &SpikeRecording,
    net: &Network,
    u0: &[f64],
    t: f64,
) -> Result<Vec<f64>, SimError> {
    reconstruct(rec, net, u0, t, true)
}
