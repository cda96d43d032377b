//! Short-window thinning with optional conditioning on candidate cells.
//!
//! A cell is a (neuron, slot) pair, slot `s` being `(s*delta, (s+1)*delta]`.
//! The candidates of distinct cells are independent Poisson processes of
//! rate `beta`, so an event that needs an accepted spike in a given cell is
//! contained in the event "that cell holds at least one candidate". Forcing
//! such cells samples the window conditionally on them; the caller accounts
//! for the conditioning probability `(1 - exp(-beta*delta))^cells`.

use rand::Rng;
use rand_distr::Exp1;

use crate::model::Network;
use crate::rng::SimRng;

#[derive(Debug, Clone)]
pub struct WindowSampler<'a> {
    net: &'a Network,
    delta: f64,
    slots: usize,
    forced: Vec<(usize, usize)>,
}

/// Reusable buffers; `occupancy[k]` has bit `s` set when neuron `k`
/// (dense index) spiked in slot `s`.
#[derive(Debug, Clone, Default)]
pub struct WindowScratch {
    pub occupancy: Vec<u8>,
    potential: Vec<f64>,
    candidates: Vec<(f64, usize, f64)>,
}

impl<'a> WindowSampler<'a> {
    /// `slots` must be at most 8.
    pub fn new(net: &'a Network, delta: f64, slots: usize) -> Self {
        assert!(slots <= 8 && slots > 0, "window holds 1..=8 slots");
        assert!(delta > 0.0 && delta.is_finite());
        Self {
            net,
            delta,
            slots,
            forced: Vec::new(),
        }
    }

    /// Condition on at least one candidate of `neuron` (dense index) in `slot`.
    pub fn force(mut self, neuron: usize, slot: usize) -> Self {
        assert!(slot < self.slots && neuron < self.net.len());
        if !self.forced.contains(&(neuron, slot)) {
            self.forced.push((neuron, slot));
        }
        self
    }

    /// Probability of the conditioning event.
    pub fn forcing_probability(&self) -> f64 {
        let cell = -(-self.net.beta() * self.delta).exp_m1();
        cell.powi(self.forced.len() as i32)
    }

    fn slot_of(&self, t: f64) -> usize {
        let mut s = ((t / self.delta).ceil() as usize).saturating_sub(1);
        while s > 0 && t <= s as f64 * self.delta {
            s -= 1;
        }
        while t > (s + 1) as f64 * self.delta {
            s += 1;
        }
        s
    }

    fn is_forced(&self, neuron: usize, slot: usize) -> bool {
        self.forced.contains(&(neuron, slot))
    }

    /// Count of a Poisson(mu) variable conditioned to be at least 1.
    fn positive_poisson(mu: f64, rng: &mut SimRng) -> u32 {
        let u: f64 = rng.random();
        let mut k = 1u32;
        let mut p = mu / mu.exp_m1();
        let mut cum = p;
        while u > cum && k < 1000 {
            k += 1;
            p *= mu / k as f64;
            cum += p;
        }
        k
    }

    /// Samples one window from initial potentials `u0` and fills
    /// `scratch.occupancy`.
    pub fn sample(&self, u0: &[f64], rng: &mut SimRng, scratch: &mut WindowScratch) {
        let net = self.net;
        let n = net.len();
        let beta = net.beta();
        let end = self.slots as f64 * self.delta;
        scratch.candidates.clear();

        let total_rate = n as f64 * beta;
        let mut t = 0.0;
        loop {
            t += rng.sample::<f64, _>(Exp1) / total_rate;
            if t > end {
                break;
            }
            let z = rng.random_range(0..n);
            let mark = rng.random::<f64>() * beta;
            if !self.forced.is_empty() && self.is_forced(z, self.slot_of(t)) {
                continue;
            }
            scratch.candidates.push((t, z, mark));
        }
        let mu = beta * self.delta;
        for &(z, slot) in &self.forced {
            let k = Self::positive_poisson(mu, rng);
            for _ in 0..k {
                let time = loop {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let time = (slot as f64 + u) * self.delta;
                    if self.slot_of(time) == slot {
                        break time;
                    }
                };
                let mark = rng.random::<f64>() * beta;
                scratch.candidates.push((time, z, mark));
            }
        }
        if !self.forced.is_empty() {
            scratch
                .candidates
                .sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        }

        scratch.potential.clear();
        scratch.potential.extend_from_slice(u0);
        scratch.occupancy.clear();
        scratch.occupancy.resize(n, 0);
        for &(time, z, mark) in &scratch.candidates {
            if mark <= net.rate(z).eval(scratch.potential[z]) {
                scratch.potential[z] = 0.0;
                for &(target, w) in net.outgoing(z) {
                    scratch.potential[target] += w;
                }
                scratch.occupancy[z] |= 1 << self.slot_of(time);
            }
        }
    }
}
