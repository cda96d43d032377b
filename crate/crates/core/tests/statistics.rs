//! Seeded statistical checks of the simulator and the event estimators.
//! Every test uses a fixed seed and tolerances of at least 4 standard
//! errors.

use statrs::distribution::{ContinuousCDF, Exp};

use spikegraph::analysis::{
    binomial_lower_tail, binomial_upper_tail, chernoff_grid, chernoff_tails, mc_event_probs,
    mc_event_probs_naive, null_oracle, EventSetup,
};
use spikegraph::model::{Network, NetworkSpec, RateFunction};
use spikegraph::simulator::{simulate, SimulationConfig};

fn ks_exponential(mut samples: Vec<f64>, rate: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let law = Exp::new(rate).unwrap();
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = law.cdf(x);
            (f - k as f64 / n).abs().max((k as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

fn intervals(train: &[f64]) -> Vec<f64> {
    std::iter::once(train[0])
        .chain(train.windows(2).map(|w| w[1] - w[0]))
        .collect()
}

#[test]
fn constant_rates_give_poisson_trains() {
    let net = Network::new(
        NetworkSpec::new(vec![1, 2, 3])
            .with_rate(1, RateFunction::constant(0.5))
            .with_rate(2, RateFunction::constant(1.0))
            .with_rate(3, RateFunction::constant(2.0)),
    )
    .unwrap();
    let horizon = 2e4;
    let rec = simulate(&net, &SimulationConfig::new(horizon, 11))
        .unwrap()
        .recording;
    for (id, c) in [(1, 0.5), (2, 1.0), (3, 2.0)] {
        let mean = c * horizon;
        let n = rec.train(id).len() as f64;
        assert!(
            (n - mean).abs() <= 4.0 * mean.sqrt(),
            "neuron {id}: {n} vs {mean}"
        );
        let ks = ks_exponential(intervals(rec.train(id)), c);
        // Asymptotic 0.1% critical value.
        assert!(ks < 1.95 / n.sqrt(), "neuron {id}: KS {ks}");
    }
}

#[test]
fn acceptance_fraction_stays_above_alpha_over_beta() {
    let net = Network::new(
        NetworkSpec::new(vec![1, 2])
            .with_edge(1, 2, -2.0)
            .with_edge(2, 1, -2.0)
            .with_uniform_rate(RateFunction::clipped_affine(1.0, 0.5, 0.3, 1.2)),
    )
    .unwrap();
    let out = simulate(&net, &SimulationConfig::new(5e3, 4).with_candidate_log()).unwrap();
    let log = out.log.unwrap();
    let floor = net.alpha() / net.beta();
    for &id in net.ids() {
        let (mut total, mut accepted) = (0u64, 0u64);
        for c in log.candidates.iter().filter(|c| c.neuron == id) {
            total += 1;
            accepted += c.accepted as u64;
        }
        let frac = accepted as f64 / total as f64;
        let se = (frac * (1.0 - frac) / total as f64).sqrt();
        assert!(frac >= floor - 5.0 * se && frac <= 1.0, "{frac} vs {floor}");
        // Mutual inhibition keeps both neurons well below the ceiling.
        assert!(frac < 0.9);
    }
}

#[test]
fn candidate_stream_has_total_rate_n_beta() {
    let net = Network::new(
        NetworkSpec::new(vec![1, 2, 3, 4])
            .with_edge(1, 2, 1.0)
            .with_uniform_rate(RateFunction::clipped_affine(0.5, 0.2, 0.25, 2.0)),
    )
    .unwrap();
    let horizon = 5e3;
    let out = simulate(
        &net,
        &SimulationConfig::new(horizon, 9).with_candidate_log(),
    )
    .unwrap();
    let times: Vec<f64> = out.log.unwrap().candidates.iter().map(|c| c.time).collect();
    let rate = 4.0 * net.beta();
    let mean = rate * horizon;
    let n = times.len() as f64;
    assert!((n - mean).abs() <= 4.0 * mean.sqrt());
    let ks = ks_exponential(intervals(&times), rate);
    assert!(ks < 1.95 / n.sqrt(), "KS {ks}");
}

#[test]
fn conditioned_sampler_agrees_with_full_simulation() {
    let net = Network::new(
        NetworkSpec::new(vec![1, 2])
            .with_edge(2, 1, 1.5)
            .with_uniform_rate(RateFunction::clipped_affine(0.5, 0.5, 0.5, 2.0)),
    )
    .unwrap();
    let setup = EventSetup::at_rest(&net, 2, 1, 0.4);
    let fast = mc_event_probs(&net, &setup, 400_000, 1).unwrap();
    let slow = mc_event_probs_naive(&net, &setup, 60_000, 2).unwrap();
    for (name, a, b) in [
        ("A", fast.p_a, slow.p_a),
        ("C", fast.p_c, slow.p_c),
        ("B/A", fast.ratio_ba, slow.ratio_ba),
        ("D/C", fast.ratio_dc, slow.ratio_dc),
    ] {
        let se = (a.se * a.se + b.se * b.se).sqrt();
        assert!(
            (a.value - b.value).abs() <= 4.0 * se,
            "{name}: {} vs {} (se {se})",
            a.value,
            b.value
        );
    }
}

#[test]
fn constant_rate_events_match_closed_form() {
    let net = Network::new(
        NetworkSpec::new(vec![1, 2])
            .with_rate(1, RateFunction::constant(0.8))
            .with_rate(2, RateFunction::constant(0.3)),
    )
    .unwrap();
    let delta = 0.05;
    let setup = EventSetup::at_rest(&net, 2, 1, delta);
    let est = mc_event_probs(&net, &setup, 20_000_000, 5).unwrap();
    let oracle = null_oracle(0.8, 0.3, delta);
    for (name, e, exact) in [
        ("A", est.p_a, oracle.p_a),
        ("C", est.p_c, oracle.p_c),
        ("B/A", est.ratio_ba, oracle.ratio_ba),
        ("D/C", est.ratio_dc, oracle.ratio_dc),
    ] {
        assert!(
            (e.value - exact).abs() <= 4.0 * e.se,
            "{name}: {} vs {exact} (se {})",
            e.value,
            e.se
        );
    }
}

#[test]
fn binomial_tail_matches_reference_values() {
    // Reference values from an independent implementation.
    let reference = 3.925069822796835e-05;
    let p = binomial_lower_tail(100, 0.5, 30);
    assert!((p / reference - 1.0).abs() < 1e-10, "{p}");
    let q = binomial_upper_tail(100, 0.5, 70);
    assert!((q / reference - 1.0).abs() < 1e-10, "{q}");
    assert!((binomial_lower_tail(10, 0.3, 10) - 1.0).abs() < 1e-12);
    assert!((binomial_upper_tail(10, 0.3, 0) - 1.0).abs() < 1e-12);
}

#[test]
fn exact_tails_never_exceed_chernoff_bounds() {
    for (n, p, gamma) in chernoff_grid() {
        let t = chernoff_tails(n, p, gamma);
        assert!(t.lower_exact <= t.lower_bound, "{n} {p} {gamma}");
        assert!(t.upper_exact <= t.upper_bound, "{n} {p} {gamma}");
    }
}
