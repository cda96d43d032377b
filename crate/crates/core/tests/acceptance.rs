//! The seven acceptance criteria. Each prints one PASS/FAIL line; the test
//! fails afterwards if any criterion did.
//!
//! Criteria 4 and 6 take a minute or two together on one core.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use num_rational::Ratio;

use spikegraph::analysis::{
    chernoff_check, chernoff_grid, constants_checks, domination_check, failure_bounds,
    separation_sweep, Dependence, Verdict,
};
use spikegraph::cli::{recover_graph, reference_networks, theorem_gap_report};
use spikegraph::estimator::{schedule, whole_blocks, BoundsSource, EstimateOptions};
use spikegraph::model::{
    constants_of, theta0_exact, thresholds, DerivedConstants, Network, NetworkSpec, RateFunction,
};
use spikegraph::rng::derive_seed;
use spikegraph::simulator::{simulate, SimulationConfig};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

/// Constants of the criterion-4 networks: s = 0.75, tau = 0.25, d = 1, beta = 1.
fn reference_constants() -> DerivedConstants {
    DerivedConstants::from_bounds(0.75, 1.0, Some(0.25), 1).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let direct = Ratio::new(19u64 * 19, 3 * 116 * 34 * 34 * 1000);
    let exact = theta0_exact() == direct && direct == Ratio::new(361, 402_288_000);
    let checks = constants_checks(&reference_constants()).unwrap();
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| c.verdict != Verdict::Pass)
        .map(|c| c.name.as_str())
        .collect();
    let ms = start.elapsed().as_secs_f64() * 1e3;
    outcome(
        exact && failed.is_empty() && ms < 100.0,
        format!(
            "theta0 = {} ({:.4e}); {} exact checks, failed {:?}; {ms:.2} ms",
            theta0_exact(),
            *direct.numer() as f64 / *direct.denom() as f64,
            checks.len(),
            failed
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let r = separation_sweep(1000, 2);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r.verdict == Verdict::Pass && secs < 1.0,
        format!(
            "1000 tuples, worst relative slack {:.3e}; {secs:.3} s",
            r.estimate
        ),
    )
}

fn ks_exponential(mut samples: Vec<f64>, rate: f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = -(-rate * x).exp_m1();
            (f - k as f64 / n).abs().max((k as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    // (a) sandwich on every tested interval of logged runs.
    let net = Network::new(
        NetworkSpec::new(vec![1, 2, 3, 4])
            .with_edge(1, 2, 1.0)
            .with_edge(2, 3, -1.5)
            .with_edge(3, 1, 0.5)
            .with_edge(4, 1, -0.5)
            .with_uniform_rate(RateFunction::clipped_affine(0.7, 0.4, 0.2, 1.6)),
    )
    .unwrap();
    let (mut intervals, mut violations) = (0u64, 0u64);
    for seed in 0..5 {
        let out = simulate(
            &net,
            &SimulationConfig::new(2000.0, seed).with_candidate_log(),
        )
        .unwrap();
        let log = out.log.as_ref().unwrap();
        for k in 0..400 {
            let t0 = k as f64 * 5.0;
            for len in [0.1, 1.0, 5.0, 50.0] {
                let t1 = (t0 + len).min(2000.0);
                for &id in net.ids() {
                    let lo = log.bounding_count(net.alpha(), t0, t1, id).unwrap();
                    let hi = log.bounding_count(net.beta(), t0, t1, id).unwrap();
                    let n = out.recording.count(id, t0, t1);
                    intervals += 1;
                    violations += (lo > n || n > hi) as u64;
                }
            }
        }
    }
    // (b) five neurons at constant rate c with cT = 1e4.
    let c = 0.5;
    let const_net = Network::new(
        NetworkSpec::new(vec![1, 2, 3, 4, 5]).with_uniform_rate(RateFunction::constant(c)),
    )
    .unwrap();
    let horizon = 1e4 / c;
    let rec = simulate(&const_net, &SimulationConfig::new(horizon, 3))
        .unwrap()
        .recording;
    let worst_count = const_net
        .ids()
        .iter()
        .map(|&id| (rec.train(id).len() as f64 - c * horizon).abs())
        .fold(0.0, f64::max);
    let count_ok = worst_count <= 4.0 * (c * horizon).sqrt();
    // Twice the horizon gives 1e5 spikes in total.
    let rec = simulate(&const_net, &SimulationConfig::new(2.0 * horizon, 4))
        .unwrap()
        .recording;
    let mut isi = Vec::new();
    for &id in const_net.ids() {
        let t = rec.train(id);
        isi.push(t[0]);
        isi.extend(t.windows(2).map(|w| w[1] - w[0]));
    }
    let ks = ks_exponential(isi.clone(), c);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        violations == 0 && count_ok && ks < 0.02 && secs < 30.0,
        format!(
            "(a) {violations} violations in {intervals} intervals; (b) max |N - cT| = {worst_count:.0} \
             (limit {:.0}), KS = {ks:.4} over {} intervals; {secs:.1} s",
            4.0 * (c * horizon).sqrt(),
            isi.len()
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let c = reference_constants();
    let ds = c.delta_star.unwrap();
    let xi1 = thresholds(&c, ds, false).unwrap().xi1;
    let mut lines = Vec::new();
    let mut all = true;
    for (k, (name, net, from, to)) in reference_networks().into_iter().enumerate() {
        let mut matched = 0;
        let mut worst_se: f64 = 0.0;
        for seed in 0..20u64 {
            // Adaptive replicas aim at xi1/6 so that the achieved error stays
            // below xi1/4 with room to spare.
            let r = theorem_gap_report(
                &net,
                from,
                to,
                None,
                None,
                1.0 / 6.0,
                derive_seed(k as u64, seed),
            )
            .unwrap();
            worst_se = worst_se.max(r.standard_error);
            if r.verdict == Verdict::Pass && r.standard_error < xi1 / 4.0 {
                matched += 1;
            }
        }
        all &= matched >= 19;
        lines.push(format!("{name} {matched}/20 (max se {worst_se:.2e})"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        all,
        format!(
            "delta = {ds:.4e}, xi1/4 = {:.2e}; {}; {secs:.1} s",
            xi1 / 4.0,
            lines.join(", ")
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut exact_ok = true;
    let grid = chernoff_grid();
    assert!(grid.contains(&(100, 0.5, 0.4)));
    for &(n, p, gamma) in &grid {
        let t = spikegraph::analysis::chernoff_tails(n, p, gamma);
        exact_ok &= t.lower_exact <= t.lower_bound && t.upper_exact <= t.upper_bound;
    }
    let mut reports = chernoff_check(100, 0.5, 0.4, 100_000, 7).unwrap();
    for (k, dep) in Dependence::ALL.into_iter().enumerate() {
        reports.extend(
            domination_check(0.2, 0.35, 400, 0.5, dep, 100_000, derive_seed(8, k as u64)).unwrap(),
        );
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.verdict.passed())
        .map(|r| format!("{} {}", r.name, r.inputs))
        .collect();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        exact_ok && failed.is_empty() && secs < 10.0,
        format!(
            "{} grid points exact; {} sampled checks at 1e5 draws, failed {:?}; {secs:.1} s",
            grid.len(),
            reports.len(),
            failed
        ),
    )
}

/// Two constant-rate drivers; neuron 1 excites and neuron 2 inhibits each
/// of the three targets.
fn recovery_network() -> Network {
    let mut spec = NetworkSpec::new(vec![1, 2, 3, 4, 5])
        .with_uniform_rate(RateFunction::clipped_affine(0.5, 0.5, 0.25, 1.0))
        .with_rate(1, RateFunction::constant(0.5))
        .with_rate(2, RateFunction::constant(0.5));
    for t in [3, 4, 5] {
        spec = spec.with_edge(1, t, 1.0).with_edge(2, t, -1.0);
    }
    Network::new(spec).unwrap()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let net = recovery_network();
    let c = constants_of(&net).unwrap();
    let (delta, horizon) = (0.1, 1e7);
    let m_n = schedule(whole_blocks(horizon, delta, 3), &c, delta)
        .unwrap()
        .m_n;
    let opts = EstimateOptions {
        delta: Some(delta),
        heuristic: true,
        bounds_source: BoundsSource::Derived,
    };
    let summary = recover_graph(&net, horizon, 20, 2024, &opts).unwrap();
    let mut wrong: BTreeMap<String, u64> = BTreeMap::new();
    for p in &summary.pairs {
        if p.correct < summary.seeds {
            wrong.insert(format!("{}->{}", p.from, p.to), summary.seeds - p.correct);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        c.d == 2 && m_n >= 500 && summary.perfect_fraction >= 0.9,
        format!(
            "d = {}, delta = {delta} ({:.0} x delta_star), m_n = {m_n}; {}/20 seeds exact, \
             precision {:.3}, recall {:.3}, misses {:?}; {secs:.1} s",
            c.d,
            delta / summary.delta_star,
            summary.perfect_seeds,
            summary.precision,
            summary.recall,
            wrong
        ),
    )
}

fn criterion_7() -> Outcome {
    let c = reference_constants();
    let fb = failure_bounds(&c, 1_000_000).unwrap();
    // Independent arithmetic: omega = 19^2/(3*116*34^2*10^3) * tau^4 s^9 beta / d^2.
    let theta0 = 361.0 / (3.0 * 116.0 * 1156.0 * 1000.0);
    let omega = theta0 * 0.25f64.powi(4) * 0.75f64.powi(9);
    let required = (6.0f64 / 0.05).ln() / omega;
    let rel = (fb.required_horizon / required - 1.0).abs();
    let desk = failure_bounds(&c, whole_blocks(1e7, c.delta_star.unwrap(), 3)).unwrap();
    outcome(
        rel < 1e-12
            && (fb.omega / omega - 1.0).abs() < 1e-12
            && fb.required_horizon > 1e10
            && desk.null_bound == 1.0,
        format!(
            "omega = {:.4e}; 6 exp(-omega T) <= 0.05 needs T >= {:.4e} (independent {:.4e}, rel diff {rel:.1e}); \
             at T = 1e7 the bound is vacuous (raw {:.4}); the guaranteed failure rates are out of reach at desk scale",
            fb.omega, fb.required_horizon, required, desk.null_bound_raw
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(u32, fn() -> Outcome); 7] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
    ];
    let mut failed = Vec::new();
    for (k, f) in criteria {
        let o = f();
        // Written to the raw handle so the line shows even when the
        // harness captures test output.
        let mut out = std::io::stdout().lock();
        writeln!(
            out,
            "criterion {k}: {} : {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        )
        .unwrap();
        out.flush().unwrap();
        if !o.passed {
            failed.push(k);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
