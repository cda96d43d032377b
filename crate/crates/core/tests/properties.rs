use std::collections::BTreeMap;

use proptest::prelude::*;

use spikegraph::estimator::{
    classify_difference, ratio_g, ratio_r, schedule_from, slot_events, slot_index, whole_blocks,
    Decision, RatioStatus, SlotStatistics,
};
use spikegraph::io::{parse_config, parse_csv, parse_spk1, to_csv, to_spk1};
use spikegraph::model::{Network, NetworkSpec, NeuronId, RateFunction, Regime, ThresholdPair};
use spikegraph::simulator::{simulate, SimulationConfig, SpikeRecording};

/// Strictly increasing times in `(0, horizon]`.
fn train(horizon: f64, max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, 0..max_len).prop_map(move |mut v| {
        for t in v.iter_mut() {
            *t = horizon * (1.0 - *t);
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    })
}

fn two_trains(horizon: f64) -> impl Strategy<Value = SpikeRecording> {
    (train(horizon, 120), train(horizon, 120)).prop_map(move |(a, b)| {
        let trains = BTreeMap::from([(1, a), (2, b)]);
        SpikeRecording::from_trains(trains, horizon).unwrap()
    })
}

/// Indicator of a spike of `times` in slot `m`, by direct comparison.
fn occupied(times: &[f64], m: u64, delta: f64) -> bool {
    let lo = m as f64 * delta;
    let hi = (m + 1) as f64 * delta;
    times.iter().any(|&t| t > lo && t <= hi)
}

/// Block indicators computed by scanning every block.
fn brute_force(rec: &SpikeRecording, i: NeuronId, j: NeuronId, delta: f64) -> SlotStatistics {
    let (ti, tj) = (rec.train(i), rec.train(j));
    let t_max = whole_blocks(rec.horizon(), delta, 2);
    let n = whole_blocks(rec.horizon(), delta, 3);
    let mut a = vec![0u8; t_max as usize];
    let mut b = vec![0u8; t_max as usize];
    for k in 0..t_max {
        let m = 2 * k;
        a[k as usize] = occupied(ti, m, delta) as u8;
        b[k as usize] = (occupied(ti, m, delta) && occupied(ti, m + 1, delta)) as u8;
    }
    let mut c = vec![0u8; n as usize];
    let mut d = vec![0u8; n as usize];
    for k in 0..n {
        let m = 3 * k;
        let ck = occupied(ti, m, delta) && occupied(tj, m + 1, delta);
        c[k as usize] = ck as u8;
        d[k as usize] = (ck && occupied(ti, m + 2, delta)) as u8;
    }
    SlotStatistics::from_dense(delta, &a, &b, &c, &d)
}

fn thresholds(xi1: f64, xi2: f64) -> ThresholdPair {
    ThresholdPair {
        xi1,
        xi2,
        lambda1: 0.0,
        lambda2: 0.0,
        regime: Regime::Certified,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn slot_index_respects_half_open_slots(t in 1e-9..1e3f64, delta in 1e-4..10.0f64) {
        let m = slot_index(t, delta);
        prop_assert!(t > m as f64 * delta);
        prop_assert!(t <= (m + 1) as f64 * delta);
    }

    #[test]
    fn slot_boundaries_belong_to_the_earlier_slot(m in 1u64..100_000, delta in 1e-4..10.0f64) {
        let t = m as f64 * delta;
        prop_assert_eq!(slot_index(t, delta), m - 1);
    }

    #[test]
    fn whole_blocks_fit(h in 0.0..1e4f64, delta in 1e-3..10.0f64, width in 1u64..4) {
        let k = whole_blocks(h, delta, width);
        prop_assert!((width * k) as f64 * delta <= h);
        prop_assert!((width * (k + 1)) as f64 * delta > h);
    }

    #[test]
    fn indicators_match_brute_force(rec in two_trains(10.0), delta in 0.05..1.0f64) {
        prop_assume!(whole_blocks(10.0, delta, 3) > 0);
        for (i, j) in [(1, 2), (2, 1)] {
            let fast = slot_events(&rec, i, j, delta).unwrap();
            let slow = brute_force(&rec, i, j, delta);
            prop_assert_eq!(&fast, &slow);
        }
    }

    #[test]
    fn b_within_a_and_d_within_c(rec in two_trains(20.0), delta in 0.02..1.0f64) {
        let s = slot_events(&rec, 1, 2, delta).unwrap();
        let a = s.dense_a();
        let c = s.dense_c();
        prop_assert!(s.dense_b().iter().zip(&a).all(|(b, a)| b <= a));
        prop_assert!(s.dense_d().iter().zip(&c).all(|(d, c)| d <= c));
    }

    #[test]
    fn ratios_lie_in_unit_interval(
        rec in two_trains(20.0),
        delta in 0.02..1.0f64,
        alpha in 0.05..1.0f64,
        n_frac in 0.1..1.0f64,
    ) {
        let s = slot_events(&rec, 1, 2, delta).unwrap();
        let n = ((s.n as f64 * n_frac).ceil() as u64).max(1);
        let sched = schedule_from(n, alpha, 0.25, delta);
        for r in [ratio_r(&s, &sched), ratio_g(&s, &sched)] {
            prop_assert!((0.0..=1.0).contains(&r.value));
            prop_assert!(r.numerator <= r.denominator || r.status == RatioStatus::Degenerate);
            if r.status == RatioStatus::Stopped {
                prop_assert_eq!(r.denominator, sched.m_n);
            }
        }
    }

    #[test]
    fn decision_partitions_the_line(diff in -1.0..1.0f64, xi1 in 1e-6..0.5f64, xi2 in 1e-6..0.5f64) {
        let th = thresholds(xi1, xi2);
        let expected = if diff <= -xi1 {
            Decision::Inhibitory
        } else if diff >= xi2 {
            Decision::Excitatory
        } else {
            Decision::Absent
        };
        prop_assert_eq!(classify_difference(diff, &th), expected);
    }

    #[test]
    fn csv_round_trip_is_exact(rec in two_trains(50.0)) {
        prop_assume!(rec.total_spikes() > 0);
        let back = parse_csv(&to_csv(&rec)).unwrap();
        prop_assert!(rec.same_spikes(&back));
        prop_assert!(back.horizon_inferred);
    }

    #[test]
    fn spk1_round_trip_is_exact(rec in two_trains(50.0)) {
        let back = parse_spk1(&to_spk1(&rec)).unwrap();
        prop_assert!(rec.same_spikes(&back));
        prop_assert_eq!(back.horizon().to_bits(), rec.horizon().to_bits());
    }

    #[test]
    fn csv_parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_csv(&bytes);
    }

    #[test]
    fn csv_parser_never_panics_on_near_valid_text(
        rows in prop::collection::vec(("[-0-9.eE+inf]{0,8}", "[-0-9a]{0,4}"), 0..20)
    ) {
        let mut text = String::from("time,neuron\n");
        for (t, n) in rows {
            text.push_str(&format!("{t},{n}\n"));
        }
        let _ = parse_csv(text.as_bytes());
    }

    #[test]
    fn spk1_parser_never_panics(tail in prop::collection::vec(any::<u8>(), 0..200), count in any::<u64>()) {
        let mut bytes = b"SPK1".to_vec();
        bytes.extend_from_slice(&count.to_le_bytes());
        bytes.extend_from_slice(&tail);
        let _ = parse_spk1(&bytes);
    }

    #[test]
    fn config_parser_never_panics(text in "[a-z_\\[\\]=.0-9 \n\"-]{0,200}") {
        let _ = parse_config(&text);
    }
}

fn small_network(w: f64) -> Network {
    Network::new(
        NetworkSpec::new(vec![1, 2, 3])
            .with_edge(1, 2, w)
            .with_edge(2, 3, -w)
            .with_edge(3, 1, w)
            .with_uniform_rate(RateFunction::clipped_affine(0.6, 0.3, 0.2, 1.5)),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Spikes counted between the lower (mark <= alpha) and upper
    /// (every candidate) bounding processes on every interval.
    #[test]
    fn sandwich_holds_on_logged_runs(
        seed in any::<u64>(),
        w in 0.1..2.0f64,
        cuts in prop::collection::vec((0.0..200.0f64, 0.0..50.0f64), 1..30),
    ) {
        let net = small_network(w);
        let out = simulate(&net, &SimulationConfig::new(200.0, seed).with_candidate_log()).unwrap();
        let log = out.log.as_ref().unwrap();
        let (alpha, beta) = (net.alpha(), net.beta());
        for (t0, len) in cuts {
            let t1 = (t0 + len).min(200.0);
            for &id in net.ids() {
                let lower = log.bounding_count(alpha, t0, t1, id).unwrap();
                let upper = log.bounding_count(beta, t0, t1, id).unwrap();
                let n = out.recording.count(id, t0, t1);
                prop_assert!(lower <= n && n <= upper, "{lower} <= {n} <= {upper}");
            }
        }
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>()) {
        let net = small_network(1.0);
        let cfg = SimulationConfig::new(100.0, seed);
        let a = simulate(&net, &cfg).unwrap().recording;
        let b = simulate(&net, &cfg).unwrap().recording;
        prop_assert_eq!(to_spk1(&a), to_spk1(&b));
    }

    #[test]
    fn accepted_candidates_are_the_spikes(seed in any::<u64>()) {
        let net = small_network(1.0);
        let out = simulate(&net, &SimulationConfig::new(100.0, seed).with_candidate_log()).unwrap();
        let log = out.log.unwrap();
        for &id in net.ids() {
            let accepted: Vec<f64> = log
                .candidates
                .iter()
                .filter(|c| c.neuron == id && c.accepted)
                .map(|c| c.time)
                .collect();
            prop_assert_eq!(accepted.as_slice(), out.recording.train(id));
        }
    }
}
