use flagsim::flag::boost::InjectedRow;
use flagsim::flag::Boost;
use flagsim::hybrid::{posterior, repair, Marking, NoisyGradient, Profile};
use flagsim::ribbon::{ApproxCount, BubbleSort, ExactCount, SilentCount};
use flagsim::sim::{simulate, Program, RunOptions, Trace, Wake};
use flagsim::topology::{build_grid, build_line, Topology};
use flagsim::validate::{canonical_coloring, validate_eps_flag, validate_exact_ribbon, Coloring, FlagSpec};
use proptest::prelude::*;

fn logged<P: Program>(p: &P, topo: &Topology, start: usize, seed: u64) -> Trace {
    simulate(p, topo, Wake::Start(start), &RunOptions::seeded(seed).logged()).unwrap().trace
}

fn line_trace(algo: u8, n: usize, k: u8, start: usize, seed: u64) -> Trace {
    let topo = build_line(n).unwrap();
    match algo {
        0 => logged(&ExactCount::new(k, n), &topo, start, seed),
        1 => logged(&SilentCount::new(k, n), &topo, start, seed),
        2 => logged(&BubbleSort::new(k), &topo, start, seed),
        _ => logged(&ApproxCount::new(k, 0.2, Some(3.0), n).unwrap(), &topo, start, seed),
    }
}

fn line_case() -> impl Strategy<Value = (u8, usize, u8, usize, u64)> {
    (0u8..4, 1usize..80, 2u8..6, any::<u64>()).prop_flat_map(|(algo, n, k, seed)| {
        let k = if algo == 3 { k.min(3) } else { k };
        (Just(algo), Just(n), Just(k), 0..n, Just(seed))
    })
}

fn eps_ok(colors: &[u8], k: u8, eps: f64) -> bool {
    let c = Coloring::decided(k, colors);
    validate_eps_flag(&c, &FlagSpec { k, a: colors.len(), b: 1, eps }).unwrap().is_ok()
}

/// Nondecreasing coloring with values in 1..=k.
fn monotone(k: u8) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(1..=k, 1..120).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

fn interval_marking(n: usize, i: usize, j: usize) -> Marking {
    Marking { uncertain: (0..n).map(|x| (i..=j).contains(&x)).collect(), intervals: [Some((i, j)), None] }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn runs_are_deterministic((algo, n, k, start, seed) in line_case()) {
        let a = line_trace(algo, n, k, start, seed);
        let b = line_trace(algo, n, k, start, seed);
        prop_assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn bits_recount_from_the_log((algo, n, k, start, seed) in line_case()) {
        let t = line_trace(algo, n, k, start, seed);
        let sum: u64 = t.deliveries.iter().map(|d| u64::from(d.width)).sum();
        prop_assert_eq!(sum, t.total_message_bits);
        prop_assert_eq!(t.recount_bits(), t.total_message_bits);
        prop_assert_eq!(t.deliveries.len() as u64, t.message_count);
    }

    #[test]
    fn deliveries_follow_links_and_wake_is_causal((algo, n, k, start, seed) in line_case()) {
        let t = line_trace(algo, n, k, start, seed);
        let topo = build_line(n).unwrap();
        for d in &t.deliveries {
            prop_assert_eq!(topo.neighbor(d.from, d.dir), Some(d.to));
            prop_assert!(d.round >= 1);
        }
        prop_assert_eq!(t.woke_round[start], Some(0));
        for i in (0..n).filter(|&i| i != start) {
            let first = t.deliveries.iter().filter(|d| d.to == i).map(|d| d.round).min();
            prop_assert_eq!(t.woke_round[i], first, "agent {}", i);
        }
    }

    #[test]
    fn exact_ribbon_implies_eps_flag(n in 2usize..400, k in 2u8..8, t in 0.0f64..1.0) {
        prop_assume!(n >= usize::from(k));
        let colors = canonical_coloring(n, k);
        prop_assert!(validate_exact_ribbon(&Coloring::decided(k, &colors)).unwrap().is_ok());
        let eps = 1.0 / n as f64 + t * 0.5;
        prop_assert!(eps_ok(&colors, k, eps), "n={} k={} eps={}", n, k, eps);
    }

    #[test]
    fn eps_validation_is_monotone(colors in monotone(4), e1 in 0.0f64..0.4, bump in 0.0f64..0.3) {
        if eps_ok(&colors, 4, e1) {
            prop_assert!(eps_ok(&colors, 4, e1 + bump));
        }
    }

    #[test]
    fn posterior_is_normalized(m in -0.5f64..1.5, sigma in 1e-4f64..0.5, power in 0.3f64..3.0, linear in any::<bool>()) {
        let profile = if linear { Profile::Linear } else { Profile::Power(power) };
        let g = NoisyGradient::new(profile, 1.0, sigma, 1.0 / 3.0, 2.0 / 3.0).unwrap();
        let p = posterior(m, &g);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9, "{:?}", p);
    }

    #[test]
    fn repair_touches_only_marked_agents(
        colors in prop::collection::vec(1u8..=3, 3..80),
        a in any::<prop::sample::Index>(),
        b in any::<prop::sample::Index>(),
    ) {
        let n = colors.len();
        let (i, j) = { let (x, y) = (a.index(n), b.index(n)); (x.min(y), x.max(y)) };
        let out = repair(&colors, &interval_marking(n, i, j), 3).unwrap();
        for x in (0..n).filter(|x| !(i..=j).contains(x)) {
            prop_assert_eq!(out.colors[x], colors[x]);
            prop_assert!(out.trace.deliveries.iter().all(|d| d.to != x), "agent {} got a message", x);
        }
        let s = (j - i + 1) as u64;
        prop_assert!(out.interval_rounds[0].unwrap_or(0) <= 2 * s + 2);
        if i > 0 || j + 1 < n {
            let inner = &out.colors[i.saturating_sub(1)..(j + 2).min(n)];
            prop_assert!(inner.windows(2).all(|w| w[0] <= w[1]) || inner.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn repair_is_idempotent(
        colors in prop::collection::vec(1u8..=3, 3..80),
        a in any::<prop::sample::Index>(),
        b in any::<prop::sample::Index>(),
    ) {
        let n = colors.len();
        let (i, j) = { let (x, y) = (a.index(n), b.index(n)); (x.min(y), x.max(y)) };
        let marking = interval_marking(n, i, j);
        let once = repair(&colors, &marking, 3).unwrap().colors;
        let twice = repair(&once, &marking, 3).unwrap().colors;
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn repair_leaves_a_consistent_interval_alone(
        n in 3usize..80,
        c in 1u8..=3,
        a in any::<prop::sample::Index>(),
        b in any::<prop::sample::Index>(),
    ) {
        let (i, j) = { let (x, y) = (a.index(n), b.index(n)); (x.min(y), x.max(y)) };
        let colors = vec![c; n];
        prop_assert_eq!(repair(&colors, &interval_marking(n, i, j), 3).unwrap().colors, colors);
    }

    #[test]
    fn boost_winner_survives_extra_correct_rows(
        colors in prop::collection::vec(1u8..=3, 1..40),
        extra in prop::collection::vec(any::<prop::sample::Index>(), 1..20),
        t in 2u32..12,
        start in any::<prop::sample::Index>(),
    ) {
        let winner = |col: &[u8], start: usize| -> Option<u8> {
            let topo = build_grid(1, col.len()).unwrap();
            let p = Boost::new(InjectedRow::new(col.to_vec(), 3), 3, col.len()).with_threshold(t);
            let tr = simulate(&p, &topo, Wake::Start(start), &RunOptions::seeded(0)).unwrap().trace;
            assert!(tr.colors.windows(2).all(|w| w[0] == w[1]));
            assert!(tr.quiescent_round.unwrap_or(tr.rounds) <= 3 * col.len() as u64);
            tr.colors[0]
        };
        let w = winner(&colors, start.index(colors.len())).unwrap();
        let mut grown = colors.clone();
        for at in &extra {
            let pos = at.index(grown.len() + 1);
            grown.insert(pos, w);
        }
        prop_assert_eq!(winner(&grown, start.index(grown.len())), Some(w));
    }
}

#[test]
fn posterior_concentrates_as_noise_vanishes() {
    let (t1, t2) = (1.0 / 3.0, 2.0 / 3.0);
    for profile in [Profile::Linear, Profile::Power(2.0)] {
        for (band, m) in [(0, t1 / 2.0), (1, (t1 + t2) / 2.0), (2, (t2 + 1.0) / 2.0)] {
            let mut last = 0.0;
            for scale in [1e-1, 1e-2, 1e-3] {
                let g = NoisyGradient::new(profile, 1.0, scale * (t2 - t1), t1, t2).unwrap();
                let p = posterior(m, &g)[band];
                assert!(p >= last - 1e-12, "{profile:?} band {band} scale {scale}: {p} < {last}");
                last = p;
            }
            assert!(last > 1.0 - 1e-9, "{profile:?} band {band}: {last}");
        }
    }
}
