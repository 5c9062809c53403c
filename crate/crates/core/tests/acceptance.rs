//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! nonzero when any criterion fails. Pass substrings as arguments to run a
//! subset, e.g. `cargo test -p flagsim --test acceptance -- criterion_4`.

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use flagsim::concentration::{construct_witness, run_concentration_ribbon};
use flagsim::counter::FlajoletCounter;
use flagsim::experiment::{
    aggregate_csv, cmd_run, cmd_sweep, diagnose_grid, diagnose_lowerbound, Report, RunConfig, Settings, Summary,
    SweepConfig,
};
use flagsim::flag::boost::InjectedRow;
use flagsim::flag::{winner_threshold, Boost, UpDown};
use flagsim::hybrid::{tradeoff_trial, NoisyGradient, TradeoffRow, UncertaintyRule};
use flagsim::ribbon::{ApproxCount, BubbleSort, ExactCount, SilentCount};
use flagsim::sim::{simulate, trial_seed, Program, RunOptions, Trace, Wake};
use flagsim::topology::{build_grid, build_line};
use flagsim::validate::{canonical_coloring, validate_exact_flag, validate_exact_ribbon, Coloring};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const MASTER: u64 = 20_240_611;
const KS: [u8; 3] = [2, 3, 5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn line_run<P: Program>(p: &P, n: usize, start: usize, seed: u64) -> Trace {
    let topo = build_line(n).expect("n >= 1");
    simulate(p, &topo, Wake::Start(start), &RunOptions::seeded(seed)).expect("run completes").trace
}

#[derive(Clone, Copy, Debug)]
enum Ribbon {
    Exact,
    Silent,
    Bubble,
}

fn ribbon_run(algo: Ribbon, n: usize, k: u8, start: usize) -> Trace {
    match algo {
        Ribbon::Exact => line_run(&ExactCount::new(k, n), n, start, 0),
        Ribbon::Silent => line_run(&SilentCount::new(k, n), n, start, 0),
        Ribbon::Bubble => line_run(&BubbleSort::new(k), n, start, 0),
    }
}

fn instances(ns: impl Iterator<Item = usize>) -> Vec<(usize, u8, usize)> {
    ns.flat_map(|n| KS.into_iter().flat_map(move |k| (0..n).map(move |s| (n, k, s)))).collect()
}

fn criterion_1() -> Verdict {
    let t0 = Instant::now();
    let cases = instances(1..=64);
    let mut failures = Vec::new();
    for algo in [Ribbon::Exact, Ribbon::Silent, Ribbon::Bubble] {
        let bad: Vec<_> = cases
            .par_iter()
            .filter(|&&(n, k, s)| {
                let t = ribbon_run(algo, n, k, s);
                !validate_exact_ribbon(&Coloring::new(k, t.colors)).map(|v| v.is_ok()).unwrap_or(false)
            })
            .map(|&c| (algo, c))
            .collect();
        failures.extend(bad);
    }
    let elapsed = t0.elapsed();
    verdict(
        failures.is_empty() && elapsed < Duration::from_secs(120),
        format!(
            "exactness on {} runs, {} failures {:?}, {:.1}s",
            3 * cases.len(),
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Verdict {
    let cases = instances((1..=64).chain([128, 256]));
    let check = |algo: Ribbon| -> Vec<String> {
        cases
            .par_iter()
            .filter_map(|&(n, k, s)| {
                let t = ribbon_run(algo, n, k, s);
                let (nf, kf) = (n as f64, f64::from(k));
                let ok = match algo {
                    Ribbon::Exact => t.rounds as f64 <= (2.0 - 1.0 / kf) * nf + 2.0 * kf,
                    Ribbon::Silent => t.rounds as f64 <= 3.0 * nf && t.total_message_bits as f64 <= 6.0 * nf,
                    Ribbon::Bubble => t.quiescent_round.unwrap_or(u64::MAX) as f64 <= 3.0 * nf,
                };
                (!ok).then(|| {
                    format!("{algo:?} n={n} k={k} start={s} rounds={} bits={}", t.rounds, t.total_message_bits)
                })
            })
            .collect()
    };
    let mut bad: Vec<String> = [Ribbon::Exact, Ribbon::Silent, Ribbon::Bubble].into_iter().flat_map(check).collect();
    bad.extend(
        cases
            .par_iter()
            .filter_map(|&(n, k, s)| {
                let eps = 1.0 / (4.0 * f64::from(k - 1));
                let p = ApproxCount::new(k, eps, None, n).expect("valid approx parameters");
                let t = line_run(&p, n, s, trial_seed(MASTER, (n * 1000 + s) as u64));
                (t.rounds > 2 * n as u64).then(|| format!("Approx n={n} k={k} start={s} rounds={}", t.rounds))
            })
            .collect::<Vec<_>>(),
    );
    verdict(
        bad.is_empty(),
        format!(
            "round/bit bounds on {} runs, violations {:?}",
            4 * cases.len(),
            bad.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn criterion_3() -> Verdict {
    let mut worst = Vec::new();
    let mut ok = true;
    for n in [64usize, 256, 1024] {
        let starts: Vec<usize> = if n <= 256 { (0..n).collect() } else { (0..n).step_by(16).chain([n - 1]).collect() };
        for k in KS {
            let (l, lk) = ((n as f64).log2(), f64::from(k).log2());
            for (algo, bound) in [(Ribbon::Exact, 3.0 * l + lk + 16.0), (Ribbon::Silent, 2.0 * l + lk + 16.0)] {
                let peak =
                    starts.par_iter().map(|&s| ribbon_run(algo, n, k, s).peak_memory_bits).max().expect("some start");
                ok &= peak as f64 <= bound;
                if k == 3 {
                    worst.push(format!("{algo:?} n={n}: {peak}<={bound:.1}"));
                }
            }
        }
    }
    verdict(ok, format!("peak memory bits, k=3 shown: {}", worst.join(", ")))
}

fn criterion_4() -> Verdict {
    let t0 = Instant::now();
    let trials = 10_000u64;
    let cells: Vec<(u32, u64)> = (0..=4).flat_map(|d| [16u64, 256, 4096].map(move |n| (d, n))).collect();
    let results: Vec<(u32, u64, f64, f64, f64)> = cells
        .par_iter()
        .map(|&(d, n)| {
            let delta = f64::from(d);
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(MASTER, u64::from(d) * 10_000 + n));
            let samples: Vec<f64> = (0..trials)
                .map(|_| {
                    let mut c = FlajoletCounter::new(delta);
                    for _ in 0..n {
                        c.increment(&mut rng);
                    }
                    c.beta().powf(f64::from(c.raw()))
                })
                .collect();
            let mean = samples.iter().sum::<f64>() / trials as f64;
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
            let se = (var / trials as f64).sqrt();
            let beta = FlajoletCounter::new(delta).beta();
            (d, n, mean, (beta - 1.0) * n as f64 + beta, se)
        })
        .collect();
    let bad: Vec<_> = results.iter().filter(|r| (r.2 - r.3).abs() > 3.0 * r.4).collect();
    let elapsed = t0.elapsed();
    let worst = results.iter().map(|r| (r.2 - r.3).abs() / r.4).fold(0.0, f64::max);
    verdict(
        bad.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "15 cells x {trials} trials, worst |z|={worst:.2}, {} outside 3 SE, {:.1}s",
            bad.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn settings(pairs: &[(&str, &str)]) -> Settings {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn approx_config(jobs: usize) -> RunConfig {
    let mut c = RunConfig::from_settings(&settings(&[
        ("algo", "approx-count"),
        ("n", "3000"),
        ("k", "3"),
        ("eps", "0.2"),
        ("trials", "200"),
        ("start", "random"),
        ("seed", &MASTER.to_string()),
    ]))
    .expect("valid config");
    c.jobs = jobs;
    c
}

fn criterion_5() -> Verdict {
    let report = cmd_run(&approx_config(rayon::current_num_threads())).expect("run completes");
    let Report::Trials { rows, .. } = &report else { unreachable!() };
    let s = Summary::of(rows);
    let frac = s.eps_fraction.unwrap_or(0.0);
    verdict(frac >= 0.95, format!("eps-approximate success {frac:.3} over {} trials (need >= 0.95)", s.trials))
}

fn criterion_6() -> Verdict {
    let mut mismatched = 0usize;
    let mut not_invariant = 0usize;
    let mut example = None;
    let mut total = 0usize;
    for alpha in [0.5, 1.0, 2.0] {
        for k in 2..=5u8 {
            for n in 1..=200usize {
                total += 1;
                let (small, _) = run_concentration_ribbon(n, 1.0, alpha, k).expect("valid instance");
                let (large, _) = run_concentration_ribbon(n, 1e3, alpha, k).expect("valid instance");
                let got = small.complete().expect("all decided");
                if got != canonical_coloring(n, k) {
                    mismatched += 1;
                    example.get_or_insert((n, k, alpha));
                }
                if small != large {
                    not_invariant += 1;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(MASTER);
    let mut witness_bad = 0;
    for _ in 0..1000 {
        let b = rng.gen_range(0.05..20.0);
        let a = b * rng.gen_range(1.0001..50.0);
        let eps = rng.gen_range(1e-6..1.0 / 6.0);
        let ok = construct_witness(a, b, eps).is_ok_and(|w| {
            let close =
                w.first_distances().iter().zip(w.second_distances()).all(|(p, q)| (p - q).abs() <= 1e-9 * p.max(q));
            w.residual_d1 < 1e-9 && w.residual_d2 < 1e-9 && w.a2 > 0.0 && w.x2 > 0.0 && w.b2 > 0.0 && close
        });
        witness_bad += usize::from(!ok);
    }
    verdict(
        mismatched == 0 && not_invariant == 0 && witness_bad == 0,
        format!(
            "canonical mismatches {mismatched}/{total} (first {example:?}), scale-variant {not_invariant}, witness failures {witness_bad}/1000"
        ),
    )
}

fn boost_trial(k: u8, h: usize, t: u32, seed: u64) -> (u8, Option<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = rng.gen_range(1..=k);
    let err = 1.0 / (6.0 * f64::from(k));
    let colors: Vec<u8> = (0..h)
        .map(|_| {
            if rng.gen::<f64>() < err {
                let other = rng.gen_range(1..k);
                if other >= truth {
                    other + 1
                } else {
                    other
                }
            } else {
                truth
            }
        })
        .collect();
    let start = rng.gen_range(0..h);
    let topo = build_grid(1, h).expect("column");
    let p = Boost::new(InjectedRow::new(colors, k), k, h).with_threshold(t);
    let trace = simulate(&p, &topo, Wake::Start(start), &RunOptions::seeded(seed)).expect("run completes").trace;
    let first = trace.colors[0];
    let unanimous = trace.colors.iter().all(|&c| c == first);
    (truth, if unanimous { first } else { None })
}

fn criterion_7() -> Verdict {
    let grids: Vec<(usize, usize, u8, usize)> = (1..=12)
        .flat_map(|a| {
            (1..=12).flat_map(move |b| KS.into_iter().flat_map(move |k| (0..a * b).map(move |s| (a, b, k, s))))
        })
        .collect();
    let flag_bad = grids
        .par_iter()
        .filter(|&&(a, b, k, s)| {
            let topo = build_grid(a, b).expect("grid");
            let p = UpDown::new(ExactCount::new(k, a), k);
            let t = simulate(&p, &topo, Wake::Start(s), &RunOptions::seeded(0)).expect("run completes").trace;
            !validate_exact_flag(&Coloring::new(k, t.colors), a).map(|v| v.is_ok()).unwrap_or(false)
        })
        .count();
    let k = 3u8;
    let h = 32_370usize;
    let t = winner_threshold(h);
    let wrong = (0..100u64)
        .into_par_iter()
        .filter(|&i| {
            let (truth, got) = boost_trial(k, h, t, trial_seed(MASTER, i));
            got != Some(truth)
        })
        .count();
    verdict(
        flag_bad == 0 && t == 1079 && h == 10 * usize::from(k) * t as usize && wrong == 0,
        format!("Up&Down failures {flag_bad}/{} runs; Boost k=3 T={t} h={h}: {wrong}/100 wrong winners", grids.len()),
    )
}

fn hybrid_rows(n: usize, sigma: f64, trials: u64) -> Vec<TradeoffRow> {
    let g = NoisyGradient::thirds(sigma);
    (0..trials)
        .into_par_iter()
        .map(|t| tradeoff_trial(n, &g, UncertaintyRule::default(), MASTER, t).expect("trial runs"))
        .collect()
}

fn criterion_8() -> Verdict {
    let n = 1000;
    let rows = hybrid_rows(n, 2.0 / n as f64, 500);
    let improved = rows.iter().filter(|r| r.frac_correct_repair > r.frac_correct_norepair).count();
    let within = rows.iter().filter(|r| flagsim::experiment::tradeoff_bounds_ok(r)).count();
    let means: Vec<f64> = [1.0, 2.0, 4.0, 8.0]
        .iter()
        .map(|m| {
            let rs = hybrid_rows(n, m / n as f64, 500);
            rs.iter().map(|r| (r.s_t1 + r.s_t2) as f64 / 2.0).sum::<f64>() / rs.len() as f64
        })
        .collect();
    let monotone = means.windows(2).all(|w| w[0] <= w[1]);
    let frac = improved as f64 / rows.len() as f64;
    verdict(
        frac >= 0.95 && within == rows.len() && monotone,
        format!(
            "strictly improved {improved}/500 = {frac:.3} (need >= 0.95); rounds <= 2s+2 in {within}/500; mean s {:?}",
            means.iter().map(|m| format!("{m:.1}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_9() -> Verdict {
    let lines: Vec<_> = [30, 60].into_iter().map(|n| diagnose_lowerbound(n, 3).expect("n >= 2k")).collect();
    let grid = diagnose_grid(8, 8, 3).expect("grid runs");
    let pass = lines.iter().all(|r| r.pass && r.asserted) && grid.pass;
    let detail = lines
        .iter()
        .map(|r| {
            format!(
                "n={} agent {} bound {} decided {:?}/{:?} diverge {:?}",
                r.n, r.agent, r.bound_round, r.decided_short, r.decided_long, r.first_divergence
            )
        })
        .chain([format!("8x8 corner decided {:?} >= {}", grid.decided, grid.bound_round)])
        .collect::<Vec<_>>()
        .join("; ");
    verdict(pass, detail)
}

fn criterion_10() -> Verdict {
    let a = cmd_run(&approx_config(1)).and_then(|r| r.to_csv()).expect("csv");
    let b = cmd_run(&approx_config(rayon::current_num_threads())).and_then(|r| r.to_csv()).expect("csv");
    let mut hybrid = RunConfig::from_settings(&settings(&[
        ("algo", "repair"),
        ("n", "1000"),
        ("sigma", "0.002"),
        ("trials", "500"),
        ("seed", &MASTER.to_string()),
    ]))
    .expect("valid config");
    let h1 = cmd_run(&hybrid).and_then(|r| r.to_csv()).expect("csv");
    hybrid.jobs = 4;
    let h2 = cmd_run(&hybrid).and_then(|r| r.to_csv()).expect("csv");
    let sweep = SweepConfig::from_settings(&settings(&[
        ("algo", "exact-count,silent-count,bubble-sort"),
        ("n", "16,32,64,128"),
        ("start", "sweep"),
        ("trials", "128"),
    ]))
    .expect("valid sweep");
    let s1 = aggregate_csv(&cmd_sweep(&sweep).expect("sweep")).expect("csv");
    let s2 = aggregate_csv(&cmd_sweep(&sweep).expect("sweep")).expect("csv");
    verdict(
        a == b && h1 == h2 && s1 == s2,
        format!(
            "approx {} bytes equal={}, hybrid {} bytes equal={}, sweep aggregate equal={}",
            a.len(),
            a == b,
            h1.len(),
            h1 == h2,
            s1 == s2
        ),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 10] = [
        ("criterion_1 exactness sweep", criterion_1),
        ("criterion_2 round and bit bounds", criterion_2),
        ("criterion_3 memory bounds", criterion_3),
        ("criterion_4 counter statistics", criterion_4),
        ("criterion_5 approx count end-to-end", criterion_5),
        ("criterion_6 concentration model", criterion_6),
        ("criterion_7 two-dimensional flags", criterion_7),
        ("criterion_8 hybrid tradeoff", criterion_8),
        ("criterion_9 lower-bound diagnostics", criterion_9),
        ("criterion_10 determinism", criterion_10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} {name}: {} [{:.1}s]", v.detail, t0.elapsed().as_secs_f64());
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
