//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use symselect_core::limit::{chain_marginal_mc, f_k_integral, g_k_integral, Edge};
use symselect_core::rng::{lane, StreamLabel};
use symselect_core::{
    convergence_experiment, expected_key_closed, expected_quickrand, expected_s_integral, expected_s_series,
    integral_i, ks_two_sample, nu_closed, nu_monte_carlo, run_quickquant, run_quickselect_random_pivot, sample_S,
    sample_dickman, target_rank, CostModel, ExperimentConfig, IntegralOptions, MeanEstimate, QuickRandGrid, Rect,
    SeedArray, SourceModel, TruncationPolicy,
};

const KS_LEVEL: f64 = 0.01;

/// Every master seed below is `BASE + 100 * criterion + offset`.
const BASE: u64 = symselect_core::harness::DEFAULT_SEED;

fn seed(criterion: u64, offset: u64) -> u64 {
    BASE + 100 * criterion + offset
}

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn limit_samples(source: &SourceModel, cost: &CostModel, alpha: f64, delta: f64, reps: usize, master: u64) -> Vec<f64> {
    let policy = TruncationPolicy::for_cost(source, cost, delta).unwrap();
    (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = StreamLabel::new(master, rep).rng(lane::LIMIT);
            sample_S(&mut rng, source, cost, alpha, &policy).unwrap().value
        })
        .collect()
}

/// Sample mean of `S` for the key cost at alpha = 0 is 2 within 1%, in under 10 s.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let xs = limit_samples(
        &SourceModel::uniform_binary(),
        &CostModel::Key,
        0.0,
        1e-4,
        100_000,
        seed(1, 0),
    );
    let elapsed = start.elapsed();
    let m = MeanEstimate::from_samples(&xs).unwrap();
    let rel = (m.mean - 2.0).abs() / 2.0;
    outcome(
        rel <= 0.01 && elapsed < Duration::from_secs(10),
        format!(
            "mean {:.5} (stderr {:.5}), relative error {rel:.2e} <= 1e-2, {elapsed:.2?} < 10s",
            m.mean, m.stderr
        ),
    )
}

/// Integral route for the key cost matches the closed form within 1e-6.
fn criterion_2() -> Outcome {
    let ub = SourceModel::uniform_binary();
    let mut worst: f64 = 0.0;
    for i in 0..=10 {
        let alpha = i as f64 / 10.0;
        let r = expected_s_integral(&ub, &CostModel::Key, alpha, IntegralOptions { tol: 1e-8 }).unwrap();
        worst = worst.max((r.value - expected_key_closed(alpha).unwrap()).abs());
    }
    outcome(
        worst <= 1e-6,
        format!("max deviation {worst:.2e} <= 1e-6 over alpha = 0, 0.1, ..., 1"),
    )
}

/// Symbol-cost series on the uniform binary source at alpha = 0 is 5.27938 within 1e-3.
fn criterion_3() -> Outcome {
    let r = expected_s_series(&SourceModel::uniform_binary(), 0.0, 1e-4).unwrap();
    let dev = (r.value - 5.27938).abs();
    outcome(
        dev <= 1e-3,
        format!(
            "series {:.6} (certified error {:.1e}), |value - 5.27938| = {dev:.1e} <= 1e-3",
            r.value, r.error_estimate
        ),
    )
}

/// QuickRand slopes: 3 within 1e-6 (key) and 8.20731 within 1e-2 (symbol).
fn criterion_4() -> Outcome {
    let ub = SourceModel::uniform_binary();
    let grid = QuickRandGrid::default();
    let key = expected_quickrand(&ub, &CostModel::Key, grid, 1e-6).unwrap();
    let sym = expected_quickrand(&ub, &CostModel::Symbol, grid, 1e-3).unwrap();
    let (dk, ds) = ((key.value - 3.0).abs(), (sym.value - 8.20731).abs());
    outcome(
        dk <= 1e-6 && ds <= 1e-2,
        format!(
            "key {:.9} (|dev| {dk:.1e} <= 1e-6), symbol {:.5} (|dev| {ds:.1e} <= 1e-2, estimate {:.1e})",
            key.value, sym.value, sym.error_estimate
        ),
    )
}

/// Series, integral and Monte Carlo agree for the symbol cost.
fn criterion_5() -> Outcome {
    let delta = 1e-3;
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, source) in [
        ("uniform-binary", SourceModel::uniform_binary()),
        ("bernoulli-0.3", SourceModel::bernoulli(0.3).unwrap()),
    ] {
        for alpha in [0.0, 0.25, 0.5] {
            let s = expected_s_series(&source, alpha, 1e-4).unwrap();
            let i = expected_s_integral(&source, &CostModel::Symbol, alpha, IntegralOptions { tol: 1e-4 }).unwrap();
            let xs = limit_samples(&source, &CostModel::Symbol, alpha, delta, 100_000, seed(5, 0));
            let mc = MeanEstimate::from_samples(&xs).unwrap();
            let si = (s.value - i.value).abs() <= s.error_estimate + i.error_estimate;
            // truncated samples undershoot by at most delta
            let sm = (mc.mean - s.value).abs() <= 3.0 * mc.stderr + delta + s.error_estimate;
            let im = (mc.mean - i.value).abs() <= 3.0 * mc.stderr + delta + i.error_estimate;
            pass &= si && sm && im;
            notes.push(format!(
                "{name} a={alpha}: series {:.5} integral {:.5} mc {:.4}±{:.4}",
                s.value, i.value, mc.mean, mc.stderr
            ));
        }
    }
    outcome(pass, notes.join("; "))
}

fn trend_ok(curve: &[f64]) -> bool {
    let inversions = curve.windows(2).filter(|w| w[1] >= w[0]).count();
    inversions <= 1 && curve[curve.len() - 1] < 0.25 * curve[0]
}

/// `E|S_n/n - S|` decreases over n = 64..16384 for both algorithms and costs.
fn criterion_6() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for cost in ["key", "symbol"] {
        let cfg = ExperimentConfig {
            source: "uniform-binary".into(),
            cost: cost.into(),
            alpha: 0.5,
            n_grid: vec![64, 256, 1024, 4096, 16384],
            reps: 200,
            p: vec![1.0],
            delta: 1e-4,
            seed: seed(6, 0),
            output: None,
            paths: 10,
            ks_level: KS_LEVEL,
        };
        let report = convergence_experiment(&cfg).unwrap();
        for algo in ["quickval", "quickquant"] {
            let c = report.curve(algo, 1.0);
            let ok = trend_ok(&c);
            pass &= ok;
            notes.push(format!(
                "{cost}/{algo}: {} (last/first {:.3})",
                c.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" > "),
                c[c.len() - 1] / c[0]
            ));
        }
    }
    outcome(pass, notes.join("; "))
}

/// KS accepts the three distributional identities at level 0.01.
fn criterion_7() -> Outcome {
    let ub = SourceModel::uniform_binary();
    let reps = 10_000usize;

    let s = limit_samples(&ub, &CostModel::Key, 0.0, 1e-6, reps, seed(7, 1));
    let d: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = StreamLabel::new(seed(7, 2), rep).rng(lane::DICKMAN);
            sample_dickman(&mut rng, 1e-6).unwrap()
        })
        .collect();
    let a = ks_two_sample(&s, &d, KS_LEVEL).unwrap();

    let n = 16_384;
    let m = target_rank(0.5, n);
    let q: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let seeds = SeedArray::generate(n, StreamLabel::new(seed(7, 3), rep));
            run_quickquant(&ub, &CostModel::Key, &seeds, m).unwrap().total_cost / n as f64
        })
        .collect();
    let s = limit_samples(&ub, &CostModel::Key, 0.5, 1e-6, reps, seed(7, 4));
    let b = ks_two_sample(&q, &s, KS_LEVEL).unwrap();

    let (n, m) = (100, 50);
    let pairs: Vec<(f64, f64)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let first = SeedArray::generate(n, StreamLabel::new(seed(7, 5), rep));
            let second = SeedArray::generate(n, StreamLabel::new(seed(7, 6), rep));
            let mut rng = StreamLabel::new(seed(7, 6), rep).rng(lane::RANDOM_PIVOT);
            (
                run_quickquant(&ub, &CostModel::Symbol, &first, m).unwrap().total_cost,
                run_quickselect_random_pivot(&ub, &CostModel::Symbol, &second, m, &mut rng)
                    .unwrap()
                    .total_cost,
            )
        })
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let c = ks_two_sample(&x, &y, KS_LEVEL).unwrap();

    let line = |k: &symselect_core::KsResult| format!("D={:.4} crit={:.4} p={:.3}", k.statistic, k.critical, k.p_value);
    outcome(
        !a.reject && !b.reject && !c.reject,
        format!(
            "(a) S vs Dickman {}; (b) QuickQuant n=16384 vs S {}; (c) QuickQuant vs random pivot {}",
            line(&a),
            line(&b),
            line(&c)
        ),
    )
}

/// Pivot-chain measure and chain marginals against their closed forms.
fn criterion_8() -> Outcome {
    let alpha = 0.5;
    let rects = [
        Rect::new(0.1, 0.2, 0.7, 0.8),
        Rect::new(0.05, 0.3, 0.6, 0.9),
        Rect::new(0.3, 0.45, 0.55, 0.7),
        Rect::new(0.2, 0.4, 0.8, 0.95),
        Rect::new(0.35, 0.4, 0.6, 0.65),
    ];
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for (i, rect) in rects.iter().enumerate() {
        let mut rng = StreamLabel::new(seed(8, 0), i as u64).rng(lane::CHAIN);
        let mc = nu_monte_carlo(&mut rng, alpha, *rect, 100_000).unwrap();
        let closed = nu_closed(alpha, *rect).unwrap();
        pass &= mc.agrees_with(closed, 3.0, 0.0);
        worst = worst.max((mc.mean - closed).abs() / mc.stderr);
    }
    let mut marginal_worst: f64 = 0.0;
    for k in 1..=4 {
        for (edge, a, b, exact) in [
            (Edge::LowerAtZero, 0.6, 0.8, g_k_integral(alpha, k, 0.6, 0.8).unwrap()),
            (Edge::UpperAtOne, 0.1, 0.4, f_k_integral(alpha, k, 0.1, 0.4).unwrap()),
        ] {
            let mut rng = StreamLabel::new(seed(8, 1), k as u64).rng(lane::CHAIN);
            let mc = chain_marginal_mc(&mut rng, alpha, k, edge, a, b, 100_000).unwrap();
            pass &= mc.agrees_with(exact, 3.0, 0.0);
            if mc.stderr > 0.0 {
                marginal_worst = marginal_worst.max((mc.mean - exact).abs() / mc.stderr);
            }
        }
    }
    outcome(
        pass,
        format!("5 rectangles, worst |mc - closed| = {worst:.2} sigma; marginals k <= 4, worst {marginal_worst:.2} sigma (limit 3)"),
    )
}

/// Moment bounds on interval widths and on the summands `I_k`.
fn criterion_9() -> Outcome {
    let ub = SourceModel::uniform_binary();
    let reps = 10_000usize;
    let kmax = 10;
    let ratio = TruncationPolicy::width_moment_ratio;
    let mut pass = true;
    let mut worst: f64 = f64::NEG_INFINITY;

    // QuickQuant at finite n: R_k - L_k, zero once the target is found
    let (n, m) = (1000, 300);
    let widths: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let seeds = SeedArray::generate(n, StreamLabel::new(seed(9, 0), rep));
            let run = run_quickquant(&ub, &CostModel::Key, &seeds, m).unwrap();
            (1..=kmax)
                .map(|k| run.steps.get(k).map_or(0.0, |s| s.upper - s.lower))
                .collect()
        })
        .collect();
    for p in [1.0, 2.0, 4.0] {
        for k in 1..=kmax {
            let xs: Vec<f64> = widths.iter().map(|w| w[k - 1].powf(p)).collect();
            let est = MeanEstimate::from_samples(&xs).unwrap();
            let bound = ratio(p).powi(k as i32);
            pass &= est.mean <= bound + 3.0 * est.stderr;
            worst = worst.max(est.mean / bound);
        }
    }

    // I_k for the symbol cost along the limit chain
    let alpha = 0.5;
    let policy = TruncationPolicy::for_cost(&ub, &CostModel::Symbol, 1e-3).unwrap();
    let eps = policy.tame.epsilon;
    let ik: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = StreamLabel::new(seed(9, 1), rep).rng(lane::CHAIN);
            let (mut l, mut r) = (0.0, 1.0);
            (0..kmax)
                .map(|_| {
                    let v = symselect_core::rng::uniform_between(&mut rng, l, r);
                    let i = integral_i(&ub, &CostModel::Symbol, 1.0, v, l, r, 1e-10).unwrap().value;
                    if v < alpha {
                        l = v;
                    } else {
                        r = v;
                    }
                    i
                })
                .collect()
        })
        .collect();
    let mut worst_i: f64 = f64::NEG_INFINITY;
    for q in [1.0, 4.0] {
        for k in 1..=kmax {
            let xs: Vec<f64> = ik.iter().map(|v| v[k - 1].powf(q)).collect();
            let est = MeanEstimate::from_samples(&xs).unwrap();
            let bound = policy.constant().powf(q) * ratio(q * (1.0 - eps)).powi(k as i32 - 1);
            pass &= est.mean <= bound + 3.0 * est.stderr;
            worst_i = worst_i.max(est.mean / bound);
        }
    }
    outcome(
        pass,
        format!("max mean/bound: widths {worst:.3}, I_k {worst_i:.3} (epsilon {eps}); p in {{1,2,4}}, q in {{1,4}}, k <= {kmax}"),
    )
}

/// Identical seeds give identical output, with one or four threads.
fn criterion_10() -> Outcome {
    let cfg = ExperimentConfig {
        source: "bernoulli-0.3".into(),
        cost: "symbol".into(),
        alpha: 0.25,
        n_grid: vec![32, 128, 512],
        reps: 40,
        p: vec![1.0, 2.0],
        delta: 1e-3,
        seed: seed(10, 0),
        output: None,
        paths: 5,
        ks_level: KS_LEVEL,
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let report = convergence_experiment(&cfg).unwrap();
            let mut bytes = Vec::new();
            report.write_report_csv(&mut bytes).unwrap();
            report.write_paths_csv(&mut bytes).unwrap();
            let ub = SourceModel::uniform_binary();
            let grid = QuickRandGrid {
                panels: 64,
                points: 2,
                levels: 4,
            };
            let q = expected_quickrand(&ub, &CostModel::Symbol, grid, 1e-2).unwrap();
            bytes.extend(q.value.to_bits().to_le_bytes());
            let s = limit_samples(&ub, &CostModel::Symbol, 0.3, 1e-3, 200, seed(10, 1));
            bytes.extend(s.iter().flat_map(|x| x.to_bits().to_le_bytes()));
            bytes
        })
    };
    let one = run(1);
    let again = run(1);
    let four = run(4);
    outcome(
        one == again && one == four,
        format!(
            "{} output bytes identical across two single-thread runs and a four-thread run",
            one.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("key-cost limit mean at alpha=0", criterion_1),
        ("closed form vs integral", criterion_2),
        ("symbol-cost QuickMin constant", criterion_3),
        ("QuickRand slopes", criterion_4),
        ("series/integral/Monte Carlo agreement", criterion_5),
        ("convergence trend", criterion_6),
        ("distributional identities (KS)", criterion_7),
        ("pivot-chain measure and marginals", criterion_8),
        ("moment bounds", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} criterion {:>2} {name} [{:.1?}]: {}",
            i + 1,
            start.elapsed(),
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
