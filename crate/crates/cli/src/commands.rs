use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::CommandFactory;
use rayon::prelude::*;
use serde::Serialize;
use symselect_core::expectation::{expected_key_closed, ExpectationResult, Method};
use symselect_core::limit::sample_dickman;
use symselect_core::rng::{lane, StreamLabel};
use symselect_core::{
    convergence_experiment, expected_quickrand, expected_s_integral, expected_s_series, moment_report, nu_closed,
    nu_monte_carlo, parse_cost, parse_source, run_quickquant, run_quickselect_random_pivot, run_quickval, sample_S,
    target_rank, CostModel, ExperimentConfig, IntegralOptions, Prefix, QuickRandGrid, Rect, Result, RunRecord,
    SeedArray, TruncationPolicy,
};

use crate::args::{
    AlgoArg, Cli, Command, ConvergeArgs, DickmanArgs, ExpectArgs, ExpectSub, GlobalOptions, InspectArgs, MethodArg,
    NuCheckArgs, QuickRandArgs, SampleLimitArgs, SimulateArgs, SourceAction,
};
use crate::output::{self, Meta};

pub fn run(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Source {
            action: SourceAction::Inspect(a),
        } => inspect(g, a),
        Command::Simulate(a) => simulate(g, a),
        Command::SampleLimit(a) => sample_limit(g, a),
        Command::Expect(a) => match &a.quickrand {
            Some(ExpectSub::Quickrand(q)) => quickrand(g, q),
            None => expect(g, a),
        },
        Command::Converge(a) => converge(g, a),
        Command::NuCheck(a) => nu_check(g, a),
        Command::Dickman(a) => dickman(g, a),
    }
}

/// Reports a usage problem that clap cannot express and exits with code 2.
fn usage(kind: ErrorKind, msg: &str) -> ! {
    Cli::command().error(kind, msg).exit()
}

fn note(g: &GlobalOptions, level: u8, msg: impl FnOnce() -> String) {
    if g.verbose >= level {
        eprintln!("{}", msg());
    }
}

fn common_meta(command: &str, g: &GlobalOptions) -> Meta {
    let mut m = Meta::new(command);
    m.push("seed", g.seed).push("threads", g.threads);
    m
}

#[derive(Serialize)]
struct Field {
    field: String,
    value: String,
}

fn inspect(g: &GlobalOptions, a: &InspectArgs) -> Result<()> {
    let source = parse_source(&a.source)?;
    let mut rows = Vec::new();
    let mut add = |field: &str, value: String| {
        rows.push(Field {
            field: field.to_string(),
            value,
        })
    };
    add("kind", format!("{:?}", source.kind()));
    add("alphabet_size", source.size().to_string());
    add("max_conditional", source.max_conditional().to_string());
    add("reflection_symmetric", source.is_reflection_symmetric().to_string());
    add("envelope", format!("{:?}", source.envelope()));
    let p = source.precision();
    add("max_depth", p.max_depth.to_string());
    add("min_width", p.min_width.to_string());
    let tame = source.symb_tame_params(a.epsilon)?;
    add("tame_epsilon", tame.epsilon.to_string());
    add("tame_c", tame.c.to_string());
    add("tame_warnings", format!("{:?}", tame.warnings));
    for (k, pi) in source.pi_sequence(a.pi_depth).iter().enumerate().skip(1) {
        add(&format!("pi_{k}"), pi.to_string());
    }
    if let Some(text) = &a.prefix {
        let prefix: Prefix = text.parse()?;
        let node = source.node_for_prefix(&prefix)?;
        add("prefix", prefix.to_string());
        add("interval_lower", node.interval.lower.to_string());
        add("interval_upper", node.interval.upper.to_string());
        add("probability", node.interval.width().to_string());
        add(
            "conditional",
            format!("{:?}", source.conditional_distribution(&prefix)?),
        );
    }
    let mut meta = common_meta("source inspect", g);
    meta.push("source", &a.source).push("epsilon", a.epsilon);
    output::table(g.out.as_deref(), g.format, &meta, &rows)
}

#[derive(Serialize)]
struct SimRow {
    rep: usize,
    n: usize,
    alpha_or_m: String,
    algo: &'static str,
    cost_model: String,
    total_cost: f64,
    pivots: usize,
    truncation_flag: bool,
}

fn simulate(g: &GlobalOptions, a: &SimulateArgs) -> Result<()> {
    if a.algo == AlgoArg::Quickval && a.m.is_some() {
        usage(
            ErrorKind::ArgumentConflict,
            "quickval targets a value: use --alpha, not --m",
        );
    }
    if a.n == 0 {
        usage(ErrorKind::ValueValidation, "--n must be at least 1");
    }
    let source = parse_source(&a.source)?;
    let cost = parse_cost(&a.cost)?;
    let rank = match (a.m, a.alpha) {
        (Some(m), _) => m,
        (None, Some(alpha)) => target_rank(alpha, a.n),
        (None, None) => unreachable!("clap requires --alpha or --m"),
    };
    let target = match a.m {
        Some(m) => m.to_string(),
        None => a.alpha.expect("clap requires --alpha or --m").to_string(),
    };
    note(g, 1, || format!("simulating {} reps", a.reps));
    let rows: Vec<SimRow> = (0..a.reps)
        .into_par_iter()
        .map(|rep| {
            let label = StreamLabel::new(g.seed, rep as u64);
            let seeds = SeedArray::generate(a.n, label);
            let record: RunRecord = match a.algo {
                AlgoArg::Quickval => run_quickval(&source, &cost, &seeds, a.alpha.expect("checked above"))?,
                AlgoArg::Quickquant => run_quickquant(&source, &cost, &seeds, rank)?,
                AlgoArg::QsRandom => {
                    let mut rng = label.rng(lane::RANDOM_PIVOT);
                    run_quickselect_random_pivot(&source, &cost, &seeds, rank, &mut rng)?
                }
            };
            Ok(SimRow {
                rep,
                n: a.n,
                alpha_or_m: target.clone(),
                algo: record.algorithm.name(),
                cost_model: cost.label(),
                total_cost: record.total_cost,
                pivots: record.pivot_count(),
                truncation_flag: record.flags.any(),
            })
        })
        .collect::<Result<_>>()?;
    let mut meta = common_meta("simulate", g);
    meta.push("algo", format!("{:?}", a.algo).to_lowercase())
        .push("n", a.n)
        .push("target", &target)
        .push("reps", a.reps)
        .push("source", &a.source)
        .push("cost", cost.label());
    output::table(g.out.as_deref(), g.format, &meta, &rows)
}

#[derive(Serialize)]
struct LimitRow {
    rep: usize,
    value: f64,
    tail_bound: f64,
    depth: usize,
}

fn sample_limit(g: &GlobalOptions, a: &SampleLimitArgs) -> Result<()> {
    let source = parse_source(&a.source)?;
    let cost = parse_cost(&a.cost)?;
    let policy = TruncationPolicy::for_cost(&source, &cost, a.delta)?;
    let samples = (0..a.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = StreamLabel::new(g.seed, rep as u64).rng(lane::LIMIT);
            sample_S(&mut rng, &source, &cost, a.alpha, &policy)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<LimitRow> = samples
        .iter()
        .enumerate()
        .map(|(rep, s)| LimitRow {
            rep,
            value: s.value,
            tail_bound: s.tail_bound,
            depth: s.depth,
        })
        .collect();
    let mut meta = common_meta("sample-limit", g);
    meta.push("alpha", a.alpha)
        .push("source", &a.source)
        .push("cost", cost.label())
        .push("reps", a.reps)
        .push("delta", a.delta)
        .push("flagged", samples.iter().filter(|s| s.flagged).count());
    if !samples.is_empty() {
        let values: Vec<f64> = samples.iter().map(|s| s.value).collect();
        for m in moment_report(&values, &[1, 2, 3, 4])? {
            meta.push(
                &format!("moment{}", m.order),
                format!(
                    "{} (stderr {}, 95% ci {}..{})",
                    m.estimate, m.stderr, m.ci_low, m.ci_high
                ),
            );
        }
    }
    output::table(g.out.as_deref(), g.format, &meta, &rows)
}

fn expect(g: &GlobalOptions, a: &ExpectArgs) -> Result<()> {
    let alpha = a.alpha.expect("clap requires --alpha");
    let source = parse_source(&a.source)?;
    let cost = parse_cost(&a.cost)?;
    let method = a.method.unwrap_or(match cost {
        CostModel::Key => MethodArg::Closed,
        CostModel::Symbol => MethodArg::Series,
        _ => MethodArg::Integral,
    });
    let result = match method {
        MethodArg::Closed => {
            if cost != CostModel::Key {
                return Err(symselect_core::Error::InvalidParameter(
                    "the closed form covers the key cost only".into(),
                ));
            }
            ExpectationResult {
                value: expected_key_closed(alpha)?,
                method: Method::Closed,
                error_estimate: 0.0,
                terms: 1,
                flagged: false,
            }
        }
        MethodArg::Series => {
            if cost != CostModel::Symbol {
                return Err(symselect_core::Error::InvalidParameter(
                    "the series covers the symbol cost only".into(),
                ));
            }
            expected_s_series(&source, alpha, a.tol)?
        }
        MethodArg::Integral => expected_s_integral(&source, &cost, alpha, IntegralOptions { tol: a.tol })?,
    };
    let mut meta = common_meta("expect", g);
    meta.push("method", result.method.name())
        .push("source", &a.source)
        .push("cost", cost.label())
        .push("alpha", alpha)
        .push("tol", a.tol);
    if method != MethodArg::Closed && cost != CostModel::Key {
        meta.push("error_bound", "certified envelope bound on pruned subtrees");
    }
    output::record(g.out.as_deref(), g.format, &meta, &result)
}

fn quickrand(g: &GlobalOptions, a: &QuickRandArgs) -> Result<()> {
    let source = parse_source(&a.source)?;
    let cost = parse_cost(&a.cost)?;
    let grid = QuickRandGrid {
        panels: a.panels,
        points: a.points,
        levels: a.levels,
    };
    note(g, 1, || format!("{} evaluation points", grid.nodes(grid.points).len()));
    let result = expected_quickrand(&source, &cost, grid, a.tol)?;
    let mut meta = common_meta("expect quickrand", g);
    meta.push("source", &a.source)
        .push("cost", cost.label())
        .push("panels", a.panels)
        .push("points", a.points)
        .push("levels", a.levels)
        .push("tol", a.tol);
    output::record(g.out.as_deref(), g.format, &meta, &result)
}

#[derive(Serialize)]
struct ConvergeSummary {
    report: PathBuf,
    paths: PathBuf,
    flagged_reps: usize,
    limit_mean: f64,
    limit_stderr: f64,
    ks_statistic: Option<f64>,
    ks_reject: Option<bool>,
}

fn converge(g: &GlobalOptions, a: &ConvergeArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config)?;
    let config = ExperimentConfig::from_toml(&text)?;
    let dir = g
        .out
        .clone()
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    note(g, 1, || {
        format!("running {} reps over n = {:?}", config.reps, config.n_grid)
    });
    let report = convergence_experiment(&config)?;
    let report_path = dir.join("report.csv");
    let paths_path = dir.join("paths.csv");
    report.write_report_csv(output::open(Some(&report_path))?)?;
    report.write_paths_csv(output::open(Some(&paths_path))?)?;
    let summary = ConvergeSummary {
        report: report_path,
        paths: paths_path,
        flagged_reps: report.flagged_reps,
        limit_mean: report.limit_mean.mean,
        limit_stderr: report.limit_mean.stderr,
        ks_statistic: report.ks.map(|k| k.statistic),
        ks_reject: report.ks.map(|k| k.reject),
    };
    let mut meta = Meta::new("converge");
    meta.push("threads", g.threads);
    for (k, v) in report.metadata() {
        meta.push(&k, v);
    }
    output::record(None::<&Path>, g.format, &meta, &summary)
}

#[derive(Serialize)]
struct NuRow {
    closed: f64,
    mc_mean: f64,
    mc_stderr: f64,
    reps: usize,
    within_3_sigma: bool,
}

fn nu_check(g: &GlobalOptions, a: &NuCheckArgs) -> Result<()> {
    let [x1, x2, y1, y2] = a.rect[..] else {
        usage(ErrorKind::WrongNumberOfValues, "--rect takes four values: x1,x2,y1,y2");
    };
    let rect = Rect::new(x1, x2, y1, y2);
    let closed = nu_closed(a.alpha, rect)?;
    let mut rng = StreamLabel::new(g.seed, 0).rng(lane::CHAIN);
    let mc = nu_monte_carlo(&mut rng, a.alpha, rect, a.reps)?;
    let row = NuRow {
        closed,
        mc_mean: mc.mean,
        mc_stderr: mc.stderr,
        reps: mc.count,
        within_3_sigma: mc.agrees_with(closed, 3.0, 0.0),
    };
    let mut meta = common_meta("nu-check", g);
    meta.push("alpha", a.alpha).push("rect", format!("{:?}", a.rect));
    output::record(g.out.as_deref(), g.format, &meta, &row)
}

#[derive(Serialize)]
struct DickmanRow {
    rep: usize,
    value: f64,
}

fn dickman(g: &GlobalOptions, a: &DickmanArgs) -> Result<()> {
    let rows = (0..a.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = StreamLabel::new(g.seed, rep as u64).rng(lane::DICKMAN);
            Ok(DickmanRow {
                rep,
                value: sample_dickman(&mut rng, a.delta)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = common_meta("dickman", g);
    meta.push("reps", a.reps).push("delta", a.delta);
    output::table(g.out.as_deref(), g.format, &meta, &rows)
}
