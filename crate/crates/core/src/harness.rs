//! Coupled convergence experiments: QuickVal and QuickQuant on the first
//! `n` seeds of one stream, and the limit `S` along the same stream's pivot
//! chain.

use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algo::{run_quickquant, run_quickval, SeedArray, SeedStream};
use crate::config::{parse_cost, parse_source};
use crate::context::RunFlags;
use crate::cost::CostModel;
use crate::error::{invalid, Error, Result};
use crate::limit::{accumulate_limit, sample_S, LimitSample, TruncationPolicy};
use crate::rng::{lane, uniform_between, StreamLabel};
use crate::source::SourceModel;
use crate::stats::{ks_two_sample, KsResult, MeanEstimate, KS_MIN_SAMPLE};

/// Fixed default master seed.
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Seeds scanned for the limit chain before falling back to fresh uniforms.
pub const STREAM_CAP: usize = 1 << 24;

/// `m_n = floor(alpha n) + 1`, clamped to `[1, n]`.
pub fn target_rank(alpha: f64, n: usize) -> usize {
    (((alpha * n as f64).floor() as usize) + 1).clamp(1, n.max(1))
}

fn default_p() -> Vec<f64> {
    vec![1.0]
}
fn default_delta() -> f64 {
    1e-3
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_paths() -> usize {
    10
}
fn default_level() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: String,
    pub cost: String,
    pub alpha: f64,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Number of per-path trajectories to keep.
    #[serde(default = "default_paths")]
    pub paths: usize,
    /// KS test level, used when `reps` is large enough for the test.
    #[serde(default = "default_level")]
    pub ks_level: f64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Parse(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("n_grid must be a nonempty increasing list of positive sizes"));
        }
        if self.reps == 0 {
            return Err(invalid("reps must be at least 1"));
        }
        if self.p.is_empty() || self.p.iter().any(|&p| !(p >= 1.0)) {
            return Err(invalid("every p must be at least 1"));
        }
        if !(self.delta > 0.0) {
            return Err(invalid("delta must be positive"));
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<(SourceModel, CostModel)> {
        Ok((parse_source(&self.source)?, parse_cost(&self.cost)?))
    }
}

/// One replication: normalized costs for every `n` of a grid plus the
/// limit along the shared stream.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledPath {
    pub ns: Vec<usize>,
    pub quickval: Vec<f64>,
    pub quickquant: Vec<f64>,
    pub limit: LimitSample,
    /// The chain needed more than [`STREAM_CAP`] seeds.
    pub stream_capped: bool,
    pub flags: RunFlags,
}

impl CoupledPath {
    pub fn flagged(&self) -> bool {
        self.limit.flagged || self.stream_capped || self.flags.any()
    }
}

/// Limit along the pivot chain of the stream: the `k`-th pivot is the first
/// seed of the stream inside the current interval.
pub fn coupled_limit(
    label: StreamLabel,
    source: &SourceModel,
    cost: &CostModel,
    alpha: f64,
    delta: f64,
) -> Result<(LimitSample, bool)> {
    let policy = TruncationPolicy::for_cost(source, cost, delta)?;
    let mut stream = SeedStream::new(label);
    let mut fallback = label.rng(lane::LIMIT);
    let mut capped = false;
    let sample = accumulate_limit(source, cost, alpha, &policy, |lo, hi| {
        while !capped {
            let u = stream.next_seed();
            if lo < u && u < hi {
                return Ok(u);
            }
            capped = stream.drawn() >= STREAM_CAP;
        }
        Ok(uniform_between(&mut fallback, lo, hi))
    })?;
    Ok((sample, capped))
}

pub fn coupled_path(
    master: u64,
    rep: u64,
    source: &SourceModel,
    cost: &CostModel,
    alpha: f64,
    ns: &[usize],
    delta: f64,
) -> Result<CoupledPath> {
    if !(delta > 0.0) {
        return Err(invalid("delta must be positive"));
    }
    let label = StreamLabel::new(master, rep);
    let nmax = ns.iter().copied().max().unwrap_or(0);
    let all = SeedArray::generate(nmax, label);
    let mut flags = RunFlags::default();
    let mut quickval = Vec::with_capacity(ns.len());
    let mut quickquant = Vec::with_capacity(ns.len());
    for &n in ns {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let seeds = all.prefix(n);
        let v = run_quickval(source, cost, &seeds, alpha)?;
        let q = run_quickquant(source, cost, &seeds, target_rank(alpha, n))?;
        flags.merge(v.flags);
        flags.merge(q.flags);
        quickval.push(v.total_cost / n as f64);
        quickquant.push(q.total_cost / n as f64);
    }
    let (limit, stream_capped) = coupled_limit(label, source, cost, alpha, delta)?;
    Ok(CoupledPath {
        ns: ns.to_vec(),
        quickval,
        quickquant,
        limit,
        stream_capped,
        flags,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CoupledRun {
    pub quickval: f64,
    pub quickquant: f64,
    pub limit: LimitSample,
    pub flagged: bool,
}

/// `(S_n^V / n, S_n^Q / n, S)` for one replication.
pub fn coupled_run(
    master: u64,
    rep: u64,
    source: &SourceModel,
    cost: &CostModel,
    alpha: f64,
    n: usize,
    delta: f64,
) -> Result<CoupledRun> {
    let path = coupled_path(master, rep, source, cost, alpha, &[n], delta)?;
    Ok(CoupledRun {
        quickval: path.quickval[0],
        quickquant: path.quickquant[0],
        limit: path.limit,
        flagged: path.flagged(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub n: usize,
    pub algo: &'static str,
    pub p: f64,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathRow {
    pub path_id: usize,
    pub n: usize,
    /// `|S_n^V / n - S|` along one replication.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
    pub paths: Vec<PathRow>,
    /// QuickQuant at the largest `n` against independent limit samples;
    /// present when `reps` reaches the KS minimum sample size.
    pub ks: Option<KsResult>,
    pub flagged_reps: usize,
    /// Mean of the limit samples.
    pub limit_mean: MeanEstimate,
}

impl ConvergenceReport {
    /// Estimates for one algorithm and `p`, in grid order.
    pub fn curve(&self, algo: &str, p: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.algo == algo && r.p == p)
            .map(|r| r.estimate)
            .collect()
    }

    pub fn metadata(&self) -> Vec<(String, String)> {
        let c = &self.config;
        vec![
            ("source".into(), c.source.clone()),
            ("cost".into(), c.cost.clone()),
            ("alpha".into(), c.alpha.to_string()),
            ("n_grid".into(), format!("{:?}", c.n_grid)),
            ("reps".into(), c.reps.to_string()),
            ("p".into(), format!("{:?}", c.p)),
            ("delta".into(), c.delta.to_string()),
            ("seed".into(), c.seed.to_string()),
            ("flagged_reps".into(), self.flagged_reps.to_string()),
        ]
    }

    pub fn write_report_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.metadata(), &self.rows)
    }

    pub fn write_paths_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(out, &self.metadata(), &self.paths)
    }
}

/// Writes `# key=value` metadata lines followed by a CSV table.
pub fn write_csv<W: Write, T: Serialize>(mut out: W, meta: &[(String, String)], rows: &[T]) -> Result<()> {
    for (k, v) in meta {
        writeln!(out, "# {k}={v}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(std::io::Error::from)?;
    }
    Ok(w.flush()?)
}

pub fn convergence_experiment(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let (source, cost) = config.resolve()?;
    let paths: Vec<CoupledPath> = (0..config.reps as u64)
        .into_par_iter()
        .map(|rep| {
            coupled_path(
                config.seed,
                rep,
                &source,
                &cost,
                config.alpha,
                &config.n_grid,
                config.delta,
            )
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (i, &n) in config.n_grid.iter().enumerate() {
        for (algo, pick) in [("quickval", 0), ("quickquant", 1)] {
            for &p in &config.p {
                let errs: Vec<f64> = paths
                    .iter()
                    .map(|path| {
                        let x = if pick == 0 {
                            path.quickval[i]
                        } else {
                            path.quickquant[i]
                        };
                        (x - path.limit.value).abs().powf(p)
                    })
                    .collect();
                let est = MeanEstimate::from_samples(&errs)?;
                rows.push(ReportRow {
                    n,
                    algo,
                    p,
                    estimate: est.mean,
                    stderr: est.stderr,
                });
            }
        }
    }

    let path_rows = paths
        .iter()
        .take(config.paths)
        .enumerate()
        .flat_map(|(id, path)| {
            path.ns.iter().zip(&path.quickval).map(move |(&n, &v)| PathRow {
                path_id: id,
                n,
                value: (v - path.limit.value).abs(),
            })
        })
        .collect();

    let ks = if config.reps >= KS_MIN_SAMPLE {
        let policy = TruncationPolicy::for_cost(&source, &cost, config.delta)?;
        let independent: Vec<f64> = (0..config.reps as u64)
            .into_par_iter()
            .map(|rep| {
                let mut rng = StreamLabel::new(config.seed, rep).rng(lane::CHAIN);
                sample_S(&mut rng, &source, &cost, config.alpha, &policy).map(|s| s.value)
            })
            .collect::<Result<_>>()?;
        let last: Vec<f64> = paths
            .iter()
            .map(|p| *p.quickquant.last().expect("grid is nonempty"))
            .collect();
        Some(ks_two_sample(&last, &independent, config.ks_level)?)
    } else {
        None
    };

    let limits: Vec<f64> = paths.iter().map(|p| p.limit.value).collect();
    Ok(ConvergenceReport {
        config: config.clone(),
        rows,
        paths: path_rows,
        ks,
        flagged_reps: paths.iter().filter(|p| p.flagged()).count(),
        limit_mean: MeanEstimate::from_samples(&limits)?,
    })
}

/// Two-sample KS comparison at `level`.
pub fn distribution_compare(a: &[f64], b: &[f64], level: f64) -> Result<KsResult> {
    ks_two_sample(a, b, level)
}
