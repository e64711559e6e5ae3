//! Instrumented QuickVal, QuickQuant and random-pivot QuickSelect on seed
//! arrays. Keys are the words `M(U_i)`; since the source map is monotone,
//! ordering keys is ordering seeds, and only the comparison cost looks at
//! symbols.

use rand::Rng;
use serde::Serialize;

use crate::context::{uniform_index, RunContext, RunFlags};
use crate::cost::CostModel;
use crate::error::{invalid, Error, Result};
use crate::rng::{lane, open01, StreamLabel};
use crate::source::{check_seed, SourceModel};

/// Distinct seeds in (0, 1) plus the stream label they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedArray {
    seeds: Vec<f64>,
    label: StreamLabel,
}

impl SeedArray {
    pub fn new(seeds: Vec<f64>, label: StreamLabel) -> Result<Self> {
        for &u in &seeds {
            check_seed(u)?;
        }
        let mut sorted = seeds.clone();
        sorted.sort_by(f64::total_cmp);
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::SeedCollision(w[0]));
        }
        Ok(SeedArray { seeds, label })
    }

    /// `n` seeds from the label's seed lane; a draw that repeats an earlier
    /// seed is replaced by the next draw.
    pub fn generate(n: usize, label: StreamLabel) -> Self {
        let mut stream = SeedStream::new(label);
        let seeds = (0..n).map(|_| stream.next_seed()).collect();
        SeedArray { seeds, label }
    }

    /// The first `n` seeds.
    pub fn prefix(&self, n: usize) -> SeedArray {
        SeedArray {
            seeds: self.seeds[..n.min(self.len())].to_vec(),
            label: self.label,
        }
    }

    pub fn seeds(&self) -> &[f64] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn label(&self) -> StreamLabel {
        self.label
    }

    /// Index permutation sorting the seeds; `ranks[i]` is 1-based.
    fn ranks(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.seeds[a].total_cmp(&self.seeds[b]));
        let mut ranks = vec![0; self.len()];
        for (r, &i) in order.iter().enumerate() {
            ranks[i] = r + 1;
        }
        ranks
    }
}

/// The unbounded seed sequence `U_1, U_2, ...` of a stream label, with
/// repeated draws skipped. [`SeedArray::generate`] takes its prefix.
pub struct SeedStream {
    rng: crate::rng::StreamRng,
    seen: std::collections::HashSet<u64>,
    drawn: usize,
}

impl SeedStream {
    pub fn new(label: StreamLabel) -> Self {
        SeedStream {
            rng: label.rng(lane::SEEDS),
            seen: std::collections::HashSet::new(),
            drawn: 0,
        }
    }

    pub fn next_seed(&mut self) -> f64 {
        loop {
            let u = open01(&mut self.rng);
            if self.seen.insert(u.to_bits()) {
                self.drawn += 1;
                return u;
            }
        }
    }

    /// Seeds handed out so far.
    pub fn drawn(&self) -> usize {
        self.drawn
    }
}

impl Iterator for SeedStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.next_seed())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    QuickVal,
    QuickQuant,
    QsRandom,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::QuickVal => "quickval",
            Algorithm::QuickQuant => "quickquant",
            Algorithm::QsRandom => "qs-random",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Alpha(f64),
    Rank(usize),
}

/// One partitioning step: the pivot, the interval it was drawn from, and
/// the cost of comparing it with every other key in that interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PivotStep {
    pub key: usize,
    pub seed: f64,
    pub lower: f64,
    pub upper: f64,
    pub compared: usize,
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub n: usize,
    pub target: Target,
    pub total_cost: f64,
    pub steps: Vec<PivotStep>,
    pub comparisons: usize,
    pub flags: RunFlags,
}

impl RunRecord {
    pub fn pivot_count(&self) -> usize {
        self.steps.len()
    }

    pub fn per_pivot_costs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cost).collect()
    }
}

fn finish(algorithm: Algorithm, n: usize, target: Target, steps: Vec<PivotStep>, flags: RunFlags) -> RunRecord {
    RunRecord {
        algorithm,
        n,
        target,
        total_cost: steps.iter().map(|s| s.cost).sum(),
        comparisons: steps.iter().map(|s| s.compared).sum(),
        steps,
        flags,
    }
}

/// Charges the pivot `active[0]` against every later key in `active`.
fn charge(ctx: &mut RunContext, seeds: &SeedArray, active: &[usize]) -> Result<(f64, usize)> {
    let pivot = active[0];
    let path = ctx.pivot_path(seeds.seeds[pivot])?;
    let mut cost = 0.0;
    for &i in &active[1..] {
        cost += ctx.compare(pivot, &path, i, seeds.seeds[i])?;
    }
    Ok((cost, active.len() - 1))
}

/// QuickVal(n, alpha): the pivot is always the first seed inside the current
/// interval, and the interval shrinks towards `alpha`.
pub fn run_quickval(source: &SourceModel, cost: &CostModel, seeds: &SeedArray, alpha: f64) -> Result<RunRecord> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let mut ctx = RunContext::new(source, cost, seeds.label());
    let (mut lower, mut upper) = (0.0, 1.0);
    let mut active: Vec<usize> = (0..seeds.len()).collect();
    let mut steps = Vec::new();
    while !active.is_empty() {
        let (c, compared) = charge(&mut ctx, seeds, &active)?;
        let pivot = active[0];
        let v = seeds.seeds[pivot];
        steps.push(PivotStep {
            key: pivot,
            seed: v,
            lower,
            upper,
            compared,
            cost: c,
        });
        if v < alpha {
            lower = v;
        } else {
            upper = v;
        }
        active.retain(|&i| lower < seeds.seeds[i] && seeds.seeds[i] < upper);
    }
    Ok(finish(
        Algorithm::QuickVal,
        seeds.len(),
        Target::Alpha(alpha),
        steps,
        ctx.flags(),
    ))
}

/// QuickQuant(n, m): like QuickVal but steered by the global rank of each
/// pivot against the target rank `m`; stops once the pivot has rank `m`.
pub fn run_quickquant(source: &SourceModel, cost: &CostModel, seeds: &SeedArray, m: usize) -> Result<RunRecord> {
    let n = seeds.len();
    if !(1..=n).contains(&m) {
        return Err(invalid(format!("target rank must lie in 1..={n}, got {m}")));
    }
    let ranks = seeds.ranks();
    let mut ctx = RunContext::new(source, cost, seeds.label());
    let (mut lower, mut upper) = (0.0, 1.0);
    let mut active: Vec<usize> = (0..n).collect();
    let mut steps = Vec::new();
    loop {
        let (c, compared) = charge(&mut ctx, seeds, &active)?;
        let pivot = active[0];
        let v = seeds.seeds[pivot];
        steps.push(PivotStep {
            key: pivot,
            seed: v,
            lower,
            upper,
            compared,
            cost: c,
        });
        let rank = ranks[pivot];
        if rank <= m {
            lower = v;
        }
        if rank >= m {
            upper = v;
        }
        if rank == m {
            break;
        }
        active.retain(|&i| lower < seeds.seeds[i] && seeds.seeds[i] < upper);
    }
    Ok(finish(Algorithm::QuickQuant, n, Target::Rank(m), steps, ctx.flags()))
}

/// Hoare's QuickSelect for rank `m` with a uniformly random pivot in every
/// sublist.
pub fn run_quickselect_random_pivot<R: Rng + ?Sized>(
    source: &SourceModel,
    cost: &CostModel,
    seeds: &SeedArray,
    m: usize,
    rng: &mut R,
) -> Result<RunRecord> {
    let n = seeds.len();
    if !(1..=n).contains(&m) {
        return Err(invalid(format!("target rank must lie in 1..={n}, got {m}")));
    }
    let mut ctx = RunContext::new(source, cost, seeds.label());
    let mut list: Vec<usize> = (0..n).collect();
    let mut target = m;
    let (mut lower, mut upper) = (0.0, 1.0);
    let mut steps = Vec::new();
    loop {
        let j = uniform_index(rng, list.len());
        list.swap(0, j);
        let (c, compared) = charge(&mut ctx, seeds, &list)?;
        let pivot = list[0];
        let v = seeds.seeds[pivot];
        steps.push(PivotStep {
            key: pivot,
            seed: v,
            lower,
            upper,
            compared,
            cost: c,
        });
        let (less, greater): (Vec<usize>, Vec<usize>) = list[1..].iter().partition(|&&i| seeds.seeds[i] < v);
        let rank = less.len() + 1;
        if target == rank {
            break;
        } else if target < rank {
            upper = v;
            list = less;
        } else {
            lower = v;
            target -= rank;
            list = greater;
        }
    }
    Ok(finish(Algorithm::QsRandom, n, Target::Rank(m), steps, ctx.flags()))
}
