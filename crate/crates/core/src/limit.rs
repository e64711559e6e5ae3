//! The limit cost `S = sum_k I_k` of QuickVal: pivot chains, the interval
//! integrals `I_p(t, x, y)`, truncated samplers for `S` and the Dickman
//! perpetuity, and the occupation measure of the chain.

use rand::Rng;
use serde::Serialize;

use crate::cost::{beta, CostModel};
use crate::error::{invalid, Error, Result};
use crate::quad::{adaptive, graded_toward, QuadResult};
use crate::rng::{open01, uniform_between};
use crate::source::{check_seed, Precision, SourceModel, Symbol, TameParams};
use crate::stats::MeanEstimate;

/// Depth limit for exact interval sums; width underflow ends descent first.
pub const ANALYSIS_DEPTH: usize = 2048;

/// One step of a pivot chain: the pivot `V_k` and the interval `(L_k, R_k)`
/// it leaves behind.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChainEntry {
    pub lower: f64,
    pub upper: f64,
    pub pivot: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PivotChain {
    pub alpha: f64,
    pub entries: Vec<ChainEntry>,
}

impl PivotChain {
    /// `(L_k, R_k)`, with `(L_0, R_0) = (0, 1)`.
    pub fn interval(&self, k: usize) -> (f64, f64) {
        if k == 0 {
            (0.0, 1.0)
        } else {
            let e = &self.entries[k - 1];
            (e.lower, e.upper)
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    Depth(usize),
    /// Stop once `R_k - L_k` drops below this width.
    Width(f64),
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

#[inline]
fn shrink(alpha: f64, lower: f64, upper: f64, v: f64) -> (f64, f64) {
    if v < alpha {
        (v, upper)
    } else {
        (lower, v)
    }
}

const CHAIN_DEPTH_LIMIT: usize = 100_000;

pub fn sample_pivot_chain<R: Rng + ?Sized>(rng: &mut R, alpha: f64, stop: StopRule) -> Result<PivotChain> {
    check_alpha(alpha)?;
    if let StopRule::Width(w) = stop {
        if !(w > 0.0) {
            return Err(invalid(format!("stopping width must be positive, got {w}")));
        }
    }
    let (mut lower, mut upper) = (0.0, 1.0);
    let mut entries = Vec::new();
    loop {
        let done = match stop {
            StopRule::Depth(k) => entries.len() >= k,
            StopRule::Width(w) => upper - lower < w || entries.len() >= CHAIN_DEPTH_LIMIT,
        };
        if done {
            return Ok(PivotChain { alpha, entries });
        }
        let v = uniform_between(rng, lower, upper);
        (lower, upper) = shrink(alpha, lower, upper, v);
        entries.push(ChainEntry { lower, upper, pivot: v });
    }
}

/// Builds the chain driven by given pivots; each must fall strictly inside
/// the interval current at its step.
pub fn chain_from_pivots(alpha: f64, pivots: &[f64]) -> Result<PivotChain> {
    check_alpha(alpha)?;
    let (mut lower, mut upper) = (0.0, 1.0);
    let mut entries = Vec::with_capacity(pivots.len());
    for &v in pivots {
        if !(lower < v && v < upper) {
            return Err(invalid(format!(
                "pivot {v} is outside the current interval ({lower}, {upper})"
            )));
        }
        (lower, upper) = shrink(alpha, lower, upper, v);
        entries.push(ChainEntry { lower, upper, pivot: v });
    }
    Ok(PivotChain { alpha, entries })
}

/// A computed quantity with an absolute error bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IntegralValue {
    pub value: f64,
    pub error: f64,
}

fn check_integral_args(p: f64, t: f64, x: f64, y: f64, tol: f64) -> Result<()> {
    if !(0.0 <= x && x < y && y <= 1.0) {
        return Err(invalid(format!("need 0 <= x < y <= 1, got ({x}, {y})")));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("power must be at least 1, got {p}")));
    }
    if !(tol > 0.0) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    check_seed(t)
}

/// `I_p(t, x, y) = int_x^y beta(u, t)^p du`, with an error bound `<= tol`
/// unless interval underflow ends the expansion first. The pivot `t` may
/// lie outside `(x, y)`.
///
/// The key cost integrates to `y - x`. The symbol cost with `p = 1` is the
/// sum of `|I_w ∩ (x, y)|` over the prefixes `w` of `M(t)`. Every other cost
/// is constant on each child interval hanging off the path of `t`, and is
/// summed shell by shell.
pub fn integral_i(
    source: &SourceModel,
    cost: &CostModel,
    p: f64,
    t: f64,
    x: f64,
    y: f64,
    tol: f64,
) -> Result<IntegralValue> {
    check_integral_args(p, t, x, y, tol)?;
    match cost {
        CostModel::Key => Ok(IntegralValue {
            value: y - x,
            error: 0.0,
        }),
        CostModel::Symbol if p == 1.0 => Ok(prefix_chain_sum(source, t, x, y, tol)),
        CostModel::PositionIndicator(i0) => Ok(indicator_integral(source, *i0, t, x, y)),
        _ => Ok(shell_sum(source, cost, p, t, x, y, tol)),
    }
}

fn prefix_chain_sum(source: &SourceModel, t: f64, x: f64, y: f64, tol: f64) -> IntegralValue {
    let env = source.envelope();
    let mut node = source.root();
    let mut value = 0.0;
    loop {
        let ov = node.interval.overlap(x, y);
        value += ov;
        let w = node.interval.width();
        let tail = ov.min(env.tail(node.depth, w, node.depth + 1, 0.0));
        if tail <= tol || !source.resolvable_to(&node, ANALYSIS_DEPTH) {
            return IntegralValue { value, error: tail };
        }
        let s = source.locate(&node, t);
        node = source.child(&node, s);
    }
}

fn indicator_integral(source: &SourceModel, i0: usize, t: f64, x: f64, y: f64) -> IntegralValue {
    let mut node = source.root();
    while node.depth + 1 < i0 {
        if !source.resolvable_to(&node, ANALYSIS_DEPTH) {
            let ov = node.interval.overlap(x, y);
            return IntegralValue {
                value: 0.5 * ov,
                error: 0.5 * ov,
            };
        }
        node = source.child(&node, source.locate(&node, t));
    }
    IntegralValue {
        value: node.interval.overlap(x, y),
        error: 0.0,
    }
}

fn shell_sum(source: &SourceModel, cost: &CostModel, p: f64, t: f64, x: f64, y: f64, tol: f64) -> IntegralValue {
    let env = source.envelope();
    let cmax = cost.max_unit();
    let mut node = source.root();
    let mut common: Vec<Symbol> = Vec::new();
    let mut value = 0.0;
    loop {
        let st = source.locate(&node, t);
        for (c, child) in source.children(&node) {
            if c == st {
                continue;
            }
            let ov = child.interval.overlap(x, y);
            if ov > 0.0 {
                value += ov * cost.comparison_cost(&common, st, c).powf(p);
            }
        }
        let next = source.child(&node, st);
        let ov = next.interval.overlap(x, y);
        let w = next.interval.width();
        // every deeper shell lies inside `next`
        let tail = if ov == 0.0 {
            0.0
        } else if cost.is_bounded() {
            ov
        } else {
            cmax.powf(p) * env.tail(next.depth, w, next.depth, p)
        };
        if tail <= tol || !source.resolvable_to(&next, ANALYSIS_DEPTH) {
            return IntegralValue { value, error: tail };
        }
        common.push(st);
        node = next;
    }
}

/// `I_p(t, x, y)` by adaptive quadrature of `beta(u, t)^p` between the
/// split points on the path of `t`, graded toward the singular point
/// `u = t`. Used as an independent check of [`integral_i`].
pub fn integral_i_quadrature(
    source: &SourceModel,
    cost: &CostModel,
    p: f64,
    t: f64,
    x: f64,
    y: f64,
    tol: f64,
) -> Result<IntegralValue> {
    check_integral_args(p, t, x, y, tol)?;
    let deep = source.clone().with_precision(Precision {
        max_depth: ANALYSIS_DEPTH,
        min_width: source.precision().min_width,
    });
    let eps = (0.5 / p).min(0.1);
    let tame: TameParams = cost.tame_params(source, eps)?;
    if tame.epsilon * p >= 1.0 {
        return Err(Error::NonIntegrable(format!(
            "beta^{p} with epsilon {} is not integrable near the pivot",
            tame.epsilon
        )));
    }
    let e = tame.epsilon * p;
    let cp = tame.c.powf(p);
    let remainder = |w: f64| cp * w.powf(1.0 - e) / (1.0 - e);
    let mut failure = None;
    let mut f = |u: f64| match beta(cost, &deep, u, t) {
        Ok(b) => b.powf(p),
        Err(err) => {
            failure.get_or_insert(err);
            0.0
        }
    };
    // beta(., t) jumps only at split points along the path of t
    let mut cuts = vec![x, y];
    let mut node = deep.root();
    while deep.resolvable(&node) && node.interval.width() > tol {
        for j in 1..deep.size() {
            let b = deep.boundary(&node, j);
            if x < b && b < y {
                cuts.push(b);
            }
        }
        node = deep.child(&node, deep.locate(&node, t));
    }
    if x < t && t < y {
        cuts.push(t);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let share = tol / (cuts.len() - 1) as f64;
    let mut total = QuadResult::default();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let r = if a == t {
            graded_toward(&mut f, a, b, true, share, remainder)
        } else if b == t {
            graded_toward(&mut f, a, b, false, share, remainder)
        } else {
            adaptive(&mut f, a, b, share, 400)
        };
        total.value += r.value;
        total.error += r.error;
    }
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(IntegralValue {
        value: total.value,
        error: total.error,
    })
}

/// Controls truncation of `S`: tameness `(epsilon, c)` of the cost, the
/// target accuracy `delta`, and a hard cap on chain depth.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncationPolicy {
    pub tame: TameParams,
    pub delta: f64,
    pub max_depth: usize,
}

impl TruncationPolicy {
    pub fn new(tame: TameParams, delta: f64, max_depth: usize) -> Result<Self> {
        tame.ensure_below_one()?;
        if !(delta > 0.0) {
            return Err(invalid(format!("delta must be positive, got {delta}")));
        }
        Ok(TruncationPolicy { tame, delta, max_depth })
    }

    /// Default policy: `epsilon = 0.01` for bounded costs, `0.1` otherwise.
    pub fn for_cost(source: &SourceModel, cost: &CostModel, delta: f64) -> Result<Self> {
        let eps = if cost.is_bounded() { 0.01 } else { 0.1 };
        Self::new(cost.tame_params(source, eps)?, delta, 10_000)
    }

    /// `2^eps c / (1 - eps)`: `I_k <= C (R_{k-1} - L_{k-1})^(1-eps)`.
    pub fn constant(&self) -> f64 {
        let e = self.tame.epsilon;
        2f64.powf(e) * self.tame.c / (1.0 - e)
    }

    /// `E[(R_k - L_k)^s | R_{k-1} - L_{k-1} = w] <= ratio(s) w^s`.
    pub fn width_moment_ratio(s: f64) -> f64 {
        (2.0 - 2f64.powf(-s)) / (s + 1.0)
    }

    /// Bound on the conditional mean of `sum_{j > k} I_j` given a chain
    /// interval of this width.
    pub fn tail_bound(&self, width: f64) -> f64 {
        let s = 1.0 - self.tame.epsilon;
        self.constant() * width.powf(s) / (1.0 - Self::width_moment_ratio(s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LimitSample {
    pub value: f64,
    /// Tail bound plus accumulated integration error.
    pub tail_bound: f64,
    pub depth: usize,
    /// Set when the depth cap was hit before the bound fell below `delta`.
    pub flagged: bool,
}

/// Accumulates `S = sum_k I_k` along a chain whose pivots come from
/// `next_pivot(L, R)`, which must return a point of `(L, R)`.
pub fn accumulate_limit<F>(
    source: &SourceModel,
    cost: &CostModel,
    alpha: f64,
    policy: &TruncationPolicy,
    mut next_pivot: F,
) -> Result<LimitSample>
where
    F: FnMut(f64, f64) -> Result<f64>,
{
    check_alpha(alpha)?;
    let (mut lower, mut upper) = (0.0, 1.0);
    let mut value = 0.0;
    let mut err = 0.0;
    let mut depth = 0;
    loop {
        let bound = policy.tail_bound(upper - lower) + err;
        if bound <= policy.delta {
            return Ok(LimitSample {
                value,
                tail_bound: bound,
                depth,
                flagged: false,
            });
        }
        if depth >= policy.max_depth || err > policy.delta {
            return Ok(LimitSample {
                value,
                tail_bound: bound,
                depth,
                flagged: true,
            });
        }
        let v = next_pivot(lower, upper)?;
        if !(lower < v && v < upper) {
            return Err(invalid(format!(
                "pivot {v} is outside the current interval ({lower}, {upper})"
            )));
        }
        let tol = policy.delta * 0.5f64.powi(depth.min(1000) as i32 + 2);
        let i = integral_i(source, cost, 1.0, v, lower, upper, tol.max(f64::MIN_POSITIVE))?;
        value += i.value;
        err += i.error;
        (lower, upper) = shrink(alpha, lower, upper, v);
        depth += 1;
    }
}

/// One draw of `S` with uniform pivots on the current interval.
#[allow(non_snake_case)]
pub fn sample_S<R: Rng + ?Sized>(
    rng: &mut R,
    source: &SourceModel,
    cost: &CostModel,
    alpha: f64,
    policy: &TruncationPolicy,
) -> Result<LimitSample> {
    accumulate_limit(source, cost, alpha, policy, |l, u| Ok(uniform_between(rng, l, u)))
}

/// `S` along a fixed pivot sequence; runs out of pivots with an error.
pub fn limit_from_pivots(
    source: &SourceModel,
    cost: &CostModel,
    alpha: f64,
    policy: &TruncationPolicy,
    pivots: &[f64],
) -> Result<LimitSample> {
    let mut it = pivots.iter();
    accumulate_limit(source, cost, alpha, policy, |_, _| {
        it.next()
            .copied()
            .ok_or_else(|| invalid("pivot sequence exhausted before truncation"))
    })
}

/// Draw from the perpetuity `1 + sum_k U_1 ... U_k`, stopping once the
/// running product falls below `delta`.
pub fn sample_dickman<R: Rng + ?Sized>(rng: &mut R, delta: f64) -> Result<f64> {
    dickman_from(std::iter::repeat_with(|| open01(rng)), delta)
}

/// The truncated perpetuity driven by the given uniforms.
pub fn dickman_from<I: IntoIterator<Item = f64>>(uniforms: I, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    let mut sum = 1.0;
    let mut product = 1.0;
    for u in uniforms {
        product *= u;
        if product < delta {
            return Ok(sum);
        }
        sum += product;
    }
    Err(invalid("uniform sequence exhausted before truncation"))
}

/// Closed rectangle `[x1, x2] x [y1, y2]` in `(L, R)` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rect {
    pub x1: f64,
    pub x2: f64,
    pub y1: f64,
    pub y2: f64,
}

impl Rect {
    pub fn new(x1: f64, x2: f64, y1: f64, y2: f64) -> Self {
        Rect { x1, x2, y1, y2 }
    }

    fn validate(&self, alpha: f64) -> Result<()> {
        check_alpha(alpha)?;
        let Rect { x1, x2, y1, y2 } = *self;
        if !(0.0 <= x1 && x1 < x2 && x2 <= alpha && alpha <= y1 && y1 < y2 && y2 <= 1.0) {
            return Err(invalid(format!(
                "rectangle [{x1},{x2}]x[{y1},{y2}] must satisfy 0 <= x1 < x2 <= alpha = {alpha} <= y1 < y2 <= 1"
            )));
        }
        if x2 >= y1 {
            return Err(Error::NonIntegrable(format!(
                "rectangle touches the corner ({alpha}, {alpha}) where the density is not integrable"
            )));
        }
        Ok(())
    }

    fn contains(&self, l: f64, r: f64) -> bool {
        self.x1 <= l && l <= self.x2 && self.y1 <= r && r <= self.y2
    }
}

/// `nu(rect)` for the occupation measure `sum_{k >= 0} P((L_k, R_k) ∈ .)`:
/// an atom at `(0, 1)`, densities `1/y` on `L = 0` and `1/(1-x)` on `R = 1`,
/// and `2 (y - x)^-2` inside.
pub fn nu_closed(alpha: f64, rect: Rect) -> Result<f64> {
    rect.validate(alpha)?;
    let Rect { x1, x2, y1, y2 } = rect;
    let mut total = 0.0;
    if x1 == 0.0 && y2 == 1.0 {
        total += 1.0;
    }
    if x1 == 0.0 {
        total += (y2 / y1).ln();
    }
    if y2 == 1.0 {
        total += ((1.0 - x1) / (1.0 - x2)).ln();
    }
    total += 2.0 * ((y1 - x1) * (y2 - x2) / ((y2 - x1) * (y1 - x2))).ln();
    Ok(total)
}

/// Monte Carlo estimate of `nu(rect)`, counting every `k >= 0`.
pub fn nu_monte_carlo<R: Rng + ?Sized>(rng: &mut R, alpha: f64, rect: Rect, reps: usize) -> Result<MeanEstimate> {
    rect.validate(alpha)?;
    let gap = rect.y1 - rect.x2;
    let counts: Vec<f64> = (0..reps)
        .map(|_| {
            let (mut l, mut r) = (0.0, 1.0);
            let mut count = 0u32;
            loop {
                if rect.contains(l, r) {
                    count += 1;
                }
                if r - l < gap || l > rect.x2 || r < rect.y1 {
                    return count as f64;
                }
                let v = uniform_between(rng, l, r);
                (l, r) = shrink(alpha, l, r, v);
            }
        })
        .collect();
    MeanEstimate::from_samples(&counts)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn check_order(k: usize) -> Result<()> {
    if k == 0 {
        Err(invalid("chain marginals are indexed from k = 1"))
    } else {
        Ok(())
    }
}

/// Density of `R_k` on the event `L_k = 0`: `(-ln y)^(k-1) / (k-1)!`, `y > alpha`.
pub fn g_k(alpha: f64, k: usize, y: f64) -> Result<f64> {
    check_order(k)?;
    if !(alpha < y && y <= 1.0) {
        return Err(invalid(format!("g_k needs alpha = {alpha} < y <= 1, got {y}")));
    }
    Ok((-y.ln()).powi(k as i32 - 1) / factorial(k - 1))
}

/// Density of `L_k` on the event `R_k = 1`: `(-ln(1-x))^(k-1) / (k-1)!`, `x < alpha`.
pub fn f_k(alpha: f64, k: usize, x: f64) -> Result<f64> {
    check_order(k)?;
    if !(0.0 <= x && x < alpha) {
        return Err(invalid(format!("f_k needs 0 <= x < alpha = {alpha}, got {x}")));
    }
    Ok((-(1.0 - x).ln()).powi(k as i32 - 1) / factorial(k - 1))
}

/// `int g_k` via the antiderivative `y sum_{j<k} (-ln y)^j / j!`.
fn g_antiderivative(k: usize, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let z = -y.ln();
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..k {
        term *= z / j as f64;
        sum += term;
    }
    y * sum
}

pub fn g_k_integral(alpha: f64, k: usize, y1: f64, y2: f64) -> Result<f64> {
    check_order(k)?;
    if !(alpha <= y1 && y1 < y2 && y2 <= 1.0) {
        return Err(invalid(format!(
            "need alpha = {alpha} <= y1 < y2 <= 1, got ({y1}, {y2})"
        )));
    }
    Ok(g_antiderivative(k, y2) - g_antiderivative(k, y1))
}

pub fn f_k_integral(alpha: f64, k: usize, x1: f64, x2: f64) -> Result<f64> {
    check_order(k)?;
    if !(0.0 <= x1 && x1 < x2 && x2 <= alpha) {
        return Err(invalid(format!(
            "need 0 <= x1 < x2 <= alpha = {alpha}, got ({x1}, {x2})"
        )));
    }
    Ok(g_antiderivative(k, 1.0 - x1) - g_antiderivative(k, 1.0 - x2))
}

/// Which edge of the chain's state space a marginal refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Edge {
    /// `L_k = 0`, `R_k` in the range.
    LowerAtZero,
    /// `R_k = 1`, `L_k` in the range.
    UpperAtOne,
}

/// Monte Carlo estimate of `P(L_k = 0, R_k ∈ [a, b])` or
/// `P(R_k = 1, L_k ∈ [a, b])`.
pub fn chain_marginal_mc<R: Rng + ?Sized>(
    rng: &mut R,
    alpha: f64,
    k: usize,
    edge: Edge,
    a: f64,
    b: f64,
    reps: usize,
) -> Result<MeanEstimate> {
    check_alpha(alpha)?;
    check_order(k)?;
    let hits: Vec<f64> = (0..reps)
        .map(|_| {
            let (mut l, mut r) = (0.0, 1.0);
            let (mut moved_l, mut moved_r) = (false, false);
            for _ in 0..k {
                let v = uniform_between(rng, l, r);
                if v < alpha {
                    l = v;
                    moved_l = true;
                } else {
                    r = v;
                    moved_r = true;
                }
            }
            let hit = match edge {
                Edge::LowerAtZero => !moved_l && a <= r && r <= b,
                Edge::UpperAtOne => !moved_r && a <= l && l <= b,
            };
            if hit {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    MeanEstimate::from_samples(&hits)
}
