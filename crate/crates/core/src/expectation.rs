//! Evaluators for `E S`: the closed form for key comparisons, the prefix
//! series `sum_w p_w L(|alpha - mu_w| / p_w)` for symbol comparisons, and the
//! double integral `2 ∫∫_{u<t} beta(u, t) / ((alpha ∨ t) - (alpha ∧ u))`.
//! Also the QuickRand average `∫_0^1 E S(alpha) d alpha`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cost::CostModel;
use crate::error::{invalid, Error, Result};
use crate::limit::{IntegralValue, ANALYSIS_DEPTH};
use crate::quad::{adaptive, gauss_legendre, graded_toward};
use crate::source::{FundamentalInterval, MassEnvelope, Node, SourceModel, Symbol};

fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `H(y)`, with `0 ln 0 = 0`.
pub fn h_fn(y: f64) -> f64 {
    assert!(y >= 0.0, "H is defined for y >= 0");
    if y <= 0.5 {
        -(xlnx(0.5 + y) + xlnx(0.5 - y))
    } else if y < 10.0 {
        (0.5 - y) * ((0.5 + y).ln() - (y - 0.5).ln())
    } else {
        large_y_series(y) - 1.0
    }
}

/// `1 + H(y)` for large `y`: with `z = 1/(2y)`,
/// `sum_k z^(2k+1)/(2k+1) - z^(2k+2)/(2k+3)`.
fn large_y_series(y: f64) -> f64 {
    let z = 0.5 / y;
    let z2 = z * z;
    let mut power = z;
    let mut sum = 0.0;
    for k in 0..60 {
        let odd = (2 * k + 1) as f64;
        let term = power / odd - power * z / (odd + 2.0);
        sum += term;
        if term.abs() < 1e-18 * sum {
            break;
        }
        power *= z2;
    }
    sum
}

/// `L(y) = 2 (1 + H(y))`.
pub fn l_fn(y: f64) -> f64 {
    assert!(y >= 0.0, "L is defined for y >= 0");
    if y >= 10.0 {
        2.0 * large_y_series(y)
    } else {
        2.0 * (1.0 + h_fn(y))
    }
}

/// `L(0) = 2 (1 + ln 2)`, the largest value of `L`.
pub fn l_max() -> f64 {
    2.0 * (1.0 + std::f64::consts::LN_2)
}

/// `2 [1 - alpha ln alpha - (1 - alpha) ln (1 - alpha)]`.
pub fn expected_key_closed(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(2.0 * (1.0 - xlnx(alpha) - xlnx(1.0 - alpha)))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")))
    }
}

/// `J(w) = p_w L(|alpha - mu_w| / p_w)`, which equals
/// `2 ∫∫_{T_w} [(alpha ∨ t) - (alpha ∧ u)]^-1 du dt`.
pub fn j_of_prefix(interval: FundamentalInterval, alpha: f64) -> f64 {
    let p = interval.width();
    p * l_fn((alpha - interval.midpoint()).abs() / p)
}

/// The kernel `[(alpha ∨ t) - (alpha ∧ u)]^-1` for `u < t`.
pub fn kernel(alpha: f64, u: f64, t: f64) -> f64 {
    1.0 / (alpha.max(t) - alpha.min(u))
}

/// `2 ∫∫_{T_w} kernel` by nested adaptive quadrature, graded toward `t = alpha`.
pub fn j_quadrature(interval: FundamentalInterval, alpha: f64, tol: f64) -> IntegralValue {
    let FundamentalInterval { lower: a, upper: b } = interval;
    let len = b - a;
    let inner_tol = tol * 1e-3;
    let inner = |t: f64| -> f64 {
        let parts: &[(f64, f64)] = if a < alpha && alpha < t {
            &[(a, alpha), (alpha, t)]
        } else {
            &[(a, t)]
        };
        parts
            .iter()
            .map(|&(lo, hi)| adaptive(|u| kernel(alpha, u, t), lo, hi, inner_tol, 400).value)
            .sum()
    };
    // the inner integral grows like ln(1 / |t - alpha|) near alpha
    let remainder = |w: f64| if w > 0.0 { w * (2.0 + (len / w).ln()) } else { 0.0 };
    let mut value = 0.0;
    let mut error = 0.0;
    if alpha > a && alpha < b {
        for (lo, hi, toward_a) in [(a, alpha, false), (alpha, b, true)] {
            let r = graded_toward(inner, lo, hi, toward_a, tol / 4.0, remainder);
            value += r.value;
            error += r.error;
        }
    } else {
        let toward_a = alpha <= a;
        let r = graded_toward(inner, a, b, toward_a, tol / 2.0, remainder);
        value += r.value;
        error += r.error;
    }
    IntegralValue {
        value: 2.0 * value,
        error: 2.0 * error,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Closed,
    Series,
    Integral,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Closed => "closed",
            Method::Series => "series",
            Method::Integral => "integral",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExpectationResult {
    pub value: f64,
    pub method: Method,
    pub error_estimate: f64,
    /// Tree nodes, quadrature panels or grid points used.
    pub terms: usize,
    /// Set when the requested tolerance could not be certified.
    pub flagged: bool,
}

/// Bound on `sum_{v ⪰ c} J(v)` over the subtree rooted at `c`.
fn subtree_bound(env: &MassEnvelope, node: &Node, alpha: f64) -> f64 {
    let p = node.interval.width();
    let k = node.depth;
    let d = node.interval.distance_to(alpha);
    if d > 0.0 {
        // J(v) <= p_v min(2, p_v / d) and the level-j masses sum to at most p
        let knee = env.first_depth_below(k, p, 2.0 * d);
        p * (2.0 * (knee - k) as f64 + env.tail(k, p, knee, 0.0) / d)
    } else {
        4.0 * l_max() * env.tail(k, p, k, 0.0) + 4.0 * env.log_tail(k, p)
    }
}

/// Pruning budget for a subtree: absolute for the few subtrees touching
/// `alpha`, proportional to mass for the rest. Pruned budgets sum to `tol`.
fn budget(node: &Node, alpha: f64, tol: f64) -> f64 {
    if node.interval.distance_to(alpha) > 0.0 {
        0.5 * tol * node.interval.width()
    } else {
        0.25 * tol
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("tolerance must be positive, got {tol}")))
    }
}

fn check_envelope(source: &SourceModel) -> Result<()> {
    if let MassEnvelope::Polynomial { gamma, .. } = source.envelope() {
        if gamma <= 1.0 {
            return Err(Error::NonIntegrable(format!(
                "intermittent exponent {gamma} <= 1: the expected cost may be infinite"
            )));
        }
    }
    Ok(())
}

/// `E S` for the symbol cost as `sum_w J(w)` over all prefixes, pruning
/// subtrees whose certified bound fits their budget.
pub fn expected_s_series(source: &SourceModel, alpha: f64, tol: f64) -> Result<ExpectationResult> {
    check_alpha(alpha)?;
    check_tol(tol)?;
    check_envelope(source)?;
    let env = source.envelope();
    let mut stack = vec![source.root()];
    let mut value = 0.0;
    let mut error = 0.0;
    let mut terms = 0usize;
    while let Some(node) = stack.pop() {
        value += j_of_prefix(node.interval, alpha);
        terms += 1;
        for (_, child) in source.children(&node).collect::<Vec<_>>().into_iter().rev() {
            let bound = subtree_bound(&env, &child, alpha);
            if bound <= budget(&child, alpha, tol) || !source.resolvable_to(&child, ANALYSIS_DEPTH) {
                error += bound;
            } else {
                stack.push(child);
            }
        }
    }
    Ok(ExpectationResult {
        value,
        method: Method::Series,
        error_estimate: error,
        terms,
        flagged: !(error <= tol),
    })
}

/// `φ(z) = z ln z - z`, with `φ(0) = 0`.
fn phi(z: f64) -> f64 {
    if z <= 0.0 {
        0.0
    } else {
        z * z.ln() - z
    }
}

/// `∫_{u0}^{u1} ∫_{t0}^{t1} kernel dt du` for `u1 <= t0`, in closed form.
pub fn rect_kernel_integral(alpha: f64, u0: f64, u1: f64, t0: f64, t1: f64) -> f64 {
    debug_assert!(u0 <= u1 && u1 <= t0 && t0 <= t1);
    let mut total = 0.0;
    // u below alpha
    let (ua, ub) = (u0, u1.min(alpha));
    if ub > ua {
        // t below alpha: kernel 1/(alpha - u)
        let (ta, tb) = (t0, t1.min(alpha));
        if tb > ta {
            total += (tb - ta) * ((alpha - ua) / (alpha - ub)).ln();
        }
        // t above alpha: kernel 1/(t - u)
        let (ta, tb) = (t0.max(alpha), t1);
        if tb > ta {
            total += phi(ta - ub) - phi(tb - ub) + phi(tb - ua) - phi(ta - ua);
        }
    }
    // u above alpha, hence t above alpha: kernel 1/(t - alpha)
    let (ua, ub) = (u0.max(alpha), u1);
    if ub > ua {
        let (ta, tb) = (t0.max(alpha), t1);
        if tb > ta {
            total += (ub - ua) * ((tb - alpha) / (ta - alpha)).ln();
        }
    }
    total
}

/// Options for [`expected_s_integral`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegralOptions {
    pub tol: f64,
}

impl Default for IntegralOptions {
    fn default() -> Self {
        IntegralOptions { tol: 1e-8 }
    }
}

/// `E S = 2 ∫∫_{0<u<t<1} beta(u, t) kernel(u, t)`.
///
/// For the key cost this is integrated numerically over the triangle. For
/// the other costs, `beta` is constant on each product `I_wc × I_wc'` of
/// sibling intervals, so the integral is a sum of closed-form rectangle
/// integrals over the prefix tree, pruned like the series.
pub fn expected_s_integral(
    source: &SourceModel,
    cost: &CostModel,
    alpha: f64,
    opts: IntegralOptions,
) -> Result<ExpectationResult> {
    check_alpha(alpha)?;
    check_tol(opts.tol)?;
    match cost {
        CostModel::Key => {
            let r = j_quadrature(FundamentalInterval::UNIT, alpha, opts.tol);
            Ok(ExpectationResult {
                value: r.value,
                method: Method::Integral,
                error_estimate: r.error,
                terms: 0,
                flagged: !(r.error <= opts.tol),
            })
        }
        _ => {
            check_envelope(source)?;
            rectangle_tree(source, cost, alpha, opts.tol)
        }
    }
}

fn rectangle_tree(source: &SourceModel, cost: &CostModel, alpha: f64, tol: f64) -> Result<ExpectationResult> {
    let env = source.envelope();
    let cmax = cost.max_unit();
    let saturate = match cost {
        CostModel::PositionIndicator(i0) => Some(i0 - 1),
        _ => None,
    };
    let mut stack: Vec<(Node, Vec<Symbol>)> = vec![(source.root(), Vec::new())];
    let mut value = 0.0;
    let mut error = 0.0;
    let mut terms = 0usize;
    while let Some((node, prefix)) = stack.pop() {
        terms += 1;
        if saturate.is_some_and(|d| node.depth >= d) {
            // every pair below here is charged exactly once
            value += j_of_prefix(node.interval, alpha);
            continue;
        }
        let children: Vec<(Symbol, Node)> = source.children(&node).collect();
        for (i, (a, ca)) in children.iter().enumerate() {
            for (b, cb) in &children[i + 1..] {
                let beta = cost.comparison_cost(&prefix, *a, *b);
                if beta != 0.0 {
                    let r = rect_kernel_integral(
                        alpha,
                        ca.interval.lower,
                        ca.interval.upper,
                        cb.interval.lower,
                        cb.interval.upper,
                    );
                    value += 2.0 * beta * r;
                }
            }
        }
        for (s, child) in children.into_iter().rev() {
            let mut p = prefix.clone();
            p.push(s);
            // pairs below `child` cost at least `match_cost`; the excess is
            // at most `cmax` per further shared level
            let (lower, bound) = if cost.is_bounded() {
                let j = j_of_prefix(child.interval, alpha);
                (0.0, j.min(subtree_bound(&env, &child, alpha)))
            } else {
                let j = j_of_prefix(child.interval, alpha);
                (cost.match_cost(&p) * j, cmax * subtree_bound(&env, &child, alpha))
            };
            if bound <= budget(&child, alpha, tol) || !source.resolvable_to(&child, ANALYSIS_DEPTH) {
                value += lower;
                error += bound;
            } else {
                stack.push((child, p));
            }
        }
    }
    Ok(ExpectationResult {
        value,
        method: Method::Integral,
        error_estimate: error,
        terms,
        flagged: !(error <= tol),
    })
}

/// Picks the evaluator for `E S(alpha)`: closed form for the key cost, the
/// series for the symbol cost, the integral otherwise.
pub fn expected_s(source: &SourceModel, cost: &CostModel, alpha: f64, tol: f64) -> Result<ExpectationResult> {
    match cost {
        CostModel::Key => Ok(ExpectationResult {
            value: expected_key_closed(alpha)?,
            method: Method::Closed,
            error_estimate: 0.0,
            terms: 1,
            flagged: false,
        }),
        CostModel::Symbol => expected_s_series(source, alpha, tol),
        _ => expected_s_integral(source, cost, alpha, IntegralOptions { tol }),
    }
}

/// Composite Gauss–Legendre grid on `[0, 1]`: `panels` equal panels with
/// `points` nodes each; the two end panels are split dyadically `levels`
/// times toward 0 and 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuickRandGrid {
    pub panels: usize,
    pub points: usize,
    pub levels: usize,
}

impl Default for QuickRandGrid {
    fn default() -> Self {
        QuickRandGrid {
            panels: 64,
            points: 4,
            levels: 10,
        }
    }
}

impl QuickRandGrid {
    fn intervals(&self) -> Vec<(f64, f64)> {
        let h = 1.0 / self.panels as f64;
        let mut out = Vec::new();
        let push_end = |out: &mut Vec<(f64, f64)>, from_zero: bool| {
            let mut cuts = vec![0.0];
            for l in (0..self.levels).rev() {
                cuts.push(h * 0.5f64.powi(l as i32 + 1));
            }
            cuts.push(h);
            for w in cuts.windows(2) {
                if from_zero {
                    out.push((w[0], w[1]));
                } else {
                    out.push((1.0 - w[1], 1.0 - w[0]));
                }
            }
        };
        if self.panels == 1 {
            if self.levels == 0 {
                return vec![(0.0, 1.0)];
            }
            // split at the middle so both ends can be graded
            let half = QuickRandGrid { panels: 2, ..*self };
            return half.intervals();
        }
        push_end(&mut out, true);
        for i in 1..self.panels - 1 {
            out.push((i as f64 * h, (i + 1) as f64 * h));
        }
        let mut tail = Vec::new();
        push_end(&mut tail, false);
        tail.reverse();
        out.extend(tail);
        out
    }

    /// `(alpha, weight)` pairs of the composite rule with `points` nodes.
    pub fn nodes(&self, points: usize) -> Vec<(f64, f64)> {
        let (x, w) = gauss_legendre(points);
        self.intervals()
            .into_iter()
            .flat_map(|(a, b)| {
                let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
                x.iter()
                    .zip(&w)
                    .map(move |(xi, wi)| (c + h * xi, h * wi))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// `∫_0^1 E S(alpha) d alpha`, the mean cost of QuickSelect for a uniformly
/// random target rank, per key. `tol` is the accuracy of each inner
/// evaluation. With at least two nodes per panel, the error estimate adds
/// the change from dropping one node.
pub fn expected_quickrand(
    source: &SourceModel,
    cost: &CostModel,
    grid: QuickRandGrid,
    tol: f64,
) -> Result<ExpectationResult> {
    if grid.panels == 0 || grid.points == 0 {
        return Err(invalid("the QuickRand grid needs at least one panel and one point"));
    }
    let rule = |points: usize| -> Result<(f64, f64, bool, usize)> {
        let nodes = grid.nodes(points);
        let evals: Vec<Result<ExpectationResult>> = nodes
            .par_iter()
            .map(|&(alpha, _)| expected_s(source, cost, alpha, tol))
            .collect();
        let mut value = 0.0;
        let mut err = 0.0;
        let mut flagged = false;
        for ((_, w), r) in nodes.iter().zip(evals) {
            let r = r?;
            value += w * r.value;
            err += w * r.error_estimate;
            flagged |= r.flagged;
        }
        Ok((value, err, flagged, nodes.len()))
    };
    let (value, inner_err, flagged, terms) = rule(grid.points)?;
    let quad_err = if grid.points >= 2 {
        (rule(grid.points - 1)?.0 - value).abs()
    } else {
        0.0
    };
    let method = expected_s(source, cost, 0.5, tol)?.method;
    Ok(ExpectationResult {
        value,
        method,
        error_estimate: inner_err + quad_err,
        terms,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn l_examples() {
        assert_eq!(l_fn(0.5), 2.0);
        close(l_fn(0.0), 3.386_294_361_119_89, 1e-13);
        close(l_fn(1.5), 2.0 * (1.0 - 2f64.ln()), 1e-15);
    }

    #[test]
    fn l_is_continuous_monotone_and_below_reciprocal() {
        for e in 3..=9 {
            let h = 10f64.powi(-e);
            assert!((l_fn(0.5 - h) - l_fn(0.5 + h)).abs() < 40.0 * h * (1.0 / h).ln());
        }
        let mut prev = l_fn(0.0);
        for i in 1..20_000 {
            let y = i as f64 * 0.001;
            let l = l_fn(y);
            assert!(l <= prev + 1e-15, "L increases at {y}");
            if y >= 0.5 {
                assert!(l <= 1.0 / y + 1e-15, "L({y}) = {l} > 1/y");
            }
            prev = l;
        }
        // series branch joins the direct formula
        close(
            2.0 * large_y_series(10.0),
            2.0 * (1.0 + (0.5 - 10.0) * (10.5f64 / 9.5).ln()),
            1e-13,
        );
        // L(y) = (1 - 1/(6y)) / y + O(y^-3)
        close(l_fn(1e6) * 1e6, 1.0 - 1.0 / 6e6, 1e-12);
    }

    #[test]
    fn key_closed_examples() {
        assert_eq!(expected_key_closed(0.0).unwrap(), 2.0);
        assert_eq!(expected_key_closed(1.0).unwrap(), 2.0);
        close(expected_key_closed(0.5).unwrap(), 3.386_294_361_119_89, 1e-13);
        assert!(expected_key_closed(1.5).is_err());
    }

    #[test]
    fn j_examples() {
        assert_eq!(j_of_prefix(FundamentalInterval::UNIT, 0.0), 2.0);
        let i = FundamentalInterval::new(0.5, 1.0).unwrap();
        close(j_of_prefix(i, 0.75), 1.0 + 2f64.ln(), 1e-15);
    }

    #[test]
    fn j_quadrature_matches_closed_form() {
        let mut rng = crate::rng::stream(8, 0, 0);
        for _ in 0..50 {
            let mut v = [crate::rng::open01(&mut rng), crate::rng::open01(&mut rng)];
            v.sort_by(f64::total_cmp);
            let i = FundamentalInterval::new(v[0], v[1]).unwrap();
            let alpha = crate::rng::open01(&mut rng);
            let q = j_quadrature(i, alpha, 1e-9);
            close(q.value, j_of_prefix(i, alpha), 1e-5);
        }
    }

    #[test]
    fn rectangle_integral_matches_quadrature() {
        for &(alpha, u0, u1, t0, t1) in &[
            (0.5, 0.1, 0.3, 0.6, 0.9),
            (0.5, 0.1, 0.3, 0.35, 0.45),
            (0.2, 0.25, 0.3, 0.6, 0.9),
            (0.5, 0.2, 0.6, 0.6, 0.9),
            (0.5, 0.0, 0.5, 0.5, 1.0),
        ] {
            let outer = adaptive(
                |u: f64| {
                    let mut cuts = vec![t0, t1];
                    if t0 < alpha && alpha < t1 {
                        cuts.insert(1, alpha);
                    }
                    cuts.windows(2)
                        .map(|w| adaptive(|t| kernel(alpha, u, t), w[0], w[1], 1e-13, 500).value)
                        .sum()
                },
                u0,
                u1,
                1e-11,
                2000,
            );
            let got = rect_kernel_integral(alpha, u0, u1, t0, t1);
            close(got, outer.value, 1e-7);
        }
    }

    #[test]
    fn series_example_and_symmetry() {
        let ub = SourceModel::uniform_binary();
        let r = expected_s_series(&ub, 0.0, 1e-4).unwrap();
        close(r.value, 5.27938, 1e-3);
        assert!(r.error_estimate <= 1e-4 && !r.flagged);
        for a in [0.1, 0.3] {
            let x = expected_s_series(&ub, a, 1e-4).unwrap().value;
            let y = expected_s_series(&ub, 1.0 - a, 1e-4).unwrap().value;
            close(x, y, 2e-4);
        }
    }

    #[test]
    fn integral_routes() {
        let ub = SourceModel::uniform_binary();
        for a in [0.0, 0.3, 1.0] {
            let r = expected_s_integral(&ub, &CostModel::Key, a, IntegralOptions::default()).unwrap();
            close(r.value, expected_key_closed(a).unwrap(), 1e-8);
        }
        let s = expected_s_series(&ub, 0.5, 1e-4).unwrap();
        let i = expected_s_integral(&ub, &CostModel::Symbol, 0.5, IntegralOptions { tol: 1e-4 }).unwrap();
        close(s.value, i.value, s.error_estimate + i.error_estimate);
        // position indicator 1 is the key cost
        let p = expected_s_integral(&ub, &CostModel::PositionIndicator(1), 0.3, IntegralOptions::default()).unwrap();
        close(p.value, expected_key_closed(0.3).unwrap(), 1e-12);
    }

    #[test]
    fn quickrand_single_point_is_the_midpoint() {
        let ub = SourceModel::uniform_binary();
        let g = QuickRandGrid {
            panels: 1,
            points: 1,
            levels: 0,
        };
        let r = expected_quickrand(&ub, &CostModel::Key, g, 1e-6).unwrap();
        assert_eq!(r.value, expected_key_closed(0.5).unwrap());
    }

    #[test]
    fn quickrand_grid_covers_unit_interval() {
        for g in [
            QuickRandGrid::default(),
            QuickRandGrid {
                panels: 1,
                points: 3,
                levels: 4,
            },
            QuickRandGrid {
                panels: 2,
                points: 2,
                levels: 0,
            },
        ] {
            let total: f64 = g.nodes(g.points).iter().map(|(_, w)| w).sum();
            close(total, 1.0, 1e-14);
            let iv = g.intervals();
            assert_eq!(iv[0].0, 0.0);
            assert_eq!(iv.last().unwrap().1, 1.0);
            assert!(iv.windows(2).all(|w| w[0].1 == w[1].0));
        }
    }
}
