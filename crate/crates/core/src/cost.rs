//! Symmetric comparison costs `beta(u, t) = c(M(u), M(t))` on seed pairs.
//!
//! Every cost here has the positional form
//! `c(w, w') = sum_{i=1}^{k+1} c_i(w_i, w'_i)` where `k` is the length of the
//! longest common prefix, so a comparison is described by the common prefix
//! and the first pair of differing symbols.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::open01;
use crate::source::{check_seed, SourceModel, Symbol, TameParams};

/// `c_i(a, b)` for positions `1..=depth`, and `tail_default` everywhere else.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionalTable {
    entries: BTreeMap<(usize, Symbol, Symbol), f64>,
    depth: usize,
    tail_default: f64,
}

impl PositionalTable {
    pub fn new(tail_default: f64) -> Result<Self> {
        if !(tail_default >= 0.0 && tail_default.is_finite()) {
            return Err(invalid(format!(
                "tail_default must be finite and nonnegative, got {tail_default}"
            )));
        }
        Ok(PositionalTable {
            entries: BTreeMap::new(),
            depth: 0,
            tail_default,
        })
    }

    /// Sets `c_i(a, b) = c_i(b, a) = value`. Positions start at 1.
    pub fn set(&mut self, i: usize, a: Symbol, b: Symbol, value: f64) -> Result<()> {
        if i == 0 {
            return Err(invalid("positional cost positions start at 1"));
        }
        if !(value >= 0.0 && value.is_finite()) {
            return Err(invalid(format!(
                "cost c_{i}({a},{b}) must be finite and nonnegative, got {value}"
            )));
        }
        let key = (i, a.min(b), a.max(b));
        if let Some(&old) = self.entries.get(&key) {
            if old != value {
                return Err(invalid(format!(
                    "asymmetric cost: c_{i}({a},{b}) given as both {old} and {value}"
                )));
            }
        }
        self.entries.insert(key, value);
        self.depth = self.depth.max(i);
        Ok(())
    }

    pub fn get(&self, i: usize, a: Symbol, b: Symbol) -> f64 {
        self.entries
            .get(&(i, a.min(b), a.max(b)))
            .copied()
            .unwrap_or(self.tail_default)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn tail_default(&self) -> f64 {
        self.tail_default
    }

    /// Largest single-position cost.
    pub fn max_entry(&self) -> f64 {
        self.entries.values().copied().fold(self.tail_default, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CostModel {
    /// `beta = 1`: every comparison counts once.
    Key,
    /// `beta = lcp + 1`: the number of symbol comparisons.
    Symbol,
    /// `beta = 1` when the comparison reaches position `i0`.
    PositionIndicator(usize),
    Positional(PositionalTable),
}

impl CostModel {
    pub fn position_indicator(i0: usize) -> Result<Self> {
        if i0 == 0 {
            return Err(invalid("position indicator needs i0 >= 1"));
        }
        Ok(CostModel::PositionIndicator(i0))
    }

    /// Short label used in output metadata.
    pub fn label(&self) -> String {
        match self {
            CostModel::Key => "key".into(),
            CostModel::Symbol => "symbol".into(),
            CostModel::PositionIndicator(i0) => format!("pos:{i0}"),
            CostModel::Positional(t) => format!("table(depth={},tail={})", t.depth(), t.tail_default()),
        }
    }

    /// Cost of comparing two words whose longest common prefix is `common`
    /// and whose next symbols are `a != b`.
    pub fn comparison_cost(&self, common: &[Symbol], a: Symbol, b: Symbol) -> f64 {
        let k = common.len();
        match self {
            CostModel::Key => 1.0,
            CostModel::Symbol => (k + 1) as f64,
            CostModel::PositionIndicator(i0) => {
                if *i0 <= k + 1 {
                    1.0
                } else {
                    0.0
                }
            }
            CostModel::Positional(table) => {
                common
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| table.get(i + 1, s, s))
                    .sum::<f64>()
                    + table.get(k + 1, a, b)
            }
        }
    }

    /// Cost of matching the symbols of `common`: a lower bound on `beta`
    /// for any two words that share the prefix `common`.
    pub fn match_cost(&self, common: &[Symbol]) -> f64 {
        match self {
            CostModel::Key => 0.0,
            CostModel::Symbol => common.len() as f64,
            CostModel::PositionIndicator(i0) => {
                if *i0 <= common.len() {
                    1.0
                } else {
                    0.0
                }
            }
            CostModel::Positional(table) => common.iter().enumerate().map(|(i, &s)| table.get(i + 1, s, s)).sum(),
        }
    }

    /// How many common symbols must be known to evaluate the cost; `None`
    /// means the full common prefix is needed.
    pub fn depth_needed(&self) -> Option<usize> {
        match self {
            CostModel::Key => Some(0),
            CostModel::PositionIndicator(i0) => Some(i0 - 1),
            CostModel::Symbol | CostModel::Positional(_) => None,
        }
    }

    /// Bound on any single `c_i`, so that `beta <= max_unit * beta_symb`.
    pub fn max_unit(&self) -> f64 {
        match self {
            CostModel::Key | CostModel::Symbol | CostModel::PositionIndicator(_) => 1.0,
            CostModel::Positional(t) => t.max_entry(),
        }
    }

    /// True when `beta` is bounded by a constant, independent of the source.
    pub fn is_bounded(&self) -> bool {
        matches!(self, CostModel::Key | CostModel::PositionIndicator(_))
    }

    /// Tameness parameters of this cost on `source`, for a requested
    /// `epsilon` (ignored by intermittent sources, whose exponent is fixed).
    pub fn tame_params(&self, source: &SourceModel, epsilon: f64) -> Result<TameParams> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid(format!("requested epsilon must lie in (0, 1), got {epsilon}")));
        }
        match self {
            CostModel::Key | CostModel::PositionIndicator(_) => TameParams::new(epsilon, 1.0),
            CostModel::Symbol => source.symb_tame_params(epsilon),
            CostModel::Positional(t) => {
                let mut p = source.symb_tame_params(epsilon)?;
                p.c *= t.max_entry().max(f64::MIN_POSITIVE);
                Ok(p)
            }
        }
    }
}

/// Longest common prefix length of `M(u)` and `M(t)`, by joint refinement.
pub fn lcp_depth(source: &SourceModel, u: f64, t: f64) -> Result<usize> {
    joint_descent(source, u, t, None).map(|(common, _, _)| common.len())
}

/// Descends while both seeds share a child. Returns the common symbols and
/// the two differing symbols (or the symbols at depth `limit` if reached).
fn joint_descent(source: &SourceModel, u: f64, t: f64, limit: Option<usize>) -> Result<(Vec<Symbol>, Symbol, Symbol)> {
    check_seed(u)?;
    check_seed(t)?;
    if u == t {
        return Err(Error::IdenticalSeeds(u));
    }
    let mut node = source.root();
    let mut common = Vec::new();
    loop {
        if !source.resolvable(&node) {
            return Err(Error::DepthCap(node.depth));
        }
        let a = source.locate(&node, u);
        let b = source.locate(&node, t);
        if a != b || limit == Some(common.len()) {
            return Ok((common, a, b));
        }
        common.push(a);
        node = source.child(&node, a);
    }
}

/// `beta(u, t)` for distinct seeds.
pub fn beta(cost: &CostModel, source: &SourceModel, u: f64, t: f64) -> Result<f64> {
    // Stopping early at the needed depth leaves `a == b`, which the
    // bounded costs never inspect.
    let (common, a, b) = joint_descent(source, u, t, cost.depth_needed())?;
    Ok(cost.comparison_cost(&common, a, b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub u: f64,
    pub t: f64,
    pub beta: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TameReport {
    pub checked: usize,
    /// Pairs too close to resolve within the precision cap.
    pub skipped: usize,
    pub violation_count: usize,
    /// The first few violations found.
    pub violations: Vec<Violation>,
    /// Largest observed `beta / (c (t-u)^-eps)`.
    pub max_ratio: f64,
}

const REPORTED_VIOLATIONS: usize = 20;

/// Checks `beta(u, t) <= c (t - u)^-eps` on `samples` random pairs and a
/// deterministic near-diagonal grid.
pub fn tame_check<R: Rng + ?Sized>(
    cost: &CostModel,
    source: &SourceModel,
    params: &TameParams,
    samples: usize,
    rng: &mut R,
) -> TameReport {
    let mut report = TameReport::default();
    let mut check = |u: f64, t: f64| {
        let (u, t) = if u < t { (u, t) } else { (t, u) };
        match beta(cost, source, u, t) {
            Ok(b) => {
                let bound = params.bound(t - u);
                report.checked += 1;
                report.max_ratio = report.max_ratio.max(b / bound);
                if b > bound {
                    report.violation_count += 1;
                    if report.violations.len() < REPORTED_VIOLATIONS {
                        report.violations.push(Violation { u, t, beta: b, bound });
                    }
                }
            }
            Err(_) => report.skipped += 1,
        }
    };
    for _ in 0..samples {
        let u = open01(rng);
        let t = open01(rng);
        if u != t {
            check(u, t);
        }
    }
    for &base in &[0.1, 1.0 / 3.0, 0.5, 2.0 / 3.0, 0.9] {
        for j in 1..=40 {
            let gap = 0.5f64.powi(j);
            if base + gap < 1.0 {
                check(base, base + gap);
            }
            if base - gap > 0.0 {
                check(base - gap, base);
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn lcp_examples() {
        let ub = SourceModel::uniform_binary();
        assert_eq!(lcp_depth(&ub, 1.0 / 3.0, 2.0 / 3.0).unwrap(), 0);
        assert_eq!(lcp_depth(&ub, 1.0 / 3.0, 0.4).unwrap(), 2);
        assert!(matches!(lcp_depth(&ub, 0.3, 0.3), Err(Error::IdenticalSeeds(_))));
    }

    #[test]
    fn beta_examples() {
        let ub = SourceModel::uniform_binary();
        assert_eq!(beta(&CostModel::Key, &ub, 0.1, 0.2).unwrap(), 1.0);
        assert_eq!(beta(&CostModel::Symbol, &ub, 1.0 / 3.0, 0.4).unwrap(), 3.0);
        let pos1 = CostModel::position_indicator(1).unwrap();
        assert_eq!(beta(&pos1, &ub, 1.0 / 3.0, 0.4).unwrap(), 1.0);
        let pos3 = CostModel::position_indicator(3).unwrap();
        assert_eq!(beta(&pos3, &ub, 1.0 / 3.0, 0.4).unwrap(), 1.0);
        let pos4 = CostModel::position_indicator(4).unwrap();
        assert_eq!(beta(&pos4, &ub, 1.0 / 3.0, 0.4).unwrap(), 0.0);
        assert!(CostModel::position_indicator(0).is_err());
    }

    #[test]
    fn positional_table_sums_diagonal_then_split() {
        let ub = SourceModel::uniform_binary();
        let mut t = PositionalTable::new(0.5).unwrap();
        t.set(1, 0, 0, 2.0).unwrap();
        t.set(2, 1, 1, 3.0).unwrap();
        t.set(3, 0, 1, 7.0).unwrap();
        assert!(t.set(3, 1, 0, 8.0).is_err());
        t.set(3, 1, 0, 7.0).unwrap();
        let cost = CostModel::Positional(t);
        // 1/3 = 0.0101..., 0.4 = 0.0110...: common "01", then 0 vs 1
        assert_eq!(beta(&cost, &ub, 1.0 / 3.0, 0.4).unwrap(), 2.0 + 3.0 + 7.0);
        // 0.1 = 0.00011..., 0.2 = 0.00110...: common "00" (position 2 uses the default)
        assert_eq!(beta(&cost, &ub, 0.1, 0.2).unwrap(), 2.0 + 0.5 + 7.0);
    }

    #[test]
    fn tame_check_examples() {
        let ub = SourceModel::uniform_binary();
        let mut rng = stream(11, 0, 0);
        let key = tame_check(
            &CostModel::Key,
            &ub,
            &TameParams::new(0.1, 1.0).unwrap(),
            2000,
            &mut rng,
        );
        assert_eq!(key.violation_count, 0);
        assert!(key.checked > 2000);

        let params = ub.symb_tame_params(0.1).unwrap();
        let symb = tame_check(&CostModel::Symbol, &ub, &params, 20_000, &mut rng);
        assert_eq!(symb.violation_count, 0);

        let tight = TameParams::new(0.01, 0.01).unwrap();
        let bad = tame_check(&CostModel::Symbol, &ub, &tight, 1000, &mut rng);
        assert!(bad.violation_count > 0);
        assert!(!bad.violations.is_empty());
    }

    #[test]
    fn positional_tameness_scales_with_largest_entry() {
        let ub = SourceModel::uniform_binary();
        let mut t = PositionalTable::new(1.0).unwrap();
        t.set(2, 0, 1, 4.0).unwrap();
        let cost = CostModel::Positional(t);
        let params = cost.tame_params(&ub, 0.2).unwrap();
        let mut rng = stream(12, 0, 0);
        assert_eq!(tame_check(&cost, &ub, &params, 5000, &mut rng).violation_count, 0);
    }
}
