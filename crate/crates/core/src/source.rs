//! Finite-alphabet probabilistic sources.
//!
//! A source is realized as a strictly monotone map from seeds in (0, 1) to
//! infinite words. Every prefix `w` owns a fundamental interval `(a_w, b_w]`
//! whose length is the probability that a random word starts with `w`. The
//! children of a prefix split its interval in symbol order according to the
//! conditional next-symbol law, so the symbols of a seed are read off by
//! descending from `(0, 1]` and picking the child that contains it.
//!
//! Child intervals are half-open on the left: a seed that lands exactly on a
//! boundary belongs to the lower child.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

pub type Symbol = u32;

const SUM_TOLERANCE: f64 = 1e-12;

/// Depth up to which the intermittent tameness constant is searched exactly.
const INTERMITTENT_SCAN: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alphabet {
    size: usize,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidSource(format!(
                "alphabet needs at least two symbols, got {size}"
            )));
        }
        Ok(Alphabet { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

/// A finite string of symbols; the empty prefix is valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prefix(Vec<Symbol>);

impl Prefix {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        Prefix(symbols)
    }

    pub fn empty() -> Self {
        Prefix(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn push(&mut self, symbol: Symbol) {
        self.0.push(symbol);
    }

    pub fn validate(&self, alphabet: Alphabet) -> Result<()> {
        match self.0.iter().enumerate().find(|(_, &s)| s as usize >= alphabet.size()) {
            Some((position, &symbol)) => Err(Error::InvalidPrefix {
                symbol,
                position,
                size: alphabet.size(),
            }),
            None => Ok(()),
        }
    }
}

impl From<Vec<Symbol>> for Prefix {
    fn from(v: Vec<Symbol>) -> Self {
        Prefix(v)
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|&s| s < 10) {
            for s in &self.0 {
                write!(f, "{s}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
            f.write_str(&parts.join(","))
        }
    }
}

/// Parses either a digit string (`"0101"`) or a comma-separated list
/// (`"0,12,3"`). The empty string is the empty prefix.
impl FromStr for Prefix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Prefix::empty());
        }
        let symbols = if s.contains(',') {
            s.split(',')
                .map(|p| p.trim().parse::<Symbol>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("prefix {s:?}: {e}")))?
        } else {
            s.chars()
                .map(|c| c.to_digit(10))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::Parse(format!("prefix {s:?} is not a digit string")))?
        };
        Ok(Prefix(symbols))
    }
}

/// The seeds `(lower, upper]` whose words start with a given prefix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FundamentalInterval {
    pub lower: f64,
    pub upper: f64,
}

impl FundamentalInterval {
    pub const UNIT: FundamentalInterval = FundamentalInterval { lower: 0.0, upper: 1.0 };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(0.0 <= lower && lower < upper && upper <= 1.0) {
            return Err(invalid(format!(
                "fundamental interval needs 0 <= a < b <= 1, got ({lower}, {upper})"
            )));
        }
        Ok(FundamentalInterval { lower, upper })
    }

    /// The fundamental probability `p_w`.
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, u: f64) -> bool {
        self.lower < u && u <= self.upper
    }

    /// Length of the intersection with the open interval `(x, y)`.
    pub fn overlap(&self, x: f64, y: f64) -> f64 {
        (self.upper.min(y) - self.lower.max(x)).max(0.0)
    }

    /// Distance from `alpha` to the closed interval; zero when it lies inside.
    pub fn distance_to(&self, alpha: f64) -> f64 {
        if alpha < self.lower {
            self.lower - alpha
        } else if alpha > self.upper {
            alpha - self.upper
        } else {
            0.0
        }
    }
}

/// Opaque summary of a prefix that determines the next-symbol law.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct State(u32);

/// A prefix in the source's trie: its interval, law state and length.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub interval: FundamentalInterval,
    pub state: State,
    pub depth: usize,
}

/// How far interval refinement is trusted when reading symbols off a seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Precision {
    pub max_depth: usize,
    pub min_width: f64,
}

impl Default for Precision {
    fn default() -> Self {
        Precision {
            max_depth: 64,
            min_width: 1e-15,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SourceKind {
    Memoryless {
        probs: Vec<f64>,
    },
    Markov {
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
    },
    Intermittent {
        gamma: f64,
        sigma: Symbol,
    },
}

/// Upper bounds on the mass of a descendant of a node, as a function of
/// depth. `Geometric` holds when every conditional probability is at most
/// `ratio`; `Polynomial` is the Π-tame bound `π_k <= scale (k+1)^-gamma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MassEnvelope {
    Geometric { ratio: f64 },
    Polynomial { scale: f64, gamma: f64 },
}

impl MassEnvelope {
    /// Bound on `p_v` for a descendant `v` at `depth` of a node at
    /// `anchor_depth` with mass `anchor_mass`.
    pub fn mass(&self, anchor_depth: usize, anchor_mass: f64, depth: usize) -> f64 {
        debug_assert!(depth >= anchor_depth);
        match *self {
            MassEnvelope::Geometric { ratio } => anchor_mass * ratio.powi((depth - anchor_depth) as i32),
            MassEnvelope::Polynomial { scale, gamma } => anchor_mass.min(scale * ((depth + 1) as f64).powf(-gamma)),
        }
    }

    /// First depth `>= anchor_depth` whose mass bound is below `threshold`.
    pub fn first_depth_below(&self, anchor_depth: usize, anchor_mass: f64, threshold: f64) -> usize {
        if anchor_mass < threshold {
            return anchor_depth;
        }
        let steps = match *self {
            MassEnvelope::Geometric { ratio } => {
                let s = ((anchor_mass / threshold).ln() / (1.0 / ratio).ln()).floor() + 1.0;
                if s.is_finite() {
                    s.max(0.0) as usize
                } else {
                    usize::MAX / 4
                }
            }
            MassEnvelope::Polynomial { scale, gamma } => {
                // scale (k+1)^-gamma < threshold  <=>  k + 1 > (scale / threshold)^(1/gamma)
                let k = ((scale / threshold).powf(1.0 / gamma)).floor();
                if !k.is_finite() {
                    return usize::MAX / 4;
                }
                return (k as usize).max(anchor_depth);
            }
        };
        anchor_depth.saturating_add(steps)
    }

    /// Bound on `sum_{j >= from} m_j (j+1)^power`, where `m_j` is
    /// [`MassEnvelope::mass`]. Infinite when the series may diverge.
    pub fn tail(&self, anchor_depth: usize, anchor_mass: f64, from: usize, power: f64) -> f64 {
        let from = from.max(anchor_depth);
        match *self {
            MassEnvelope::Geometric { ratio } => {
                if ratio >= 1.0 {
                    return f64::INFINITY;
                }
                let mut term = self.mass(anchor_depth, anchor_mass, from) * ((from + 1) as f64).powf(power);
                if power == 0.0 {
                    return term / (1.0 - ratio);
                }
                let mut sum = 0.0;
                let mut j = from;
                loop {
                    sum += term;
                    let growth = ratio * ((j + 2) as f64 / (j + 1) as f64).powf(power);
                    let next = term * growth;
                    if growth < 1.0 {
                        // the ratio of consecutive terms only decreases from here on
                        let rest = next / (1.0 - growth);
                        if rest <= 1e-17 * sum || next < 1e-300 {
                            return sum + rest;
                        }
                    }
                    term = next;
                    j += 1;
                    if j > from + 1_000_000 {
                        return f64::INFINITY;
                    }
                }
            }
            MassEnvelope::Polynomial { scale, gamma } => {
                if gamma <= power + 1.0 {
                    return f64::INFINITY;
                }
                // below the knee the anchor mass is the binding bound
                let knee = self.first_depth_below(anchor_depth, anchor_mass, anchor_mass).max(from);
                let flat = if knee - from <= 100_000 {
                    (from..knee).map(|j| ((j + 1) as f64).powf(power)).sum::<f64>()
                } else {
                    // increasing summand: sum_{j=from}^{knee-1} (j+1)^s <= int_{from+1}^{knee+1} x^s dx
                    (((knee + 1) as f64).powf(power + 1.0) - ((from + 1) as f64).powf(power + 1.0)) / (power + 1.0)
                };
                let x = (knee + 1) as f64;
                let first = (scale * x.powf(-gamma)).min(anchor_mass) * x.powf(power);
                let rest = scale * x.powf(power - gamma + 1.0) / (gamma - power - 1.0);
                anchor_mass * flat + first + rest
            }
        }
    }

    /// Bound on `sum_{j >= anchor_depth} m_j ln(anchor_mass / m_j)`.
    pub fn log_tail(&self, anchor_depth: usize, anchor_mass: f64) -> f64 {
        match *self {
            MassEnvelope::Geometric { ratio } => {
                if ratio >= 1.0 {
                    return f64::INFINITY;
                }
                anchor_mass * (1.0 / ratio).ln() * ratio / ((1.0 - ratio) * (1.0 - ratio))
            }
            MassEnvelope::Polynomial { scale, gamma } => {
                if gamma <= 1.0 {
                    return f64::INFINITY;
                }
                let knee = self.first_depth_below(anchor_depth, anchor_mass, anchor_mass);
                let c0 = (anchor_mass / scale).ln();
                let term = |x: f64| scale * x.powf(-gamma) * (c0 + gamma * x.ln());
                let mut sum = 0.0;
                let mut x = (knee + 1) as f64;
                // sum explicitly until the summand is positive and decreasing
                while x < (knee + 65) as f64 || c0 + gamma * x.ln() <= 1.0 {
                    sum += term(x).max(0.0);
                    x += 1.0;
                }
                let g1 = gamma - 1.0;
                let tail = scale * x.powf(-g1) * (c0 / g1 + gamma * (x.ln() / g1 + 1.0 / (g1 * g1)));
                sum + term(x) + tail
            }
        }
    }
}

/// Tameness parameters `(epsilon, c)`: `beta(u, t) <= c (t - u)^-epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct TameParams {
    pub epsilon: f64,
    pub c: f64,
    pub warnings: Vec<TameWarning>,
}

impl TameParams {
    pub fn new(epsilon: f64, c: f64) -> Result<Self> {
        if !(epsilon > 0.0 && c > 0.0 && epsilon.is_finite() && c.is_finite()) {
            return Err(invalid(format!(
                "tame parameters need epsilon > 0 and c > 0, got ({epsilon}, {c})"
            )));
        }
        Ok(TameParams {
            epsilon,
            c,
            warnings: Vec::new(),
        })
    }

    /// Equivalent Π-tame exponent `gamma = 1 / epsilon`.
    pub fn gamma(&self) -> f64 {
        1.0 / self.epsilon
    }

    /// Equivalent Π-tame constant `A = c^gamma`.
    pub fn scale(&self) -> f64 {
        self.c.powf(self.gamma())
    }

    /// Bound on `c (t - u)^-epsilon`.
    pub fn bound(&self, gap: f64) -> f64 {
        self.c * gap.powf(-self.epsilon)
    }

    pub fn ensure_below_one(&self) -> Result<()> {
        if self.epsilon < 1.0 {
            Ok(())
        } else {
            Err(invalid(format!("truncation needs epsilon < 1, got {}", self.epsilon)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TameWarning {
    /// gamma <= 1: the expectation of the limit may be infinite.
    ExpectationMayDiverge,
    /// gamma <= 4: epsilon >= 1/4, outside the almost-sure convergence regime.
    OutsideAlmostSureRegime,
}

#[derive(Clone, Debug)]
pub struct SourceModel {
    alphabet: Alphabet,
    kind: SourceKind,
    precision: Precision,
    /// Cumulative rows for table-driven kinds: `rows[state][j] = sum_{i<j} p_i`.
    rows: Vec<Vec<f64>>,
    envelope: MassEnvelope,
}

fn check_probability_vector(name: &str, v: &[f64], r: usize) -> Result<()> {
    if v.len() != r {
        return Err(Error::InvalidSource(format!(
            "{name} has {} entries, expected {r}",
            v.len()
        )));
    }
    if let Some(p) = v.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
        return Err(Error::InvalidSource(format!(
            "{name} must be strictly positive, found {p}"
        )));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidSource(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

fn cumulative_row(p: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(p.len() + 1);
    let mut acc = 0.0;
    row.push(0.0);
    for &x in &p[..p.len() - 1] {
        acc += x;
        row.push(acc.min(1.0));
    }
    row.push(1.0);
    row
}

impl SourceModel {
    pub fn memoryless(probs: Vec<f64>) -> Result<Self> {
        let alphabet = Alphabet::new(probs.len())?;
        check_probability_vector("probs", &probs, alphabet.size())?;
        let ratio = probs.iter().cloned().fold(0.0, f64::max);
        let rows = vec![cumulative_row(&probs)];
        Ok(SourceModel {
            alphabet,
            kind: SourceKind::Memoryless { probs },
            precision: Precision::default(),
            rows,
            envelope: MassEnvelope::Geometric { ratio },
        })
    }

    pub fn markov(initial: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        let alphabet = Alphabet::new(initial.len())?;
        let r = alphabet.size();
        check_probability_vector("initial", &initial, r)?;
        if transition.len() != r {
            return Err(Error::InvalidSource(format!(
                "transition has {} rows, expected {r}",
                transition.len()
            )));
        }
        for (i, row) in transition.iter().enumerate() {
            check_probability_vector(&format!("transition row {i}"), row, r)?;
        }
        let ratio = initial
            .iter()
            .chain(transition.iter().flatten())
            .cloned()
            .fold(0.0, f64::max);
        let mut rows = Vec::with_capacity(r + 1);
        rows.push(cumulative_row(&initial));
        rows.extend(transition.iter().map(|row| cumulative_row(row)));
        Ok(SourceModel {
            alphabet,
            kind: SourceKind::Markov { initial, transition },
            precision: Precision::default(),
            rows,
            envelope: MassEnvelope::Geometric { ratio },
        })
    }

    pub fn intermittent(r: usize, gamma: f64, sigma: Symbol) -> Result<Self> {
        let alphabet = Alphabet::new(r)?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidSource(format!(
                "intermittent exponent must be positive, got {gamma}"
            )));
        }
        if sigma as usize >= r {
            return Err(Error::InvalidSource(format!(
                "distinguished symbol {sigma} outside alphabet of size {r}"
            )));
        }
        let mut model = SourceModel {
            alphabet,
            kind: SourceKind::Intermittent { gamma, sigma },
            precision: Precision::default(),
            rows: Vec::new(),
            envelope: MassEnvelope::Polynomial { scale: 1.0, gamma },
        };
        let pis = model.pi_sequence(INTERMITTENT_SCAN);
        let scale = pis
            .iter()
            .enumerate()
            .map(|(k, p)| p * ((k + 1) as f64).powf(gamma))
            .fold(0.0, f64::max);
        model.envelope = MassEnvelope::Polynomial { scale, gamma };
        Ok(model)
    }

    pub fn uniform(r: usize) -> Result<Self> {
        Self::memoryless(vec![1.0 / r as f64; r])
    }

    pub fn uniform_binary() -> Self {
        Self::memoryless(vec![0.5, 0.5]).expect("uniform binary source is valid")
    }

    /// Memoryless binary source with `P(symbol 0) = p`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidSource(format!(
                "bernoulli parameter must lie in (0, 1), got {p}"
            )));
        }
        Self::memoryless(vec![p, 1.0 - p])
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn size(&self) -> usize {
        self.alphabet.size()
    }

    pub fn kind(&self) -> &SourceKind {
        &self.kind
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn envelope(&self) -> MassEnvelope {
        self.envelope
    }

    /// Largest conditional probability of any symbol in any state.
    pub fn max_conditional(&self) -> f64 {
        match &self.kind {
            SourceKind::Memoryless { probs } => probs.iter().cloned().fold(0.0, f64::max),
            SourceKind::Markov { initial, transition } => initial
                .iter()
                .chain(transition.iter().flatten())
                .cloned()
                .fold(0.0, f64::max),
            SourceKind::Intermittent { .. } => 1.0,
        }
    }

    /// True when reflecting every symbol `s -> r-1-s` leaves the law unchanged.
    pub fn is_reflection_symmetric(&self) -> bool {
        let r = self.size();
        let rev = |v: &[f64]| v.iter().rev().cloned().collect::<Vec<_>>();
        match &self.kind {
            SourceKind::Memoryless { probs } => rev(probs) == *probs,
            SourceKind::Markov { initial, transition } => {
                rev(initial) == *initial && (0..r).all(|i| rev(&transition[r - 1 - i]) == transition[i])
            }
            SourceKind::Intermittent { .. } => false,
        }
    }

    pub fn root(&self) -> Node {
        Node {
            interval: FundamentalInterval::UNIT,
            state: State(0),
            depth: 0,
        }
    }

    fn intermittent_mass(&self, run: u32) -> (f64, f64) {
        let (gamma, r) = match self.kind {
            SourceKind::Intermittent { gamma, .. } => (gamma, self.size() as f64),
            _ => unreachable!(),
        };
        if run == 0 {
            (1.0 / r, 1.0 / r)
        } else {
            let k = run as f64;
            let m = (k / (k + 1.0)).powf(gamma);
            (m, (1.0 - m) / (r - 1.0))
        }
    }

    /// Conditional probability of `symbol` in `state`.
    pub fn probability(&self, state: State, symbol: Symbol) -> f64 {
        let s = symbol as usize;
        match &self.kind {
            SourceKind::Memoryless { probs } => probs[s],
            SourceKind::Markov { initial, transition } => {
                if state.0 == 0 {
                    initial[s]
                } else {
                    transition[state.0 as usize - 1][s]
                }
            }
            SourceKind::Intermittent { sigma, .. } => {
                let (m, other) = self.intermittent_mass(state.0);
                if symbol == *sigma {
                    m
                } else {
                    other
                }
            }
        }
    }

    /// `sum_{i < j} P(i | state)`, with exact 0 and 1 at the ends.
    pub fn cumulative(&self, state: State, j: usize) -> f64 {
        let r = self.size();
        if j == 0 {
            return 0.0;
        }
        if j >= r {
            return 1.0;
        }
        match &self.kind {
            SourceKind::Memoryless { .. } => self.rows[0][j],
            SourceKind::Markov { .. } => self.rows[state.0 as usize][j],
            SourceKind::Intermittent { sigma, .. } => {
                let (m, other) = self.intermittent_mass(state.0);
                if state.0 == 0 {
                    j as f64 / r as f64
                } else if j > *sigma as usize {
                    (m + (j - 1) as f64 * other).min(1.0)
                } else {
                    j as f64 * other
                }
            }
        }
    }

    pub fn next_state(&self, state: State, symbol: Symbol) -> State {
        match &self.kind {
            SourceKind::Memoryless { .. } => state,
            SourceKind::Markov { .. } => State(symbol + 1),
            SourceKind::Intermittent { sigma, .. } => {
                if symbol == *sigma {
                    State(state.0.saturating_add(1))
                } else {
                    State(0)
                }
            }
        }
    }

    /// The `j`-th split point of `node`: `c_0 = a`, `c_r = b`, child `s`
    /// covers `(c_s, c_{s+1}]`.
    #[inline]
    pub fn boundary(&self, node: &Node, j: usize) -> f64 {
        let FundamentalInterval { lower, upper } = node.interval;
        if j == 0 {
            lower
        } else if j >= self.size() {
            upper
        } else {
            (lower + (upper - lower) * self.cumulative(node.state, j)).clamp(lower, upper)
        }
    }

    pub fn child(&self, node: &Node, symbol: Symbol) -> Node {
        let s = symbol as usize;
        Node {
            interval: FundamentalInterval {
                lower: self.boundary(node, s),
                upper: self.boundary(node, s + 1),
            },
            state: self.next_state(node.state, symbol),
            depth: node.depth + 1,
        }
    }

    /// Children of `node` in symbol order.
    pub fn children<'a>(&'a self, node: &'a Node) -> impl Iterator<Item = (Symbol, Node)> + 'a {
        (0..self.size() as Symbol).map(move |s| (s, self.child(node, s)))
    }

    /// The symbol whose child interval of `node` contains `u`.
    #[inline]
    pub fn locate(&self, node: &Node, u: f64) -> Symbol {
        let r = self.size();
        for j in 0..r - 1 {
            if u <= self.boundary(node, j + 1) {
                return j as Symbol;
            }
        }
        (r - 1) as Symbol
    }

    /// Whether `node` can be split further within the configured precision.
    pub fn resolvable(&self, node: &Node) -> bool {
        node.depth < self.precision.max_depth && node.interval.width() >= self.precision.min_width
    }

    /// Like [`SourceModel::resolvable`] but with a caller-chosen depth limit,
    /// for analytic routines that only need interval geometry.
    pub fn resolvable_to(&self, node: &Node, max_depth: usize) -> bool {
        node.depth < max_depth && node.interval.width() >= self.precision.min_width
    }

    pub fn conditional_distribution(&self, prefix: &Prefix) -> Result<Vec<f64>> {
        prefix.validate(self.alphabet)?;
        let state = prefix
            .symbols()
            .iter()
            .fold(self.root().state, |st, &s| self.next_state(st, s));
        Ok((0..self.size() as Symbol).map(|s| self.probability(state, s)).collect())
    }

    pub fn node_for_prefix(&self, prefix: &Prefix) -> Result<Node> {
        prefix.validate(self.alphabet)?;
        let mut node = self.root();
        for &s in prefix.symbols() {
            node = self.child(&node, s);
            if node.interval.width() <= 0.0 {
                return Err(Error::DepthCap(node.depth));
            }
        }
        Ok(node)
    }

    pub fn refine_interval(&self, prefix: &Prefix) -> Result<FundamentalInterval> {
        self.node_for_prefix(prefix).map(|n| n.interval)
    }

    /// Exact fundamental probability of a prefix, as a product of conditionals.
    pub fn prefix_probability(&self, prefix: &Prefix) -> Result<f64> {
        prefix.validate(self.alphabet)?;
        let mut state = self.root().state;
        let mut p = 1.0;
        for &s in prefix.symbols() {
            p *= self.probability(state, s);
            state = self.next_state(state, s);
        }
        Ok(p)
    }

    /// The length-`k` prefix of the word with seed `u`.
    pub fn symbols_from_seed(&self, u: f64, k: usize) -> Result<Prefix> {
        check_seed(u)?;
        let mut node = self.root();
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            if !self.resolvable(&node) {
                return Err(Error::DepthCap(node.depth));
            }
            let s = self.locate(&node, u);
            out.push(s);
            node = self.child(&node, s);
        }
        Ok(Prefix(out))
    }

    /// `pi_k`, the largest fundamental probability among prefixes of length `k`.
    pub fn pi_k(&self, k: usize) -> f64 {
        match &self.kind {
            SourceKind::Memoryless { probs } => probs.iter().cloned().fold(0.0, f64::max).powi(k as i32),
            _ => self.pi_sequence(k)[k],
        }
    }

    /// `[pi_0, ..., pi_kmax]` by max-product dynamic programming over the
    /// law state, which is exact for all three kinds.
    pub fn pi_sequence(&self, kmax: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(kmax + 1);
        out.push(1.0);
        match &self.kind {
            SourceKind::Memoryless { probs } => {
                let pmax = probs.iter().cloned().fold(0.0, f64::max);
                for k in 1..=kmax {
                    out.push(pmax.powi(k as i32));
                }
            }
            SourceKind::Markov { initial, transition } => {
                let r = self.size();
                let mut best = initial.clone();
                for k in 1..=kmax {
                    if k > 1 {
                        best = (0..r)
                            .map(|s| (0..r).map(|prev| best[prev] * transition[prev][s]).fold(0.0, f64::max))
                            .collect();
                    }
                    out.push(best.iter().cloned().fold(0.0, f64::max));
                }
            }
            SourceKind::Intermittent { .. } => {
                // best[j]: largest probability of a word ending in a run of j sigmas
                let mut best = vec![1.0];
                for _ in 1..=kmax {
                    let mut next = vec![0.0; best.len() + 1];
                    for (j, &b) in best.iter().enumerate() {
                        let (m, other) = self.intermittent_mass(j as u32);
                        next[0] = f64::max(next[0], b * other);
                        next[j + 1] = b * m;
                    }
                    out.push(next.iter().cloned().fold(0.0, f64::max));
                    best = next;
                }
            }
        }
        out
    }

    /// Tameness parameters of the symbol-comparison cost.
    ///
    /// Geometric sources accept any `epsilon` in (0, 1) and derive `c` from
    /// `beta_symb(u, t) <= 1 + log_b(1 / (t - u))` with `b = 1 / p_max`.
    /// Intermittent sources ignore the request and return `epsilon = 1/gamma`,
    /// `c = A^(1/gamma)`.
    pub fn symb_tame_params(&self, epsilon: f64) -> Result<TameParams> {
        match (&self.kind, self.envelope) {
            (SourceKind::Intermittent { gamma, .. }, MassEnvelope::Polynomial { scale, .. }) => {
                let mut params = TameParams {
                    epsilon: 1.0 / gamma,
                    c: scale.powf(1.0 / gamma),
                    warnings: Vec::new(),
                };
                if *gamma <= 1.0 {
                    params.warnings.push(TameWarning::ExpectationMayDiverge);
                }
                if *gamma <= 4.0 {
                    params.warnings.push(TameWarning::OutsideAlmostSureRegime);
                }
                Ok(params)
            }
            (_, MassEnvelope::Geometric { ratio }) => {
                if !(epsilon > 0.0 && epsilon < 1.0) {
                    return Err(invalid(format!("requested epsilon must lie in (0, 1), got {epsilon}")));
                }
                let ln_b = (1.0 / ratio).ln();
                // sup over y >= 0 of e^(-eps y) (1 + y / ln b)
                let y_star = 1.0 / epsilon - ln_b;
                let c = if y_star <= 0.0 {
                    1.0
                } else {
                    (epsilon * ln_b - 1.0).exp() / (epsilon * ln_b)
                };
                let mut params = TameParams::new(epsilon, c)?;
                if epsilon >= 0.25 {
                    params.warnings.push(TameWarning::OutsideAlmostSureRegime);
                }
                Ok(params)
            }
            _ => unreachable!("envelope kind always matches source kind"),
        }
    }
}

pub(crate) fn check_seed(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::SeedOutOfRange(u))
    }
}

/// The nested intervals of one seed's word, computed down to the precision
/// cap. `nodes[k]` is the node of the length-`k` prefix.
#[derive(Clone, Debug)]
pub struct KeyPath {
    seed: f64,
    nodes: Vec<Node>,
    symbols: Vec<Symbol>,
}

impl KeyPath {
    pub fn new(source: &SourceModel, seed: f64) -> Result<Self> {
        Self::with_depth(source, seed, source.precision().max_depth)
    }

    pub fn with_depth(source: &SourceModel, seed: f64, max_depth: usize) -> Result<Self> {
        check_seed(seed)?;
        let mut node = source.root();
        let mut nodes = vec![node];
        let mut symbols = Vec::new();
        while source.resolvable_to(&node, max_depth) {
            let s = source.locate(&node, seed);
            node = source.child(&node, s);
            symbols.push(s);
            nodes.push(node);
        }
        Ok(KeyPath { seed, nodes, symbols })
    }

    pub fn seed(&self) -> f64 {
        self.seed
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// Depth of the deepest resolved node.
    pub fn depth(&self) -> usize {
        self.symbols.len()
    }

    pub fn deepest(&self) -> &Node {
        self.nodes.last().expect("path always holds the root")
    }

    /// Number of leading symbols `u` shares with this path, up to the
    /// resolved depth. Nested intervals make membership monotone in depth.
    pub fn shared_depth(&self, u: f64) -> usize {
        let (mut lo, mut hi) = (0usize, self.nodes.len() - 1);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if self.nodes[mid].interval.contains(u) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn memoryless_ignores_prefix() {
        let src = SourceModel::memoryless(vec![0.3, 0.7]).unwrap();
        for p in ["", "0", "1101"] {
            let d = src.conditional_distribution(&p.parse().unwrap()).unwrap();
            assert_eq!(d, vec![0.3, 0.7]);
        }
    }

    #[test]
    fn intermittent_conditionals() {
        let src = SourceModel::intermittent(2, 1.0, 0).unwrap();
        let d = src.conditional_distribution(&"10".parse().unwrap()).unwrap();
        assert_close(d[0], 0.5, 1e-15);
        assert_close(d[1], 0.5, 1e-15);
        let d = src.conditional_distribution(&"100".parse().unwrap()).unwrap();
        assert_close(d[0], 2.0f64 / 3.0, 1e-15);

        let src = SourceModel::intermittent(3, 2.0, 1).unwrap();
        let d = src.conditional_distribution(&"0120".parse().unwrap()).unwrap();
        for p in d {
            assert_close(p, 1.0 / 3.0, 1e-15);
        }
        let d = src.conditional_distribution(&"11".parse().unwrap()).unwrap();
        assert_close(d[1], (2.0f64 / 3.0).powi(2), 1e-15);
        assert_close(d[0], d[2], 1e-15);
        assert_close(d.iter().sum::<f64>(), 1.0, 1e-15);
    }

    #[test]
    fn invalid_prefix_is_rejected() {
        let src = SourceModel::uniform_binary();
        let err = src.conditional_distribution(&Prefix::new(vec![0, 2])).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidPrefix {
                symbol: 2,
                position: 1,
                size: 2
            }
        ));
        assert!(src.refine_interval(&Prefix::new(vec![5])).is_err());
    }

    #[test]
    fn invalid_sources_are_rejected() {
        assert!(SourceModel::memoryless(vec![1.0]).is_err());
        assert!(SourceModel::memoryless(vec![0.0, 1.0]).is_err());
        assert!(SourceModel::memoryless(vec![0.3, 0.6]).is_err());
        assert!(SourceModel::markov(vec![0.5, 0.5], vec![vec![0.5, 0.5]]).is_err());
        assert!(SourceModel::intermittent(2, 0.0, 0).is_err());
        assert!(SourceModel::intermittent(2, 1.0, 2).is_err());
    }

    #[test]
    fn refine_interval_examples() {
        let ub = SourceModel::uniform_binary();
        assert_eq!(ub.refine_interval(&Prefix::empty()).unwrap(), FundamentalInterval::UNIT);
        let i = ub.refine_interval(&"1".parse().unwrap()).unwrap();
        assert_eq!((i.lower, i.upper), (0.5, 1.0));
        assert_eq!(i.width(), 0.5);
        assert_eq!(i.midpoint(), 0.75);

        let src = SourceModel::memoryless(vec![0.3, 0.7]).unwrap();
        let i = src.refine_interval(&"01".parse().unwrap()).unwrap();
        assert_close(i.lower, 0.09, 1e-15);
        assert_close(i.upper, 0.30, 1e-15);
        assert_close(i.width(), 0.21, 1e-15);
    }

    #[test]
    fn symbols_from_seed_examples() {
        let ub = SourceModel::uniform_binary();
        assert_eq!(ub.symbols_from_seed(1.0 / 3.0, 4).unwrap().to_string(), "0101");
        assert_eq!(ub.symbols_from_seed(2.0 / 3.0, 4).unwrap().to_string(), "1010");
        let src = SourceModel::memoryless(vec![0.3, 0.7]).unwrap();
        assert_eq!(src.symbols_from_seed(0.9, 1).unwrap().symbols(), &[1]);
        assert!(matches!(ub.symbols_from_seed(0.0, 1), Err(Error::SeedOutOfRange(_))));
        assert!(matches!(ub.symbols_from_seed(1.0, 1), Err(Error::SeedOutOfRange(_))));
    }

    #[test]
    fn boundary_seed_goes_to_lower_child() {
        let ub = SourceModel::uniform_binary();
        assert_eq!(ub.symbols_from_seed(0.5, 3).unwrap().to_string(), "011");
        assert_eq!(ub.symbols_from_seed(0.25, 2).unwrap().to_string(), "00");
    }

    #[test]
    fn depth_cap_is_reported() {
        let ub = SourceModel::uniform_binary();
        assert!(matches!(ub.symbols_from_seed(0.3, 200), Err(Error::DepthCap(_))));
    }

    #[test]
    fn pi_k_examples() {
        let ub = SourceModel::uniform_binary();
        assert_eq!(ub.pi_k(3), 0.125);
        let src = SourceModel::memoryless(vec![0.3, 0.7]).unwrap();
        assert_close(src.pi_k(5), 0.16807, 1e-15);
        let inter = SourceModel::intermittent(2, 1.0, 0).unwrap();
        let k = 400;
        assert_close(inter.pi_k(k) * k as f64 * 2.0, 1.0, 1e-12);
    }

    #[test]
    fn markov_pi_k_matches_enumeration() {
        let src = SourceModel::markov(
            vec![0.2, 0.5, 0.3],
            vec![vec![0.1, 0.6, 0.3], vec![0.4, 0.4, 0.2], vec![0.25, 0.25, 0.5]],
        )
        .unwrap();
        for k in 0..=6 {
            let mut best: f64 = 0.0;
            let total = 3usize.pow(k as u32);
            for code in 0..total {
                let mut c = code;
                let w: Vec<Symbol> = (0..k)
                    .map(|_| {
                        let s = (c % 3) as Symbol;
                        c /= 3;
                        s
                    })
                    .collect();
                best = best.max(src.prefix_probability(&Prefix::new(w)).unwrap());
            }
            assert_close(src.pi_k(k), best, 1e-15);
            assert!(src.pi_k(k) <= src.max_conditional().powi(k as i32) + 1e-15);
        }
    }

    #[test]
    fn intermittent_pi_k_matches_enumeration() {
        let src = SourceModel::intermittent(2, 3.0, 0).unwrap();
        for k in 0..=12 {
            let best = (0..1usize << k)
                .map(|code| {
                    let w: Vec<Symbol> = (0..k).map(|i| ((code >> i) & 1) as Symbol).collect();
                    src.prefix_probability(&Prefix::new(w)).unwrap()
                })
                .fold(0.0, f64::max);
            assert_close(src.pi_k(k), best, 1e-15);
        }
    }

    #[test]
    fn tame_params_examples() {
        let ub = SourceModel::uniform_binary();
        let t = ub.symb_tame_params(0.1).unwrap();
        assert_eq!(t.epsilon, 0.1);
        // 1 + log2(1/x) <= c x^-0.1 on a fine logarithmic grid, and c is tight
        let mut worst: f64 = 0.0;
        for i in 0..=4000 {
            let x = 10f64.powf(-(i as f64) * 0.01);
            let ratio = (1.0 + (1.0 / x).log2()) / x.powf(-0.1);
            assert!(ratio <= t.c * (1.0 + 1e-12));
            worst = worst.max(ratio);
        }
        assert!(worst > 0.999 * t.c);

        let inter = SourceModel::intermittent(2, 5.0, 0).unwrap();
        let t = inter.symb_tame_params(0.5).unwrap();
        assert_close(t.epsilon, 0.2, 1e-15);
        assert_close(t.scale(), inter.symb_tame_params(0.1).unwrap().scale(), 1e-9);
        assert!(t.warnings.is_empty());
        let weak = SourceModel::intermittent(2, 0.8, 0)
            .unwrap()
            .symb_tame_params(0.1)
            .unwrap();
        assert!(weak.warnings.contains(&TameWarning::ExpectationMayDiverge));

        assert!(ub.symb_tame_params(1.0).is_err());
        assert!(ub.symb_tame_params(1.5).is_err());
    }

    #[test]
    fn intermittent_scale_dominates_pi() {
        let src = SourceModel::intermittent(3, 2.5, 2).unwrap();
        let MassEnvelope::Polynomial { scale, gamma } = src.envelope() else {
            panic!("intermittent source must have a polynomial envelope");
        };
        for (k, p) in src.pi_sequence(3000).iter().enumerate() {
            assert!(*p <= scale * ((k + 1) as f64).powf(-gamma) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn envelope_tails_dominate_explicit_sums() {
        let geo = MassEnvelope::Geometric { ratio: 0.7 };
        let poly = MassEnvelope::Polynomial { scale: 3.0, gamma: 4.0 };
        for env in [geo, poly] {
            for &(k, p) in &[(0usize, 1.0), (5, 0.01), (20, 1e-6)] {
                for power in [0.0, 1.0, 2.0] {
                    let explicit: f64 = (k..k + 200_000)
                        .map(|j| env.mass(k, p, j) * ((j + 1) as f64).powf(power))
                        .sum();
                    let bound = env.tail(k, p, k, power);
                    assert!(
                        bound >= explicit * (1.0 - 1e-12),
                        "{env:?} {k} {p} {power}: {bound} < {explicit}"
                    );
                    assert!(bound <= explicit * 3.0 + 1e-12, "{env:?} loose: {bound} vs {explicit}");
                }
                let explicit: f64 = (k..k + 200_000)
                    .map(|j| {
                        let m = env.mass(k, p, j);
                        if m > 1e-300 {
                            m * (p / m).ln()
                        } else {
                            0.0
                        }
                    })
                    .sum();
                assert!(
                    env.log_tail(k, p) >= explicit * (1.0 - 1e-12),
                    "{env:?} {k} {p}: {} < {explicit}",
                    env.log_tail(k, p)
                );
            }
        }
    }

    #[test]
    fn shared_depth_agrees_with_symbols() {
        let src = SourceModel::memoryless(vec![0.3, 0.7]).unwrap();
        let path = KeyPath::new(&src, 0.4567).unwrap();
        for &u in &[0.1, 0.4, 0.45, 0.4566, 0.45671, 0.9] {
            let a = src.symbols_from_seed(u, 30).unwrap();
            let b = &path.symbols()[..30];
            let lcp = a.symbols().iter().zip(b).take_while(|(x, y)| x == y).count();
            assert_eq!(path.shared_depth(u).min(30), lcp);
        }
    }
}
