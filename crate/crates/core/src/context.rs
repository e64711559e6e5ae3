//! Per-run comparison state: pivot paths and memoized deep-symbol streams.
//!
//! Interval refinement stops at the source's precision cap. When two keys
//! still agree there, their words are continued with symbols drawn from the
//! source's conditional law, one memoized stream per key. Such comparisons
//! are counted in [`RunFlags`].

use std::collections::HashMap;

use rand::Rng;
use serde::Serialize;

use crate::cost::CostModel;
use crate::error::{Error, Result};
use crate::rng::{lane, open01, StreamLabel, StreamRng};
use crate::source::{KeyPath, SourceModel, State, Symbol};

/// Longest continuation drawn past the precision cap before giving up.
pub const EXTENSION_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RunFlags {
    /// Comparisons resolved with symbols drawn past the precision cap.
    pub extended_comparisons: u64,
}

impl RunFlags {
    pub fn any(&self) -> bool {
        self.extended_comparisons > 0
    }

    pub fn merge(&mut self, other: RunFlags) {
        self.extended_comparisons += other.extended_comparisons;
    }
}

struct Extension {
    symbols: Vec<Symbol>,
    state: State,
    rng: StreamRng,
}

pub struct RunContext<'a> {
    source: &'a SourceModel,
    cost: &'a CostModel,
    label: StreamLabel,
    extensions: HashMap<usize, Extension>,
    flags: RunFlags,
}

impl<'a> RunContext<'a> {
    pub fn new(source: &'a SourceModel, cost: &'a CostModel, label: StreamLabel) -> Self {
        RunContext {
            source,
            cost,
            label,
            extensions: HashMap::new(),
            flags: RunFlags::default(),
        }
    }

    pub fn flags(&self) -> RunFlags {
        self.flags
    }

    /// The refinement path of a pivot, only as deep as the cost needs.
    pub fn pivot_path(&self, seed: f64) -> Result<KeyPath> {
        let cap = self.source.precision().max_depth;
        let depth = self.cost.depth_needed().map_or(cap, |d| d.min(cap));
        KeyPath::with_depth(self.source, seed, depth)
    }

    /// `beta` between the pivot (key index `pivot_key`, path `pivot`) and
    /// key `key` with seed `u`.
    pub fn compare(&mut self, pivot_key: usize, pivot: &KeyPath, key: usize, u: f64) -> Result<f64> {
        if u == pivot.seed() {
            return Err(Error::IdenticalSeeds(u));
        }
        let needed = self.cost.depth_needed();
        let k = pivot.shared_depth(u);
        let symbols = pivot.symbols();
        if k < pivot.depth() {
            let a = symbols[k];
            let b = self.source.locate(&pivot.nodes()[k], u);
            return Ok(self.cost.comparison_cost(&symbols[..k], a, b));
        }
        if let Some(d) = needed {
            if k >= d {
                let s = symbols.get(d).copied().unwrap_or(0);
                return Ok(self.cost.comparison_cost(&symbols[..d], s, s));
            }
        }
        self.compare_extended(pivot_key, pivot, key)
    }

    fn compare_extended(&mut self, pivot_key: usize, pivot: &KeyPath, key: usize) -> Result<f64> {
        self.flags.extended_comparisons += 1;
        let start = pivot.deepest().state;
        let needed = self.cost.depth_needed();
        let mut common: Vec<Symbol> = pivot.symbols().to_vec();
        for j in 0..EXTENSION_CAP {
            if needed.is_some_and(|d| common.len() >= d) {
                let s = *common.last().unwrap_or(&0);
                return Ok(self.cost.comparison_cost(&common, s, s));
            }
            let a = self.extension_symbol(pivot_key, start, j);
            let b = self.extension_symbol(key, start, j);
            if a != b {
                return Ok(self.cost.comparison_cost(&common, a, b));
            }
            common.push(a);
        }
        Err(Error::DepthCap(pivot.depth() + EXTENSION_CAP))
    }

    /// Symbol `j` past the cap for `key`, whose capped prefix ends in `start`.
    fn extension_symbol(&mut self, key: usize, start: State, j: usize) -> Symbol {
        let source = self.source;
        let label = self.label;
        let ext = self.extensions.entry(key).or_insert_with(|| Extension {
            symbols: Vec::new(),
            state: start,
            rng: label.rng(lane::KEY_EXTENSION + key as u64),
        });
        while ext.symbols.len() <= j {
            let x: f64 = open01(&mut ext.rng);
            let r = source.size();
            let mut s = r - 1;
            for c in 1..r {
                if x <= source.cumulative(ext.state, c) {
                    s = c - 1;
                    break;
                }
            }
            let s = s as Symbol;
            ext.symbols.push(s);
            ext.state = source.next_state(ext.state, s);
        }
        ext.symbols[j]
    }
}

/// Uniform draw of an index in `0..len`.
pub(crate) fn uniform_index<R: Rng + ?Sized>(rng: &mut R, len: usize) -> usize {
    rng.gen_range(0..len)
}
