//! Parsing of source and cost specifications: presets on the command line,
//! or TOML files for custom sources and positional cost tables.

use std::path::Path;

use serde::Deserialize;

use crate::cost::{CostModel, PositionalTable};
use crate::error::{invalid, Error, Result};
use crate::source::{Precision, SourceModel, Symbol};

/// A source file, e.g.
///
/// ```toml
/// kind = "markov"
/// initial = [0.5, 0.5]
/// transition = [[0.9, 0.1], [0.2, 0.8]]
/// ```
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceFile {
    pub kind: String,
    pub probs: Option<Vec<f64>>,
    pub initial: Option<Vec<f64>>,
    pub transition: Option<Vec<Vec<f64>>>,
    pub r: Option<usize>,
    pub gamma: Option<f64>,
    pub sigma: Option<Symbol>,
    pub max_depth: Option<usize>,
    pub min_width: Option<f64>,
}

impl SourceFile {
    pub fn build(self) -> Result<SourceModel> {
        let missing = |field: &str| Error::InvalidSource(format!("{} source needs `{field}`", self.kind));
        let model = match self.kind.as_str() {
            "memoryless" => SourceModel::memoryless(self.probs.clone().ok_or_else(|| missing("probs"))?)?,
            "markov" => SourceModel::markov(
                self.initial.clone().ok_or_else(|| missing("initial"))?,
                self.transition.clone().ok_or_else(|| missing("transition"))?,
            )?,
            "intermittent" => SourceModel::intermittent(
                self.r.ok_or_else(|| missing("r"))?,
                self.gamma.ok_or_else(|| missing("gamma"))?,
                self.sigma.unwrap_or(0),
            )?,
            other => {
                return Err(Error::InvalidSource(format!(
                    "unknown source kind `{other}` (expected memoryless, markov or intermittent)"
                )))
            }
        };
        let mut precision = model.precision();
        if let Some(d) = self.max_depth {
            precision.max_depth = d;
        }
        if let Some(w) = self.min_width {
            precision.min_width = w;
        }
        Ok(model.with_precision(precision))
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

/// `uniform-binary`, `uniform-<r>`, `bernoulli-<p>` (also `bernoulli:<p>`,
/// where `p` is the probability of symbol 0), or a path to a source file.
pub fn parse_source(spec: &str) -> Result<SourceModel> {
    if spec == "uniform-binary" {
        return Ok(SourceModel::uniform_binary());
    }
    if let Some(rest) = spec.strip_prefix("uniform-").or_else(|| spec.strip_prefix("uniform:")) {
        let r = rest
            .parse::<usize>()
            .map_err(|_| invalid(format!("bad alphabet size in source spec `{spec}`")))?;
        return SourceModel::uniform(r);
    }
    if let Some(rest) = spec
        .strip_prefix("bernoulli-")
        .or_else(|| spec.strip_prefix("bernoulli:"))
    {
        let p = rest
            .parse::<f64>()
            .map_err(|_| invalid(format!("bad parameter in source spec `{spec}`")))?;
        return SourceModel::bernoulli(p);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(invalid(format!(
            "unknown source `{spec}`: not a preset (uniform-binary, uniform-<r>, bernoulli-<p>) or a file"
        )));
    }
    parse_source_toml(&read(path)?)
}

pub fn parse_source_toml(text: &str) -> Result<SourceModel> {
    parse_toml::<SourceFile>(text, "source file")?.build()
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    fn value(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(x) => x,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableRow {
    i: usize,
    sigma: Symbol,
    sigma_prime: Symbol,
    value: Number,
}

/// A positional cost table, e.g.
///
/// ```toml
/// tail_default = 1.0
/// [[row]]
/// i = 1
/// sigma = 0
/// sigma_prime = 1
/// value = 2.5
/// ```
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    tail_default: Number,
    #[serde(default)]
    row: Vec<TableRow>,
}

pub fn parse_table_toml(text: &str) -> Result<PositionalTable> {
    let file: TableFile = parse_toml(text, "cost table")?;
    let mut table = PositionalTable::new(file.tail_default.value())?;
    for row in file.row {
        table.set(row.i, row.sigma, row.sigma_prime, row.value.value())?;
    }
    Ok(table)
}

/// `key`, `symbol`, `pos:<i0>` or `table:<file>`.
pub fn parse_cost(spec: &str) -> Result<CostModel> {
    match spec {
        "key" => Ok(CostModel::Key),
        "symbol" => Ok(CostModel::Symbol),
        _ => {
            if let Some(i0) = spec.strip_prefix("pos:") {
                let i0 = i0
                    .parse::<usize>()
                    .map_err(|_| invalid(format!("bad position in cost spec `{spec}`")))?;
                CostModel::position_indicator(i0)
            } else if let Some(file) = spec.strip_prefix("table:") {
                Ok(CostModel::Positional(parse_table_toml(&read(Path::new(file))?)?))
            } else {
                Err(invalid(format!(
                    "unknown cost `{spec}` (expected key, symbol, pos:<i0> or table:<file>)"
                )))
            }
        }
    }
}

/// Precision override applied on top of a parsed source.
pub fn with_max_depth(source: SourceModel, max_depth: usize) -> SourceModel {
    let p = source.precision();
    source.with_precision(Precision { max_depth, ..p })
}
