use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use symselect_core::harness::write_csv;
use symselect_core::Result;

use crate::args::Format;

/// Resolved configuration, written as `# key=value` lines ahead of CSV
/// output and as a `config` object in JSON.
#[derive(Clone, Debug, Default)]
pub struct Meta(Vec<(String, String)>);

impl Meta {
    pub fn new(command: &str) -> Self {
        let mut m = Meta::default();
        m.push("command", command);
        m.push("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.0.push((key.to_string(), value.to_string()));
        self
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.0
    }

    fn as_map(&self) -> BTreeMap<&str, &str> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
    }
}

pub fn open(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

#[derive(Serialize)]
struct Rows<'a, T: Serialize> {
    rows: &'a [T],
    config: BTreeMap<&'a str, &'a str>,
}

#[derive(Serialize)]
struct Object<'a, T: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    config: BTreeMap<&'a str, &'a str>,
}

fn json_line<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut w, value).map_err(io::Error::from)?;
    writeln!(w)?;
    Ok(w.flush()?)
}

/// A table: CSV rows, or `{"rows": [...], "config": {...}}`.
pub fn table<T: Serialize>(out: Option<&Path>, format: Format, meta: &Meta, rows: &[T]) -> Result<()> {
    let w = open(out)?;
    match format {
        Format::Csv => write_csv(w, meta.pairs(), rows),
        Format::Json => json_line(
            w,
            &Rows {
                rows,
                config: meta.as_map(),
            },
        ),
    }
}

/// A single record: one CSV row, or the record's fields plus `config`.
pub fn record<T: Serialize>(out: Option<&Path>, format: Format, meta: &Meta, body: &T) -> Result<()> {
    match format {
        Format::Csv => table(out, format, meta, std::slice::from_ref(body)),
        Format::Json => json_line(
            open(out)?,
            &Object {
                body,
                config: meta.as_map(),
            },
        ),
    }
}
