//! Plain-text DDI triples: `<id_a>\t<id_b>\t<event>` per line.
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{DdiRecord, DdiSet};
use crate::error::{Error, Result};
use crate::featurize::DrugTable;

pub fn parse_ddi_triples(path: &Path, text: &str, drugs: &DrugTable) -> Result<DdiSet> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(
                lineno,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let lookup = |id: &str| {
            drugs
                .index_of(id)
                .map_err(|_| err(lineno, format!("unknown drug `{id}`")))
        };
        let a = lookup(fields[0])?;
        let b = lookup(fields[1])?;
        let event: usize = fields[2]
            .parse()
            .map_err(|_| err(lineno, format!("bad event type `{}`", fields[2])))?;
        if a == b {
            return Err(err(lineno, "drug paired with itself".into()));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(err(lineno, "duplicate drug pair".into()));
        }
        records.push(DdiRecord { a, b, event });
    }
    DdiSet::new(records, drugs.len())
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

pub fn read_ddi_triples(path: &Path, drugs: &DrugTable) -> Result<DdiSet> {
    let text = std::fs::read_to_string(path)?;
    parse_ddi_triples(path, &text, drugs)
}

pub fn format_ddi_triples(records: &[DdiRecord], drugs: &DrugTable) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            drugs.drug(r.a).id,
            drugs.drug(r.b).id,
            r.event
        );
    }
    out
}

pub fn write_ddi_triples(path: &Path, records: &[DdiRecord], drugs: &DrugTable) -> Result<()> {
    std::fs::write(path, format_ddi_triples(records, drugs))?;
    Ok(())
}
