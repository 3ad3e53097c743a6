//! Plain-text drug table.
//!
//! ```text
//! #hmgrl-drugs v1 targets=T enzymes=E substructures=S
//! <id>\t<smiles>\t<target idx,...>\t<enzyme idx,...>\t<substructure idx,...>
//! ```
//!
//! Index lists are comma separated and may be empty. Blank lines and lines
//! starting with `#` after the header are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{DescriptorSizes, Drug, DrugTable};
use crate::error::{Error, Result};

pub const DRUG_TABLE_HEADER: &str = "#hmgrl-drugs v1";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_header(path: &Path, line: &str) -> Result<DescriptorSizes> {
    let rest = line.strip_prefix(DRUG_TABLE_HEADER).ok_or_else(|| {
        parse_err(
            path,
            1,
            format!("expected header `{DRUG_TABLE_HEADER} ...`"),
        )
    })?;
    let (mut t, mut e, mut s) = (None, None, None);
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| parse_err(path, 1, format!("malformed header field `{field}`")))?;
        let value: usize = value
            .parse()
            .map_err(|_| parse_err(path, 1, format!("non-integer size in `{field}`")))?;
        let slot = match key {
            "targets" => &mut t,
            "enzymes" => &mut e,
            "substructures" => &mut s,
            _ => return Err(parse_err(path, 1, format!("unknown header key `{key}`"))),
        };
        *slot = Some(value);
    }
    match (t, e, s) {
        (Some(targets), Some(enzymes), Some(substructures)) => Ok(DescriptorSizes {
            targets,
            enzymes,
            substructures,
        }),
        _ => Err(parse_err(
            path,
            1,
            "header must give targets, enzymes and substructures",
        )),
    }
}

fn parse_indices(path: &Path, line: usize, field: &str, bound: usize) -> Result<Vec<usize>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|tok| {
            let i: usize = tok
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad descriptor index `{tok}`")))?;
            if i >= bound {
                return Err(parse_err(
                    path,
                    line,
                    format!("descriptor index {i} >= {bound}"),
                ));
            }
            Ok(i)
        })
        .collect()
}

/// Parses the table from text; `path` is used for error locations only.
pub fn parse_drug_table(path: &Path, text: &str) -> Result<DrugTable> {
    let mut lines = text.lines().enumerate();
    let sizes = match lines.next() {
        Some((_, h)) => parse_header(path, h.trim_end())?,
        None => return Err(parse_err(path, 1, "empty drug table")),
    };
    let mut drugs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, raw) in lines {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(parse_err(path, lineno, "empty drug id"));
        }
        if !seen.insert(id.to_string()) {
            return Err(parse_err(path, lineno, format!("duplicate drug id `{id}`")));
        }
        drugs.push(Drug {
            id: id.to_string(),
            smiles: fields[1].trim().to_string(),
            targets: parse_indices(path, lineno, fields[2], sizes.targets)?,
            enzymes: parse_indices(path, lineno, fields[3], sizes.enzymes)?,
            substructures: parse_indices(path, lineno, fields[4], sizes.substructures)?,
        });
    }
    DrugTable::new(sizes, drugs)
}

pub fn read_drug_table(path: &Path) -> Result<DrugTable> {
    let text = std::fs::read_to_string(path)?;
    parse_drug_table(path, &text)
}

/// Canonical form: drugs in table order, indices sorted ascending.
pub fn format_drug_table(table: &DrugTable) -> String {
    let s = table.sizes();
    let mut out = format!(
        "{DRUG_TABLE_HEADER} targets={} enzymes={} substructures={}\n",
        s.targets, s.enzymes, s.substructures
    );
    let join = |v: &[usize]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    for d in table.drugs() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            d.id,
            d.smiles,
            join(&d.targets),
            join(&d.enzymes),
            join(&d.substructures)
        );
    }
    out
}

pub fn write_drug_table(path: &Path, table: &DrugTable) -> Result<()> {
    std::fs::write(path, format_drug_table(table))?;
    Ok(())
}
