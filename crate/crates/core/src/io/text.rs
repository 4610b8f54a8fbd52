//! Comma-separated embedding files.
//!
//! ```text
//! id,v0,v1,v2
//! img_001.jpg,0.12,-0.5,0.33
//! img_002.jpg,0.7,0.01,-0.2
//! ```
//!
//! UTF-8, LF line endings, no quoting. Ids may not contain commas or line
//! breaks. Blank lines are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ConceptSet, Embedding, Role};

fn parse_error(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Reads the text format from `reader`. `path` is only used in errors.
pub fn read_concept_text<R: BufRead>(
    reader: R,
    path: &Path,
    name: &str,
    role: Role,
) -> Result<ConceptSet> {
    let mut lines = reader.lines().enumerate();
    let dimension = loop {
        let Some((idx, line)) = lines.next() else {
            return Err(parse_error(path, 1, 1, "missing header"));
        };
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        break parse_header(line, path, idx + 1)?;
    };

    let mut members = Vec::new();
    let mut row = 0;
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        row += 1;
        let line_no = idx + 1;
        let mut fields = line.split(',');
        let id = fields.next().unwrap_or_default();
        if id.is_empty() {
            return Err(parse_error(path, line_no, 1, "empty id"));
        }
        let raw: Vec<&str> = fields.collect();
        if raw.len() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: raw.len(),
                id: Some(id.to_owned()),
                row: Some(row),
            });
        }
        let mut vector = Vec::with_capacity(dimension);
        for (i, token) in raw.iter().enumerate() {
            let column = i + 2;
            let value: f64 = token.trim().parse().map_err(|_| {
                parse_error(path, line_no, column, format!("invalid number `{token}`"))
            })?;
            if !value.is_finite() {
                return Err(parse_error(
                    path,
                    line_no,
                    column,
                    format!("non-finite value `{token}`"),
                ));
            }
            vector.push(value);
        }
        members.push(Embedding::new(id, vector)?);
    }
    ConceptSet::new(name, role, members)
}

fn parse_header(line: &str, path: &Path, line_no: usize) -> Result<usize> {
    let mut fields = line.split(',');
    if fields.next() != Some("id") {
        return Err(parse_error(path, line_no, 1, "header must start with `id`"));
    }
    let mut dimension = 0;
    for (i, field) in fields.enumerate() {
        if field != format!("v{i}") {
            return Err(parse_error(
                path,
                line_no,
                i + 2,
                format!("expected header column `v{i}`, found `{field}`"),
            ));
        }
        dimension += 1;
    }
    if dimension == 0 {
        return Err(parse_error(
            path,
            line_no,
            2,
            "header declares no vector columns",
        ));
    }
    Ok(dimension)
}

pub fn load_concept_text(
    path: &Path,
    name: &str,
    role: Role,
    normalize: bool,
) -> Result<ConceptSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let set = read_concept_text(BufReader::new(file), path, name, role)?;
    if normalize {
        set.normalized()
    } else {
        Ok(set)
    }
}

/// Writes values with the shortest decimal that parses back to the same
/// `f64`.
pub fn write_concept_text<W: Write>(set: &ConceptSet, mut out: W) -> std::io::Result<()> {
    write!(out, "id")?;
    for i in 0..set.dimension() {
        write!(out, ",v{i}")?;
    }
    writeln!(out)?;
    for m in set.members() {
        if m.id().contains([',', '\n', '\r']) {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("id `{}` cannot be written to the text format", m.id()),
            ));
        }
        write!(out, "{}", m.id())?;
        for v in m.vector() {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn save_concept_text(set: &ConceptSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_concept_text(set, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}
