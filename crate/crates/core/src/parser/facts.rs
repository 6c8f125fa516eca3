//! Ground data loaders: tab/comma separated edge lists and `pred(v1,...).` fact files.

use std::path::Path;

use thiserror::Error;

use super::{parse_program, ParseError, SourceProgram};
use crate::model::{Interpretation, Relation, Value};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}:{line}: {message}")]
    Format {
        origin: String,
        line: u64,
        message: String,
    },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeFormat {
    Tsv,
    Csv,
}

impl EdgeFormat {
    /// `.csv` files are comma separated, everything else tab separated.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => EdgeFormat::Csv,
            _ => EdgeFormat::Tsv,
        }
    }

    fn delimiter(self) -> u8 {
        match self {
            EdgeFormat::Tsv => b'\t',
            EdgeFormat::Csv => b',',
        }
    }
}

/// Parses `src dst [len]` lines into `arc/3` tuples. Two-field lines get length 1.
pub fn parse_edge_list(text: &str, format: EdgeFormat, origin: &str) -> Result<Relation, LoadError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Relation::new();
    for record in reader.records() {
        let record = record.map_err(|e| LoadError::Format {
            origin: origin.into(),
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| line_of(text, p.byte() as usize)).unwrap_or(0);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let bad = |message: String| LoadError::Format {
            origin: origin.into(),
            line,
            message,
        };
        if !(2..=3).contains(&record.len()) {
            return Err(bad(format!("expected 2 or 3 fields, found {}", record.len())));
        }
        let mut fields = Vec::with_capacity(3);
        for f in record.iter() {
            let v: i64 = f.parse().map_err(|_| bad(format!("`{f}` is not an integer")))?;
            fields.push(Value::Int(v));
        }
        if fields.len() == 2 {
            fields.push(Value::Int(1));
        }
        out.insert(fields);
    }
    Ok(out)
}

// csv positions a record at the start of any blank lines before it.
fn line_of(text: &str, byte: usize) -> u64 {
    let bytes = text.as_bytes();
    let mut at = byte.min(bytes.len());
    while at < bytes.len() && bytes[at].is_ascii_whitespace() {
        at += 1;
    }
    bytes[..at].iter().filter(|&&b| b == b'\n').count() as u64 + 1
}

pub fn load_edge_list(path: &Path, format: EdgeFormat) -> Result<Relation, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_edge_list(&text, format, &path.display().to_string())
}

/// Parses a file of ground facts. Rules are rejected.
pub fn parse_facts(source: &SourceProgram) -> Result<Interpretation, LoadError> {
    let program = parse_program(source)?;
    if let Some(rule) = program.rules.first() {
        return Err(LoadError::Format {
            origin: source.origin.clone(),
            line: 0,
            message: format!("fact files cannot contain rules (found {})", rule.id),
        });
    }
    Ok(program.facts_interpretation())
}

pub fn load_facts(path: &Path) -> Result<Interpretation, LoadError> {
    parse_facts(&SourceProgram::from_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arcs(r: &Relation) -> Vec<Vec<i64>> {
        r.iter().map(|t| t.iter().map(|v| v.as_int().unwrap()).collect()).collect()
    }

    #[test]
    fn three_field_lines() {
        let r = parse_edge_list("0\t1\t5\n1\t2\t3\n", EdgeFormat::Tsv, "t").unwrap();
        assert_eq!(arcs(&r), vec![vec![0, 1, 5], vec![1, 2, 3]]);
    }

    #[test]
    fn default_length() {
        let r = parse_edge_list("0\t1\n", EdgeFormat::Tsv, "t").unwrap();
        assert_eq!(arcs(&r), vec![vec![0, 1, 1]]);
    }

    #[test]
    fn bad_field_names_line() {
        match parse_edge_list("0\tx\t5\n", EdgeFormat::Tsv, "t") {
            Err(LoadError::Format { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected format error, got {other:?}"),
        }
        match parse_edge_list("0,1,2\n\n3,4,5,6\n", EdgeFormat::Csv, "t") {
            Err(LoadError::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn duplicates_and_comments() {
        let r = parse_edge_list("# header\n0,1,2\n0,1,2\n", EdgeFormat::Csv, "t").unwrap();
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn fact_files() {
        let i = parse_facts(&SourceProgram::inline("arc(a, b, 3).\narc(b, c, 1).\n")).unwrap();
        assert_eq!(i.len(), 2);
        assert!(parse_facts(&SourceProgram::inline("p(X) :- q(X).")).is_err());
    }
}
