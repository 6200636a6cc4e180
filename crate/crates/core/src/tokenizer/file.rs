//! Plain-text merges file: one `LEFT RIGHT` pair per line, rank = line order.
//!
//! Blank lines and lines starting with `#` are skipped. Symbols are escaped
//! with `\s` (space), `\t`, `\n`, `\r`, `\#` and `\\`. The comment line
//! `# pretokenize: whitespace` turns on whitespace pretokenization.

use std::path::Path;

use super::MergeTable;
use crate::{Error, Result};

const PRETOKENIZE_DIRECTIVE: &str = "# pretokenize: whitespace";

pub fn parse_merges(text: &str) -> Result<MergeTable> {
    let mut merges = Vec::new();
    let mut pretokenize = false;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += line.len();
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim() == PRETOKENIZE_DIRECTIVE {
            pretokenize = true;
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(' ');
        let (Some(left), Some(right), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                offset: line_offset,
                message: format!("expected `LEFT RIGHT`, got {line:?}"),
            });
        };
        let left = unescape(left).map_err(|m| Error::Parse {
            offset: line_offset,
            message: m,
        })?;
        let right = unescape(right).map_err(|m| Error::Parse {
            offset: line_offset + left.len() + 1,
            message: m,
        })?;
        merges.push((left, right));
    }
    MergeTable::new(merges, pretokenize)
}

pub fn write_merges(table: &MergeTable) -> String {
    let mut out = String::new();
    if table.pretokenizes_whitespace() {
        out.push_str(PRETOKENIZE_DIRECTIVE);
        out.push('\n');
    }
    for (left, right) in table.merges() {
        out.push_str(&escape(left));
        out.push(' ');
        out.push_str(&escape(right));
        out.push('\n');
    }
    out
}

impl MergeTable {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_merges(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, write_merges(self)).map_err(|e| Error::io(path, e))
    }
}

fn escape(sym: &str) -> String {
    let mut out = String::with_capacity(sym.len());
    for c in sym.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            ' ' => out.push_str("\\s"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '#' => out.push_str("\\#"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(sym: &str) -> std::result::Result<String, String> {
    if sym.is_empty() {
        return Err("empty symbol".into());
    }
    let mut out = String::with_capacity(sym.len());
    let mut chars = sym.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('s') => out.push(' '),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('#') => out.push('#'),
            Some(other) => return Err(format!("unknown escape \\{other}")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}
