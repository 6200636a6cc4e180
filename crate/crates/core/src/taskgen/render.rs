use super::FormatType;
use crate::{Error, Result};

const OPEN_QUOTES: [char; 3] = ['\'', '\u{2018}', '`'];
const CLOSE_QUOTES: [char; 2] = ['\'', '\u{2019}'];

/// Renders `units` in one of the four formats:
///
/// | format | `["b", "a"]` |
/// |--------|--------------|
/// | a      | `ba`         |
/// | b      | `b a`        |
/// | c      | `b, a`       |
/// | d      | `['b', 'a']` |
pub fn render<S: AsRef<str>>(units: &[S], format: FormatType) -> Result<String> {
    if units.is_empty() {
        return Err(Error::invalid("cannot render an empty unit list"));
    }
    for (idx, unit) in units.iter().enumerate() {
        let unit = unit.as_ref();
        if unit.is_empty() {
            return Err(Error::invalid(format!("unit {idx} is empty")));
        }
        if let Some(bad) = unit.chars().find(|&c| forbidden(format, c)) {
            return Err(Error::invalid(format!(
                "unit {idx} ({unit:?}) contains {bad:?}, which format ({format}) uses as a delimiter"
            )));
        }
    }

    let parts = units.iter().map(AsRef::as_ref);
    Ok(match format {
        FormatType::A => parts.collect(),
        FormatType::B => parts.collect::<Vec<_>>().join(" "),
        FormatType::C => parts.collect::<Vec<_>>().join(", "),
        FormatType::D => {
            let items: Vec<String> = parts.map(|u| format!("'{u}'")).collect();
            format!("[{}]", items.join(", "))
        }
    })
}

fn forbidden(format: FormatType, c: char) -> bool {
    match format {
        FormatType::A => false,
        FormatType::B => c.is_whitespace(),
        FormatType::C => c.is_whitespace() || c == ',',
        FormatType::D => {
            c.is_whitespace()
                || matches!(c, ',' | '[' | ']')
                || OPEN_QUOTES.contains(&c)
                || CLOSE_QUOTES.contains(&c)
        }
    }
}

/// Inverse of [`render`]. Format (a) has no delimiters and splits into
/// characters. Format (d) also accepts typographic quotes.
pub fn parse_rendered(rendered: &str, format: FormatType) -> Result<Vec<String>> {
    match format {
        FormatType::A => Ok(rendered.chars().map(String::from).collect()),
        FormatType::B => split_delimited(rendered, " "),
        FormatType::C => split_delimited(rendered, ", "),
        FormatType::D => parse_list(rendered),
    }
}

fn split_delimited(rendered: &str, delim: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for part in rendered.split(delim) {
        if part.is_empty() {
            return Err(Error::Parse {
                offset,
                message: format!("empty item (expected a unit before {delim:?})"),
            });
        }
        if let Some((i, c)) = part.char_indices().find(|(_, c)| c.is_whitespace() || *c == ',') {
            return Err(Error::Parse {
                offset: offset + i,
                message: format!("unexpected {c:?} inside an item"),
            });
        }
        out.push(part.to_owned());
        offset += part.len() + delim.len();
    }
    Ok(out)
}

fn parse_list(rendered: &str) -> Result<Vec<String>> {
    let err = |offset: usize, message: &str| Error::Parse {
        offset,
        message: message.to_owned(),
    };
    let mut chars = rendered.char_indices().peekable();
    match chars.next() {
        Some((_, '[')) => {}
        _ => return Err(err(0, "expected '['")),
    }

    let mut items = Vec::new();
    if let Some(&(_, ']')) = chars.peek() {
        chars.next();
    } else {
        loop {
            match chars.next() {
                Some((_, q)) if OPEN_QUOTES.contains(&q) => {}
                Some((i, _)) => return Err(err(i, "expected an opening quote")),
                None => return Err(err(rendered.len(), "unterminated list")),
            }
            let mut item = String::new();
            loop {
                match chars.next() {
                    Some((_, q)) if CLOSE_QUOTES.contains(&q) => break,
                    Some((_, c)) => item.push(c),
                    None => return Err(err(rendered.len(), "unterminated quoted item")),
                }
            }
            if item.is_empty() {
                return Err(err(0, "empty quoted item"));
            }
            items.push(item);
            match chars.next() {
                Some((_, ']')) => break,
                Some((i, ',')) => match chars.next() {
                    Some((_, ' ')) => {}
                    _ => return Err(err(i + 1, "expected a space after ','")),
                },
                Some((i, _)) => return Err(err(i, "expected ',' or ']'")),
                None => return Err(err(rendered.len(), "unterminated list")),
            }
        }
    }
    if let Some((i, _)) = chars.next() {
        return Err(err(i, "trailing characters after ']'"));
    }
    Ok(items)
}
