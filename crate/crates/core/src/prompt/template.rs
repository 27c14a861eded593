//! Minimal text-template engine.
//!
//! `{name}` substitutes a text slot anywhere in a line. A line consisting of
//! exactly `[name]` expands to one line (or block) per list element; an empty
//! list removes the line, coalescing the blank lines around it so blocks stay
//! separated by a single blank line.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Clone)]
pub enum Slot {
    Text(String),
    List(Vec<String>),
}

impl Slot {
    pub fn text(s: impl Into<String>) -> Self {
        Slot::Text(s.into())
    }

    pub fn list(items: Vec<String>) -> Self {
        Slot::List(items)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("unknown template slot {{{0}}}")]
    UnknownText(String),
    #[error("unknown template list [{0}]")]
    UnknownList(String),
    #[error("slot {0:?} used with the wrong kind")]
    WrongKind(String),
}

fn substitute(line: &str, slots: &HashMap<&str, Slot>) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(line.len());
    let mut rest = line;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else {
            out.push('{');
            rest = after;
            continue;
        };
        let name = &after[..close];
        match slots.get(name) {
            Some(Slot::Text(value)) => out.push_str(value),
            Some(Slot::List(_)) => return Err(TemplateError::WrongKind(name.to_string())),
            None => return Err(TemplateError::UnknownText(name.to_string())),
        }
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Render a template against the given slots.
pub fn render(template: &str, slots: &HashMap<&str, Slot>) -> Result<String, TemplateError> {
    let lines: Vec<&str> = template.lines().collect();
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let trimmed = line.trim_end();
        if trimmed.starts_with('[') && trimmed.ends_with(']') && trimmed.len() > 2 {
            let name = &trimmed[1..trimmed.len() - 1];
            match slots.get(name) {
                Some(Slot::List(items)) => {
                    if items.is_empty() {
                        // Drop the line; avoid leaving two adjacent blank
                        // lines (start-of-output counts as blank).
                        let prev_blank = out.last().map_or(true, |l| l.is_empty());
                        let next_blank = lines.get(i + 1).is_some_and(|l| l.trim().is_empty());
                        if prev_blank && next_blank {
                            i += 1;
                        }
                    } else {
                        out.extend(items.iter().cloned());
                    }
                }
                Some(Slot::Text(_)) => return Err(TemplateError::WrongKind(name.to_string())),
                None => return Err(TemplateError::UnknownList(name.to_string())),
            }
        } else {
            out.push(substitute(line, slots)?);
        }
        i += 1;
    }
    Ok(out.join("\n"))
}
