//! Plain-text encounter-history files.
//!
//! One individual per line: an optional `id:` token, then one token per
//! occasion from `0`, `1..K`, `u` (seen, state unknown) and `D` (recovered
//! dead). Blank lines and lines starting with `#` are skipped.

use crate::error::{Error, Result};
use crate::likelihood::{Dataset, EncounterHistory};
use crate::state_space::ObservationSymbol;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParseOptions {
    /// Number of states; inferred from the largest label when absent.
    pub n_states: Option<usize>,
    /// Required number of occasions; taken from the first record when absent.
    pub n_occasions: Option<usize>,
    /// Extra token accepted for an unknown-state sighting, e.g. `-1`.
    pub unknown_alias: Option<String>,
}

impl ParseOptions {
    pub fn with_states(n_states: usize) -> Self {
        ParseOptions {
            n_states: Some(n_states),
            ..Default::default()
        }
    }
}

/// Reads one history token.
pub fn parse_token(tok: &str, opts: &ParseOptions) -> std::result::Result<ObservationSymbol, String> {
    match tok {
        "0" => Ok(ObservationSymbol::Unseen),
        "u" | "U" => Ok(ObservationSymbol::SeenUnknown),
        "D" | "d" => Ok(ObservationSymbol::RecoveredDead),
        _ if opts.unknown_alias.as_deref() == Some(tok) => Ok(ObservationSymbol::SeenUnknown),
        _ => match tok.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(ObservationSymbol::Seen(k - 1)),
            _ => Err(format!("unrecognised token '{tok}'")),
        },
    }
}

/// Parses history text into a validated dataset.
pub fn parse_histories_str(text: &str, opts: &ParseOptions) -> Result<Dataset> {
    let mut rows: Vec<(usize, String, Vec<ObservationSymbol>)> = Vec::new();
    let mut width = opts.n_occasions;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let mut tokens = body.split_whitespace().peekable();
        let mut id = None;
        if let Some(first) = tokens.peek() {
            if let Some(stripped) = first.strip_suffix(':') {
                if stripped.is_empty() {
                    return Err(Error::Parse {
                        line,
                        reason: "empty id".into(),
                    });
                }
                id = Some(stripped.to_string());
                tokens.next();
            }
        }
        let symbols = tokens
            .map(|t| parse_token(t, opts))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|reason| Error::Parse { line, reason })?;
        if symbols.is_empty() {
            return Err(Error::Parse {
                line,
                reason: "no observations".into(),
            });
        }
        match width {
            Some(w) if w != symbols.len() => {
                return Err(Error::Parse {
                    line,
                    reason: format!("{} occasions, expected {w}", symbols.len()),
                })
            }
            None => width = Some(symbols.len()),
            _ => {}
        }
        let id = id.unwrap_or_else(|| format!("L{line}"));
        rows.push((line, id, symbols));
    }
    let Some(n_occasions) = width else {
        return Err(Error::Parse {
            line: 0,
            reason: "no histories".into(),
        });
    };
    let inferred = rows
        .iter()
        .flat_map(|(_, _, s)| s.iter())
        .filter_map(|s| match s {
            ObservationSymbol::Seen(k) => Some(k + 1),
            _ => None,
        })
        .max()
        .unwrap_or(1);
    let n_states = opts.n_states.unwrap_or(inferred);
    let mut seen_ids = std::collections::HashSet::new();
    let histories = rows
        .into_iter()
        .map(|(line, id, symbols)| {
            if !seen_ids.insert(id.clone()) {
                return Err(Error::Parse {
                    line,
                    reason: format!("duplicate id '{id}'"),
                });
            }
            EncounterHistory::new(id, symbols, n_states).map_err(|e| Error::Parse {
                line,
                reason: match e {
                    Error::Validation { reason, .. } => reason,
                    other => other.to_string(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(histories, n_occasions, n_states)
}

pub fn parse_histories(path: &std::path::Path, opts: &ParseOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_histories_str(&text, opts)
}

/// Writes one line per history, `id: tokens`.
pub fn write_histories(data: &Dataset) -> String {
    let mut out = String::new();
    for h in &data.histories {
        if !h.id.is_empty() {
            out.push_str(&h.id);
            out.push_str(": ");
        }
        let tokens: Vec<String> = h.symbols.iter().map(|s| s.token()).collect();
        out.push_str(&tokens.join(" "));
        out.push('\n');
    }
    out
}
