use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::state_space::ObservationSymbol;

/// One individual's record over all occasions.
///
/// `symbols` spans every occasion of the study; entries before `first` are
/// unseen. The record is conditioned on the live capture at `first`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncounterHistory {
    pub id: String,
    pub symbols: Vec<ObservationSymbol>,
    pub first: usize,
}

impl EncounterHistory {
    pub fn new(id: impl Into<String>, symbols: Vec<ObservationSymbol>, n_states: usize) -> Result<Self> {
        let id = id.into();
        let bad = |reason: String| Err(Error::validation(format!("history '{id}'"), reason));
        let Some(first) = symbols.iter().position(|s| *s != ObservationSymbol::Unseen) else {
            return bad("never captured".into());
        };
        if !symbols[first].is_live_sighting() {
            return bad("first record must be a live sighting".into());
        }
        let mut dead_at = None;
        for (t, s) in symbols.iter().enumerate() {
            if let ObservationSymbol::Seen(k) = s {
                if *k >= n_states {
                    return bad(format!("state {} exceeds K = {n_states}", k + 1));
                }
            }
            if let Some(d) = dead_at {
                if *s != ObservationSymbol::Unseen {
                    return bad(format!(
                        "occasion {} has '{}' after recovery at occasion {}",
                        t + 1,
                        s,
                        d + 1
                    ));
                }
            }
            if *s == ObservationSymbol::RecoveredDead {
                dead_at = Some(t);
            }
        }
        Ok(EncounterHistory { id, symbols, first })
    }

    pub fn n_occasions(&self) -> usize {
        self.symbols.len()
    }

    /// Symbols from first capture onwards.
    pub fn observed(&self) -> &[ObservationSymbol] {
        &self.symbols[self.first..]
    }
}

/// A set of encounter histories sharing one study design.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub histories: Vec<EncounterHistory>,
    pub n_occasions: usize,
    pub n_states: usize,
}

impl Dataset {
    pub fn new(histories: Vec<EncounterHistory>, n_occasions: usize, n_states: usize) -> Result<Self> {
        for h in &histories {
            if h.n_occasions() != n_occasions {
                return Err(Error::validation(
                    format!("history '{}'", h.id),
                    format!("{} occasions, expected {n_occasions}", h.n_occasions()),
                ));
            }
            if let Some(k) = h.symbols.iter().find_map(|s| match s {
                ObservationSymbol::Seen(k) if *k >= n_states => Some(*k),
                _ => None,
            }) {
                return Err(Error::validation(
                    format!("history '{}'", h.id),
                    format!("state {} exceeds K = {n_states}", k + 1),
                ));
            }
        }
        Ok(Dataset {
            histories,
            n_occasions,
            n_states,
        })
    }

    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }
}

/// Distinct symbol rows with multiplicities, in order of first appearance.
#[derive(Debug, Clone)]
pub struct Patterns {
    pub rows: Vec<EncounterHistory>,
    pub counts: Vec<f64>,
}

impl Patterns {
    pub fn from_dataset(data: &Dataset) -> Self {
        let mut index: HashMap<&[ObservationSymbol], usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for h in &data.histories {
            match index.get(h.symbols.as_slice()) {
                Some(&i) => counts[i] += 1.0,
                None => {
                    index.insert(h.symbols.as_slice(), rows.len());
                    rows.push(h.clone());
                    counts.push(1.0);
                }
            }
        }
        Patterns { rows, counts }
    }
}
