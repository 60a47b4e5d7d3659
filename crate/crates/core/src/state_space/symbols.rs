use std::fmt;

/// What was recorded for one individual at one occasion.
///
/// State indices are zero-based in code; the file format and reports use
/// one-based labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObservationSymbol {
    Unseen,
    Seen(usize),
    SeenUnknown,
    RecoveredDead,
}

impl ObservationSymbol {
    pub fn is_live_sighting(self) -> bool {
        matches!(self, ObservationSymbol::Seen(_) | ObservationSymbol::SeenUnknown)
    }

    /// Can an individual in live state `k` produce this symbol?
    pub fn admits_live(self, k: usize) -> bool {
        match self {
            ObservationSymbol::Unseen | ObservationSymbol::SeenUnknown => true,
            ObservationSymbol::Seen(j) => j == k,
            ObservationSymbol::RecoveredDead => false,
        }
    }

    /// Can an individual that dies during the preceding interval produce
    /// this symbol?
    pub fn admits_death(self) -> bool {
        matches!(self, ObservationSymbol::Unseen | ObservationSymbol::RecoveredDead)
    }

    /// File token: `0`, `1..K`, `u` or `D`.
    pub fn token(self) -> String {
        match self {
            ObservationSymbol::Unseen => "0".into(),
            ObservationSymbol::Seen(k) => (k + 1).to_string(),
            ObservationSymbol::SeenUnknown => "u".into(),
            ObservationSymbol::RecoveredDead => "D".into(),
        }
    }
}

impl fmt::Display for ObservationSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token())
    }
}

/// The true state of an individual at an occasion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrueState {
    Alive(usize),
    /// Died during the interval ending at this occasion.
    RecentlyDead,
    LongDead,
}

impl TrueState {
    pub fn is_alive(self) -> bool {
        matches!(self, TrueState::Alive(_))
    }

    /// One-based index in `1..=K+2`.
    pub fn index(self, n_states: usize) -> usize {
        match self {
            TrueState::Alive(k) => k + 1,
            TrueState::RecentlyDead => n_states + 1,
            TrueState::LongDead => n_states + 2,
        }
    }
}
