//! Relation classes and probability vectors over them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Number of output classes: the five evaluated CPR groups plus `false`.
pub const NUM_CLASSES: usize = 6;

/// Sentence-level relation label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Cpr3,
    Cpr4,
    Cpr5,
    Cpr6,
    Cpr9,
    False,
}

impl Label {
    pub const ALL: [Label; NUM_CLASSES] = [
        Label::Cpr3,
        Label::Cpr4,
        Label::Cpr5,
        Label::Cpr6,
        Label::Cpr9,
        Label::False,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Cpr3 => "CPR:3",
            Label::Cpr4 => "CPR:4",
            Label::Cpr5 => "CPR:5",
            Label::Cpr6 => "CPR:6",
            Label::Cpr9 => "CPR:9",
            Label::False => "false",
        }
    }

    pub fn is_relation(self) -> bool {
        self != Label::False
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown label {:?}", self.0)
    }
}

impl std::error::Error for UnknownLabel {}

impl FromStr for Label {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let normalized: String = s
            .trim()
            .chars()
            .filter(|c| *c != ':' && *c != '_' && *c != '-')
            .collect::<String>()
            .to_ascii_uppercase();
        match normalized.as_str() {
            "CPR3" => Ok(Label::Cpr3),
            "CPR4" => Ok(Label::Cpr4),
            "CPR5" => Ok(Label::Cpr5),
            "CPR6" => Ok(Label::Cpr6),
            "CPR9" => Ok(Label::Cpr9),
            "FALSE" => Ok(Label::False),
            _ => Err(UnknownLabel(s.to_string())),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A probability distribution over the [`NUM_CLASSES`] classes.
///
/// Entries are non-negative and sum to one; one-hot labels are the special
/// case produced by [`SoftLabel::one_hot`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SoftLabel(pub [f64; NUM_CLASSES]);

impl SoftLabel {
    pub fn one_hot(label: Label) -> Self {
        let mut probs = [0.0; NUM_CLASSES];
        probs[label.index()] = 1.0;
        SoftLabel(probs)
    }

    pub fn uniform() -> Self {
        SoftLabel([1.0 / NUM_CLASSES as f64; NUM_CLASSES])
    }

    pub fn probs(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }

    /// Checks non-negativity and unit mass within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.0.iter().all(|p| p.is_finite() && *p >= 0.0) && (self.sum() - 1.0).abs() <= tol
    }
}

impl From<Label> for SoftLabel {
    fn from(label: Label) -> Self {
        SoftLabel::one_hot(label)
    }
}
