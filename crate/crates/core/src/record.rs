//! Labeled sentence pairs, the unit of ingestion and shuffling.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Split {
    #[default]
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidConfig {
                key: "split",
                reason: alloc::format!("unknown split {s:?}"),
            }),
        }
    }
}

/// Which side of a pair drives grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PairElement {
    #[default]
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PairRecord {
    pub id: String,
    pub text_q: String,
    pub text_a: String,
    /// Target similarity in `[0, 1]`.
    pub label: f64,
    #[cfg_attr(
        feature = "serde",
        serde(default, skip_serializing_if = "Option::is_none")
    )]
    pub group: Option<String>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub split: Split,
}

impl PairRecord {
    pub fn new(
        id: impl Into<String>,
        text_q: impl Into<String>,
        text_a: impl Into<String>,
        label: f64,
    ) -> Self {
        Self {
            id: id.into(),
            text_q: text_q.into(),
            text_a: text_a.into(),
            label,
            group: None,
            split: Split::Train,
        }
    }

    pub fn text(&self, element: PairElement) -> &str {
        match element {
            PairElement::First => &self.text_q,
            PairElement::Second => &self.text_a,
        }
    }
}
