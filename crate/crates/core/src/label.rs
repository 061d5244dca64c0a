use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Three-way argument label, used both per token and per sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "PRO")]
    Pro,
    #[serde(rename = "CON")]
    Con,
    #[serde(rename = "NON")]
    Non,
}

pub type TokenLabel = Label;
pub type SentenceLabel = Label;

impl Label {
    pub const ALL: [Label; 3] = [Label::Pro, Label::Con, Label::Non];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Pro => "PRO",
            Label::Con => "CON",
            Label::Non => "NON",
        }
    }

    pub fn is_arg(self) -> bool {
        !matches!(self, Label::Non)
    }

    pub fn binarize(self) -> BinaryLabel {
        if self.is_arg() {
            BinaryLabel::Arg
        } else {
            BinaryLabel::NonArg
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "PRO" => Ok(Label::Pro),
            "CON" => Ok(Label::Con),
            "NON" => Ok(Label::Non),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Argumentative (`PRO` or `CON`) versus non-argumentative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryLabel {
    #[serde(rename = "ARG")]
    Arg,
    #[serde(rename = "NON_ARG")]
    NonArg,
}

impl BinaryLabel {
    pub const ALL: [BinaryLabel; 2] = [BinaryLabel::Arg, BinaryLabel::NonArg];

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::Arg => "ARG",
            BinaryLabel::NonArg => "NON_ARG",
        }
    }
}

impl FromStr for BinaryLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ARG" => Ok(BinaryLabel::Arg),
            "NON_ARG" => Ok(BinaryLabel::NonArg),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
