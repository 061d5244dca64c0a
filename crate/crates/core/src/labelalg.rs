//! Label transformations between token, sentence and binary granularity.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{segmentize, LabeledSentence};
use crate::error::{Error, Result};
use crate::label::{BinaryLabel, Label};

/// Seed for every stochastic step; tie-breaks are keyed by (seed, sentence id).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Stateless coin flip for `key`: the same (seed, key) always gives the same side.
    pub fn tie_break(self, key: &str) -> Label {
        let mut hasher = Sha256::new();
        hasher.update(self.0.to_le_bytes());
        hasher.update(key.as_bytes());
        let digest = hasher.finalize();
        if digest[0] & 1 == 0 {
            Label::Pro
        } else {
            Label::Con
        }
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

/// Sentence label from token labels: `NON` if no argumentative token, the
/// majority of `PRO`/`CON` by token count otherwise, seeded coin flip on a tie.
pub fn derive_sentence_label(labels: &[Label], seed: Seed, key: &str) -> Result<Label> {
    if labels.is_empty() {
        return Err(Error::Empty("token label sequence"));
    }
    let (mut pro, mut con) = (0usize, 0usize);
    for l in labels {
        match l {
            Label::Pro => pro += 1,
            Label::Con => con += 1,
            Label::Non => {}
        }
    }
    Ok(match pro.cmp(&con) {
        std::cmp::Ordering::Greater => Label::Pro,
        std::cmp::Ordering::Less => Label::Con,
        std::cmp::Ordering::Equal if pro == 0 => Label::Non,
        std::cmp::Ordering::Equal => seed.tie_break(key),
    })
}

/// Binary sentence label from token labels; needs no tie-break.
pub fn derive_binary_label(labels: &[Label]) -> Result<BinaryLabel> {
    if labels.is_empty() {
        return Err(Error::Empty("token label sequence"));
    }
    Ok(if labels.iter().any(|l| l.is_arg()) {
        BinaryLabel::Arg
    } else {
        BinaryLabel::NonArg
    })
}

pub fn binarize(label: Label) -> BinaryLabel {
    label.binarize()
}

/// `n` copies of a sentence label, one per token.
pub fn broadcast_sentence_label(label: Label, n: usize) -> Result<Vec<Label>> {
    if n == 0 {
        return Err(Error::Empty("broadcast to zero tokens"));
    }
    Ok(vec![label; n])
}

/// Whether punctuation-only `NON` segments count when looking for a non-ARG segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PunctMode {
    #[default]
    Ignore,
    Include,
}

/// Sentence has at least one ARG segment and one non-ARG segment.
pub fn is_mixed_segment(sentence: &LabeledSentence, punct: PunctMode) -> bool {
    let mut arg = false;
    let mut non = false;
    for seg in segmentize(sentence) {
        if seg.label.is_arg() {
            arg = true;
        } else if punct == PunctMode::Include || !seg.is_punct_only {
            non = true;
        }
    }
    arg && non
}
