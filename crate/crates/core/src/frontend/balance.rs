use std::collections::BTreeMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::seed::stage_rng;

use super::{FrontendError, LabeledSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRole {
    Train,
    Test,
}

impl SplitRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Test => "test",
        }
    }
}

/// One-vs-rest split. `positives` and `negatives` index into the sample
/// slice passed to [`balance_dataset`], in ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalancedSplit {
    pub keyword: u32,
    pub role: SplitRole,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

impl BalancedSplit {
    /// All member indices with binary labels, positives first.
    pub fn labeled(&self) -> Vec<(usize, bool)> {
        self.positives
            .iter()
            .map(|&i| (i, true))
            .chain(self.negatives.iter().map(|&i| (i, false)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `round(n / d)` with halves rounded up.
pub fn round_half_up_div(n: usize, d: usize) -> usize {
    (2 * n + d) / (2 * d)
}

/// Keeps every keyword sample and `round_half_up(count / n_nonkeyword_classes)`
/// samples of each other class, drawn without replacement.
pub fn balance_dataset(
    samples: &[LabeledSample],
    keyword: u32,
    n_nonkeyword_classes: usize,
    seed: u64,
    role: SplitRole,
) -> Result<BalancedSplit, FrontendError> {
    let labels: Vec<u32> = samples.iter().map(|s| s.label).collect();
    balance_labels(&labels, keyword, n_nonkeyword_classes, seed, role)
}

/// [`balance_dataset`] on bare labels; indices refer to `labels`.
pub fn balance_labels(
    labels: &[u32],
    keyword: u32,
    n_nonkeyword_classes: usize,
    seed: u64,
    role: SplitRole,
) -> Result<BalancedSplit, FrontendError> {
    let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == keyword).collect();
    if positives.is_empty() {
        return Err(FrontendError::KeywordAbsent(keyword));
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate().filter(|(_, &l)| l != keyword) {
        by_class.entry(label).or_default().push(i);
    }
    let divisor = n_nonkeyword_classes.max(1);
    let mut negatives = Vec::new();
    for (label, members) in &by_class {
        let keep = round_half_up_div(members.len(), divisor).min(members.len());
        let stream = ((keyword as u64) << 32) | *label as u64;
        let mut rng = stage_rng(seed, "balance", stream);
        let mut picked: Vec<usize> = sample(&mut rng, members.len(), keep)
            .into_iter()
            .map(|k| members[k])
            .collect();
        picked.sort_unstable();
        negatives.extend(picked);
    }
    negatives.sort_unstable();
    Ok(BalancedSplit {
        keyword,
        role,
        positives,
        negatives,
    })
}
