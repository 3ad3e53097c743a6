use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphcore::{DdiRecord, DdiSet};

const STREAM_SPLIT: u64 = 7;

/// Evaluation scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Task {
    /// Folds over the interactions themselves.
    KnownDrugs = 1,
    /// Test interactions pair one held-out drug with a training drug.
    OneNewDrug = 2,
    /// Test interactions pair two held-out drugs.
    TwoNewDrugs = 3,
}

impl TryFrom<u8> for Task {
    type Error = Error;

    fn try_from(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Task::KnownDrugs),
            2 => Ok(Task::OneNewDrug),
            3 => Ok(Task::TwoNewDrugs),
            _ => Err(Error::Param(format!("task must be 1, 2 or 3, got {id}"))),
        }
    }
}

impl From<Task> for u8 {
    fn from(t: Task) -> u8 {
        t as u8
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<DdiRecord>,
    pub test: Vec<DdiRecord>,
    /// Held-out drugs, sorted; empty for interaction-level folds.
    pub new_drugs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub task: Task,
    pub seed: u64,
    pub folds: Vec<Fold>,
    pub warnings: Vec<String>,
}

/// Boundaries of `n` items cut into `folds` contiguous chunks whose sizes
/// differ by at most one.
fn chunk_bounds(n: usize, folds: usize) -> Vec<(usize, usize)> {
    (0..folds)
        .map(|i| (i * n / folds, (i + 1) * n / folds))
        .collect()
}

/// Deterministic cross-validation folds for `task`. Drug-level tasks
/// partition the drugs with the same shuffle for tasks 2 and 3, so their
/// training sets coincide fold by fold.
pub fn make_splits(
    ddis: &DdiSet,
    num_drugs: usize,
    task: Task,
    folds: usize,
    seed: u64,
) -> Result<SplitPlan> {
    if folds < 2 {
        return Err(Error::Param(format!("need at least 2 folds, got {folds}")));
    }
    let records = ddis.records();
    if let Some(r) = records
        .iter()
        .find(|r| r.a >= num_drugs || r.b >= num_drugs)
    {
        return Err(Error::Validation(format!(
            "pair ({}, {}) out of range for {num_drugs} drugs",
            r.a, r.b
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SPLIT);
    let mut out = Vec::with_capacity(folds);
    match task {
        Task::KnownDrugs => {
            if records.len() < folds {
                return Err(Error::Param(format!(
                    "{} interactions cannot fill {folds} folds",
                    records.len()
                )));
            }
            let mut order: Vec<usize> = (0..records.len()).collect();
            order.shuffle(&mut rng);
            for (index, (lo, hi)) in chunk_bounds(order.len(), folds).into_iter().enumerate() {
                let mut in_test = vec![false; records.len()];
                for &i in &order[lo..hi] {
                    in_test[i] = true;
                }
                let (test, train) = split_by(records, |i, _| in_test[i]);
                out.push(Fold {
                    index,
                    train,
                    test,
                    new_drugs: Vec::new(),
                });
            }
        }
        Task::OneNewDrug | Task::TwoNewDrugs => {
            if num_drugs < folds {
                return Err(Error::Param(format!(
                    "{num_drugs} drugs cannot fill {folds} folds"
                )));
            }
            let mut drugs: Vec<usize> = (0..num_drugs).collect();
            drugs.shuffle(&mut rng);
            let wanted_new = if task == Task::OneNewDrug { 1 } else { 2 };
            for (index, (lo, hi)) in chunk_bounds(num_drugs, folds).into_iter().enumerate() {
                let new: HashSet<usize> = drugs[lo..hi].iter().copied().collect();
                let count =
                    |r: &DdiRecord| new.contains(&r.a) as usize + new.contains(&r.b) as usize;
                let train = records.iter().filter(|r| count(r) == 0).copied().collect();
                let test = records
                    .iter()
                    .filter(|r| count(r) == wanted_new)
                    .copied()
                    .collect();
                let mut new_drugs: Vec<usize> = new.into_iter().collect();
                new_drugs.sort_unstable();
                out.push(Fold {
                    index,
                    train,
                    test,
                    new_drugs,
                });
            }
        }
    }
    let warnings: Vec<String> = out
        .iter()
        .filter(|f| f.test.is_empty())
        .map(|f| format!("fold {} has no test interactions", f.index))
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(SplitPlan {
        task,
        seed,
        folds: out,
        warnings,
    })
}

fn split_by(
    records: &[DdiRecord],
    pick: impl Fn(usize, &DdiRecord) -> bool,
) -> (Vec<DdiRecord>, Vec<DdiRecord>) {
    let mut yes = Vec::new();
    let mut no = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if pick(i, r) {
            yes.push(*r);
        } else {
            no.push(*r);
        }
    }
    (yes, no)
}
