use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// How test scans are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum FoldSpec {
    /// Explicit disjoint folds; `fold` selects the test fold.
    Explicit { folds: Vec<Vec<String>>, fold: usize },
    /// Seeded random partition into `folds` folds; `fold` selects the test fold.
    Random { folds: usize, fold: usize },
}

/// Scan ids assigned to each set. Every input id lands in exactly one.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScanSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Splits scans into train, validation and test sets.
///
/// The validation set takes `floor(validation_fraction * n_train)` scans out
/// of the non-test scans, chosen with the same seed.
pub fn split_by_scan(
    ids: &[String],
    spec: &FoldSpec,
    seed: u64,
    validation_fraction: f64,
) -> Result<ScanSplit> {
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(invalid(format!(
            "validation fraction must lie in [0,1), got {validation_fraction}"
        )));
    }
    let mut sorted: Vec<String> = ids.to_vec();
    sorted.sort();
    let before = sorted.len();
    sorted.dedup();
    if sorted.len() != before {
        return Err(invalid("duplicate scan ids"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let test: HashSet<String> = match spec {
        FoldSpec::Explicit { folds, fold } => {
            let mut seen = HashSet::new();
            for f in folds {
                for id in f {
                    if !seen.insert(id.clone()) {
                        return Err(invalid(format!("scan {id} appears in more than one fold")));
                    }
                    if sorted.binary_search(id).is_err() {
                        return Err(invalid(format!("fold lists unknown scan {id}")));
                    }
                }
            }
            let chosen = folds
                .get(*fold)
                .ok_or_else(|| invalid(format!("fold {fold} out of range ({} folds)", folds.len())))?;
            chosen.iter().cloned().collect()
        }
        FoldSpec::Random { folds, fold } => {
            if *folds == 0 || fold >= folds {
                return Err(invalid(format!("fold {fold} out of range ({folds} folds)")));
            }
            let mut order = sorted.clone();
            order.shuffle(&mut rng);
            order
                .into_iter()
                .enumerate()
                .filter(|(i, _)| i % folds == *fold)
                .map(|(_, id)| id)
                .collect()
        }
    };

    let mut rest: Vec<String> = sorted.iter().filter(|id| !test.contains(*id)).cloned().collect();
    rest.shuffle(&mut rng);
    let n_val = (validation_fraction * rest.len() as f64).floor() as usize;
    let mut validation: Vec<String> = rest.drain(..n_val).collect();
    rest.sort();
    validation.sort();
    let test = sorted.into_iter().filter(|id| test.contains(id)).collect();
    Ok(ScanSplit {
        train: rest,
        validation,
        test,
    })
}
