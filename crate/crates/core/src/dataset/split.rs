use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CellHistory, Chemistry, DatasetError};

/// Cells sharing a chemistry and a cycling condition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub chemistry: Chemistry,
    pub condition: String,
}

impl GroupKey {
    pub fn new(chemistry: Chemistry, condition: impl Into<String>) -> Self {
        Self {
            chemistry,
            condition: condition.into(),
        }
    }

    pub fn of(cell: &CellHistory) -> Self {
        Self::new(cell.chemistry(), cell.condition())
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.chemistry, self.condition)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
}

/// Requested train/test counts per (chemistry, condition) group.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec(pub BTreeMap<GroupKey, SplitCounts>);

impl SplitSpec {
    pub fn insert(&mut self, key: GroupKey, train: usize, test: usize) {
        self.0.insert(key, SplitCounts { train, test });
    }

    /// Per-condition counts of the public 74-cell dataset.
    pub fn reference_dataset() -> Self {
        let mut s = Self::default();
        for (chem, cond, train, test) in [
            (Chemistry::Nca, "CY25-0.25/1", 2, 3),
            (Chemistry::Nca, "CY25-0.5/1", 6, 7),
            (Chemistry::Nca, "CY35-0.5/1", 1, 1),
            (Chemistry::Nca, "CY45-0.5/1", 11, 10),
            (Chemistry::Ncm, "CY25-0.5/1", 2, 2),
            (Chemistry::Ncm, "CY35-0.5/1", 2, 2),
            (Chemistry::Ncm, "CY45-0.5/1", 4, 12),
            (Chemistry::NcmNca, "CY25-0.5/1", 1, 2),
            (Chemistry::NcmNca, "CY25-0.5/2", 1, 2),
            (Chemistry::NcmNca, "CY25-0.5/4", 1, 2),
        ] {
            s.insert(GroupKey::new(chem, cond), train, test);
        }
        s
    }

    /// Every group present in `cells`, with `ceil(n/2)` training cells.
    pub fn halves(cells: &[CellHistory]) -> Self {
        let mut counts: BTreeMap<GroupKey, usize> = BTreeMap::new();
        for c in cells {
            *counts.entry(GroupKey::of(c)).or_default() += 1;
        }
        let mut s = Self::default();
        for (k, n) in counts {
            s.insert(k, n.div_ceil(2), n / 2);
        }
        s
    }
}

/// Parses `CHEM:CONDITION=TRAIN/TEST` items separated by commas, e.g.
/// `NCA:CY45-0.5/1=11/10,NCA:CY35-0.5/1=1/1`.
impl FromStr for SplitSpec {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |item: &str| DatasetError::Validation(format!("bad split item '{item}'"));
        let mut spec = Self::default();
        for item in s.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            let (group, counts) = item.rsplit_once('=').ok_or_else(|| bad(item))?;
            let (chem, cond) = group.split_once(':').ok_or_else(|| bad(item))?;
            let (train, test) = counts.split_once('/').ok_or_else(|| bad(item))?;
            spec.insert(
                GroupKey::new(chem.parse()?, cond.trim()),
                train.trim().parse().map_err(|_| bad(item))?,
                test.trim().parse().map_err(|_| bad(item))?,
            );
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn is_train(&self, cell_id: &str) -> bool {
        self.train.contains(cell_id)
    }

    pub fn is_test(&self, cell_id: &str) -> bool {
        self.test.contains(cell_id)
    }
}

/// Seeded random split within each group. Cells in groups absent from `spec`
/// land in neither set.
pub fn split_dataset(
    cells: &[CellHistory],
    spec: &SplitSpec,
    seed: u64,
) -> Result<DatasetSplit, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = DatasetSplit {
        train: BTreeSet::new(),
        test: BTreeSet::new(),
        seed,
    };
    for (key, counts) in &spec.0 {
        let mut ids: Vec<&str> = cells
            .iter()
            .filter(|c| GroupKey::of(c) == *key)
            .map(|c| c.cell_id())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        if counts.train + counts.test > ids.len() {
            return Err(DatasetError::InsufficientCells {
                group: key.to_string(),
                requested: counts.train + counts.test,
                available: ids.len(),
            });
        }
        ids.shuffle(&mut rng);
        split
            .train
            .extend(ids[..counts.train].iter().map(|s| s.to_string()));
        split.test.extend(
            ids[counts.train..counts.train + counts.test]
                .iter()
                .map(|s| s.to_string()),
        );
    }
    Ok(split)
}
