//! The canonical 21-cell configuration grid.
//!
//! Three baseline cells sweep the learning rate with plain label targets;
//! nine cells each for the two rationale datasets cross three split ratios
//! with the same three learning rates. Cell IDs are stable and row-major:
//! within a dataset, the ratio varies slowest and the learning rate fastest.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::trainer::{LossWeights, SplitRatio};

/// Which training dataset a cell consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Plain examples, label-only targets.
    Baseline,
    /// Examples augmented with 5-W extraction rationales.
    FiveW,
    /// Examples augmented with free-text justification rationales.
    FreeText,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 3] = [
        DatasetKind::Baseline,
        DatasetKind::FiveW,
        DatasetKind::FreeText,
    ];

    /// Stable lowercase name, used in file stems, CSV cells, and JSON.
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Baseline => "baseline",
            DatasetKind::FiveW => "five_w",
            DatasetKind::FreeText => "free_text",
        }
    }

    /// ID prefix for this dataset's grid cells.
    fn id_prefix(self) -> char {
        match self {
            DatasetKind::Baseline => 'B',
            DatasetKind::FiveW => 'S',
            DatasetKind::FreeText => 'E',
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One grid configuration: a dataset, an optional split ratio, and a
/// learning rate. Baseline cells have no ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub id: String,
    pub dataset: DatasetKind,
    pub split_ratio: Option<SplitRatio>,
    pub learning_rate: f64,
}

impl GridCell {
    /// The loss weighting this cell trains under.
    pub fn weights(&self) -> LossWeights {
        match self.split_ratio {
            Some(ratio) => LossWeights::Split(ratio),
            None => LossWeights::Plain,
        }
    }
}

/// The three learning rates swept in every dataset.
pub const LEARNING_RATES: [f64; 3] = [6e-4, 1.2e-3, 2.4e-3];

/// The three (label, rationale) weightings swept in the augmented datasets.
pub const SPLIT_RATIOS: [(f64, f64); 3] = [(0.25, 0.75), (0.5, 0.5), (0.75, 0.25)];

/// All 21 cells: B1-B3, then S1-S9, then E1-E9.
pub fn canonical_grid() -> Vec<GridCell> {
    let mut cells = Vec::with_capacity(21);
    for (i, &lr) in LEARNING_RATES.iter().enumerate() {
        cells.push(GridCell {
            id: format!("B{}", i + 1),
            dataset: DatasetKind::Baseline,
            split_ratio: None,
            learning_rate: lr,
        });
    }
    for dataset in [DatasetKind::FiveW, DatasetKind::FreeText] {
        let mut n = 0;
        for &(label, rationale) in &SPLIT_RATIOS {
            for &lr in &LEARNING_RATES {
                n += 1;
                // Ratios ending in .25/.5/.75 are exact in binary, so the
                // sum-to-one constructor cannot fail here.
                let ratio = SplitRatio::new(label, rationale).expect("grid ratios are exact");
                cells.push(GridCell {
                    id: format!("{}{}", dataset.id_prefix(), n),
                    dataset,
                    split_ratio: Some(ratio),
                    learning_rate: lr,
                });
            }
        }
    }
    cells
}

/// Look up a canonical cell by ID.
pub fn find_cell(id: &str) -> Option<GridCell> {
    canonical_grid().into_iter().find(|c| c.id == id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn grid_has_21_unique_cells() {
        let grid = canonical_grid();
        assert_eq!(grid.len(), 21);
        let ids: HashSet<&str> = grid.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids.len(), 21);

        // Every (dataset, ratio, lr) combination appears exactly once.
        let mut combos = HashSet::new();
        for cell in &grid {
            let ratio = cell
                .split_ratio
                .map(|r| (r.label().to_bits(), r.rationale().to_bits()));
            assert!(combos.insert((cell.dataset, ratio, cell.learning_rate.to_bits())));
        }
    }

    #[test]
    fn pinned_cells_match_the_table() {
        let s5 = find_cell("S5").unwrap();
        assert_eq!(s5.dataset, DatasetKind::FiveW);
        let ratio = s5.split_ratio.unwrap();
        assert_eq!((ratio.label(), ratio.rationale()), (0.5, 0.5));
        assert_eq!(s5.learning_rate, 1.2e-3);

        let b1 = find_cell("B1").unwrap();
        assert_eq!(b1.dataset, DatasetKind::Baseline);
        assert_eq!(b1.split_ratio, None);
        assert_eq!(b1.learning_rate, 6e-4);

        let e9 = find_cell("E9").unwrap();
        assert_eq!(e9.dataset, DatasetKind::FreeText);
        let ratio = e9.split_ratio.unwrap();
        assert_eq!((ratio.label(), ratio.rationale()), (0.75, 0.25));
        assert_eq!(e9.learning_rate, 2.4e-3);
    }

    #[test]
    fn ids_are_row_major_within_each_dataset() {
        let grid = canonical_grid();
        // S-block starts after the three baselines; ratio varies slowest.
        for (n, cell) in grid[3..12].iter().enumerate() {
            assert_eq!(cell.id, format!("S{}", n + 1));
            let ratio = cell.split_ratio.unwrap();
            assert_eq!(ratio.label(), SPLIT_RATIOS[n / 3].0);
            assert_eq!(cell.learning_rate, LEARNING_RATES[n % 3]);
        }
        for (n, cell) in grid[12..21].iter().enumerate() {
            assert_eq!(cell.id, format!("E{}", n + 1));
        }
    }

    #[test]
    fn weights_map_baseline_to_plain() {
        assert_eq!(find_cell("B2").unwrap().weights(), LossWeights::Plain);
        match find_cell("S1").unwrap().weights() {
            LossWeights::Split(r) => assert_eq!(r.label(), 0.25),
            LossWeights::Plain => panic!("S1 must carry a split ratio"),
        }
    }

    #[test]
    fn unknown_cell_is_none() {
        assert_eq!(find_cell("S10"), None);
        assert_eq!(find_cell("b1"), None);
    }
}
