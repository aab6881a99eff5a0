//! The nine-cell grid vocabulary used for coarse change localization.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One cell of the 3x3 localization grid, in reading order. The derived
/// ordering is reading order (TL first, BR last).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cell {
    TL,
    TC,
    TR,
    CL,
    CC,
    CR,
    BL,
    BC,
    BR,
}

/// All nine cells in reading order.
pub const ALL_CELLS: [Cell; 9] = [
    Cell::TL,
    Cell::TC,
    Cell::TR,
    Cell::CL,
    Cell::CC,
    Cell::CR,
    Cell::BL,
    Cell::BC,
    Cell::BR,
];

impl Cell {
    /// Cell at (row, col) of the 3x3 grid.
    pub fn from_row_col(row: usize, col: usize) -> Option<Cell> {
        if row < 3 && col < 3 {
            Some(ALL_CELLS[row * 3 + col])
        } else {
            None
        }
    }

    pub fn row(self) -> usize {
        self as usize / 3
    }

    pub fn col(self) -> usize {
        self as usize % 3
    }

    /// Counterpart under a 180-degree rotation of the map.
    pub fn rotated_180(self) -> Cell {
        ALL_CELLS[8 - self as usize]
    }

    pub fn label(self) -> &'static str {
        match self {
            Cell::TL => "TL",
            Cell::TC => "TC",
            Cell::TR => "TR",
            Cell::CL => "CL",
            Cell::CC => "CC",
            Cell::CR => "CR",
            Cell::BL => "BL",
            Cell::BC => "BC",
            Cell::BR => "BR",
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Cell {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.to_ascii_uppercase();
        ALL_CELLS
            .iter()
            .copied()
            .find(|c| c.label() == upper)
            .ok_or(())
    }
}

/// An unordered, duplicate-free set of grid cells. Iteration follows reading
/// order because of the `Cell` ordering.
pub type CellSet = BTreeSet<Cell>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_is_reading_order() {
        let mut set = CellSet::new();
        set.insert(Cell::BR);
        set.insert(Cell::TL);
        set.insert(Cell::CC);
        let labels: Vec<&str> = set.iter().map(|c| c.label()).collect();
        assert_eq!(labels, ["TL", "CC", "BR"]);
    }

    #[test]
    fn rotation_maps_corners_and_fixes_center() {
        assert_eq!(Cell::TL.rotated_180(), Cell::BR);
        assert_eq!(Cell::TC.rotated_180(), Cell::BC);
        assert_eq!(Cell::TR.rotated_180(), Cell::BL);
        assert_eq!(Cell::CL.rotated_180(), Cell::CR);
        assert_eq!(Cell::CC.rotated_180(), Cell::CC);
    }

    #[test]
    fn parses_case_insensitively() {
        assert_eq!("bl".parse::<Cell>(), Ok(Cell::BL));
        assert_eq!("TC".parse::<Cell>(), Ok(Cell::TC));
        assert!("XX".parse::<Cell>().is_err());
    }
}
