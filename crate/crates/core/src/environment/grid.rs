use serde::{Deserialize, Serialize};

/// Square lattice of `side x side` cells, indexed row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    side: usize,
}

impl GridSpec {
    pub fn new(side: usize) -> Self {
        assert!(side > 0, "grid side must be positive");
        Self { side }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Total number of cells.
    pub fn cells(&self) -> usize {
        self.side * self.side
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.side && col < self.side);
        row * self.side + col
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        debug_assert!(index < self.cells());
        (index / self.side, index % self.side)
    }

    pub fn contains(&self, index: usize) -> bool {
        index < self.cells()
    }

    /// Squared center-to-center distance between two cells.
    pub fn squared_distance(&self, a: usize, b: usize) -> i64 {
        let (ra, ca) = self.coords(a);
        let (rb, cb) = self.coords(b);
        let dr = ra as i64 - rb as i64;
        let dc = ca as i64 - cb as i64;
        dr * dr + dc * dc
    }

    /// Cell closest to the geometric center (lowest index on ties).
    pub fn center(&self) -> usize {
        let mid = (self.side - 1) / 2;
        self.index(mid, mid)
    }
}
