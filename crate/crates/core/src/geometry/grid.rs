use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Uniform Cartesian grid. Node `(i, j)` sits at `origin + (i h, j h)` and is
/// stored at linear index `j * nx + i` (row-major, `i` fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    origin: Point,
    h: f64,
    nx: usize,
    ny: usize,
}

impl Grid2D {
    pub fn new(origin: Point, h: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        if nx < 5 || ny < 5 {
            return Err(Error::InvalidGrid(format!(
                "need at least 5 nodes per axis for the wide stencil, got {nx}x{ny}"
            )));
        }
        if !(origin[0].is_finite() && origin[1].is_finite()) {
            return Err(Error::InvalidGrid("non-finite origin".into()));
        }
        Ok(Self { origin, h, nx, ny })
    }

    /// Grid over the box `[lo, hi]` with spacing `h`. The node count per axis
    /// is `round((hi - lo) / h) + 1`, so the far edge lands on the box edge up
    /// to rounding of `h`.
    pub fn covering(lo: Point, hi: Point, h: f64) -> Result<Self> {
        if !(hi[0] > lo[0] && hi[1] > lo[1]) {
            return Err(Error::InvalidGrid(format!("empty box {lo:?}..{hi:?}")));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {h}")));
        }
        let nx = ((hi[0] - lo[0]) / h).round() as usize + 1;
        let ny = ((hi[1] - lo[1]) / h).round() as usize + 1;
        Self::new(lo, h, nx, ny)
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        [
            self.origin[0] + i as f64 * self.h,
            self.origin[1] + j as f64 * self.h,
        ]
    }

    pub fn node_at(&self, idx: usize) -> Point {
        let (i, j) = self.coords(idx);
        self.node(i, j)
    }

    /// Linear index of node `(i + di, j + dj)`, if it exists.
    pub fn offset(&self, idx: usize, di: isize, dj: isize) -> Option<usize> {
        let (i, j) = self.coords(idx);
        let ni = i as isize + di;
        let nj = j as isize + dj;
        (ni >= 0 && nj >= 0 && (ni as usize) < self.nx && (nj as usize) < self.ny)
            .then(|| self.index(ni as usize, nj as usize))
    }

    /// Axis neighbours in the order +x, -x, +y, -y.
    pub fn neighbors4(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .into_iter()
            .filter_map(move |(di, dj)| self.offset(idx, di, dj))
    }

    /// Length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        let lx = (self.nx - 1) as f64 * self.h;
        let ly = (self.ny - 1) as f64 * self.h;
        lx.hypot(ly)
    }
}
