use super::grid::Grid2D;
use super::shape::Shape;
use crate::error::Result;

/// Signed distance sampled at every grid node (negative inside the domain).
#[derive(Clone, Debug)]
pub struct LevelSetField {
    grid: Grid2D,
    phi: Vec<f64>,
}

impl LevelSetField {
    pub fn from_values(grid: Grid2D, phi: Vec<f64>) -> Self {
        assert_eq!(grid.len(), phi.len(), "level-set sample count");
        Self { grid, phi }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.phi[self.grid.index(i, j)]
    }

    pub fn is_inside(&self, idx: usize) -> bool {
        self.phi[idx] < 0.0
    }

    /// Bilinear interpolation of the samples; points are clamped to the grid box.
    pub fn interpolate(&self, p: [f64; 2]) -> f64 {
        bilinear(&self.grid, p, |idx| self.phi[idx])
    }
}

pub(crate) fn bilinear(grid: &Grid2D, p: [f64; 2], f: impl Fn(usize) -> f64) -> f64 {
    let o = grid.origin();
    let h = grid.h();
    let fx = ((p[0] - o[0]) / h).clamp(0.0, (grid.nx() - 1) as f64);
    let fy = ((p[1] - o[1]) / h).clamp(0.0, (grid.ny() - 1) as f64);
    let i = (fx.floor() as usize).min(grid.nx() - 2);
    let j = (fy.floor() as usize).min(grid.ny() - 2);
    let s = fx - i as f64;
    let t = fy - j as f64;
    (1.0 - s) * (1.0 - t) * f(grid.index(i, j))
        + s * (1.0 - t) * f(grid.index(i + 1, j))
        + (1.0 - s) * t * f(grid.index(i, j + 1))
        + s * t * f(grid.index(i + 1, j + 1))
}

/// Samples the shape's signed distance at every node.
pub fn build_level_set(grid: &Grid2D, shape: &Shape) -> Result<LevelSetField> {
    shape.validate()?;
    let phi = (0..grid.len())
        .map(|idx| shape.signed_distance(grid.node_at(idx)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelSetField::from_values(grid.clone(), phi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_on_small_grids() {
        let g = Grid2D::new([-1.0, -1.0], 1.0, 5, 5).unwrap();
        let ls = build_level_set(&g, &Shape::circle(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(ls.at(2, 2), -1.0);

        let g = Grid2D::covering([-1.5, -1.5], [1.5, 1.5], 0.5).unwrap();
        let ls = build_level_set(&g, &Shape::circle(0.0, 0.0, 1.0)).unwrap();
        // brute-force enumeration of x^2 + y^2 < 1 over the 49 nodes
        let expected = (0..g.len())
            .filter(|&k| {
                let p = g.node_at(k);
                p[0] * p[0] + p[1] * p[1] < 1.0
            })
            .count();
        assert_eq!(expected, 9);
        assert_eq!(ls.values().iter().filter(|&&v| v < 0.0).count(), 9);
        let diam = g.diameter();
        assert!(ls.values().iter().all(|v| v.abs() <= diam));
    }

    #[test]
    fn rectangle_filling_the_box_vanishes_on_the_rim() {
        let g = Grid2D::covering([0.0, 0.0], [2.0, 1.0], 0.25).unwrap();
        let ls = build_level_set(&g, &Shape::rectangle(0.0, 0.0, 2.0, 1.0)).unwrap();
        for i in 0..g.nx() {
            assert_eq!(ls.at(i, 0), 0.0);
            assert_eq!(ls.at(i, g.ny() - 1), 0.0);
        }
        for j in 0..g.ny() {
            assert_eq!(ls.at(0, j), 0.0);
            assert!(ls.at(g.nx() - 1, j).abs() < 1e-15);
        }
    }
}
