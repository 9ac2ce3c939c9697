use super::grid::Grid2D;
use super::level_set::LevelSetField;
use crate::error::{Error, Result};

/// Interior nodes closer to the boundary than this fraction of `h` are pinned
/// to the homogeneous Dirichlet value instead of becoming irregular unknowns.
pub const PIN_FRACTION: f64 = 1e-3;

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// Interior node whose four axis neighbours are all interior.
    Regular,
    /// Interior node with at least one non-interior axis neighbour.
    Irregular,
    /// Exterior node with an irregular axis neighbour.
    Ghost1,
    /// Exterior node, not in the first layer, next to a first-layer node.
    Ghost2,
    /// Node numerically on the boundary (`-PIN_FRACTION h < phi < 0`), held at zero.
    Pinned,
    Exterior,
}

impl NodeKind {
    pub fn is_interior(self) -> bool {
        matches!(self, NodeKind::Regular | NodeKind::Irregular)
    }

    pub fn is_ghost(self) -> bool {
        matches!(self, NodeKind::Ghost1 | NodeKind::Ghost2)
    }

    pub fn label(self) -> &'static str {
        match self {
            NodeKind::Regular => "regular",
            NodeKind::Irregular => "irregular",
            NodeKind::Ghost1 => "ghost1",
            NodeKind::Ghost2 => "ghost2",
            NodeKind::Pinned => "pinned",
            NodeKind::Exterior => "exterior",
        }
    }
}

/// Partition of the grid nodes, with row-major enumerations of the interior,
/// irregular and ghost sets.
#[derive(Clone, Debug)]
pub struct GridClassification {
    kinds: Vec<NodeKind>,
    interior_order: Vec<usize>,
    irregular_order: Vec<usize>,
    ghost_order: Vec<usize>,
    interior_slot: Vec<usize>,
    irregular_slot: Vec<usize>,
    ghost_slot: Vec<usize>,
}

/// Classifies nodes into regular / irregular interior points and two ghost layers.
pub fn classify(grid: &Grid2D, ls: &LevelSetField) -> Result<GridClassification> {
    let n = grid.len();
    let phi = ls.values();
    let pin = PIN_FRACTION * grid.h();
    let (nx, ny) = (grid.nx(), grid.ny());

    let mut kinds = vec![NodeKind::Exterior; n];
    for idx in 0..n {
        if phi[idx] < 0.0 {
            let (i, j) = grid.coords(idx);
            if i < 2 || j < 2 || i + 2 >= nx || j + 2 >= ny {
                return Err(Error::DomainTouchesRim { i, j });
            }
            kinds[idx] = if phi[idx] > -pin { NodeKind::Pinned } else { NodeKind::Regular };
        }
    }
    for idx in 0..n {
        if kinds[idx] == NodeKind::Regular && grid.neighbors4(idx).any(|m| !kinds[m].is_interior()) {
            kinds[idx] = NodeKind::Irregular;
        }
    }
    for idx in 0..n {
        if kinds[idx] == NodeKind::Exterior && grid.neighbors4(idx).any(|m| kinds[m] == NodeKind::Irregular) {
            kinds[idx] = NodeKind::Ghost1;
        }
    }
    for idx in 0..n {
        if kinds[idx] == NodeKind::Exterior
            && grid
                .neighbors4(idx)
                .any(|m| matches!(kinds[m], NodeKind::Ghost1 | NodeKind::Pinned))
        {
            kinds[idx] = NodeKind::Ghost2;
        }
    }

    let mut interior_order = Vec::new();
    let mut irregular_order = Vec::new();
    let mut ghost_order = Vec::new();
    let mut interior_slot = vec![NONE; n];
    let mut irregular_slot = vec![NONE; n];
    let mut ghost_slot = vec![NONE; n];
    for (idx, kind) in kinds.iter().enumerate() {
        if kind.is_interior() {
            interior_slot[idx] = interior_order.len();
            interior_order.push(idx);
        }
        if *kind == NodeKind::Irregular {
            irregular_slot[idx] = irregular_order.len();
            irregular_order.push(idx);
        }
        if kind.is_ghost() {
            ghost_slot[idx] = ghost_order.len();
            ghost_order.push(idx);
        }
    }
    Ok(GridClassification {
        kinds,
        interior_order,
        irregular_order,
        ghost_order,
        interior_slot,
        irregular_slot,
        ghost_slot,
    })
}

impl GridClassification {
    pub fn kind(&self, idx: usize) -> NodeKind {
        self.kinds[idx]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    /// Regular and irregular nodes, row-major. This is the unknown ordering.
    pub fn interior_order(&self) -> &[usize] {
        &self.interior_order
    }

    pub fn irregular_order(&self) -> &[usize] {
        &self.irregular_order
    }

    /// Both ghost layers together, row-major.
    pub fn ghost_order(&self) -> &[usize] {
        &self.ghost_order
    }

    pub fn interior_slot(&self, idx: usize) -> Option<usize> {
        Some(self.interior_slot[idx]).filter(|&s| s != NONE)
    }

    pub fn irregular_slot(&self, idx: usize) -> Option<usize> {
        Some(self.irregular_slot[idx]).filter(|&s| s != NONE)
    }

    pub fn ghost_slot(&self, idx: usize) -> Option<usize> {
        Some(self.ghost_slot[idx]).filter(|&s| s != NONE)
    }

    pub fn n_interior(&self) -> usize {
        self.interior_order.len()
    }

    pub fn n_irregular(&self) -> usize {
        self.irregular_order.len()
    }

    pub fn n_ghost(&self) -> usize {
        self.ghost_order.len()
    }

    pub fn nodes_of(&self, kind: NodeKind) -> impl Iterator<Item = usize> + '_ {
        self.kinds
            .iter()
            .enumerate()
            .filter(move |(_, k)| **k == kind)
            .map(|(i, _)| i)
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.kinds.iter().filter(|k| **k == kind).count()
    }

    /// Scatters an interior field onto the full grid, zero elsewhere.
    pub fn scatter(&self, interior: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.kinds.len()];
        for (&idx, &v) in self.interior_order.iter().zip(interior) {
            full[idx] = v;
        }
        full
    }

    /// Gathers the interior entries of a full-grid field.
    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.interior_order.iter().map(|&idx| full[idx]).collect()
    }

    /// Irregular entries of an interior field, in irregular order.
    pub fn irregular_values(&self, interior: &[f64]) -> Vec<f64> {
        self.irregular_order
            .iter()
            .map(|&idx| interior[self.interior_slot[idx]])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_level_set, Shape};
    use std::collections::HashSet;

    #[test]
    fn coarse_circle() {
        let g = Grid2D::covering([-1.5, -1.5], [1.5, 1.5], 0.5).unwrap();
        let ls = build_level_set(&g, &Shape::circle(0.0, 0.0, 1.0)).unwrap();
        let cls = classify(&g, &ls).unwrap();
        // brute force: interior nodes whose four neighbours are interior
        let inside = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1] < 1.0;
        let mut regular = HashSet::new();
        let mut irregular = HashSet::new();
        for idx in 0..g.len() {
            if inside(g.node_at(idx)) {
                if g.neighbors4(idx).all(|m| inside(g.node_at(m))) {
                    regular.insert(idx);
                } else {
                    irregular.insert(idx);
                }
            }
        }
        assert_eq!(regular, [g.index(3, 3)].into_iter().collect());
        assert_eq!(irregular.len(), 8);
        assert_eq!(cls.nodes_of(NodeKind::Regular).collect::<HashSet<_>>(), regular);
        assert_eq!(cls.nodes_of(NodeKind::Irregular).collect::<HashSet<_>>(), irregular);
        // (1, 0) in physical coordinates is node (5, 3)
        assert_eq!(cls.kind(g.index(5, 3)), NodeKind::Ghost1);
        let ghost1: HashSet<_> = (0..g.len())
            .filter(|&k| !inside(g.node_at(k)) && g.neighbors4(k).any(|m| irregular.contains(&m)))
            .collect();
        assert_eq!(cls.nodes_of(NodeKind::Ghost1).collect::<HashSet<_>>(), ghost1);
    }

    #[test]
    fn rectangle_irregular_ring() {
        let g = Grid2D::covering([0.0, 0.0], [1.0, 1.0], 0.1).unwrap();
        let ls = build_level_set(&g, &Shape::rectangle(0.25, 0.25, 0.75, 0.75)).unwrap();
        let cls = classify(&g, &ls).unwrap();
        for idx in 0..g.len() {
            let expect_irregular = ls.values()[idx] < 0.0 && g.neighbors4(idx).any(|m| ls.values()[m] >= 0.0);
            assert_eq!(cls.kind(idx) == NodeKind::Irregular, expect_irregular);
        }
    }

    #[test]
    fn touching_the_rim_is_rejected() {
        let g = Grid2D::covering([-1.0, -1.0], [1.0, 1.0], 0.1).unwrap();
        let ls = build_level_set(&g, &Shape::circle(0.0, 0.0, 0.95)).unwrap();
        assert!(matches!(classify(&g, &ls), Err(Error::DomainTouchesRim { .. })));
    }

    #[test]
    fn near_boundary_nodes_are_pinned() {
        let g = Grid2D::covering([-2.0, -2.0], [2.0, 2.0], 0.1).unwrap();
        // node (1.0, 0.0) lies 1e-5 inside the circle
        let ls = build_level_set(&g, &Shape::circle(0.0, 0.0, 1.0 + 1e-5)).unwrap();
        let cls = classify(&g, &ls).unwrap();
        let idx = g.index(30, 20);
        assert_eq!(cls.kind(idx), NodeKind::Pinned);
        assert_eq!(cls.kind(g.index(29, 20)), NodeKind::Irregular);
        assert!(cls.irregular_slot(idx).is_none() && cls.interior_slot(idx).is_none());
    }

    #[test]
    fn orders_are_row_major() {
        let g = Grid2D::covering([-1.5, -1.5], [1.5, 1.5], 0.1).unwrap();
        let ls = build_level_set(&g, &Shape::ellipse(0.7, 1.1)).unwrap();
        let cls = classify(&g, &ls).unwrap();
        for order in [cls.interior_order(), cls.irregular_order(), cls.ghost_order()] {
            assert!(order.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
