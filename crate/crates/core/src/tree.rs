//! RRT*-style search tree.
//!
//! Nodes are append-only and identified by their insertion index. Each node
//! caches its render loss and owns an optimizer state; rewiring only moves
//! parent pointers and path costs, never optimizer states.

use std::fmt::Write as _;

use crate::collision::Scene;
use crate::error::{Error, Result};
use crate::kinematics::{distance, Configuration, RobotModel};
use crate::optimizer::OptState;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: usize,
    pub q: Configuration,
    pub parent: Option<usize>,
    /// Joint-space path length from the root.
    pub cost: f64,
    /// Cached render loss of `q`.
    pub loss: f64,
    pub opt: OptState,
}

/// Nearest-neighbour backend. Ids are dense and inserted in order.
pub trait NeighborIndex: Send + Sync {
    fn insert(&mut self, q: &[f64]);
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Lowest id among the closest points.
    fn nearest(&self, q: &[f64]) -> Option<usize>;
    /// All ids within distance `radius` (inclusive), ascending.
    fn within(&self, q: &[f64], radius: f64) -> Vec<usize>;
}

/// Exhaustive scan over a flat coordinate buffer.
#[derive(Debug, Clone, Default)]
pub struct LinearScan {
    dim: usize,
    coords: Vec<f64>,
}

impl LinearScan {
    pub fn new(dim: usize) -> Self {
        LinearScan {
            dim,
            coords: Vec::new(),
        }
    }
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl NeighborIndex for LinearScan {
    fn insert(&mut self, q: &[f64]) {
        debug_assert_eq!(q.len(), self.dim);
        self.coords.extend_from_slice(q);
    }

    fn len(&self) -> usize {
        self.coords.len().checked_div(self.dim).unwrap_or(0)
    }

    fn nearest(&self, q: &[f64]) -> Option<usize> {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (id, p) in self.coords.chunks_exact(self.dim).enumerate() {
            let d = dist_sq(p, q);
            if d < best_d {
                best_d = d;
                best = Some(id);
            }
        }
        best
    }

    fn within(&self, q: &[f64], radius: f64) -> Vec<usize> {
        // loose squared bound first, then the exact Euclidean test
        let bound = (radius * (1.0 + 1e-9)).powi(2);
        self.coords
            .chunks_exact(self.dim)
            .enumerate()
            .filter(|(_, p)| {
                let d = dist_sq(p, q);
                d <= bound && d.sqrt() <= radius
            })
            .map(|(id, _)| id)
            .collect()
    }
}

/// Bucketed kd-tree. Same contract as [`LinearScan`], sublinear queries.
pub struct KdIndex {
    dim: usize,
    len: usize,
    tree: kdtree::KdTree<f64, usize, Vec<f64>>,
}

impl KdIndex {
    pub fn new(dim: usize) -> Self {
        KdIndex {
            dim,
            len: 0,
            tree: kdtree::KdTree::new(dim.max(1)),
        }
    }
}

impl NeighborIndex for KdIndex {
    fn insert(&mut self, q: &[f64]) {
        debug_assert_eq!(q.len(), self.dim);
        self.tree
            .add(q.to_vec(), self.len)
            .expect("configurations are finite and of the tree dimension");
        self.len += 1;
    }

    fn len(&self) -> usize {
        self.len
    }

    fn nearest(&self, q: &[f64]) -> Option<usize> {
        let found = self.tree.nearest(q, 2, &kdtree::distance::squared_euclidean).ok()?;
        let (d, &id) = *found.first()?;
        match found.get(1) {
            // exact tie: fall back to the full set at that distance
            Some(&(d2, _)) if d2 == d => self
                .tree
                .within(q, d, &kdtree::distance::squared_euclidean)
                .ok()?
                .into_iter()
                .filter(|(x, _)| *x == d)
                .map(|(_, &i)| i)
                .min(),
            _ => Some(id),
        }
    }

    fn within(&self, q: &[f64], radius: f64) -> Vec<usize> {
        let bound = (radius * (1.0 + 1e-9)).powi(2);
        let mut ids: Vec<usize> = self
            .tree
            .within(q, bound, &kdtree::distance::squared_euclidean)
            .unwrap_or_default()
            .into_iter()
            .filter(|(d, _)| d.sqrt() <= radius)
            .map(|(_, &i)| i)
            .collect();
        ids.sort_unstable();
        ids
    }
}

/// Result of choose-parent plus rewiring around one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rewire {
    /// Parent of the new node after choose-parent.
    pub parent: usize,
    /// Neighbours that were reparented onto the new node.
    pub reparented: Vec<usize>,
}

pub struct SearchTree {
    nodes: Vec<TreeNode>,
    children: Vec<Vec<usize>>,
    index: Box<dyn NeighborIndex>,
    dim: usize,
}

impl std::fmt::Debug for SearchTree {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SearchTree")
            .field("nodes", &self.nodes.len())
            .field("dim", &self.dim)
            .finish()
    }
}

impl SearchTree {
    pub fn new(dim: usize) -> Self {
        Self::with_index(dim, Box::new(KdIndex::new(dim)))
    }

    pub fn with_index(dim: usize, index: Box<dyn NeighborIndex>) -> Self {
        SearchTree {
            nodes: Vec::new(),
            children: Vec::new(),
            index,
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> Result<&TreeNode> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    /// Appends a node. The first node must have no parent and becomes the root.
    pub fn insert(
        &mut self,
        q: Configuration,
        parent: Option<usize>,
        loss: f64,
        opt: OptState,
    ) -> Result<usize> {
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.dim(),
            });
        }
        let cost = match (parent, self.nodes.is_empty()) {
            (None, true) => 0.0,
            (None, false) => {
                return Err(Error::InvalidParam("tree already has a root".into()));
            }
            (Some(p), _) => {
                let pn = self.node(p)?;
                pn.cost + pn.q.distance(&q)
            }
        };
        let id = self.nodes.len();
        self.index.insert(q.as_slice());
        if let Some(p) = parent {
            self.children[p].push(id);
        }
        self.nodes.push(TreeNode {
            id,
            q,
            parent,
            cost,
            loss,
            opt,
        });
        self.children.push(Vec::new());
        Ok(id)
    }

    pub fn nearest(&self, q: &Configuration) -> Result<usize> {
        self.index.nearest(q.as_slice()).ok_or(Error::EmptyTree)
    }

    pub fn near_radius(&self, q: &Configuration, radius: f64) -> Vec<usize> {
        self.index.within(q.as_slice(), radius.max(0.0))
    }

    /// Lowest-loss node, ties to the lowest id.
    pub fn best_node(&self) -> Result<usize> {
        self.nodes
            .iter()
            .min_by(|a, b| a.loss.total_cmp(&b.loss).then(a.id.cmp(&b.id)))
            .map(|n| n.id)
            .ok_or(Error::EmptyTree)
    }

    pub fn depth(&self, id: usize) -> Result<usize> {
        let mut n = self.node(id)?;
        let mut depth = 0;
        while let Some(p) = n.parent {
            n = &self.nodes[p];
            depth += 1;
        }
        Ok(depth)
    }

    /// Configurations from the root to `id`.
    pub fn path_to_root(&self, id: usize) -> Result<Vec<Configuration>> {
        let mut n = self.node(id)?;
        let mut path = vec![n.q.clone()];
        while let Some(p) = n.parent {
            n = &self.nodes[p];
            path.push(n.q.clone());
        }
        path.reverse();
        Ok(path)
    }

    /// True if `ancestor` lies on the path from `id` to the root (inclusive).
    pub fn is_ancestor(&self, ancestor: usize, id: usize) -> bool {
        let mut cur = Some(id);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.nodes[c].parent;
        }
        false
    }

    fn set_parent(&mut self, id: usize, parent: usize) {
        if let Some(old) = self.nodes[id].parent {
            self.children[old].retain(|c| *c != id);
        }
        self.children[parent].push(id);
        self.nodes[id].parent = Some(parent);
        self.nodes[id].cost =
            self.nodes[parent].cost + distance(self.nodes[parent].q.as_slice(), self.nodes[id].q.as_slice());
        self.propagate_costs(id);
    }

    fn propagate_costs(&mut self, root: usize) {
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            for i in 0..self.children[n].len() {
                let c = self.children[n][i];
                self.nodes[c].cost =
                    self.nodes[n].cost + distance(self.nodes[n].q.as_slice(), self.nodes[c].q.as_slice());
                stack.push(c);
            }
        }
    }

    /// Choose-parent for `new_id` over `neighbors` (and its current parent),
    /// then reparent every neighbour whose cost strictly drops by going
    /// through `new_id`. Edges are accepted only if `edge_free` says so; the
    /// edge to the current parent is assumed free.
    pub fn rrt_star_rewire(
        &mut self,
        new_id: usize,
        neighbors: &[usize],
        mut edge_free: impl FnMut(&Configuration, &Configuration) -> bool,
    ) -> Result<Rewire> {
        let node = self.node(new_id)?;
        let current = node.parent.ok_or_else(|| {
            Error::InvalidParam("cannot rewire the root".into())
        })?;
        let q_new = node.q.clone();
        let leaf = self.children[new_id].is_empty();

        let mut candidates: Vec<(f64, usize)> = neighbors
            .iter()
            .copied()
            .chain(std::iter::once(current))
            .filter(|&c| c != new_id && c < self.nodes.len())
            .filter(|&c| leaf || !self.is_ancestor(new_id, c))
            .map(|c| (self.nodes[c].cost + self.nodes[c].q.distance(&q_new), c))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        candidates.dedup_by_key(|c| c.1);

        let mut parent = current;
        for &(cost, c) in &candidates {
            if c == current {
                break;
            }
            if cost >= self.nodes[new_id].cost {
                break;
            }
            if edge_free(&self.nodes[c].q, &q_new) {
                parent = c;
                break;
            }
        }
        if parent != current {
            self.set_parent(new_id, parent);
        }

        let mut sorted: Vec<usize> = neighbors.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut reparented = Vec::new();
        for nb in sorted {
            if nb == new_id || nb >= self.nodes.len() || Some(nb) == self.nodes[new_id].parent {
                continue;
            }
            let via = self.nodes[new_id].cost + self.nodes[nb].q.distance(&q_new);
            if via < self.nodes[nb].cost
                && !self.is_ancestor(nb, new_id)
                && edge_free(&q_new, &self.nodes[nb].q)
            {
                self.set_parent(nb, new_id);
                reparented.push(nb);
            }
        }
        Ok(Rewire { parent, reparented })
    }

    /// [`SearchTree::rrt_star_rewire`] with edges checked against a scene.
    pub fn rewire_in_scene(
        &mut self,
        new_id: usize,
        neighbors: &[usize],
        scene: &Scene,
        model: &RobotModel,
        resolution: f64,
    ) -> Result<Rewire> {
        self.rrt_star_rewire(new_id, neighbors, |a, b| {
            scene.edge_collision_free(model, a, b, resolution)
        })
    }

    /// Delimited export: `id,parent,cost,loss,opt_i,q0,...`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,parent,cost,loss,opt_i");
        for j in 0..self.dim {
            let _ = write!(out, ",q{j}");
        }
        out.push('\n');
        for n in &self.nodes {
            let parent = n.parent.map(|p| p.to_string()).unwrap_or_default();
            let _ = write!(out, "{},{},{},{},{}", n.id, parent, n.cost, n.loss, n.opt.i);
            for x in n.q.as_slice() {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{fresh_state, Strategy};

    fn zero(d: usize) -> OptState {
        fresh_state(Strategy::Adam, d)
    }

    fn q(v: &[f64]) -> Configuration {
        Configuration::new(v.to_vec())
    }

    #[test]
    fn insert_costs() {
        let mut t = SearchTree::new(2);
        let root = t.insert(q(&[0.0, 0.0]), None, 1.0, zero(2)).unwrap();
        assert_eq!(root, 0);
        assert_eq!(t.node(0).unwrap().cost, 0.0);
        let a = t.insert(q(&[0.04, 0.0]), Some(0), 1.0, zero(2)).unwrap();
        assert!((t.node(a).unwrap().cost - 0.04).abs() < 1e-15);
        let b = t.insert(q(&[0.0, 0.03]), Some(0), 1.0, zero(2)).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.children(0), &[a, b]);
    }

    #[test]
    fn insert_errors() {
        let mut t = SearchTree::new(2);
        assert!(matches!(t.insert(q(&[0.0, 0.0]), Some(3), 0.0, zero(2)), Err(Error::UnknownNode(3))));
        t.insert(q(&[0.0, 0.0]), None, 0.0, zero(2)).unwrap();
        assert!(t.insert(q(&[1.0, 0.0]), None, 0.0, zero(2)).is_err());
        assert!(t.insert(q(&[1.0]), Some(0), 0.0, zero(1)).is_err());
    }

    #[test]
    fn nearest_basics() {
        let mut t = SearchTree::new(2);
        assert!(matches!(t.nearest(&q(&[0.0, 0.0])), Err(Error::EmptyTree)));
        t.insert(q(&[1.0, 1.0]), None, 0.0, zero(2)).unwrap();
        assert_eq!(t.nearest(&q(&[5.0, 5.0])).unwrap(), 0);
        t.insert(q(&[2.0, 2.0]), Some(0), 0.0, zero(2)).unwrap();
        t.insert(q(&[2.0, 2.0]), Some(0), 0.0, zero(2)).unwrap();
        assert_eq!(t.nearest(&q(&[2.1, 2.0])).unwrap(), 1);
    }

    #[test]
    fn kd_index_matches_linear_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for dim in [1, 2, 5] {
            let mut kd = KdIndex::new(dim);
            let mut lin = LinearScan::new(dim);
            for n in 0..3000 {
                // coarse grid so that duplicates and exact ties are common
                let p: Vec<f64> = (0..dim).map(|_| rng.random_range(-4..=4) as f64 * 0.25).collect();
                kd.insert(&p);
                lin.insert(&p);
                if n % 7 == 0 {
                    let probe: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.2..1.2)).collect();
                    assert_eq!(kd.nearest(&probe), lin.nearest(&probe));
                    assert_eq!(kd.nearest(&p), lin.nearest(&p));
                    assert_eq!(kd.within(&probe, 0.5), lin.within(&probe, 0.5));
                    assert_eq!(kd.within(&p, 0.0), lin.within(&p, 0.0));
                }
            }
            assert_eq!(kd.len(), lin.len());
        }
    }

    #[test]
    fn near_radius_edges() {
        let mut t = SearchTree::new(2);
        t.insert(q(&[0.0, 0.0]), None, 0.0, zero(2)).unwrap();
        t.insert(q(&[1.0, 0.0]), Some(0), 0.0, zero(2)).unwrap();
        assert!(t.near_radius(&q(&[0.5, 0.0]), 0.0).is_empty());
        assert_eq!(t.near_radius(&q(&[1.0, 0.0]), 0.0), vec![1]);
        assert_eq!(t.near_radius(&q(&[0.5, 0.0]), 0.5), vec![0, 1]);
    }

    #[test]
    fn shortcut_reparents_middle_node() {
        // root -> a -> b, where b could hang directly off the root
        let mut t = SearchTree::new(2);
        t.insert(q(&[0.0, 0.0]), None, 0.0, zero(2)).unwrap();
        let a = t.insert(q(&[0.0, 1.0]), Some(0), 0.0, zero(2)).unwrap();
        let b = t.insert(q(&[1.0, 1.0]), Some(a), 0.0, zero(2)).unwrap();
        let c = t.insert(q(&[1.0, 0.0]), Some(0), 0.0, zero(2)).unwrap();
        // b currently costs 2; through c it costs 2 as well, so nothing moves
        let r = t.rrt_star_rewire(c, &[0, a, b], |_, _| true).unwrap();
        assert!(r.reparented.is_empty());
        let before = t.node(b).unwrap().cost;
        // a new node on the diagonal gives b a strictly shorter route
        let m = t.insert(q(&[0.6, 0.6]), Some(a), 0.0, zero(2)).unwrap();
        let r = t.rrt_star_rewire(m, &[0, a, b, c], |_, _| true).unwrap();
        assert_eq!(r.parent, 0);
        assert_eq!(r.reparented, vec![b]);
        assert!(t.node(b).unwrap().cost < before);
        assert_eq!(t.node(b).unwrap().parent, Some(m));
    }

    #[test]
    fn blocked_edges_are_not_used() {
        let mut t = SearchTree::new(2);
        t.insert(q(&[0.0, 0.0]), None, 0.0, zero(2)).unwrap();
        let a = t.insert(q(&[0.0, 1.0]), Some(0), 0.0, zero(2)).unwrap();
        let m = t.insert(q(&[0.5, 1.5]), Some(a), 0.0, zero(2)).unwrap();
        let r = t.rrt_star_rewire(m, &[0, a], |_, _| false).unwrap();
        assert_eq!(r, Rewire { parent: a, reparented: vec![] });
    }

    #[test]
    fn rewire_leaves_opt_states_alone() {
        let mut t = SearchTree::new(1);
        t.insert(q(&[0.0]), None, 0.0, zero(1)).unwrap();
        let mut s = zero(1);
        s.m = vec![0.3];
        s.v = vec![0.2];
        s.i = 4;
        let a = t.insert(q(&[1.0]), Some(0), 0.0, zero(1)).unwrap();
        let b = t.insert(q(&[0.5]), Some(a), 0.0, s.clone()).unwrap();
        t.rrt_star_rewire(b, &[0, a], |_, _| true).unwrap();
        assert_eq!(t.node(b).unwrap().parent, Some(0));
        assert_eq!(t.node(b).unwrap().opt, s);
    }

    #[test]
    fn paths() {
        let mut t = SearchTree::new(1);
        t.insert(q(&[0.0]), None, 0.0, zero(1)).unwrap();
        assert_eq!(t.path_to_root(0).unwrap(), vec![q(&[0.0])]);
        let mut last = 0;
        for i in 1..=3 {
            last = t.insert(q(&[i as f64]), Some(last), 0.0, zero(1)).unwrap();
        }
        let p = t.path_to_root(last).unwrap();
        assert_eq!(p, vec![q(&[0.0]), q(&[1.0]), q(&[2.0]), q(&[3.0])]);
        assert_eq!(t.depth(last).unwrap(), p.len() - 1);
        assert!(t.path_to_root(9).is_err());
    }

    #[test]
    fn csv_export() {
        let mut t = SearchTree::new(2);
        t.insert(q(&[0.0, 0.5]), None, 2.0, zero(2)).unwrap();
        t.insert(q(&[0.0, 0.6]), Some(0), 1.0, zero(2)).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "id,parent,cost,loss,opt_i,q0,q1");
        assert_eq!(lines[1], "0,,0,2,0,0,0.5");
        assert!(lines[2].starts_with("1,0,"));
    }
}
