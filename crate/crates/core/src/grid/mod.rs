//! Structured rectangular grids in one to three dimensions, fields on their
//! nodes, finite-difference calculus and trapezoid quadrature.
//!
//! Nodes are stored in row-major (C) order: the last axis varies fastest.
//! Points are passed around as `[f64; 3]`; components beyond the grid
//! dimension are ignored and kept at zero.

mod io;

pub use io::{read_binary, read_csv, write_binary, write_csv, BINARY_MAGIC};

use serde::{Deserialize, Serialize};

use crate::error::{config, input, Result};

/// A point in up to three dimensions.
pub type Point = [f64; 3];

/// Euclidean distance between two points over the first `dim` components.
#[inline]
pub fn distance(a: &Point, b: &Point, dim: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..dim {
        let d = a[k] - b[k];
        s += d * d;
    }
    s.sqrt()
}

/// Rectangular lattice on a box `[lo_1, hi_1] x ... x [lo_n, hi_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    dim: usize,
    lo: [f64; 3],
    hi: [f64; 3],
    nodes: [usize; 3],
    spacing: [f64; 3],
    strides: [usize; 3],
}

/// Serialized description of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub extents: Vec<[f64; 2]>,
    pub nodes: Vec<usize>,
}

impl TryFrom<GridSpec> for Grid {
    type Error = crate::Error;

    fn try_from(spec: GridSpec) -> Result<Grid> {
        let ext: Vec<(f64, f64)> = spec.extents.iter().map(|e| (e[0], e[1])).collect();
        Grid::new(&ext, &spec.nodes)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> GridSpec {
        GridSpec {
            extents: (0..g.dim).map(|a| [g.lo[a], g.hi[a]]).collect(),
            nodes: g.nodes[..g.dim].to_vec(),
        }
    }
}

impl Grid {
    /// Build a grid from per-axis extents and node counts.
    pub fn new(extents: &[(f64, f64)], nodes: &[usize]) -> Result<Grid> {
        let dim = extents.len();
        if !(1..=3).contains(&dim) {
            return config(format!("grid dimension must be 1, 2 or 3, got {dim}"));
        }
        if nodes.len() != dim {
            return config(format!(
                "grid has {dim} extents but {} node counts",
                nodes.len()
            ));
        }
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        let mut n = [1usize; 3];
        let mut spacing = [0.0; 3];
        for a in 0..dim {
            let (l, h) = extents[a];
            if !(l.is_finite() && h.is_finite()) || h <= l {
                return config(format!("axis {a}: extent [{l}, {h}] is empty or not finite"));
            }
            if nodes[a] < 3 {
                return config(format!("axis {a}: need at least 3 nodes, got {}", nodes[a]));
            }
            lo[a] = l;
            hi[a] = h;
            n[a] = nodes[a];
            spacing[a] = (h - l) / (nodes[a] - 1) as f64;
        }
        let mut strides = [0usize; 3];
        let mut s = 1;
        for a in (0..dim).rev() {
            strides[a] = s;
            s *= n[a];
        }
        Ok(Grid {
            dim,
            lo,
            hi,
            nodes: n,
            spacing,
            strides,
        })
    }

    /// Isotropic grid on `[lo, hi]^dim` with `nodes` nodes per axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, nodes: usize) -> Result<Grid> {
        Grid::new(&vec![(lo, hi); dim], &vec![nodes; dim])
    }

    /// Grid on `[0,1]^dim` with spacing as close as possible to (and not above) `h`.
    pub fn unit_with_spacing(dim: usize, h: f64) -> Result<Grid> {
        if !(h > 0.0) {
            return config("spacing must be positive");
        }
        let cells = (1.0 / h - 1e-9).ceil().max(2.0) as usize;
        Grid::cube(dim, 0.0, 1.0, cells + 1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes(&self, axis: usize) -> usize {
        self.nodes[axis]
    }

    pub fn node_counts(&self) -> &[usize] {
        &self.nodes[..self.dim]
    }

    pub fn extent(&self, axis: usize) -> (f64, f64) {
        (self.lo[axis], self.hi[axis])
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacings().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacings().iter().cloned().fold(0.0, f64::max)
    }

    pub(crate) fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.nodes[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Product of the spacings.
    pub fn cell_volume(&self) -> f64 {
        self.spacings().iter().product()
    }

    /// Lebesgue measure of the box.
    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.hi[a] - self.lo[a]).product()
    }

    /// Length of the box diagonal.
    pub fn diameter(&self) -> f64 {
        (0..self.dim)
            .map(|a| (self.hi[a] - self.lo[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for a in 0..self.dim {
            debug_assert!(idx[a] < self.nodes[a]);
            flat += idx[a] * self.strides[a];
        }
        flat
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rem = flat;
        for a in 0..self.dim {
            idx[a] = rem / self.strides[a];
            rem %= self.strides[a];
        }
        idx
    }

    #[inline]
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + i as f64 * self.spacing[axis]
    }

    pub fn coord(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let mut p = [0.0; 3];
        for a in 0..self.dim {
            p[a] = self.axis_coord(a, idx[a]);
        }
        p
    }

    /// Trapezoid weight of a node along one axis.
    #[inline]
    pub fn axis_weight(&self, axis: usize, i: usize) -> f64 {
        let h = self.spacing[axis];
        if i == 0 || i + 1 == self.nodes[axis] {
            0.5 * h
        } else {
            h
        }
    }

    /// Quadrature weight of a node: product of per-axis trapezoid weights.
    pub fn weight(&self, flat: usize) -> f64 {
        let idx = self.multi_index(flat);
        (0..self.dim).map(|a| self.axis_weight(a, idx[a])).product()
    }

    /// Quadrature weights of all nodes, in storage order.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = vec![1.0; self.len()];
        for a in 0..self.dim {
            let n = self.nodes[a];
            let s = self.strides[a];
            for (flat, wf) in w.iter_mut().enumerate() {
                let i = (flat / s) % n;
                *wf *= self.axis_weight(a, i);
            }
        }
        w
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        let idx = self.multi_index(flat);
        (0..self.dim).any(|a| idx[a] == 0 || idx[a] + 1 == self.nodes[a])
    }

    /// Face neighbors of a node (up to `2 * dim`).
    pub fn neighbors(&self, flat: usize) -> impl Iterator<Item = usize> + '_ {
        let idx = self.multi_index(flat);
        (0..self.dim).flat_map(move |a| {
            let s = self.strides[a];
            let lower = (idx[a] > 0).then(|| flat - s);
            let upper = (idx[a] + 1 < self.nodes[a]).then(|| flat + s);
            lower.into_iter().chain(upper)
        })
    }

    /// Euclidean distance from a point to the boundary of the box (0 outside).
    pub fn distance_to_boundary(&self, p: &Point) -> f64 {
        (0..self.dim)
            .map(|a| (p[a] - self.lo[a]).min(self.hi[a] - p[a]))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    /// Node nearest to a point (clamped into the box).
    pub fn nearest_node(&self, p: &Point) -> usize {
        let mut idx = [0usize; 3];
        for a in 0..self.dim {
            let t = ((p[a] - self.lo[a]) / self.spacing[a]).round();
            idx[a] = t.clamp(0.0, (self.nodes[a] - 1) as f64) as usize;
        }
        self.index(&idx)
    }

    /// Multilinear interpolation of nodal values at a point (clamped into the box).
    pub fn interpolate(&self, values: &[f64], p: &Point) -> f64 {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..self.dim {
            let t = ((p[a] - self.lo[a]) / self.spacing[a]).clamp(0.0, (self.nodes[a] - 1) as f64);
            let i = (t.floor() as usize).min(self.nodes[a] - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut flat = 0;
            for a in 0..self.dim {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                flat += (base[a] + bit) * self.strides[a];
            }
            if w != 0.0 {
                acc += w * values[flat];
            }
        }
        acc
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return input("fields live on different grids");
        }
        Ok(())
    }

    /// Sum of `values * weight` over (optionally masked) nodes in storage order.
    pub fn integrate_values(&self, values: &[f64], mask: Option<&NodeMask>) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let mut acc = 0.0;
        self.for_each_weight(|flat, w| {
            if mask.map_or(true, |m| m.get(flat)) {
                acc += values[flat] * w;
            }
        });
        acc
    }

    /// Visit every node with its quadrature weight in storage order.
    pub(crate) fn for_each_weight(&self, mut f: impl FnMut(usize, f64)) {
        let [n0, n1, n2] = self.nodes;
        let mut flat = 0;
        for i in 0..n0 {
            let w0 = self.axis_weight(0, i);
            for j in 0..n1 {
                let w1 = if self.dim > 1 { w0 * self.axis_weight(1, j) } else { w0 };
                for k in 0..n2 {
                    let w = if self.dim > 2 { w1 * self.axis_weight(2, k) } else { w1 };
                    f(flat, w);
                    flat += 1;
                }
            }
        }
    }
}

/// Boolean predicate over grid nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMask(Vec<bool>);

impl NodeMask {
    pub fn new(bits: Vec<bool>) -> NodeMask {
        NodeMask(bits)
    }

    pub fn all(len: usize, value: bool) -> NodeMask {
        NodeMask(vec![value; len])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&Point) -> bool) -> NodeMask {
        NodeMask((0..grid.len()).map(|i| f(&grid.coord(i))).collect())
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.0[i] = v;
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn any(&self) -> bool {
        self.0.iter().any(|b| *b)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// Indices of the selected nodes, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i)
    }

    pub fn is_subset_of(&self, other: &NodeMask) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| !*a || *b)
    }

    pub fn and(&self, other: &NodeMask) -> NodeMask {
        NodeMask(self.0.iter().zip(&other.0).map(|(a, b)| *a && *b).collect())
    }

    pub fn not(&self) -> NodeMask {
        NodeMask(self.0.iter().map(|b| !*b).collect())
    }

    /// Coordinates of the selected nodes.
    pub fn points(&self, grid: &Grid) -> Vec<Point> {
        self.indices().map(|i| grid.coord(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    /// Values constrained to `[-1, 1]`.
    Phase,
    Free,
}

/// Real values on the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
    kind: FieldKind,
}

impl Field {
    pub fn new(grid: Grid, kind: FieldKind, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return input(format!(
                "field has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            ));
        }
        if kind == FieldKind::Phase {
            if let Some(v) = values.iter().find(|v| !(**v >= -1.0 && **v <= 1.0)) {
                return input(format!("phase field value {v} outside [-1, 1]"));
            }
        }
        Ok(Field { grid, values, kind })
    }

    pub fn constant(grid: &Grid, kind: FieldKind, c: f64) -> Field {
        let c = if kind == FieldKind::Phase { c.clamp(-1.0, 1.0) } else { c };
        Field {
            values: vec![c; grid.len()],
            grid: grid.clone(),
            kind,
        }
    }

    /// Sample a function at the nodes. Phase fields are clamped into `[-1, 1]`.
    pub fn from_fn(grid: &Grid, kind: FieldKind, f: impl Fn(&Point) -> f64) -> Field {
        let mut values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.coord(i))).collect();
        if kind == FieldKind::Phase {
            for v in &mut values {
                *v = v.clamp(-1.0, 1.0);
            }
        }
        Field {
            grid: grid.clone(),
            values,
            kind,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise negation; phase fields stay phase fields.
    pub fn negated(&self) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| -v).collect(),
            kind: self.kind,
        }
    }

    /// Reinterpret as an unrestricted field.
    pub fn into_free(mut self) -> Field {
        self.kind = FieldKind::Free;
        self
    }

    /// `max |a - b|` over nodes.
    pub fn linf_distance(&self, other: &Field) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// `∫ |a - b|` by trapezoid quadrature.
    pub fn l1_distance(&self, other: &Field) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let diff: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .collect();
        Ok(self.grid.integrate_values(&diff, None))
    }

    /// Values along the grid line through `node` parallel to `axis`.
    pub fn line_values(&self, node: usize, axis: usize) -> Vec<f64> {
        let mut idx = self.grid.multi_index(node);
        (0..self.grid.nodes(axis))
            .map(|i| {
                idx[axis] = i;
                self.values[self.grid.index(&idx)]
            })
            .collect()
    }
}

/// `dim` real components per node, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    data: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: &Grid) -> VectorField {
        VectorField {
            data: vec![0.0; grid.len() * grid.dim()],
            grid: grid.clone(),
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&Point) -> Point) -> VectorField {
        let dim = grid.dim();
        let mut data = Vec::with_capacity(grid.len() * dim);
        for i in 0..grid.len() {
            let v = f(&grid.coord(i));
            data.extend_from_slice(&v[..dim]);
        }
        VectorField {
            grid: grid.clone(),
            data,
        }
    }

    pub fn new(grid: Grid, data: Vec<f64>) -> Result<VectorField> {
        if data.len() != grid.len() * grid.dim() {
            return input("vector field length does not match grid");
        }
        Ok(VectorField { grid, data })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn at(&self, node: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.data[node * d..(node + 1) * d]
    }

    #[inline]
    pub fn at_mut(&mut self, node: usize) -> &mut [f64] {
        let d = self.grid.dim();
        &mut self.data[node * d..(node + 1) * d]
    }

    /// One component as a flat vector.
    pub fn component(&self, axis: usize) -> Vec<f64> {
        let d = self.grid.dim();
        self.data.iter().skip(axis).step_by(d).cloned().collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| self.at(i).iter().map(|c| c * c).sum::<f64>().sqrt())
            .collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.norms().into_iter().fold(0.0, f64::max)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Derivative of nodal values along one axis: central differences inside,
/// second-order one-sided differences at the two ends of each grid line.
pub fn axis_derivative(grid: &Grid, values: &[f64], axis: usize) -> Vec<f64> {
    let n = grid.nodes(axis);
    let s = grid.stride(axis);
    let h = grid.spacing(axis);
    let mut out = vec![0.0; values.len()];
    for (flat, o) in out.iter_mut().enumerate() {
        let i = (flat / s) % n;
        *o = if i == 0 {
            (-3.0 * values[flat] + 4.0 * values[flat + s] - values[flat + 2 * s]) / (2.0 * h)
        } else if i + 1 == n {
            (3.0 * values[flat] - 4.0 * values[flat - s] + values[flat - 2 * s]) / (2.0 * h)
        } else {
            (values[flat + s] - values[flat - s]) / (2.0 * h)
        };
    }
    out
}

/// Gradient of a field.
pub fn gradient(u: &Field) -> VectorField {
    gradient_of(u.grid(), u.values())
}

pub(crate) fn gradient_of(grid: &Grid, values: &[f64]) -> VectorField {
    let dim = grid.dim();
    let mut out = VectorField::zeros(grid);
    for a in 0..dim {
        let d = axis_derivative(grid, values, a);
        for (i, v) in d.into_iter().enumerate() {
            out.data[i * dim + a] = v;
        }
    }
    out
}

/// Squared gradient magnitude per node assembled from edge differences: along
/// each axis, the mean of the squared one-sided differences available at the
/// node. Weighted by the quadrature weights this sums exactly to the
/// edge-based Dirichlet integral `Σ_edges ω_e (Δu / h)^2`.
pub fn edge_gradient_sq(u: &Field) -> Vec<f64> {
    edge_gradient_sq_of(u.grid(), u.values())
}

pub(crate) fn edge_gradient_sq_of(grid: &Grid, values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for a in 0..grid.dim() {
        let n = grid.nodes(a);
        let s = grid.stride(a);
        let inv_h2 = 1.0 / (grid.spacing(a) * grid.spacing(a));
        for (flat, o) in out.iter_mut().enumerate() {
            let i = (flat / s) % n;
            let v = values[flat];
            *o += if i == 0 {
                (values[flat + s] - v).powi(2) * inv_h2
            } else if i + 1 == n {
                (v - values[flat - s]).powi(2) * inv_h2
            } else {
                0.5 * ((values[flat + s] - v).powi(2) + (v - values[flat - s]).powi(2)) * inv_h2
            };
        }
    }
    out
}

/// Trapezoid quadrature of a field, optionally restricted to a node mask.
pub fn integrate(f: &Field, mask: Option<&NodeMask>) -> f64 {
    f.grid().integrate_values(f.values(), mask)
}

/// Nodes within Euclidean distance `r` of `center`.
pub fn ball_mask(grid: &Grid, center: &Point, r: f64) -> NodeMask {
    let mut bits = vec![false; grid.len()];
    grid.for_each_in_ball(center, r, |i| bits[i] = true);
    NodeMask(bits)
}

impl Grid {
    /// Visit the nodes of a closed ball in storage order.
    pub fn for_each_in_ball(&self, center: &Point, r: f64, mut f: impl FnMut(usize)) {
        let dim = self.dim;
        let mut lo_i = [0usize; 3];
        let mut hi_i = [0usize; 3];
        for a in 0..dim {
            let h = self.spacing[a];
            let n = self.nodes[a] as f64;
            let first = ((center[a] - r - self.lo[a]) / h).floor().clamp(0.0, n - 1.0);
            let last = ((center[a] + r - self.lo[a]) / h).ceil().clamp(0.0, n - 1.0);
            lo_i[a] = first as usize;
            hi_i[a] = last as usize;
        }
        let r2 = r * r;
        let mut idx = lo_i;
        loop {
            let mut d2 = 0.0;
            for a in 0..dim {
                let d = self.axis_coord(a, idx[a]) - center[a];
                d2 += d * d;
            }
            if d2 <= r2 {
                f(self.index(&idx));
            }
            // odometer over the index box, last axis fastest
            let mut a = dim;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                if idx[a] < hi_i[a] {
                    idx[a] += 1;
                    break;
                }
                idx[a] = lo_i[a];
            }
        }
    }
}

/// Pointwise clamp into `[-1, 1]`; the result is a phase field.
pub fn clamp_phase(u: &Field) -> Field {
    Field {
        grid: u.grid.clone(),
        values: u.values.iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
        kind: FieldKind::Phase,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spacing_and_counts() {
        let g = Grid::new(&[(0.0, 1.0), (-1.0, 2.0)], &[5, 7]).unwrap();
        assert_eq!(g.len(), 35);
        assert_eq!(g.spacing(0), 0.25);
        assert_eq!(g.spacing(1), 3.0 / 6.0);
        assert_eq!(g.coord(g.index(&[4, 6])), [1.0, 2.0, 0.0]);
        assert!(Grid::new(&[(0.0, 1.0)], &[2]).is_err());
        assert!(Grid::new(&[(1.0, 0.0)], &[3]).is_err());
        assert!(Grid::new(&[(0.0, 1.0); 4], &[3; 4]).is_err());
    }

    #[test]
    fn gradient_of_constant_and_affine() {
        let g = Grid::cube(2, 0.0, 1.0, 9).unwrap();
        let c = Field::constant(&g, FieldKind::Free, 3.5);
        assert_eq!(gradient(&c).max_norm(), 0.0);

        let x = Field::from_fn(&g, FieldKind::Free, |p| p[0]);
        let gx = gradient(&x);
        for i in 0..g.len() {
            assert_abs_diff_eq!(gx.at(i)[0], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(gx.at(i)[1], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn central_difference_of_quadratic() {
        let g = Grid::cube(1, 0.0, 1.0, 5).unwrap();
        let u = Field::from_fn(&g, FieldKind::Free, |p| p[0] * p[0]);
        let du = gradient(&u);
        // node x = 0.5: (0.75^2 - 0.25^2) / 0.5
        assert_abs_diff_eq!(du.at(2)[0], 1.0, epsilon = 1e-14);
        // second-order one-sided stencils are exact for quadratics too
        assert_abs_diff_eq!(du.at(0)[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(du.at(4)[0], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn quadrature_examples() {
        let g = Grid::cube(2, 0.0, 1.0, 13).unwrap();
        let one = Field::constant(&g, FieldKind::Free, 1.0);
        assert_abs_diff_eq!(integrate(&one, None), 1.0, epsilon = 1e-14);

        let g1 = Grid::cube(1, 0.0, 1.0, 5).unwrap();
        let one = Field::constant(&g1, FieldKind::Free, 1.0);
        let left = NodeMask::from_fn(&g1, |p| p[0] < 0.5);
        // nodes 0, 0.25 with weights 0.125 + 0.25
        let v = integrate(&one, Some(&left));
        assert!((v - 0.5).abs() <= 0.25);
        assert_abs_diff_eq!(v, 0.375, epsilon = 1e-15);

        let x = Field::from_fn(&g1, FieldKind::Free, |p| p[0]);
        assert_abs_diff_eq!(integrate(&x, None), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ball_mask_examples() {
        let g = Grid::cube(2, 0.0, 1.0, 3).unwrap();
        let m = ball_mask(&g, &[0.5, 0.5, 0.0], 0.5);
        assert_eq!(m.count(), 5);
        let tiny = ball_mask(&g, &[0.5, 0.5, 0.0], 0.1);
        assert_eq!(tiny.indices().collect::<Vec<_>>(), vec![g.index(&[1, 1])]);
        let big = ball_mask(&g, &[0.5, 0.5, 0.0], 10.0);
        assert_eq!(big.count(), 9);
    }

    #[test]
    fn clamp_examples() {
        let g = Grid::cube(1, 0.0, 1.0, 3).unwrap();
        let u = Field::new(g, FieldKind::Free, vec![3.2, -7.0, 0.25]).unwrap();
        let c = clamp_phase(&u);
        assert_eq!(c.values(), &[1.0, -1.0, 0.25]);
        assert_eq!(clamp_phase(&c), c);
    }

    #[test]
    fn edge_gradient_sums_to_edge_dirichlet() {
        let g = Grid::new(&[(0.0, 1.0), (0.0, 2.0)], &[6, 9]).unwrap();
        let u = Field::from_fn(&g, FieldKind::Free, |p| (3.0 * p[0]).sin() * p[1] * p[1]);
        let gsq = edge_gradient_sq(&u);
        let lumped = g.integrate_values(&gsq, None);
        let mut direct = 0.0;
        for flat in 0..g.len() {
            let idx = g.multi_index(flat);
            for a in 0..2 {
                if idx[a] + 1 < g.nodes(a) {
                    let q = flat + g.stride(a);
                    let b = 1 - a;
                    let w = g.spacing(a) * g.axis_weight(b, idx[b]);
                    direct += w * ((u.values()[q] - u.values()[flat]) / g.spacing(a)).powi(2);
                }
            }
        }
        assert_abs_diff_eq!(lumped, direct, epsilon = 1e-12 * direct);
    }

    #[test]
    fn interpolation_is_exact_for_multilinear() {
        let g = Grid::cube(2, 0.0, 1.0, 5).unwrap();
        let u = Field::from_fn(&g, FieldKind::Free, |p| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1]);
        let p = [0.37, 0.81, 0.0];
        let exact = 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
        assert_abs_diff_eq!(g.interpolate(u.values(), &p), exact, epsilon = 1e-14);
    }
}
