//! Interface extraction, transition bands, Hausdorff distances and connected
//! components.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::grid::{distance, Field, Grid, NodeMask, Point};

/// Nodes with `|u| ≥ 1 − BAND_TOLERANCE` count as pure phase.
pub const BAND_TOLERANCE: f64 = 1e-9;

/// Discrete level set: crossing points on a 1D grid, a polyline soup in 2D,
/// a triangle soup in 3D.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InterfaceMesh {
    /// Dimension of the extracted set (0, 1 or 2).
    pub dim: usize,
    /// Ambient dimension.
    pub ambient_dim: usize,
    pub vertices: Vec<Point>,
    pub segments: Vec<[usize; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Total length (2D), area (3D), or number of crossing points (1D).
    pub length_or_area: f64,
    /// Set when the requested level is not strictly inside the range of the field.
    pub out_of_range: bool,
}

impl InterfaceMesh {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Points spread along the mesh: every vertex plus extra points on
    /// segments longer than `spacing` (triangles contribute their vertices
    /// and centroids).
    pub fn sample_points(&self, spacing: f64) -> Vec<Point> {
        let mut out = self.vertices.clone();
        for [a, b] in &self.segments {
            let (pa, pb) = (self.vertices[*a], self.vertices[*b]);
            let len = distance(&pa, &pb, self.ambient_dim);
            let k = (len / spacing).floor() as usize;
            for s in 1..=k {
                let t = s as f64 / (k + 1) as f64;
                out.push(lerp(&pa, &pb, t));
            }
        }
        for tri in &self.triangles {
            let mut c = [0.0; 3];
            for v in tri {
                for (ck, vk) in c.iter_mut().zip(&self.vertices[*v]) {
                    *ck += vk / 3.0;
                }
            }
            out.push(c);
        }
        out
    }

    /// Vertices of the polyline ordered by arc length is not guaranteed;
    /// this picks `count` points spread along the segment list instead.
    pub fn evenly_spaced(&self, count: usize, accept: impl Fn(&Point) -> bool) -> Vec<Point> {
        let candidates: Vec<Point> = self
            .segments
            .iter()
            .map(|[a, b]| lerp(&self.vertices[*a], &self.vertices[*b], 0.5))
            .chain(self.triangles.iter().map(|t| {
                let mut c = [0.0; 3];
                for v in t {
                    for (ck, vk) in c.iter_mut().zip(&self.vertices[*v]) {
                        *ck += vk / 3.0;
                    }
                }
                c
            }))
            .chain(if self.dim == 0 { self.vertices.clone() } else { Vec::new() })
            .filter(|p| accept(p))
            .collect();
        if candidates.is_empty() || count == 0 {
            return Vec::new();
        }
        if candidates.len() <= count {
            return candidates;
        }
        (0..count)
            .map(|k| candidates[k * candidates.len() / count])
            .collect()
    }
}

fn lerp(a: &Point, b: &Point, t: f64) -> Point {
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

/// Interpolated crossing between an "above" node `a` and a "below" node `b`.
fn crossing(pa: &Point, ua: f64, pb: &Point, ub: f64, t: f64) -> Point {
    let s = ((t - ua) / (ub - ua)).clamp(0.0, 1.0);
    lerp(pa, pb, s)
}

/// Extract `{u = t}` by linear interpolation along grid edges. Nodes with
/// `u ≥ t` count as above the level.
pub fn extract_level_set(u: &Field, t: f64) -> InterfaceMesh {
    let g = u.grid();
    let mut mesh = InterfaceMesh {
        dim: g.dim() - 1,
        ambient_dim: g.dim(),
        ..Default::default()
    };
    if !(t > u.min() && t < u.max()) {
        mesh.out_of_range = true;
        return mesh;
    }
    match g.dim() {
        1 => level_points_1d(u, t, &mut mesh),
        2 => marching_squares(u, t, &mut mesh),
        _ => marching_tetrahedra(u, t, &mut mesh),
    }
    mesh
}

fn level_points_1d(u: &Field, t: f64, mesh: &mut InterfaceMesh) {
    let g = u.grid();
    let v = u.values();
    for i in 0..g.len() - 1 {
        let (a, b) = (v[i] >= t, v[i + 1] >= t);
        if a != b {
            let (pi, pj) = (g.coord(i), g.coord(i + 1));
            let p = if a {
                crossing(&pi, v[i], &pj, v[i + 1], t)
            } else {
                crossing(&pj, v[i + 1], &pi, v[i], t)
            };
            mesh.vertices.push(p);
        }
    }
    mesh.length_or_area = mesh.vertices.len() as f64;
}

struct EdgeVertices<'a> {
    grid: &'a Grid,
    values: &'a [f64],
    level: f64,
    map: HashMap<(usize, usize), usize>,
}

impl EdgeVertices<'_> {
    fn vertex(&mut self, mesh: &mut InterfaceMesh, p: usize, q: usize) -> usize {
        let key = (p.min(q), p.max(q));
        if let Some(&v) = self.map.get(&key) {
            return v;
        }
        let (up, uq) = (self.values[p], self.values[q]);
        let (pp, pq) = (self.grid.coord(p), self.grid.coord(q));
        let pt = if up >= self.level {
            crossing(&pp, up, &pq, uq, self.level)
        } else {
            crossing(&pq, uq, &pp, up, self.level)
        };
        let id = mesh.vertices.len();
        mesh.vertices.push(pt);
        self.map.insert(key, id);
        id
    }
}

fn marching_squares(u: &Field, t: f64, mesh: &mut InterfaceMesh) {
    let g = u.grid();
    let v = u.values();
    let (nx, ny) = (g.nodes(0), g.nodes(1));
    let mut ev = EdgeVertices {
        grid: g,
        values: v,
        level: t,
        map: HashMap::new(),
    };
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let c = [
                g.index(&[i, j]),
                g.index(&[i + 1, j]),
                g.index(&[i + 1, j + 1]),
                g.index(&[i, j + 1]),
            ];
            let above: [bool; 4] = [v[c[0]] >= t, v[c[1]] >= t, v[c[2]] >= t, v[c[3]] >= t];
            let case = above
                .iter()
                .enumerate()
                .fold(0usize, |acc, (k, b)| acc | ((*b as usize) << k));
            if case == 0 || case == 15 {
                continue;
            }
            // edge k joins corners k and k+1 (mod 4)
            let edge = |k: usize| (c[k], c[(k + 1) % 4]);
            let pairs: Vec<(usize, usize)> = match case {
                5 | 10 => {
                    let center = 0.25 * (v[c[0]] + v[c[1]] + v[c[2]] + v[c[3]]);
                    let center_above = center >= t;
                    // isolate the corners that are not connected through the center
                    let isolate_odd = (case == 5) == center_above;
                    if isolate_odd {
                        vec![(0, 1), (2, 3)]
                    } else {
                        vec![(3, 0), (1, 2)]
                    }
                }
                _ => {
                    let cut: Vec<usize> = (0..4).filter(|k| above[*k] != above[(k + 1) % 4]).collect();
                    vec![(cut[0], cut[1])]
                }
            };
            for (ea, eb) in pairs {
                let (p0, p1) = edge(ea);
                let (q0, q1) = edge(eb);
                let a = ev.vertex(mesh, p0, p1);
                let b = ev.vertex(mesh, q0, q1);
                mesh.length_or_area += distance(&mesh.vertices[a], &mesh.vertices[b], 2);
                mesh.segments.push([a, b]);
            }
        }
    }
}

fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let x = [
        u[1] * w[2] - u[2] * w[1],
        u[2] * w[0] - u[0] * w[2],
        u[0] * w[1] - u[1] * w[0],
    ];
    0.5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// Kuhn decomposition of each cube into six tetrahedra along the main
/// diagonal; consistent across neighboring cubes, so no ambiguous cases.
fn marching_tetrahedra(u: &Field, t: f64, mesh: &mut InterfaceMesh) {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let g = u.grid();
    let v = u.values();
    let mut ev = EdgeVertices {
        grid: g,
        values: v,
        level: t,
        map: HashMap::new(),
    };
    for i in 0..g.nodes(0) - 1 {
        for j in 0..g.nodes(1) - 1 {
            for k in 0..g.nodes(2) - 1 {
                let base = [i, j, k];
                for perm in PERMS {
                    let mut idx = base;
                    let mut tet = [g.index(&idx); 4];
                    for (step, axis) in perm.iter().enumerate() {
                        idx[*axis] += 1;
                        tet[step + 1] = g.index(&idx);
                    }
                    let (above, below): (Vec<usize>, Vec<usize>) =
                        tet.iter().partition(|n| v[**n] >= t);
                    match above.len() {
                        1 | 3 => {
                            let (lone, rest) = if above.len() == 1 { (&above, &below) } else { (&below, &above) };
                            let a = ev.vertex(mesh, lone[0], rest[0]);
                            let b = ev.vertex(mesh, lone[0], rest[1]);
                            let c = ev.vertex(mesh, lone[0], rest[2]);
                            push_triangle(mesh, [a, b, c]);
                        }
                        2 => {
                            let ac = ev.vertex(mesh, above[0], below[0]);
                            let ad = ev.vertex(mesh, above[0], below[1]);
                            let bd = ev.vertex(mesh, above[1], below[1]);
                            let bc = ev.vertex(mesh, above[1], below[0]);
                            push_triangle(mesh, [ac, ad, bd]);
                            push_triangle(mesh, [ac, bd, bc]);
                        }
                        _ => {}
                    }
                }
            }
        }
    }
}

fn push_triangle(mesh: &mut InterfaceMesh, tri: [usize; 3]) {
    let area = triangle_area(
        &mesh.vertices[tri[0]],
        &mesh.vertices[tri[1]],
        &mesh.vertices[tri[2]],
    );
    mesh.length_or_area += area;
    mesh.triangles.push(tri);
}

/// Nodes with `|u| < 1 − BAND_TOLERANCE`.
pub fn transition_band(u: &Field) -> NodeMask {
    NodeMask::new(
        u.values()
            .iter()
            .map(|v| v.abs() < 1.0 - BAND_TOLERANCE)
            .collect(),
    )
}

fn directed_sq(a: &[Point], b: &[Point], dim: usize) -> f64 {
    a.par_iter()
        .map(|p| {
            b.iter().fold(f64::INFINITY, |m, q| {
                let mut s = 0.0;
                for k in 0..dim {
                    let d = p[k] - q[k];
                    s += d * d;
                }
                m.min(s)
            })
        })
        .reduce(|| 0.0, f64::max)
}

/// Symmetric Hausdorff distance between two finite point sets.
pub fn hausdorff(a: &[Point], b: &[Point], dim: usize) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return input("Hausdorff distance of an empty set");
    }
    Ok(directed_sq(a, b, dim).max(directed_sq(b, a, dim)).sqrt())
}

/// Hausdorff distance between the node sets selected by two masks.
pub fn hausdorff_masks(grid: &Grid, a: &NodeMask, b: &NodeMask) -> Result<f64> {
    hausdorff(&a.points(grid), &b.points(grid), grid.dim())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub nodes: usize,
    pub volume: f64,
    pub bbox_lo: Point,
    pub bbox_hi: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub components: Vec<Component>,
    /// Component label per node (`None` outside the mask).
    #[serde(skip)]
    pub labels: Vec<Option<usize>>,
}

impl ComponentReport {
    pub fn total_volume(&self) -> f64 {
        self.components.iter().map(|c| c.volume).sum()
    }

    pub fn smallest_volume(&self) -> Option<f64> {
        self.components.iter().map(|c| c.volume).reduce(f64::min)
    }
}

/// Face-adjacency flood fill; components are labeled in order of their
/// lowest node index.
pub fn connected_components(grid: &Grid, mask: &NodeMask) -> ComponentReport {
    let mut labels: Vec<Option<usize>> = vec![None; grid.len()];
    let mut comps = Vec::new();
    let cell = grid.cell_volume();
    let mut queue = VecDeque::new();
    for seed in 0..grid.len() {
        if !mask.get(seed) || labels[seed].is_some() {
            continue;
        }
        let label = comps.len();
        labels[seed] = Some(label);
        queue.push_back(seed);
        let mut count = 0;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        while let Some(p) = queue.pop_front() {
            count += 1;
            let c = grid.coord(p);
            for a in 0..grid.dim() {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            for q in grid.neighbors(p) {
                if mask.get(q) && labels[q].is_none() {
                    labels[q] = Some(label);
                    queue.push_back(q);
                }
            }
        }
        for a in grid.dim()..3 {
            lo[a] = 0.0;
            hi[a] = 0.0;
        }
        comps.push(Component {
            nodes: count,
            volume: count as f64 * cell,
            bbox_lo: lo,
            bbox_hi: hi,
        });
    }
    ComponentReport {
        components: comps,
        labels,
    }
}

/// Distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    distance(p, &lerp(a, b, t), 3)
}

fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: &Point, b: &Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Distance from `p` to the triangle `abc` (closest-point by Voronoi regions).
pub fn point_triangle_distance(p: &Point, a: &Point, b: &Point, c: &Point) -> f64 {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(&ab, &ap);
    let d2 = dot(&ac, &ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return distance(p, a, 3);
    }
    let bp = sub(p, b);
    let d3 = dot(&ab, &bp);
    let d4 = dot(&ac, &bp);
    if d3 >= 0.0 && d4 <= d3 {
        return distance(p, b, 3);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return point_segment_distance(p, a, b);
    }
    let cp = sub(p, c);
    let d5 = dot(&ab, &cp);
    let d6 = dot(&ac, &cp);
    if d6 >= 0.0 && d5 <= d6 {
        return distance(p, c, 3);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return point_segment_distance(p, a, c);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return point_segment_distance(p, b, c);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    let q = [
        a[0] + ab[0] * v + ac[0] * w,
        a[1] + ab[1] * v + ac[1] * w,
        a[2] + ab[2] * v + ac[2] * w,
    ];
    distance(p, &q, 3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FieldKind;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn straight_level_set() {
        let g = Grid::cube(2, 0.0, 1.0, 41).unwrap();
        let eps = 0.1;
        let u = Field::from_fn(&g, FieldKind::Phase, |p| (p[1] - 0.43) / eps);
        let m = extract_level_set(&u, 0.0);
        assert!(!m.out_of_range);
        assert_abs_diff_eq!(m.length_or_area, 1.0, epsilon = 1e-12);
        for v in &m.vertices {
            assert_abs_diff_eq!(v[1], 0.43, epsilon = 1e-12);
        }
    }

    #[test]
    fn circle_level_set_length() {
        let g = Grid::cube(2, 0.0, 1.0, 129).unwrap();
        let r = 0.25;
        let u = Field::from_fn(&g, FieldKind::Free, |p| r - ((p[0] - 0.5).hypot(p[1] - 0.5)));
        let m = extract_level_set(&u, 0.0);
        let rel = (m.length_or_area - 2.0 * PI * r).abs() / (2.0 * PI * r);
        assert!(rel < 1e-3, "{rel}");
        // closed curve: every vertex is shared by exactly two segments
        let mut deg = vec![0; m.vertices.len()];
        for [a, b] in &m.segments {
            deg[*a] += 1;
            deg[*b] += 1;
        }
        assert!(deg.iter().all(|d| *d == 2));
    }

    #[test]
    fn sphere_level_set_area() {
        let g = Grid::cube(3, 0.0, 1.0, 41).unwrap();
        let r = 0.3;
        let u = Field::from_fn(&g, FieldKind::Free, |p| {
            r - ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2) + (p[2] - 0.5).powi(2)).sqrt()
        });
        let m = extract_level_set(&u, 0.0);
        let rel = (m.length_or_area - 4.0 * PI * r * r).abs() / (4.0 * PI * r * r);
        assert!(rel < 0.02, "{rel}");
    }

    #[test]
    fn constant_field_is_flagged() {
        let g = Grid::cube(2, 0.0, 1.0, 5).unwrap();
        let u = Field::constant(&g, FieldKind::Phase, 1.0);
        let m = extract_level_set(&u, 0.0);
        assert!(m.out_of_range && m.is_empty());
    }

    #[test]
    fn one_dimensional_crossings() {
        let g = Grid::cube(1, 0.0, 1.0, 11).unwrap();
        let u = Field::from_fn(&g, FieldKind::Free, |p| (2.0 * PI * p[0]).cos());
        let m = extract_level_set(&u, 0.0);
        assert_eq!(m.length_or_area, 2.0);
    }

    #[test]
    fn band_and_components() {
        let g = Grid::cube(2, 0.0, 1.0, 51).unwrap();
        let eps = 0.05;
        let u = Field::from_fn(&g, FieldKind::Phase, |p| {
            let s = p[1];
            if s < 0.5 { (s - 0.3) / eps } else { -(s - 0.7) / eps }
        });
        let band = transition_band(&u);
        let rep = connected_components(&g, &band);
        assert_eq!(rep.components.len(), 2);
        assert_eq!(rep.components[0].nodes, rep.components[1].nodes);
        assert_abs_diff_eq!(rep.total_volume(), band.count() as f64 * g.cell_volume());
        let empty = transition_band(&Field::constant(&g, FieldKind::Phase, -1.0));
        assert!(!empty.any());
        assert!(connected_components(&g, &empty).components.is_empty());
    }

    #[test]
    fn hausdorff_basics() {
        let a: Vec<Point> = (0..=10).map(|i| [i as f64 / 10.0, 0.0, 0.0]).collect();
        let b: Vec<Point> = (0..=10).map(|i| [i as f64 / 10.0, 0.3, 0.0]).collect();
        assert_eq!(hausdorff(&a, &a, 2).unwrap(), 0.0);
        assert_abs_diff_eq!(hausdorff(&a, &b, 2).unwrap(), 0.3, epsilon = 1e-12);
        assert!(hausdorff(&a, &[], 2).is_err());
    }

    #[test]
    fn triangle_distance_regions() {
        let a = [0.0, 0.0, 0.0];
        let b = [1.0, 0.0, 0.0];
        let c = [0.0, 1.0, 0.0];
        assert_abs_diff_eq!(point_triangle_distance(&[0.2, 0.2, 0.5], &a, &b, &c), 0.5);
        assert_abs_diff_eq!(point_triangle_distance(&[-1.0, -1.0, 0.0], &a, &b, &c), 2f64.sqrt());
        assert_abs_diff_eq!(point_triangle_distance(&[1.0, 1.0, 0.0], &a, &b, &c), 0.5f64.sqrt());
        assert_abs_diff_eq!(point_triangle_distance(&[0.5, -2.0, 0.0], &a, &b, &c), 2.0);
    }
}
