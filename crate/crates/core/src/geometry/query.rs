//! Triangle and mesh proximity queries.
//!
//! Intersection and inside tests use exact orientation predicates so that
//! coplanar and edge-on-face contacts are decided without a tolerance.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::f64::consts::FRAC_1_SQRT_2;

use robust::{Coord, Coord3D};

use super::vec3::{add, cross, dist_sq, dot, scale, sub};
use super::{Aabb, GeometryError, Point, Tolerances, TriMesh};

type Tri = [Point; 3];

fn c3(p: Point) -> Coord3D<f64> {
    Coord3D {
        x: p[0],
        y: p[1],
        z: p[2],
    }
}

fn orient3d(a: Point, b: Point, c: Point, d: Point) -> f64 {
    robust::orient3d(c3(a), c3(b), c3(c), c3(d))
}

fn orient2d(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    robust::orient2d(
        Coord { x: a[0], y: a[1] },
        Coord { x: b[0], y: b[1] },
        Coord { x: c[0], y: c[1] },
    )
}

fn drop_axis(p: Point, axis: usize) -> [f64; 2] {
    match axis {
        0 => [p[1], p[2]],
        1 => [p[0], p[2]],
        _ => [p[0], p[1]],
    }
}

/// Axis whose removal leaves the triangle with non-zero projected area.
fn projection_axis(t: &Tri) -> Option<usize> {
    let n = cross(sub(t[1], t[0]), sub(t[2], t[0]));
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|a, b| n[*b].abs().total_cmp(&n[*a].abs()));
    axes.into_iter().find(|&axis| {
        orient2d(
            drop_axis(t[0], axis),
            drop_axis(t[1], axis),
            drop_axis(t[2], axis),
        ) != 0.0
    })
}

fn on_segment2(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> bool {
    r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
}

/// Closed 2D segment intersection.
fn segments_intersect2(p1: [f64; 2], p2: [f64; 2], p3: [f64; 2], p4: [f64; 2]) -> bool {
    let d1 = orient2d(p3, p4, p1);
    let d2 = orient2d(p3, p4, p2);
    let d3 = orient2d(p1, p2, p3);
    let d4 = orient2d(p1, p2, p4);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment2(p3, p4, p1))
        || (d2 == 0.0 && on_segment2(p3, p4, p2))
        || (d3 == 0.0 && on_segment2(p1, p2, p3))
        || (d4 == 0.0 && on_segment2(p1, p2, p4))
}

fn point_in_tri2(p: [f64; 2], t: [[f64; 2]; 3]) -> bool {
    let d1 = orient2d(t[0], t[1], p);
    let d2 = orient2d(t[1], t[2], p);
    let d3 = orient2d(t[2], t[0], p);
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

fn coplanar_segment_hits_triangle(p: Point, q: Point, t: &Tri, axis: usize) -> bool {
    let t2 = t.map(|v| drop_axis(v, axis));
    let (p2, q2) = (drop_axis(p, axis), drop_axis(q, axis));
    point_in_tri2(p2, t2)
        || point_in_tri2(q2, t2)
        || (0..3).any(|k| segments_intersect2(p2, q2, t2[k], t2[(k + 1) % 3]))
}

/// Closed segment against closed triangle.
fn segment_hits_triangle(p: Point, q: Point, t: &Tri) -> bool {
    let Some(axis) = projection_axis(t) else {
        // Zero-area triangle: only its edges can be hit.
        return (0..3).any(|k| segment_segment_dist_sq(p, q, t[k], t[(k + 1) % 3]) == 0.0);
    };
    let dp = orient3d(t[0], t[1], t[2], p);
    let dq = orient3d(t[0], t[1], t[2], q);
    if (dp > 0.0 && dq > 0.0) || (dp < 0.0 && dq < 0.0) {
        return false;
    }
    if dp == 0.0 && dq == 0.0 {
        return coplanar_segment_hits_triangle(p, q, t, axis);
    }
    let s1 = orient3d(p, q, t[0], t[1]);
    let s2 = orient3d(p, q, t[1], t[2]);
    let s3 = orient3d(p, q, t[2], t[0]);
    (s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0) || (s1 <= 0.0 && s2 <= 0.0 && s3 <= 0.0)
}

fn all_one_side(plane: &Tri, pts: &Tri) -> bool {
    let d = pts.map(|p| orient3d(plane[0], plane[1], plane[2], p));
    d.iter().all(|v| *v > 0.0) || d.iter().all(|v| *v < 0.0)
}

/// Closed triangles share at least one point.
pub(crate) fn triangles_intersect(a: &Tri, b: &Tri) -> bool {
    if all_one_side(a, b) || all_one_side(b, a) {
        return false;
    }
    (0..3).any(|k| segment_hits_triangle(a[k], a[(k + 1) % 3], b))
        || (0..3).any(|k| segment_hits_triangle(b[k], b[(k + 1) % 3], a))
}

/// Squared distance from `p` to the closest point of triangle `t`.
pub(crate) fn point_triangle_dist_sq(p: Point, t: &Tri) -> f64 {
    let [a, b, c] = *t;
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return dist_sq(p, a);
    }
    let bp = sub(p, b);
    let d3 = dot(ab, bp);
    let d4 = dot(ac, bp);
    if d3 >= 0.0 && d4 <= d3 {
        return dist_sq(p, b);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return dist_sq(p, add(a, scale(ab, v)));
    }
    let cp = sub(p, c);
    let d5 = dot(ab, cp);
    let d6 = dot(ac, cp);
    if d6 >= 0.0 && d5 <= d6 {
        return dist_sq(p, c);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return dist_sq(p, add(a, scale(ac, w)));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return dist_sq(p, add(b, scale(sub(c, b), w)));
    }
    let denom = va + vb + vc;
    if denom == 0.0 || !denom.is_finite() {
        // Degenerate triangle: fall back to its edges.
        return (0..3)
            .map(|k| segment_segment_dist_sq(p, p, t[k], t[(k + 1) % 3]))
            .fold(f64::INFINITY, f64::min);
    }
    let v = vb / denom;
    let w = vc / denom;
    dist_sq(p, add(a, add(scale(ab, v), scale(ac, w))))
}

/// Squared distance between closed segments `p1q1` and `p2q2`.
pub(crate) fn segment_segment_dist_sq(p1: Point, q1: Point, p2: Point, q2: Point) -> f64 {
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);
    let (s, t);
    if a == 0.0 && e == 0.0 {
        return dist_sq(p1, p2);
    }
    if a == 0.0 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = dot(d1, r);
        if e == 0.0 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = dot(d1, d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > 0.0 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    dist_sq(add(p1, scale(d1, s)), add(p2, scale(d2, t)))
}

fn lex_cmp(a: &Tri, b: &Tri) -> Ordering {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Squared distance between two triangles; zero when they intersect.
///
/// Arguments are put in a canonical order first so the floating-point result
/// does not depend on which triangle is passed first.
pub(crate) fn triangle_dist_sq(a: &Tri, b: &Tri) -> f64 {
    let (a, b) = if lex_cmp(a, b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    if triangles_intersect(a, b) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for k in 0..3 {
        best = best.min(point_triangle_dist_sq(a[k], b));
        best = best.min(point_triangle_dist_sq(b[k], a));
    }
    for i in 0..3 {
        for j in 0..3 {
            best = best.min(segment_segment_dist_sq(
                a[i],
                a[(i + 1) % 3],
                b[j],
                b[(j + 1) % 3],
            ));
        }
    }
    best
}

/// Triangles and bounding boxes of a mesh, computed once per query.
pub(crate) struct Prepared<'a> {
    pub mesh: &'a TriMesh,
    pub tris: Vec<Tri>,
    pub boxes: Vec<Aabb>,
    pub bounds: Aabb,
}

impl<'a> Prepared<'a> {
    pub fn new(mesh: &'a TriMesh) -> Result<Self, GeometryError> {
        if mesh.faces.is_empty() {
            return Err(GeometryError::EmptyMesh);
        }
        mesh.validate()?;
        let tris: Vec<Tri> = (0..mesh.faces.len()).map(|i| mesh.triangle(i)).collect();
        let boxes: Vec<Aabb> = tris
            .iter()
            .map(|t| Aabb::from_points(t).expect("triangle has points"))
            .collect();
        let bounds = Aabb::from_points(&mesh.vertices).expect("non-empty mesh");
        Ok(Prepared {
            mesh,
            tris,
            boxes,
            bounds,
        })
    }
}

/// Minimum squared distance between the two triangle sets.
pub(crate) fn surface_dist_sq(a: &Prepared, b: &Prepared) -> f64 {
    let mut best = f64::INFINITY;
    // Pruning keeps a small relative margin so the set of evaluated pairs
    // always contains the minimising pair, whatever the iteration order.
    let prune = |lb: f64, best: f64| lb > best * (1.0 + 1e-9);
    for (ta, ba) in a.tris.iter().zip(&a.boxes) {
        if prune(ba.distance_sq(&b.bounds), best) {
            continue;
        }
        for (tb, bb) in b.tris.iter().zip(&b.boxes) {
            if prune(ba.distance_sq(bb), best) {
                continue;
            }
            best = best.min(triangle_dist_sq(ta, tb));
            if best == 0.0 {
                return 0.0;
            }
        }
    }
    best
}

pub(crate) fn surfaces_intersect(a: &Prepared, b: &Prepared) -> bool {
    if !a.bounds.overlaps(&b.bounds) {
        return false;
    }
    for (ta, ba) in a.tris.iter().zip(&a.boxes) {
        if !ba.overlaps(&b.bounds) {
            continue;
        }
        for (tb, bb) in b.tris.iter().zip(&b.boxes) {
            if ba.overlaps(bb) && triangles_intersect(ta, tb) {
                return true;
            }
        }
    }
    false
}

const RAY_DIRECTIONS: [Point; 7] = [
    [0.5773502691896258, 0.5773502691896257, 0.577350269189626],
    [0.2672612419124244, 0.5345224838248488, 0.8017837257372732],
    [-FRAC_1_SQRT_2, 0.4082482904638631, 0.5773502691896257],
    [0.3713906763541037, -0.5570860145311556, 0.7427813527082074],
    [-0.4558423058385518, -0.5698028822981898, -0.6837634587578276],
    [0.8164965809277261, 0.4082482904638631, -0.408248290463863],
    [0.196116135138184, -0.9805806756909202, 0.0101],
];

enum Crossing {
    Miss,
    Hit,
    Degenerate,
}

fn ray_crossing(p: Point, far: Point, t: &Tri) -> Crossing {
    let dp = orient3d(t[0], t[1], t[2], p);
    let df = orient3d(t[0], t[1], t[2], far);
    if (dp > 0.0 && df > 0.0) || (dp < 0.0 && df < 0.0) {
        return Crossing::Miss;
    }
    if dp == 0.0 || df == 0.0 {
        return if segment_hits_triangle(p, far, t) {
            Crossing::Degenerate
        } else {
            Crossing::Miss
        };
    }
    let s1 = orient3d(p, far, t[0], t[1]);
    let s2 = orient3d(p, far, t[1], t[2]);
    let s3 = orient3d(p, far, t[2], t[0]);
    let all_pos = s1 > 0.0 && s2 > 0.0 && s3 > 0.0;
    let all_neg = s1 < 0.0 && s2 < 0.0 && s3 < 0.0;
    if all_pos || all_neg {
        Crossing::Hit
    } else if (s1 >= 0.0 && s2 >= 0.0 && s3 >= 0.0) || (s1 <= 0.0 && s2 <= 0.0 && s3 <= 0.0) {
        Crossing::Degenerate
    } else {
        Crossing::Miss
    }
}

pub(crate) fn point_inside_prepared(p: Point, mesh: &Prepared) -> bool {
    let b = &mesh.bounds;
    if (0..3).any(|k| p[k] <= b.min[k] || p[k] >= b.max[k]) {
        return false;
    }
    if mesh.tris.iter().any(|t| point_triangle_dist_sq(p, t) == 0.0) {
        return false;
    }
    let reach = 2.0 * (dist_sq(b.min, b.max).sqrt() + 1.0);
    for dir in RAY_DIRECTIONS {
        let far = add(p, scale(dir, reach));
        let mut hits = 0usize;
        let mut degenerate = false;
        for t in &mesh.tris {
            match ray_crossing(p, far, t) {
                Crossing::Miss => {}
                Crossing::Hit => hits += 1,
                Crossing::Degenerate => {
                    degenerate = true;
                    break;
                }
            }
        }
        if !degenerate {
            return hits % 2 == 1;
        }
    }
    false
}

/// Parity ray-cast test: `p` lies strictly inside the closed `mesh`.
///
/// Points on the surface are not inside. The result is meaningless for
/// meshes that are not closed; see [`is_closed`].
pub fn point_inside(p: Point, mesh: &TriMesh) -> Result<bool, GeometryError> {
    let prepared = Prepared::new(mesh)?;
    Ok(point_inside_prepared(p, &prepared))
}

/// Every edge is shared by an even, non-zero number of faces once vertices
/// within `weld_eps` of each other are merged.
pub fn is_closed(mesh: &TriMesh, weld_eps: f64) -> bool {
    if mesh.faces.is_empty() {
        return false;
    }
    let cell = |c: f64| (c / weld_eps).floor().clamp(i64::MIN as f64, i64::MAX as f64) as i64;
    let mut grid: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
    let mut rep = vec![0u32; mesh.vertices.len()];
    let eps_sq = weld_eps * weld_eps;
    for (i, v) in mesh.vertices.iter().enumerate() {
        let key = v.map(cell);
        let mut found = None;
        'search: for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    let k = [
                        key[0].saturating_add(dx),
                        key[1].saturating_add(dy),
                        key[2].saturating_add(dz),
                    ];
                    if let Some(list) = grid.get(&k) {
                        if let Some(&r) = list
                            .iter()
                            .find(|&&r| dist_sq(mesh.vertices[r as usize], *v) <= eps_sq)
                        {
                            found = Some(r);
                            break 'search;
                        }
                    }
                }
            }
        }
        rep[i] = match found {
            Some(r) => r,
            None => {
                grid.entry(key).or_default().push(i as u32);
                i as u32
            }
        };
    }
    let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
    let mut any = false;
    for f in &mesh.faces {
        let w = f.map(|i| rep[i as usize]);
        if w[0] == w[1] || w[1] == w[2] || w[0] == w[2] {
            continue;
        }
        any = true;
        for k in 0..3 {
            let (a, b) = (w[k], w[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    any && edges.values().all(|n| n % 2 == 0)
}

/// A vertex of `inner` lies strictly inside `outer`.
pub(crate) fn any_vertex_inside(inner: &Prepared, outer: &Prepared) -> bool {
    inner
        .mesh
        .vertices
        .iter()
        .any(|v| point_inside_prepared(*v, outer))
}

pub(crate) fn solids_intersect(
    a: &Prepared,
    b: &Prepared,
    a_closed: bool,
    b_closed: bool,
) -> bool {
    if !a.bounds.overlaps(&b.bounds) {
        return false;
    }
    surfaces_intersect(a, b)
        || (b_closed && any_vertex_inside(a, b))
        || (a_closed && any_vertex_inside(b, a))
}

/// True when any triangle pair intersects, or a vertex of one mesh lies
/// strictly inside the other closed mesh.
pub fn meshes_intersect(a: &TriMesh, b: &TriMesh) -> Result<bool, GeometryError> {
    let weld = Tolerances::default().weld_eps;
    let pa = Prepared::new(a)?;
    let pb = Prepared::new(b)?;
    Ok(solids_intersect(&pa, &pb, is_closed(a, weld), is_closed(b, weld)))
}

/// Exact minimum Euclidean distance between two meshes, treating closed
/// meshes as solids: zero when they intersect or one encloses the other.
pub fn min_distance(a: &TriMesh, b: &TriMesh) -> Result<f64, GeometryError> {
    let weld = Tolerances::default().weld_eps;
    let pa = Prepared::new(a)?;
    let pb = Prepared::new(b)?;
    Ok(solid_distance(&pa, &pb, is_closed(a, weld), is_closed(b, weld)))
}

pub(crate) fn solid_distance(a: &Prepared, b: &Prepared, a_closed: bool, b_closed: bool) -> f64 {
    let d = surface_dist_sq(a, b);
    if d == 0.0 {
        return 0.0;
    }
    let enclosed = a.bounds.overlaps(&b.bounds)
        && ((b_closed && any_vertex_inside(a, b)) || (a_closed && any_vertex_inside(b, a)));
    if enclosed {
        0.0
    } else {
        d.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube(min: Point, size: f64) -> TriMesh {
        TriMesh::cuboid(min, [min[0] + size, min[1] + size, min[2] + size])
    }

    #[test]
    fn gap_along_x() {
        let a = cube([0.0; 3], 1.0);
        let b = cube([1.3, 0.0, 0.0], 1.0);
        let d = min_distance(&a, &b).unwrap();
        assert!((d - 0.3).abs() < 1e-12, "{d}");
        assert_eq!(d, min_distance(&b, &a).unwrap());
        assert!(!meshes_intersect(&a, &b).unwrap());
    }

    #[test]
    fn overlapping_cubes() {
        let a = cube([0.0; 3], 1.0);
        let b = cube([0.5; 3], 1.0);
        assert_eq!(min_distance(&a, &b).unwrap(), 0.0);
        assert!(meshes_intersect(&a, &b).unwrap());
    }

    #[test]
    fn nested_cube_intersects_without_surface_contact() {
        let outer = cube([0.0; 3], 3.0);
        let inner = cube([1.0; 3], 1.0);
        let (po, pi) = (Prepared::new(&outer).unwrap(), Prepared::new(&inner).unwrap());
        assert!(!surfaces_intersect(&po, &pi));
        assert!(meshes_intersect(&outer, &inner).unwrap());
        assert!(meshes_intersect(&inner, &outer).unwrap());
        assert_eq!(min_distance(&inner, &outer).unwrap(), 0.0);
    }

    #[test]
    fn open_mesh_is_not_solid() {
        let mut open = cube([0.0; 3], 3.0);
        open.faces.truncate(10);
        assert!(!is_closed(&open, 1e-6));
        assert!(is_closed(&cube([0.0; 3], 3.0), 1e-6));
        let inner = cube([1.0; 3], 1.0);
        assert!(!meshes_intersect(&open, &inner).unwrap());
        assert!(min_distance(&open, &inner).unwrap() > 0.0);
    }

    #[test]
    fn welding_closes_split_vertices() {
        let mut mesh = cube([0.0; 3], 1.0);
        // Duplicate vertex 0 with a sub-tolerance offset and use it in one face.
        mesh.vertices.push([1e-9, 0.0, 0.0]);
        mesh.faces[0] = [8, 2, 1];
        assert!(is_closed(&mesh, 1e-6));
        assert!(!is_closed(&mesh, 1e-12));
    }

    #[test]
    fn point_inside_basics() {
        let c = cube([0.0; 3], 1.0);
        assert!(point_inside([0.5; 3], &c).unwrap());
        assert!(!point_inside([1.5, 0.5, 0.5], &c).unwrap());
        assert!(!point_inside([1.0, 0.5, 0.5], &c).unwrap());
        // Ray aimed at edges and corners of a box still decides correctly.
        assert!(point_inside([0.5, 0.5, 0.25], &c).unwrap());
    }

    #[test]
    fn crossing_triangles_intersect() {
        let a: Tri = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]];
        let b: Tri = [[0.5, 0.5, -1.0], [0.5, 0.5, 1.0], [1.5, 0.1, 0.0]];
        assert!(triangles_intersect(&a, &b));
        assert_eq!(triangle_dist_sq(&a, &b), 0.0);
        let lifted: Tri = b.map(|p| [p[0], p[1], p[2] + 1.5]);
        assert!(!triangles_intersect(&a, &lifted));
        assert!((triangle_dist_sq(&a, &lifted) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn coplanar_triangles() {
        let a: Tri = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]];
        let inside: Tri = [[0.2, 0.2, 0.0], [0.5, 0.2, 0.0], [0.2, 0.5, 0.0]];
        let apart: Tri = [[3.0, 3.0, 0.0], [4.0, 3.0, 0.0], [3.0, 4.0, 0.0]];
        assert!(triangles_intersect(&a, &inside));
        assert!(triangles_intersect(&inside, &a));
        assert!(!triangles_intersect(&a, &apart));
    }

    /// Samples points on a triangle with a barycentric lattice.
    fn lattice(t: &Tri, n: usize) -> Vec<Point> {
        let mut out = Vec::new();
        for i in 0..=n {
            for j in 0..=(n - i) {
                let u = i as f64 / n as f64;
                let v = j as f64 / n as f64;
                let w = 1.0 - u - v;
                out.push([0, 1, 2].map(|k| t[0][k] * w + t[1][k] * u + t[2][k] * v));
            }
        }
        out
    }

    #[test]
    fn triangle_distance_against_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let mut tri = || -> Tri {
                let o = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                [0, 1, 2].map(|_| {
                    [
                        o[0] + rng.gen_range(-1.0..1.0),
                        o[1] + rng.gen_range(-1.0..1.0),
                        o[2] + rng.gen_range(-1.0..1.0),
                    ]
                })
            };
            let a = tri();
            let b = tri();
            let exact = triangle_dist_sq(&a, &b).sqrt();
            // Sampled distances are an upper bound that converges from above.
            let pa = lattice(&a, 60);
            let pb = lattice(&b, 60);
            let mut sampled = f64::INFINITY;
            for p in &pa {
                sampled = sampled.min(point_triangle_dist_sq(*p, &b).sqrt());
            }
            for p in &pb {
                sampled = sampled.min(point_triangle_dist_sq(*p, &a).sqrt());
            }
            let mut brute = f64::INFINITY;
            for p in pa.iter().step_by(7) {
                for q in pb.iter().step_by(7) {
                    brute = brute.min(dist_sq(*p, *q).sqrt());
                }
            }
            assert!(exact <= sampled + 1e-12, "exact {exact} > sampled {sampled}");
            assert!(exact <= brute + 1e-12);
            assert!(sampled - exact < 0.05, "exact {exact} sampled {sampled}");
        }
    }
}
