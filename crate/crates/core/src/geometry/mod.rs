//! Mesh IO and the topology routines behind spatial relationships.
//!
//! All lengths are meters. Distance and intersection queries are exact
//! brute-force loops over triangle pairs, pruned by bounding boxes.

mod classify;
pub mod ply;
mod query;
mod vec3;

use serde::{Deserialize, Serialize};

pub use classify::{classify_spatial, Predicate, SpatialRelation};
pub use query::{is_closed, meshes_intersect, min_distance, point_inside};

pub type Point = [f64; 3];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeometryError {
    #[error("mesh has no faces")]
    EmptyMesh,
    #[error("face {face} references vertex {index} of {vertex_count}")]
    BadIndex {
        face: usize,
        index: u32,
        vertex_count: usize,
    },
    #[error("non-finite vertex coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("invalid tolerances: {0}")]
    BadTolerances(String),
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Point>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point>, faces: Vec<[u32; 3]>) -> Result<Self, GeometryError> {
        let mesh = TriMesh { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if let Some(i) = self
            .vertices
            .iter()
            .position(|v| v.iter().any(|c| !c.is_finite()))
        {
            return Err(GeometryError::NonFinite(i));
        }
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|i| **i as usize >= n) {
                return Err(GeometryError::BadIndex {
                    face: fi,
                    index,
                    vertex_count: n,
                });
            }
        }
        Ok(())
    }

    /// Closed axis-aligned box with outward-facing triangles.
    pub fn cuboid(min: Point, max: Point) -> Self {
        let [x0, y0, z0] = min;
        let [x1, y1, z1] = max;
        let vertices = vec![
            [x0, y0, z0],
            [x1, y0, z0],
            [x1, y1, z0],
            [x0, y1, z0],
            [x0, y0, z1],
            [x1, y0, z1],
            [x1, y1, z1],
            [x0, y1, z1],
        ];
        let faces = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [1, 2, 6],
            [1, 6, 5],
            [2, 3, 7],
            [2, 7, 6],
            [3, 0, 4],
            [3, 4, 7],
        ];
        TriMesh { vertices, faces }
    }

    pub fn translated(&self, by: Point) -> Self {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| [v[0] + by[0], v[1] + by[1], v[2] + by[2]])
                .collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Mean of the vertex positions.
    pub fn centroid(&self) -> Option<Point> {
        if self.vertices.is_empty() {
            return None;
        }
        let n = self.vertices.len() as f64;
        let mut c = [0.0; 3];
        for v in &self.vertices {
            for k in 0..3 {
                c[k] += v[k];
            }
        }
        Some(c.map(|s| s / n))
    }

    pub fn triangle(&self, face: usize) -> [Point; 3] {
        self.faces[face].map(|i| self.vertices[i as usize])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Aabb {
            min: first,
            max: first,
        };
        for p in it {
            for (k, &c) in p.iter().enumerate() {
                b.min[k] = b.min[k].min(c);
                b.max[k] = b.max[k].max(c);
            }
        }
        Some(b)
    }

    pub fn expanded(&self, r: f64) -> Aabb {
        Aabb {
            min: self.min.map(|c| c - r),
            max: self.max.map(|c| c + r),
        }
    }

    /// Closed-interval overlap on every axis.
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] <= other.max[k] && other.min[k] <= self.max[k])
    }

    /// `other` lies in the open interior of `self`.
    pub fn strictly_contains(&self, other: &Aabb) -> bool {
        (0..3).all(|k| self.min[k] < other.min[k] && other.max[k] < self.max[k])
    }

    /// Squared Euclidean gap between the boxes; zero when they overlap.
    pub fn distance_sq(&self, other: &Aabb) -> f64 {
        (0..3)
            .map(|k| {
                let gap = (other.min[k] - self.max[k]).max(self.min[k] - other.max[k]).max(0.0);
                gap * gap
            })
            .sum()
    }
}

/// Componentwise bounds of the mesh vertices.
pub fn aabb(mesh: &TriMesh) -> Result<Aabb, GeometryError> {
    Aabb::from_points(&mesh.vertices).ok_or(GeometryError::EmptyMesh)
}

/// Distance thresholds used when classifying element pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Surfaces closer than this touch.
    pub touch_tol: f64,
    /// Surfaces closer than this are near each other.
    pub near_tol: f64,
    /// Vertices closer than this are the same vertex when checking closedness.
    pub weld_eps: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            touch_tol: 0.005,
            near_tol: 0.5,
            weld_eps: 1e-6,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = [self.weld_eps, self.touch_tol, self.near_tol]
            .iter()
            .all(|v| v.is_finite())
            && 0.0 < self.weld_eps
            && self.weld_eps < self.touch_tol
            && self.touch_tol < self.near_tol;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::BadTolerances(format!(
                "need 0 < weld_eps ({}) < touch_tol ({}) < near_tol ({})",
                self.weld_eps, self.touch_tol, self.near_tol
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_cube_bounds() {
        let b = aabb(&TriMesh::cuboid([0.0; 3], [1.0; 3])).unwrap();
        assert_eq!(b.min, [0.0; 3]);
        assert_eq!(b.max, [1.0; 3]);
    }

    #[test]
    fn degenerate_box() {
        let p = [0.25, -3.0, 7.5];
        let mesh = TriMesh {
            vertices: vec![p; 3],
            faces: vec![[0, 1, 2]],
        };
        let b = aabb(&mesh).unwrap();
        assert_eq!(b.min, b.max);
        assert_eq!(aabb(&TriMesh::default()), Err(GeometryError::EmptyMesh));
    }

    #[test]
    fn random_cloud_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let vertices: Vec<Point> = (0..100)
            .map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)])
            .collect();
        let mesh = TriMesh {
            vertices: vertices.clone(),
            faces: vec![[0, 1, 2]],
        };
        let b = aabb(&mesh).unwrap();
        for k in 0..3 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in &vertices {
                if v[k] < lo {
                    lo = v[k];
                }
                if v[k] > hi {
                    hi = v[k];
                }
            }
            assert_eq!(b.min[k], lo);
            assert_eq!(b.max[k], hi);
        }
    }

    #[test]
    fn tolerance_ordering() {
        assert!(Tolerances::default().validate().is_ok());
        let bad = Tolerances {
            touch_tol: 0.6,
            ..Tolerances::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mesh_validation() {
        assert!(TriMesh::new(vec![[0.0; 3]; 3], vec![[0, 1, 3]]).is_err());
        assert!(TriMesh::new(vec![[f64::NAN, 0.0, 0.0]; 3], vec![[0, 1, 2]]).is_err());
    }
}
