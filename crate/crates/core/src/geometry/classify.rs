use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::query::{is_closed, point_inside_prepared, solids_intersect, surface_dist_sq, Prepared};
use super::{GeometryError, Tolerances, TriMesh};

/// Spatial relationship of an ordered mesh pair `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    Intersects,
    /// `a` encloses `b`.
    Contains,
    /// `a` is enclosed by `b`.
    Within,
    Touches,
    Near,
    Disjoint,
}

impl Predicate {
    pub const ALL: [Predicate; 6] = [
        Predicate::Intersects,
        Predicate::Contains,
        Predicate::Within,
        Predicate::Touches,
        Predicate::Near,
        Predicate::Disjoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::Intersects => "intersects",
            Predicate::Contains => "contains",
            Predicate::Within => "within",
            Predicate::Touches => "touches",
            Predicate::Near => "near",
            Predicate::Disjoint => "disjoint",
        }
    }

    /// The predicate for the swapped pair `(b, a)`.
    pub fn inverse(self) -> Predicate {
        match self {
            Predicate::Contains => Predicate::Within,
            Predicate::Within => Predicate::Contains,
            p => p,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Predicate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Predicate::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown spatial predicate {s:?}"))
    }
}

/// Classification result with the metrics that support it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialRelation {
    pub predicate: Predicate,
    /// Meters between the solids; zero for intersects, contains and within.
    pub min_distance: f64,
    /// Both meshes are closed, so inside tests were available.
    pub meshes_closed: bool,
    /// Containment was decided from bounding boxes alone because the
    /// enclosing mesh is not closed.
    pub aabb_fallback: bool,
}

impl SpatialRelation {
    pub fn inverse(self) -> SpatialRelation {
        SpatialRelation {
            predicate: self.predicate.inverse(),
            ..self
        }
    }
}

/// Classifies the pair `(a, b)`.
///
/// Precedence: containment (strict bounding-box containment confirmed by a
/// centroid inside test), then intersection, then the touch and near
/// distance bands, else disjoint.
pub fn classify_spatial(
    a: &TriMesh,
    b: &TriMesh,
    tol: &Tolerances,
) -> Result<SpatialRelation, GeometryError> {
    tol.validate()?;
    let pa = Prepared::new(a)?;
    let pb = Prepared::new(b)?;
    let a_closed = is_closed(a, tol.weld_eps);
    let b_closed = is_closed(b, tol.weld_eps);
    let relation = |predicate, min_distance, aabb_fallback| SpatialRelation {
        predicate,
        min_distance,
        meshes_closed: a_closed && b_closed,
        aabb_fallback,
    };

    let encloses = |outer: &Prepared, outer_closed: bool, inner: &TriMesh| -> Option<bool> {
        let centroid = inner.centroid()?;
        if !outer_closed {
            return Some(true);
        }
        point_inside_prepared(centroid, outer).then_some(false)
    };
    if pa.bounds.strictly_contains(&pb.bounds) {
        if let Some(fallback) = encloses(&pa, a_closed, b) {
            return Ok(relation(Predicate::Contains, 0.0, fallback));
        }
    } else if pb.bounds.strictly_contains(&pa.bounds) {
        if let Some(fallback) = encloses(&pb, b_closed, a) {
            return Ok(relation(Predicate::Within, 0.0, fallback));
        }
    }

    if solids_intersect(&pa, &pb, a_closed, b_closed) {
        return Ok(relation(Predicate::Intersects, 0.0, false));
    }
    let d = surface_dist_sq(&pa, &pb).sqrt();
    let predicate = if d <= tol.touch_tol {
        Predicate::Touches
    } else if d <= tol.near_tol {
        Predicate::Near
    } else {
        Predicate::Disjoint
    };
    Ok(relation(predicate, d, false))
}
