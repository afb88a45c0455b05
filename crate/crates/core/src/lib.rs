//! Object-level BIM coordination.
//!
//! Discipline teams keep their own models. A connector diffs local model
//! versions and ships only the changed objects to a coordination server. The
//! server keeps every discipline in one typed building graph, links elements
//! across disciplines by their spatial relationships, and queues reference
//! geometry for the disciplines a change affects.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: discipline snapshots, the on-disk model container, digests.
//! * [`geometry`]: PLY IO and the mesh predicates behind spatial relationships.
//! * [`graph`]: the core/extension graph store, its persistence and Turtle export.
//! * [`diff`]: change sets between two snapshots of one discipline.
//! * [`enrichment`]: rule-based cross-discipline relationship inference.
//! * [`propagation`]: relevance filtering, routing and reference packages.
//! * [`protocol`], [`server`], [`connector`]: the wire format and both ends of it.

pub mod connector;
pub mod diff;
pub mod enrichment;
pub mod fixtures;
pub mod geometry;
pub mod graph;
pub mod model;
pub mod propagation;
pub mod protocol;
pub mod server;
pub mod storage;

pub use diff::{apply, diff, ChangeKind, ChangeSet};
pub use enrichment::EnrichmentRuleset;
pub use geometry::{Aabb, Predicate, SpatialRelation, Tolerances, TriMesh};
pub use graph::{EdgeRecord, GraphStore, NodeClass, NodeRecord, Relation};
pub use model::{Discipline, DisciplineSnapshot, ModelObject, ObjectDigest};
pub use propagation::{Cde, CdeState, ReferencePackage, RelevanceRuleset};
