//! The core/extension building graph.
//!
//! The core layer is a typed property graph: site, building, storey, space
//! and element nodes joined by building-topology relations, plus
//! cross-discipline `relSpatial` edges produced by enrichment. The extension
//! layer holds one PLY file per element, addressed from its node by a
//! `geometry/<guid>.ply` link.

mod persist;
pub mod turtle;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::ply::{self, PlyError};
use crate::geometry::{SpatialRelation, TriMesh};
use crate::model::{geometry_path_for, Discipline, DisciplineSnapshot, ModelObject, Space, Storey};

pub use persist::{STORE_EDGES, STORE_GEOMETRY, STORE_META, STORE_NODES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeClass {
    Site,
    Building,
    Storey,
    Space,
    Element,
}

impl NodeClass {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeClass::Site => "Site",
            NodeClass::Building => "Building",
            NodeClass::Storey => "Storey",
            NodeClass::Space => "Space",
            NodeClass::Element => "Element",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Relation {
    HasBuilding,
    HasStorey,
    HasSpace,
    ContainsElement,
    AdjacentElement,
    RelSpatial,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::HasBuilding => "hasBuilding",
            Relation::HasStorey => "hasStorey",
            Relation::HasSpace => "hasSpace",
            Relation::ContainsElement => "containsElement",
            Relation::AdjacentElement => "adjacentElement",
            Relation::RelSpatial => "relSpatial",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub node_class: NodeClass,
    pub discipline: Discipline,
    pub category: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storey: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
    /// Store-relative path of the element's PLY file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry_link: Option<String>,
}

/// Metrics carried by `relSpatial` and `adjacentElement` edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialProps {
    pub predicate: crate::geometry::Predicate,
    pub min_distance: f64,
    /// Label of the push that last changed this edge.
    pub computed_at: String,
    pub mesh_closed_flag: bool,
    #[serde(default)]
    pub aabb_fallback: bool,
}

impl SpatialProps {
    pub fn new(rel: SpatialRelation, computed_at: impl Into<String>) -> Self {
        SpatialProps {
            predicate: rel.predicate,
            min_distance: rel.min_distance,
            computed_at: computed_at.into(),
            mesh_closed_flag: rel.meshes_closed,
            aabb_fallback: rel.aabb_fallback,
        }
    }

    /// Same relationship, ignoring when it was computed.
    pub fn same_relation(&self, other: &SpatialProps) -> bool {
        self.predicate == other.predicate
            && self.min_distance == other.min_distance
            && self.mesh_closed_flag == other.mesh_closed_flag
            && self.aabb_fallback == other.aabb_fallback
    }

    fn inverse(mut self) -> Self {
        self.predicate = self.predicate.inverse();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub src: String,
    pub dst: String,
    pub relation: Relation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<SpatialProps>,
}

impl EdgeRecord {
    /// The endpoint that is not `id`.
    pub fn other(&self, id: &str) -> &str {
        if self.src == id {
            &self.dst
        } else {
            &self.src
        }
    }

    pub fn touches(&self, id: &str) -> bool {
        self.src == id || self.dst == id
    }
}

pub type EdgeKey = (String, Relation, String);

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("{a} and {b} belong to the same discipline")]
    SameDiscipline { a: String, b: String },
    #[error("{a} and {b} belong to different disciplines")]
    DifferentDiscipline { a: String, b: String },
    #[error("integrity violation: {0}")]
    IntegrityViolation(String),
    #[error("geometry for {guid} is not a valid mesh: {source}")]
    BadGeometry {
        guid: String,
        #[source]
        source: PlyError,
    },
    #[error("failed to write geometry: {0}")]
    GeometryWriteFailure(#[source] std::io::Error),
    #[error("corrupt store: {0}")]
    CorruptStore(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpsertSummary {
    pub nodes_added: usize,
    pub nodes_updated: usize,
    pub nodes_removed: usize,
}

/// What to do with an element's geometry on update.
#[derive(Debug, Clone)]
pub enum GeometryUpdate {
    Keep,
    Replace(Vec<u8>),
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeChange {
    Added,
    Updated,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq)]
struct Geometry {
    bytes: Arc<Vec<u8>>,
    mesh: Arc<TriMesh>,
}

/// In-memory graph store. Cloning is cheap enough to stage a whole push on
/// a copy and swap it in on success.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphStore {
    nodes: BTreeMap<String, NodeRecord>,
    edges: BTreeMap<EdgeKey, EdgeRecord>,
    versions: BTreeMap<Discipline, String>,
    geometry: BTreeMap<String, Geometry>,
}

pub fn site_id(d: Discipline) -> String {
    format!("{d}-site")
}

pub fn building_id(d: Discipline) -> String {
    format!("{d}-building")
}

pub fn storey_id(d: Discipline, key: &str) -> String {
    format!("{d}-storey-{key}")
}

pub fn space_id(d: Discipline, key: &str) -> String {
    format!("{d}-space-{key}")
}

impl GraphStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&self, id: &str) -> Option<&NodeRecord> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeRecord> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeRecord> {
        self.edges.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn elements(&self, discipline: Discipline) -> impl Iterator<Item = &NodeRecord> {
        self.nodes
            .values()
            .filter(move |n| n.node_class == NodeClass::Element && n.discipline == discipline)
    }

    pub fn geometry(&self, guid: &str) -> Option<&[u8]> {
        self.geometry.get(guid).map(|g| g.bytes.as_slice())
    }

    pub fn mesh(&self, guid: &str) -> Option<&Arc<TriMesh>> {
        self.geometry.get(guid).map(|g| &g.mesh)
    }

    /// Latest accepted version tag, empty before the first push.
    pub fn latest_version(&self, discipline: Discipline) -> &str {
        self.versions.get(&discipline).map_or("", String::as_str)
    }

    pub fn set_latest_version(&mut self, discipline: Discipline, tag: impl Into<String>) {
        self.versions.insert(discipline, tag.into());
    }

    pub fn versions(&self) -> &BTreeMap<Discipline, String> {
        &self.versions
    }

    fn insert_edge(&mut self, edge: EdgeRecord) {
        let key = (edge.src.clone(), edge.relation, edge.dst.clone());
        self.edges.insert(key, edge);
    }

    fn put_node(&mut self, node: NodeRecord) -> NodeChange {
        match self.nodes.get(&node.id) {
            Some(existing) if *existing == node => NodeChange::Unchanged,
            Some(_) => {
                self.nodes.insert(node.id.clone(), node);
                NodeChange::Updated
            }
            None => {
                self.nodes.insert(node.id.clone(), node);
                NodeChange::Added
            }
        }
    }

    /// Removes a node with every incident edge and its geometry.
    pub fn remove_node(&mut self, id: &str) -> Option<(NodeRecord, Vec<EdgeRecord>)> {
        let node = self.nodes.remove(id)?;
        let keys: Vec<EdgeKey> = self
            .edges
            .iter()
            .filter(|(_, e)| e.touches(id))
            .map(|(k, _)| k.clone())
            .collect();
        let removed = keys
            .into_iter()
            .filter_map(|k| self.edges.remove(&k))
            .collect();
        self.geometry.remove(id);
        Some((node, removed))
    }

    /// Creates or refreshes the site/building/storey/space nodes of a
    /// discipline. Nothing is removed; see [`Self::prune_scaffolding`].
    pub fn declare_scaffolding(&mut self, d: Discipline, storeys: &[Storey], spaces: &[Space]) {
        let scaffold = |id: String, class: NodeClass, name: &str| NodeRecord {
            id,
            node_class: class,
            discipline: d,
            category: class.as_str().to_string(),
            name: name.to_string(),
            storey: None,
            space: None,
            attributes: BTreeMap::new(),
            geometry_link: None,
        };
        self.put_node(scaffold(site_id(d), NodeClass::Site, ""));
        self.put_node(scaffold(building_id(d), NodeClass::Building, ""));
        self.insert_edge(EdgeRecord {
            src: site_id(d),
            dst: building_id(d),
            relation: Relation::HasBuilding,
            spatial: None,
        });
        for s in storeys {
            let mut node = scaffold(storey_id(d, &s.key), NodeClass::Storey, &s.name);
            node.storey = Some(s.key.clone());
            node.attributes
                .insert("elevation".to_string(), format!("{:?}", s.elevation));
            self.put_node(node);
            self.insert_edge(EdgeRecord {
                src: building_id(d),
                dst: storey_id(d, &s.key),
                relation: Relation::HasStorey,
                spatial: None,
            });
        }
        for sp in spaces {
            let mut node = scaffold(space_id(d, &sp.key), NodeClass::Space, &sp.name);
            node.storey = Some(sp.storey.clone());
            node.space = Some(sp.key.clone());
            self.put_node(node);
            // A space may have moved to another storey.
            let stale: Vec<EdgeKey> = self
                .edges
                .iter()
                .filter(|(_, e)| e.relation == Relation::HasSpace && e.dst == space_id(d, &sp.key))
                .map(|(k, _)| k.clone())
                .collect();
            for k in stale {
                self.edges.remove(&k);
            }
            self.insert_edge(EdgeRecord {
                src: storey_id(d, &sp.storey),
                dst: space_id(d, &sp.key),
                relation: Relation::HasSpace,
                spatial: None,
            });
        }
    }

    /// Removes storey and space nodes that are no longer declared and no
    /// longer contain anything.
    pub fn prune_scaffolding(&mut self, d: Discipline, storeys: &[Storey], spaces: &[Space]) -> usize {
        let keep: BTreeSet<String> = storeys
            .iter()
            .map(|s| storey_id(d, &s.key))
            .chain(spaces.iter().map(|s| space_id(d, &s.key)))
            .collect();
        let candidates: Vec<String> = self
            .nodes
            .values()
            .filter(|n| {
                n.discipline == d
                    && matches!(n.node_class, NodeClass::Storey | NodeClass::Space)
                    && !keep.contains(&n.id)
            })
            .map(|n| n.id.clone())
            .collect();
        let mut removed = 0;
        // Spaces first so their storeys become empty.
        let (spaces_first, storeys_after): (Vec<_>, Vec<_>) = candidates
            .into_iter()
            .partition(|id| self.nodes[id].node_class == NodeClass::Space);
        for id in spaces_first.into_iter().chain(storeys_after) {
            let busy = self.edges.values().any(|e| {
                e.src == id && matches!(e.relation, Relation::ContainsElement | Relation::HasSpace)
            });
            if !busy {
                self.remove_node(&id);
                removed += 1;
            }
        }
        removed
    }

    /// Inserts or updates the element node for `obj`.
    pub fn put_element(
        &mut self,
        obj: &ModelObject,
        geometry: GeometryUpdate,
    ) -> Result<NodeChange, GraphError> {
        if let Some(existing) = self.nodes.get(&obj.guid) {
            if existing.discipline != obj.discipline || existing.node_class != NodeClass::Element {
                return Err(GraphError::IntegrityViolation(format!(
                    "guid {} already belongs to {} {}",
                    obj.guid,
                    existing.discipline,
                    existing.node_class.as_str()
                )));
            }
        }
        let container = match &obj.space {
            Some(space) => space_id(obj.discipline, space),
            None => storey_id(obj.discipline, &obj.storey),
        };
        if !self.nodes.contains_key(&container) {
            return Err(GraphError::IntegrityViolation(format!(
                "element {} placed in unknown container {container}",
                obj.guid
            )));
        }

        let mut geometry_changed = false;
        match geometry {
            GeometryUpdate::Keep => {}
            GeometryUpdate::Remove => {
                geometry_changed = self.geometry.remove(&obj.guid).is_some();
            }
            GeometryUpdate::Replace(bytes) => {
                let unchanged = self
                    .geometry
                    .get(&obj.guid)
                    .is_some_and(|g| *g.bytes == bytes);
                if !unchanged {
                    let mesh = ply::read_ply(&bytes).map_err(|source| GraphError::BadGeometry {
                        guid: obj.guid.clone(),
                        source,
                    })?;
                    self.geometry.insert(
                        obj.guid.clone(),
                        Geometry {
                            bytes: Arc::new(bytes),
                            mesh: Arc::new(mesh),
                        },
                    );
                    geometry_changed = true;
                }
            }
        }
        let geometry_link = self
            .geometry
            .contains_key(&obj.guid)
            .then(|| geometry_path_for(&obj.guid));
        let change = self.put_node(NodeRecord {
            id: obj.guid.clone(),
            node_class: NodeClass::Element,
            discipline: obj.discipline,
            category: obj.category.clone(),
            name: obj.name.clone(),
            storey: Some(obj.storey.clone()),
            space: obj.space.clone(),
            attributes: obj.attributes.clone(),
            geometry_link,
        });

        let stale: Vec<EdgeKey> = self
            .edges
            .iter()
            .filter(|(_, e)| {
                e.relation == Relation::ContainsElement && e.dst == obj.guid && e.src != container
            })
            .map(|(k, _)| k.clone())
            .collect();
        for k in stale {
            self.edges.remove(&k);
        }
        self.insert_edge(EdgeRecord {
            src: container,
            dst: obj.guid.clone(),
            relation: Relation::ContainsElement,
            spatial: None,
        });

        Ok(match change {
            NodeChange::Unchanged if geometry_changed => NodeChange::Updated,
            c => c,
        })
    }

    /// Makes the store reflect `snapshot` for its discipline. Elements of
    /// that discipline missing from the snapshot are removed with their
    /// edges.
    pub fn upsert_snapshot(
        &mut self,
        snapshot: &DisciplineSnapshot,
    ) -> Result<UpsertSummary, GraphError> {
        let d = snapshot.discipline;
        let mut staged = self.clone();
        let mut summary = UpsertSummary::default();
        staged.declare_scaffolding(d, &snapshot.storeys, &snapshot.spaces);
        let present: BTreeSet<&str> = snapshot.objects.iter().map(|o| o.guid.as_str()).collect();
        let gone: Vec<String> = staged
            .elements(d)
            .filter(|n| !present.contains(n.id.as_str()))
            .map(|n| n.id.clone())
            .collect();
        for id in gone {
            staged.remove_node(&id);
            summary.nodes_removed += 1;
        }
        for obj in &snapshot.objects {
            let update = match snapshot.geometry.get(&obj.guid) {
                Some(bytes) => GeometryUpdate::Replace(bytes.clone()),
                None => GeometryUpdate::Remove,
            };
            match staged.put_element(obj, update)? {
                NodeChange::Added => summary.nodes_added += 1,
                NodeChange::Updated => summary.nodes_updated += 1,
                NodeChange::Unchanged => {}
            }
        }
        staged.prune_scaffolding(d, &snapshot.storeys, &snapshot.spaces);
        staged.set_latest_version(d, snapshot.version_tag.clone());
        staged.check_integrity()?;
        *self = staged;
        Ok(summary)
    }

    fn element_pair(&self, a: &str, b: &str) -> Result<(&NodeRecord, &NodeRecord), GraphError> {
        let na = self
            .nodes
            .get(a)
            .ok_or_else(|| GraphError::UnknownNode(a.to_string()))?;
        let nb = self
            .nodes
            .get(b)
            .ok_or_else(|| GraphError::UnknownNode(b.to_string()))?;
        Ok((na, nb))
    }

    fn pair_key(a: &str, b: &str, relation: Relation) -> (EdgeKey, bool) {
        if a <= b {
            ((a.to_string(), relation, b.to_string()), false)
        } else {
            ((b.to_string(), relation, a.to_string()), true)
        }
    }

    /// Creates or replaces the single `relSpatial` edge between two elements
    /// of different disciplines. `props.predicate` reads from `a` to `b`.
    pub fn set_relspatial(
        &mut self,
        a: &str,
        b: &str,
        props: SpatialProps,
    ) -> Result<EdgeRecord, GraphError> {
        let (na, nb) = self.element_pair(a, b)?;
        if na.discipline == nb.discipline {
            return Err(GraphError::SameDiscipline {
                a: a.to_string(),
                b: b.to_string(),
            });
        }
        Ok(self.set_pair_edge(a, b, Relation::RelSpatial, props))
    }

    /// Same-discipline counterpart of [`Self::set_relspatial`], recorded as
    /// `adjacentElement`.
    pub fn set_adjacent(
        &mut self,
        a: &str,
        b: &str,
        props: SpatialProps,
    ) -> Result<EdgeRecord, GraphError> {
        let (na, nb) = self.element_pair(a, b)?;
        if na.discipline != nb.discipline {
            return Err(GraphError::DifferentDiscipline {
                a: a.to_string(),
                b: b.to_string(),
            });
        }
        Ok(self.set_pair_edge(a, b, Relation::AdjacentElement, props))
    }

    fn set_pair_edge(&mut self, a: &str, b: &str, relation: Relation, props: SpatialProps) -> EdgeRecord {
        let ((src, _, dst), swapped) = Self::pair_key(a, b, relation);
        let props = if swapped { props.inverse() } else { props };
        let edge = EdgeRecord {
            src,
            dst,
            relation,
            spatial: Some(props),
        };
        self.insert_edge(edge.clone());
        edge
    }

    pub fn remove_relspatial(&mut self, a: &str, b: &str) -> Option<EdgeRecord> {
        self.edges.remove(&Self::pair_key(a, b, Relation::RelSpatial).0)
    }

    pub fn remove_adjacent(&mut self, a: &str, b: &str) -> Option<EdgeRecord> {
        self.edges
            .remove(&Self::pair_key(a, b, Relation::AdjacentElement).0)
    }

    pub fn pair_edge(&self, a: &str, b: &str, relation: Relation) -> Option<&EdgeRecord> {
        self.edges.get(&Self::pair_key(a, b, relation).0)
    }

    pub fn relspatial(&self, a: &str, b: &str) -> Option<&EdgeRecord> {
        self.pair_edge(a, b, Relation::RelSpatial)
    }

    pub fn relspatial_edges(&self) -> impl Iterator<Item = &EdgeRecord> {
        self.edges
            .values()
            .filter(|e| e.relation == Relation::RelSpatial)
    }

    /// Elements linked to `guid` by a `relSpatial` edge.
    pub fn cross_domain_neighbors(
        &self,
        guid: &str,
    ) -> Result<Vec<(&NodeRecord, &EdgeRecord)>, GraphError> {
        if !self.nodes.contains_key(guid) {
            return Err(GraphError::UnknownNode(guid.to_string()));
        }
        Ok(self
            .relspatial_edges()
            .filter(|e| e.touches(guid))
            .filter_map(|e| self.nodes.get(e.other(guid)).map(|n| (n, e)))
            .collect())
    }

    /// Full sweep of the store invariants.
    pub fn check_integrity(&self) -> Result<(), GraphError> {
        let violation = |m: String| Err(GraphError::IntegrityViolation(m));
        for (key, e) in &self.edges {
            if *key != (e.src.clone(), e.relation, e.dst.clone()) {
                return violation(format!("edge key mismatch for {} -> {}", e.src, e.dst));
            }
            let (Some(s), Some(d)) = (self.nodes.get(&e.src), self.nodes.get(&e.dst)) else {
                return violation(format!("{} edge {} -> {} dangles", e.relation, e.src, e.dst));
            };
            match e.relation {
                Relation::RelSpatial | Relation::AdjacentElement => {
                    if e.src >= e.dst {
                        return violation(format!("{} edge {} -> {} not canonical", e.relation, e.src, e.dst));
                    }
                    let cross = s.discipline != d.discipline;
                    if cross != (e.relation == Relation::RelSpatial) {
                        return violation(format!(
                            "{} edge {} -> {} has wrong discipline pairing",
                            e.relation, e.src, e.dst
                        ));
                    }
                    if e.spatial.is_none() {
                        return violation(format!("{} edge {} -> {} lacks metrics", e.relation, e.src, e.dst));
                    }
                }
                _ => {
                    if s.discipline != d.discipline {
                        return violation(format!("topology edge {} -> {} crosses disciplines", e.src, e.dst));
                    }
                }
            }
        }
        for n in self.nodes.values() {
            match (&n.geometry_link, self.geometry.contains_key(&n.id)) {
                (Some(link), true) if *link == geometry_path_for(&n.id) => {}
                (None, false) => {}
                _ => return violation(format!("geometry link of {} is inconsistent", n.id)),
            }
        }
        if let Some(id) = self.geometry.keys().find(|id| !self.nodes.contains_key(*id)) {
            return violation(format!("orphan geometry {id}"));
        }
        Ok(())
    }
}
