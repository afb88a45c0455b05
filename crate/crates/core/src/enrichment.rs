//! Rule-based inference of cross-discipline spatial relationships.
//!
//! Eligible elements of different disciplines whose bounding boxes come
//! within `near_tol` of each other are classified with
//! [`classify_spatial`]; every pair that is not disjoint gets a
//! `relSpatial` edge.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{aabb, classify_spatial, Aabb, GeometryError, Predicate, Tolerances};
use crate::graph::{EdgeRecord, GraphStore, NodeClass, NodeRecord, Relation, SpatialProps};
use crate::model::Discipline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrichmentRuleset {
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_eligible")]
    pub eligible: BTreeMap<Discipline, BTreeSet<String>>,
    /// Also record `adjacentElement` for touching elements of one discipline.
    #[serde(default)]
    pub adjacent_elements: bool,
}

fn default_eligible() -> BTreeMap<Discipline, BTreeSet<String>> {
    let set = |cats: &[&str]| cats.iter().map(|c| c.to_string()).collect();
    BTreeMap::from([
        (
            Discipline::Architecture,
            set(&["Wall", "Floor", "Roof", "Stair", "Door", "Window"]),
        ),
        (
            Discipline::Structure,
            set(&["Column", "Beam", "Brace", "Foundation", "Slab"]),
        ),
    ])
}

impl Default for EnrichmentRuleset {
    fn default() -> Self {
        EnrichmentRuleset {
            tolerances: Tolerances::default(),
            eligible: default_eligible(),
            adjacent_elements: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EnrichError {
    #[error("element {0} has no usable geometry")]
    MissingGeometry(String),
    #[error("unknown element {0}")]
    UnknownNode(String),
    #[error("invalid ruleset: {0}")]
    InvalidRuleset(String),
    #[error("cannot read ruleset: {0}")]
    Io(#[from] std::io::Error),
}

impl EnrichmentRuleset {
    pub fn validate(&self) -> Result<(), EnrichError> {
        self.tolerances
            .validate()
            .map_err(|e| EnrichError::InvalidRuleset(e.to_string()))?;
        for d in Discipline::ALL {
            if self.eligible.get(&d).is_none_or(BTreeSet::is_empty) {
                return Err(EnrichError::InvalidRuleset(format!(
                    "no eligible categories for {d}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, EnrichError> {
        let rules: EnrichmentRuleset = serde_json::from_slice(bytes)
            .map_err(|e| EnrichError::InvalidRuleset(e.to_string()))?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn from_file(path: &Path) -> Result<Self, EnrichError> {
        Self::from_json(&std::fs::read(path)?)
    }

    pub fn is_eligible(&self, node: &NodeRecord) -> bool {
        node.node_class == NodeClass::Element
            && self
                .eligible
                .get(&node.discipline)
                .is_some_and(|cats| cats.contains(&node.category))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrichmentDelta {
    pub edges_added: usize,
    pub edges_updated: usize,
    pub edges_removed: usize,
}

impl EnrichmentDelta {
    /// Difference between the spatial edges of two versions of a store.
    pub fn between(before: &GraphStore, after: &GraphStore) -> EnrichmentDelta {
        let edges = |g: &GraphStore| -> BTreeMap<(String, Relation, String), SpatialProps> {
            g.edges()
                .filter_map(|e| {
                    let props = e.spatial.clone()?;
                    Some(((e.src.clone(), e.relation, e.dst.clone()), props))
                })
                .collect()
        };
        let (a, b) = (edges(before), edges(after));
        let mut delta = EnrichmentDelta::default();
        for (k, new) in &b {
            match a.get(k) {
                None => delta.edges_added += 1,
                Some(old) if old != new => delta.edges_updated += 1,
                Some(_) => {}
            }
        }
        delta.edges_removed = a.keys().filter(|k| !b.contains_key(*k)).count();
        delta
    }
}

/// An eligible element with usable geometry.
struct Candidate<'a> {
    node: &'a NodeRecord,
    bounds: Aabb,
}

fn candidates<'a>(store: &'a GraphStore, rules: &EnrichmentRuleset) -> BTreeMap<&'a str, Candidate<'a>> {
    store
        .nodes()
        .filter(|n| rules.is_eligible(n))
        .filter_map(|n| {
            let mesh = store.mesh(&n.id)?;
            if mesh.faces.is_empty() {
                return None;
            }
            let bounds = aabb(mesh).ok()?;
            Some((n.id.as_str(), Candidate { node: n, bounds }))
        })
        .collect()
}

/// Which edge, if any, a classified pair should carry.
fn relation_for(a: &NodeRecord, b: &NodeRecord, predicate: Predicate, rules: &EnrichmentRuleset) -> Option<Relation> {
    if a.discipline != b.discipline {
        (predicate != Predicate::Disjoint).then_some(Relation::RelSpatial)
    } else {
        (rules.adjacent_elements && predicate == Predicate::Touches).then_some(Relation::AdjacentElement)
    }
}

/// Unordered pairs, first id smaller, that touch any of `focus` and pass
/// the broad phase.
fn pairs_around<'a>(
    cands: &BTreeMap<&'a str, Candidate<'a>>,
    focus: &BTreeSet<&str>,
    rules: &EnrichmentRuleset,
) -> BTreeSet<(&'a str, &'a str)> {
    let r = rules.tolerances.near_tol;
    let mut pairs = BTreeSet::new();
    for f in focus {
        let Some(c) = cands.get(f) else { continue };
        let grown = c.bounds.expanded(r);
        for (id, other) in cands {
            if *id == c.node.id {
                continue;
            }
            let same = other.node.discipline == c.node.discipline;
            if same && !rules.adjacent_elements {
                continue;
            }
            if grown.overlaps(&other.bounds) {
                let own: &'a str = cands.get_key_value(*f).map(|(k, _)| *k).unwrap();
                pairs.insert(if own < *id { (own, *id) } else { (*id, own) });
            }
        }
    }
    pairs
}

type Classified<'a> = ((&'a str, &'a str), SpatialProps);

/// Classifies pairs in parallel; the result keeps the order of `pairs`.
fn classify_pairs<'a>(
    store: &GraphStore,
    pairs: &BTreeSet<(&'a str, &'a str)>,
    rules: &EnrichmentRuleset,
) -> Result<Vec<Classified<'a>>, GeometryError> {
    let label = String::new();
    let list: Vec<_> = pairs.iter().copied().collect();
    list.into_par_iter()
        .map(|(a, b)| {
            let ma = store.mesh(a).expect("candidate has geometry");
            let mb = store.mesh(b).expect("candidate has geometry");
            let rel = classify_spatial(ma, mb, &rules.tolerances)?;
            Ok(((a, b), SpatialProps::new(rel, label.clone())))
        })
        .collect()
}

/// Desired spatial edges for the given pairs, keyed by (src, relation, dst).
fn desired_edges(
    store: &GraphStore,
    pairs: &BTreeSet<(&str, &str)>,
    rules: &EnrichmentRuleset,
    computed_at: &str,
) -> BTreeMap<(String, Relation, String), SpatialProps> {
    let classified = classify_pairs(store, pairs, rules).unwrap_or_else(|e| {
        // Candidates are validated meshes with faces; classification cannot
        // fail short of a broken tolerance set, which validate() rejects.
        panic!("classification failed: {e}")
    });
    let mut out = BTreeMap::new();
    for ((a, b), mut props) in classified {
        let (na, nb) = (store.node(a).unwrap(), store.node(b).unwrap());
        if let Some(rel) = relation_for(na, nb, props.predicate, rules) {
            props.computed_at = computed_at.to_string();
            out.insert((a.to_string(), rel, b.to_string()), props);
        }
    }
    out
}

fn store_edge(store: &mut GraphStore, key: &(String, Relation, String), props: SpatialProps) -> EdgeRecord {
    let (a, rel, b) = key;
    match rel {
        Relation::RelSpatial => store.set_relspatial(a, b, props),
        _ => store.set_adjacent(a, b, props),
    }
    .expect("pair endpoints are validated candidates")
}

/// Creates edges between newly added elements and everything around them.
/// Returns the edges created or replaced.
pub fn enrich_new(
    store: &mut GraphStore,
    new_guids: &[String],
    rules: &EnrichmentRuleset,
    computed_at: &str,
) -> Result<Vec<EdgeRecord>, EnrichError> {
    rules.validate()?;
    let cands = candidates(store, rules);
    let mut focus = BTreeSet::new();
    for g in new_guids {
        let node = store
            .node(g)
            .ok_or_else(|| EnrichError::UnknownNode(g.clone()))?;
        if !rules.is_eligible(node) {
            continue;
        }
        if !cands.contains_key(g.as_str()) {
            return Err(EnrichError::MissingGeometry(g.clone()));
        }
        focus.insert(g.as_str());
    }
    let pairs = pairs_around(&cands, &focus, rules);
    let desired = desired_edges(store, &pairs, rules, computed_at);
    let mut out = Vec::new();
    for (key, props) in desired {
        out.push(store_edge(store, &key, props));
    }
    Ok(out)
}

/// Re-evaluates every spatial edge around `changed_guids` and discovers new
/// ones. Deleted or no longer eligible elements lose their edges; edges
/// whose relationship did not change keep their `computed_at`.
pub fn recompute(
    store: &mut GraphStore,
    changed_guids: &[String],
    rules: &EnrichmentRuleset,
    computed_at: &str,
) -> Result<EnrichmentDelta, EnrichError> {
    rules.validate()?;
    let cands = candidates(store, rules);
    let focus: BTreeSet<&str> = changed_guids.iter().map(String::as_str).collect();
    let pairs = pairs_around(&cands, &focus, rules);
    let desired = desired_edges(store, &pairs, rules, computed_at);

    let existing: Vec<EdgeRecord> = store
        .edges()
        .filter(|e| {
            matches!(e.relation, Relation::RelSpatial | Relation::AdjacentElement)
                && (focus.contains(e.src.as_str()) || focus.contains(e.dst.as_str()))
        })
        .cloned()
        .collect();
    let mut delta = EnrichmentDelta::default();
    for e in &existing {
        let key = (e.src.clone(), e.relation, e.dst.clone());
        if !desired.contains_key(&key) {
            match e.relation {
                Relation::RelSpatial => store.remove_relspatial(&e.src, &e.dst),
                _ => store.remove_adjacent(&e.src, &e.dst),
            };
            delta.edges_removed += 1;
        }
    }
    for (key, props) in desired {
        let current = store.pair_edge(&key.0, &key.2, key.1).and_then(|e| e.spatial.as_ref());
        match current {
            Some(old) if old.same_relation(&props) => {}
            Some(_) => {
                store_edge(store, &key, props);
                delta.edges_updated += 1;
            }
            None => {
                store_edge(store, &key, props);
                delta.edges_added += 1;
            }
        }
    }
    Ok(delta)
}

/// Drops every spatial edge and enriches the whole store again.
pub fn enrich_all(
    store: &mut GraphStore,
    rules: &EnrichmentRuleset,
    computed_at: &str,
) -> Result<Vec<EdgeRecord>, EnrichError> {
    let old: Vec<(String, Relation, String)> = store
        .edges()
        .filter(|e| e.spatial.is_some())
        .map(|e| (e.src.clone(), e.relation, e.dst.clone()))
        .collect();
    for (a, rel, b) in old {
        match rel {
            Relation::RelSpatial => store.remove_relspatial(&a, &b),
            _ => store.remove_adjacent(&a, &b),
        };
    }
    let all: Vec<String> = store
        .nodes()
        .filter(|n| rules.is_eligible(n) && store.mesh(&n.id).is_some_and(|m| !m.faces.is_empty()))
        .map(|n| n.id.clone())
        .collect();
    enrich_new(store, &all, rules, computed_at)
}
