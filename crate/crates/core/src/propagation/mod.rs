//! The push pipeline: relevance filtering, routing by change type,
//! enrichment, and reference packages for the affected disciplines.

mod package;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diff::{Added, ChangeKind, ChangeSet, Deleted, Modified};
use crate::enrichment::{self, EnrichError, EnrichmentDelta, EnrichmentRuleset};
use crate::graph::{GeometryUpdate, GraphError, GraphStore, NodeClass};
use crate::model::{Discipline, ModelObject};
use crate::storage::{Batch, CommitFault, DataDir};

pub use package::{
    from_manifest, EntryChange, ManifestEntry, PackageEntry, PackageError, PackageManifest,
    ReferencePackage, RelationContext,
};

pub const QUEUE_DIR: &str = "store/queue";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelevanceRuleset {
    pub include: BTreeMap<Discipline, BTreeSet<String>>,
    #[serde(default)]
    pub exclude: BTreeMap<Discipline, BTreeSet<String>>,
}

impl Default for RelevanceRuleset {
    fn default() -> Self {
        let set = |cats: &[&str]| cats.iter().map(|c| c.to_string()).collect::<BTreeSet<_>>();
        RelevanceRuleset {
            include: BTreeMap::from([
                (
                    Discipline::Architecture,
                    set(&["Wall", "Floor", "Roof", "Stair", "Door", "Window"]),
                ),
                (
                    Discipline::Structure,
                    set(&["Column", "Beam", "Brace", "Foundation", "Slab"]),
                ),
            ]),
            exclude: BTreeMap::from([
                (Discipline::Architecture, set(&["Furniture", "Space"])),
                (Discipline::Structure, set(&["Space"])),
            ]),
        }
    }
}

impl RelevanceRuleset {
    pub fn is_relevant(&self, discipline: Discipline, category: &str) -> bool {
        let listed = |m: &BTreeMap<Discipline, BTreeSet<String>>| {
            m.get(&discipline).is_some_and(|s| s.contains(category))
        };
        listed(&self.include) && !listed(&self.exclude)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (d, inc) in &self.include {
            if let Some(c) = self.exclude.get(d).and_then(|ex| inc.intersection(ex).next()) {
                return Err(format!("{c} is both included and excluded for {d}"));
            }
        }
        Ok(())
    }

    /// Every eligible enrichment category must be relevant.
    pub fn check_covers(&self, rules: &EnrichmentRuleset) -> Result<(), String> {
        for (d, cats) in &rules.eligible {
            if let Some(c) = cats.iter().find(|c| !self.is_relevant(*d, c)) {
                return Err(format!("eligible category {c} of {d} is not relevant"));
            }
        }
        Ok(())
    }
}

/// Splits a change set into the relevant part and the GUIDs dropped.
pub fn relevance_filter(cs: &ChangeSet, rules: &RelevanceRuleset) -> (ChangeSet, Vec<String>) {
    let d = cs.discipline;
    let mut dropped = Vec::new();
    let mut keep = |guid: &str, category: &str| {
        let ok = rules.is_relevant(d, category);
        if !ok {
            dropped.push(guid.to_string());
        }
        ok
    };
    let added: Vec<Added> = cs
        .added
        .iter()
        .filter(|a| keep(&a.object.guid, &a.object.category))
        .cloned()
        .collect();
    let modified: Vec<Modified> = cs
        .modified
        .iter()
        .filter(|m| keep(&m.object.guid, &m.object.category))
        .cloned()
        .collect();
    let deleted: Vec<Deleted> = cs
        .deleted
        .iter()
        .filter(|x| keep(&x.guid, &x.category))
        .cloned()
        .collect();
    let kept = ChangeSet {
        added,
        modified,
        deleted,
        ..cs.clone()
    };
    (kept, dropped)
}

/// For each GUID, the disciplines one `relSpatial` hop away.
pub fn affected_disciplines(store: &GraphStore, guids: &[String]) -> BTreeMap<Discipline, Vec<String>> {
    let mut out: BTreeMap<Discipline, Vec<String>> = BTreeMap::new();
    for g in guids {
        let Ok(neighbors) = store.cross_domain_neighbors(g) else {
            continue;
        };
        let disciplines: BTreeSet<Discipline> = neighbors.iter().map(|(n, _)| n.discipline).collect();
        for d in disciplines {
            let list = out.entry(d).or_default();
            if !list.contains(g) {
                list.push(g.clone());
            }
        }
    }
    out
}

/// Relationships of `guid` towards elements of `target`, read from `guid`.
fn relation_context(store: &GraphStore, guid: &str, target: Discipline) -> Vec<RelationContext> {
    let Ok(neighbors) = store.cross_domain_neighbors(guid) else {
        return Vec::new();
    };
    neighbors
        .into_iter()
        .filter(|(n, _)| n.discipline == target)
        .map(|(n, e)| {
            let sp = e.spatial.as_ref().expect("relSpatial edges carry metrics");
            let predicate = if e.src == guid { sp.predicate } else { sp.predicate.inverse() };
            RelationContext {
                guid: n.id.clone(),
                category: n.category.clone(),
                predicate,
                min_distance: sp.min_distance,
            }
        })
        .collect()
}

/// Graph plus reference queues: everything a push changes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CdeState {
    pub graph: GraphStore,
    pub queues: BTreeMap<Discipline, Vec<Arc<ReferencePackage>>>,
}

impl CdeState {
    /// Sequence number of the newest package queued for `d`, 0 if none.
    pub fn queue_head(&self, d: Discipline) -> u64 {
        self.queues
            .get(&d)
            .and_then(|q| q.last())
            .map_or(0, |p| p.package_id)
    }

    fn enqueue(&mut self, p: ReferencePackage) {
        self.queues
            .entry(p.target_discipline)
            .or_default()
            .push(Arc::new(p));
    }
}

/// Packages for `discipline` with sequence numbers above `after_seq`, in
/// order. The queue keeps them; the reader tracks its own cursor.
pub fn drain_queue(state: &CdeState, discipline: Discipline, after_seq: u64) -> Vec<Arc<ReferencePackage>> {
    state
        .queues
        .get(&discipline)
        .map(|q| q.iter().filter(|p| p.package_id > after_seq).cloned().collect())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationOutcome {
    pub version_tag: String,
    pub accepted: usize,
    pub filtered_out: Vec<String>,
    pub packages: Vec<Arc<ReferencePackage>>,
    pub enrichment: EnrichmentDelta,
}

impl PropagationOutcome {
    pub fn packages_queued(&self) -> BTreeMap<Discipline, usize> {
        let mut out = BTreeMap::new();
        for p in &self.packages {
            *out.entry(p.target_discipline).or_default() += 1;
        }
        out
    }

    /// Canonical bytes: the summary JSON followed by each encoded package.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(self).expect("outcome serializes");
        for p in &self.packages {
            out.extend(p.encode());
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PropagationError {
    #[error("push is based on {pushed:?} but the server holds {current:?}")]
    StaleBaseVersion { pushed: String, current: String },
    #[error("malformed change set: {0}")]
    MalformedChangeSet(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Enrichment(#[from] EnrichError),
    #[error("store failure: {0}")]
    StoreFailure(String),
}

/// Test hooks that abort a push at a given point.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailPoint {
    AfterApply,
    AfterEnrichment,
    BeforeCommit,
    Commit(CommitFault),
}

fn check(fail: Option<FailPoint>, at: FailPoint) -> Result<(), PropagationError> {
    if fail == Some(at) {
        return Err(PropagationError::StoreFailure(format!("injected failure {at:?}")));
    }
    Ok(())
}

fn geometry_update(m: &Modified) -> GeometryUpdate {
    match (m.kind, &m.geometry) {
        (ChangeKind::Attribute, _) => GeometryUpdate::Keep,
        (_, Some(bytes)) => GeometryUpdate::Replace(bytes.clone()),
        (_, None) => GeometryUpdate::Remove,
    }
}

fn has_usable_mesh(store: &GraphStore, guid: &str) -> bool {
    store.mesh(guid).is_some_and(|m| !m.faces.is_empty())
}

fn entry_for(obj: &ModelObject, change: EntryChange, kind: Option<ChangeKind>, geometry: Option<Vec<u8>>) -> PackageEntry {
    PackageEntry {
        guid: obj.guid.clone(),
        category: obj.category.clone(),
        name: obj.name.clone(),
        change,
        kind,
        geometry,
        predicate_context: Vec::new(),
    }
}

/// Runs one push against `state` and returns the resulting state. `state`
/// itself is never touched.
pub fn stage_push(
    state: &CdeState,
    cs: &ChangeSet,
    relevance: &RelevanceRuleset,
    enrichment_rules: &EnrichmentRuleset,
    fail: Option<FailPoint>,
) -> Result<(CdeState, PropagationOutcome), PropagationError> {
    let d = cs.discipline;
    let before = &state.graph;
    let current = before.latest_version(d);
    if cs.base_version != current {
        return Err(PropagationError::StaleBaseVersion {
            pushed: cs.base_version.clone(),
            current: current.to_string(),
        });
    }
    if cs.new_version.is_empty() || cs.new_version == cs.base_version {
        return Err(PropagationError::MalformedChangeSet(format!(
            "new version {:?} must be non-empty and differ from the base",
            cs.new_version
        )));
    }
    let mut seen = BTreeSet::new();
    for g in cs.guids() {
        if !seen.insert(g) {
            return Err(PropagationError::MalformedChangeSet(format!("{g} listed twice")));
        }
    }
    if let Some(o) = cs
        .added
        .iter()
        .map(|a| &a.object)
        .chain(cs.modified.iter().map(|m| &m.object))
        .find(|o| o.discipline != d)
    {
        return Err(PropagationError::MalformedChangeSet(format!(
            "{} belongs to {}",
            o.guid, o.discipline
        )));
    }

    let (kept, dropped) = relevance_filter(cs, relevance);
    let is_element = |g: &str| {
        before
            .node(g)
            .is_some_and(|n| n.node_class == NodeClass::Element && n.discipline == d)
    };

    // Objects the server already holds are routed by their current edges.
    let mut routed: Vec<String> = kept
        .modified
        .iter()
        .map(|m| m.object.guid.clone())
        .filter(|g| is_element(g))
        .collect();
    routed.extend(kept.deleted.iter().map(|x| x.guid.clone()).filter(|g| is_element(g)));
    let affected = affected_disciplines(before, &routed);

    let mut graph = before.clone();
    graph.declare_scaffolding(d, &cs.storeys, &cs.spaces);

    let mut new_guids = Vec::new();
    let mut changed = Vec::new();
    let mut entries_added = Vec::new();
    let mut entries_routed: Vec<(PackageEntry, Option<BTreeSet<Discipline>>)> = Vec::new();

    for x in &kept.deleted {
        if is_element(&x.guid) {
            graph.remove_node(&x.guid);
            changed.push(x.guid.clone());
        }
    }
    // Objects that stopped being relevant leave the store quietly.
    for m in cs.modified.iter().filter(|m| dropped.contains(&m.object.guid)) {
        if is_element(&m.object.guid) {
            graph.remove_node(&m.object.guid);
            changed.push(m.object.guid.clone());
        }
    }
    for m in &kept.modified {
        if is_element(&m.object.guid) {
            graph.put_element(&m.object, geometry_update(m))?;
            changed.push(m.object.guid.clone());
        } else {
            // Previously filtered out; new to the server.
            let update = match &m.geometry {
                Some(b) => GeometryUpdate::Replace(b.clone()),
                None => GeometryUpdate::Keep,
            };
            graph.put_element(&m.object, update)?;
            new_guids.push(m.object.guid.clone());
        }
    }
    for a in &kept.added {
        if before.node(&a.object.guid).is_some() {
            return Err(PropagationError::MalformedChangeSet(format!(
                "{} is already known",
                a.object.guid
            )));
        }
        let update = match &a.geometry {
            Some(b) => GeometryUpdate::Replace(b.clone()),
            None => GeometryUpdate::Remove,
        };
        graph.put_element(&a.object, update)?;
        new_guids.push(a.object.guid.clone());
    }
    graph.prune_scaffolding(d, &cs.storeys, &cs.spaces);
    graph.set_latest_version(d, cs.new_version.clone());
    graph.check_integrity()?;
    check(fail, FailPoint::AfterApply)?;

    let label = format!("{d}@{}", cs.new_version);
    let enrich: Vec<String> = new_guids
        .iter()
        .filter(|g| has_usable_mesh(&graph, g))
        .cloned()
        .collect();
    enrichment::enrich_new(&mut graph, &enrich, enrichment_rules, &label)?;
    enrichment::recompute(&mut graph, &changed, enrichment_rules, &label)?;
    check(fail, FailPoint::AfterEnrichment)?;

    for a in &kept.added {
        entries_added.push(entry_for(&a.object, EntryChange::Added, None, graph.geometry(&a.object.guid).map(<[u8]>::to_vec)));
    }
    for m in &kept.modified {
        if is_element(&m.object.guid) {
            let targets: BTreeSet<Discipline> = affected
                .iter()
                .filter(|(_, gs)| gs.contains(&m.object.guid))
                .map(|(t, _)| *t)
                .collect();
            let geometry = if m.kind.geometry_changed() {
                graph.geometry(&m.object.guid).map(<[u8]>::to_vec)
            } else {
                None
            };
            let e = entry_for(&m.object, EntryChange::Modified, Some(m.kind), geometry);
            entries_routed.push((e, Some(targets)));
        } else {
            let e = entry_for(&m.object, EntryChange::Added, None, graph.geometry(&m.object.guid).map(<[u8]>::to_vec));
            entries_routed.push((e, None));
        }
    }
    for x in &kept.deleted {
        let Some(node) = before.node(&x.guid).filter(|_| is_element(&x.guid)) else {
            continue;
        };
        let targets: BTreeSet<Discipline> = affected
            .iter()
            .filter(|(_, gs)| gs.contains(&x.guid))
            .map(|(t, _)| *t)
            .collect();
        entries_routed.push((
            PackageEntry {
                guid: x.guid.clone(),
                category: node.category.clone(),
                name: node.name.clone(),
                change: EntryChange::Deleted,
                kind: None,
                geometry: before.geometry(&x.guid).map(<[u8]>::to_vec),
                predicate_context: Vec::new(),
            },
            Some(targets),
        ));
    }

    let mut next = CdeState {
        graph,
        queues: state.queues.clone(),
    };
    let mut packages = Vec::new();
    for target in d.others() {
        let mut entries = Vec::new();
        for e in &entries_added {
            let mut e = e.clone();
            e.predicate_context = relation_context(&next.graph, &e.guid, target);
            entries.push(e);
        }
        for (e, targets) in &entries_routed {
            let include = targets.as_ref().is_none_or(|t| t.contains(&target));
            if include {
                let mut e = e.clone();
                e.predicate_context = if e.change == EntryChange::Added {
                    relation_context(&next.graph, &e.guid, target)
                } else {
                    relation_context(before, &e.guid, target)
                };
                entries.push(e);
            }
        }
        if entries.is_empty() {
            continue;
        }
        let p = ReferencePackage {
            package_id: next.queue_head(target) + 1,
            target_discipline: target,
            source_discipline: d,
            source_version: cs.new_version.clone(),
            created_at: cs.created_at,
            entries,
        };
        next.enqueue(p.clone());
        packages.push(Arc::new(p));
    }

    let outcome = PropagationOutcome {
        version_tag: cs.new_version.clone(),
        accepted: kept.len(),
        filtered_out: dropped,
        enrichment: EnrichmentDelta::between(before, &next.graph),
        packages,
    };
    Ok((next, outcome))
}

/// Runs one push and swaps the result into `state` on success.
pub fn process_push(
    state: &mut CdeState,
    cs: &ChangeSet,
    relevance: &RelevanceRuleset,
    enrichment_rules: &EnrichmentRuleset,
) -> Result<PropagationOutcome, PropagationError> {
    let (next, outcome) = stage_push(state, cs, relevance, enrichment_rules, None)?;
    *state = next;
    Ok(outcome)
}

fn queue_path(p: &ReferencePackage) -> String {
    format!("{QUEUE_DIR}/{}/{}.refpkg", p.target_discipline, p.package_id)
}

/// File changes that take an on-disk copy of `before` to `after`.
pub fn state_batch(before: &CdeState, after: &CdeState) -> Batch {
    let mut batch = after.graph.persist_batch(Some(&before.graph));
    for (d, q) in &after.queues {
        let head = before.queue_head(*d);
        for p in q.iter().filter(|p| p.package_id > head) {
            batch.write(queue_path(p), p.encode());
        }
    }
    batch
}

fn load_queues(root: &Path) -> Result<BTreeMap<Discipline, Vec<Arc<ReferencePackage>>>, GraphError> {
    let corrupt = |m: String| GraphError::CorruptStore(m);
    let mut queues = BTreeMap::new();
    for d in Discipline::ALL {
        let dir = root.join(QUEUE_DIR).join(d.as_str());
        let Ok(entries) = fs::read_dir(&dir) else {
            continue;
        };
        let mut found = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| corrupt(e.to_string()))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            let Some(seq) = name.strip_suffix(".refpkg").and_then(|s| s.parse::<u64>().ok()) else {
                return Err(corrupt(format!("unexpected queue file {name}")));
            };
            let bytes = fs::read(entry.path()).map_err(|e| corrupt(e.to_string()))?;
            let p = ReferencePackage::decode(&bytes).map_err(|e| corrupt(format!("{name}: {e}")))?;
            if p.package_id != seq || p.target_discipline != d {
                return Err(corrupt(format!("{name} does not match its location")));
            }
            found.push(p);
        }
        found.sort_by_key(|p| p.package_id);
        if found.iter().enumerate().any(|(i, p)| p.package_id != i as u64 + 1) {
            return Err(corrupt(format!("queue of {d} has gaps")));
        }
        if !found.is_empty() {
            queues.insert(d, found.into_iter().map(Arc::new).collect());
        }
    }
    Ok(queues)
}

/// A state bound to a data directory: pushes are committed before they
/// become visible.
#[derive(Debug)]
pub struct Cde {
    dir: DataDir,
    state: Arc<CdeState>,
}

impl Cde {
    pub fn open(dir: DataDir) -> Result<Self, GraphError> {
        let graph = GraphStore::load(&dir)?;
        let queues = load_queues(dir.root())?;
        Ok(Cde {
            dir,
            state: Arc::new(CdeState { graph, queues }),
        })
    }

    pub fn state(&self) -> &Arc<CdeState> {
        &self.state
    }

    pub fn dir(&self) -> &DataDir {
        &self.dir
    }

    pub fn push(
        &mut self,
        cs: &ChangeSet,
        relevance: &RelevanceRuleset,
        enrichment_rules: &EnrichmentRuleset,
    ) -> Result<PropagationOutcome, PropagationError> {
        self.push_with_fault(cs, relevance, enrichment_rules, None)
    }

    #[doc(hidden)]
    pub fn push_with_fault(
        &mut self,
        cs: &ChangeSet,
        relevance: &RelevanceRuleset,
        enrichment_rules: &EnrichmentRuleset,
        fail: Option<FailPoint>,
    ) -> Result<PropagationOutcome, PropagationError> {
        let (next, outcome) = stage_push(&self.state, cs, relevance, enrichment_rules, fail)?;
        check(fail, FailPoint::BeforeCommit)?;
        let batch = state_batch(&self.state, &next);
        let fault = match fail {
            Some(FailPoint::Commit(f)) => f,
            _ => CommitFault::default(),
        };
        if let Err(e) = self.dir.commit_with_fault(&batch, fault) {
            // The commit may have passed its commit point; resynchronise with
            // whatever the directory now holds.
            let reopened = DataDir::open(self.dir.root())
                .map_err(|e| PropagationError::StoreFailure(e.to_string()))
                .and_then(|dir| Cde::open(dir).map_err(PropagationError::from));
            if let Ok(fresh) = reopened {
                *self = fresh;
            }
            return Err(PropagationError::StoreFailure(e.to_string()));
        }
        self.state = Arc::new(next);
        Ok(outcome)
    }
}
