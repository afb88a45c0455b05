use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EdgeRecord, Geometry, GraphError, GraphStore, NodeRecord};
use crate::geometry::ply;
use crate::model::{geometry_path_for, hex, Discipline};
use crate::storage::{Batch, DataDir};

pub const STORE_NODES: &str = "store/nodes.jsonl";
pub const STORE_EDGES: &str = "store/edges.jsonl";
pub const STORE_META: &str = "store/meta.json";
pub const STORE_GEOMETRY: &str = "store/geometry";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreMeta {
    format: u32,
    versions: BTreeMap<Discipline, String>,
    node_count: usize,
    edge_count: usize,
    nodes_sha256: String,
    edges_sha256: String,
}

fn jsonl<T: Serialize>(items: impl Iterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("store records serialize");
        out.push(b'\n');
    }
    out
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

fn store_geometry_path(guid: &str) -> String {
    format!("store/{}", geometry_path_for(guid))
}

fn corrupt(reason: impl Into<String>) -> GraphError {
    GraphError::CorruptStore(reason.into())
}

impl GraphStore {
    /// File changes that bring an on-disk copy of `previous` up to `self`.
    /// Pass `None` to rewrite everything.
    pub fn persist_batch(&self, previous: Option<&GraphStore>) -> Batch {
        let mut batch = Batch::new();
        let nodes = jsonl(self.nodes.values());
        let edges = jsonl(self.edges.values());
        let meta = StoreMeta {
            format: 1,
            versions: self.versions.clone(),
            node_count: self.nodes.len(),
            edge_count: self.edges.len(),
            nodes_sha256: sha256_hex(&nodes),
            edges_sha256: sha256_hex(&edges),
        };
        let mut meta = serde_json::to_vec_pretty(&meta).expect("meta serializes");
        meta.push(b'\n');
        batch.write(STORE_NODES, nodes);
        batch.write(STORE_EDGES, edges);
        batch.write(STORE_META, meta);

        for (guid, g) in &self.geometry {
            let same = previous
                .and_then(|p| p.geometry.get(guid))
                .is_some_and(|old| old.bytes == g.bytes);
            if !same {
                batch.write(store_geometry_path(guid), g.bytes.to_vec());
            }
        }
        if let Some(previous) = previous {
            for guid in previous.geometry.keys() {
                if !self.geometry.contains_key(guid) {
                    batch.delete(store_geometry_path(guid));
                }
            }
        }
        batch
    }

    /// Writes the whole store and removes geometry files it no longer links.
    pub fn persist(&self, dir: &DataDir) -> Result<(), GraphError> {
        let mut batch = self.persist_batch(None);
        let geometry_dir = dir.root().join(STORE_GEOMETRY);
        if let Ok(entries) = fs::read_dir(&geometry_dir) {
            for entry in entries.flatten() {
                let name = entry.file_name().to_string_lossy().into_owned();
                let guid = name.strip_suffix(".ply").unwrap_or(&name);
                if !self.geometry.contains_key(guid) {
                    batch.delete(format!("{STORE_GEOMETRY}/{name}"));
                }
            }
        }
        dir.commit(&batch).map_err(GraphError::GeometryWriteFailure)
    }

    /// Loads the store committed in `dir`; a directory without a store
    /// yields an empty one.
    pub fn load(dir: &DataDir) -> Result<GraphStore, GraphError> {
        load_from(dir.root())
    }
}

fn read_optional(path: &Path) -> Result<Option<Vec<u8>>, GraphError> {
    match fs::read(path) {
        Ok(b) => Ok(Some(b)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(corrupt(format!("cannot read {}: {e}", path.display()))),
    }
}

fn parse_lines<T: for<'de> Deserialize<'de>>(bytes: &[u8], file: &str) -> Result<Vec<T>, GraphError> {
    let text = std::str::from_utf8(bytes).map_err(|_| corrupt(format!("{file} is not UTF-8")))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| corrupt(format!("{file} line {}: {e}", i + 1)))
        })
        .collect()
}

fn load_from(root: &Path) -> Result<GraphStore, GraphError> {
    let meta = read_optional(&root.join(STORE_META))?;
    let nodes = read_optional(&root.join(STORE_NODES))?;
    let edges = read_optional(&root.join(STORE_EDGES))?;
    let (meta, nodes, edges) = match (meta, nodes, edges) {
        (None, None, None) => return Ok(GraphStore::new()),
        (Some(m), Some(n), Some(e)) => (m, n, e),
        _ => return Err(corrupt("store files are incomplete")),
    };
    let meta: StoreMeta =
        serde_json::from_slice(&meta).map_err(|e| corrupt(format!("meta.json: {e}")))?;
    if meta.format != 1 {
        return Err(corrupt(format!("unsupported store format {}", meta.format)));
    }
    if sha256_hex(&nodes) != meta.nodes_sha256 {
        return Err(corrupt("nodes.jsonl does not match its checksum"));
    }
    if sha256_hex(&edges) != meta.edges_sha256 {
        return Err(corrupt("edges.jsonl does not match its checksum"));
    }
    let nodes: Vec<NodeRecord> = parse_lines(&nodes, "nodes.jsonl")?;
    let edges: Vec<EdgeRecord> = parse_lines(&edges, "edges.jsonl")?;
    if nodes.len() != meta.node_count || edges.len() != meta.edge_count {
        return Err(corrupt("record counts do not match meta.json"));
    }

    let mut store = GraphStore::new();
    store.versions = meta.versions;
    for node in nodes {
        if let Some(link) = &node.geometry_link {
            if *link != geometry_path_for(&node.id) {
                return Err(corrupt(format!("node {} links unexpected path {link}", node.id)));
            }
            let path = root.join(store_geometry_path(&node.id));
            let bytes = fs::read(&path)
                .map_err(|e| corrupt(format!("geometry of {}: {e}", node.id)))?;
            let mesh = ply::read_ply(&bytes)
                .map_err(|e| corrupt(format!("geometry of {}: {e}", node.id)))?;
            store.geometry.insert(
                node.id.clone(),
                Geometry {
                    bytes: Arc::new(bytes),
                    mesh: Arc::new(mesh),
                },
            );
        }
        if store.nodes.insert(node.id.clone(), node).is_some() {
            return Err(corrupt("duplicate node id"));
        }
    }
    for edge in edges {
        let key = (edge.src.clone(), edge.relation, edge.dst.clone());
        if store.edges.insert(key, edge).is_some() {
            return Err(corrupt("duplicate edge"));
        }
    }
    store
        .check_integrity()
        .map_err(|e| corrupt(e.to_string()))?;
    Ok(store)
}
