//! Change detection between two versions of one discipline model.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{ContainerError, Discipline, DisciplineSnapshot, ModelObject, Space, Storey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Geometry,
    Attribute,
    Both,
}

impl ChangeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChangeKind::Geometry => "geometry",
            ChangeKind::Attribute => "attribute",
            ChangeKind::Both => "both",
        }
    }

    pub fn geometry_changed(self) -> bool {
        self != ChangeKind::Attribute
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Added {
    pub object: ModelObject,
    pub geometry: Option<Vec<u8>>,
}

/// A modified object. `geometry` holds the new bytes when the geometry
/// changed; `None` with a geometry kind means the geometry was removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Modified {
    pub object: ModelObject,
    pub kind: ChangeKind,
    pub geometry: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Deleted {
    pub guid: String,
    pub category: String,
}

/// Object-level delta from `base_version` to `new_version`. Storeys and
/// spaces travel as complete lists of the new version.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeSet {
    pub discipline: Discipline,
    pub base_version: String,
    pub new_version: String,
    pub created_at: DateTime<Utc>,
    pub storeys: Vec<Storey>,
    pub spaces: Vec<Space>,
    pub added: Vec<Added>,
    pub modified: Vec<Modified>,
    pub deleted: Vec<Deleted>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DiffError {
    #[error("cannot compare {0} with {1}")]
    DisciplineMismatch(Discipline, Discipline),
    #[error("change set is based on version {expected:?} but the base is {found:?}")]
    VersionMismatch { expected: String, found: String },
    #[error("deleted object {0} is not in the base")]
    UnknownDeleteTarget(String),
    #[error("modified object {0} is not in the base")]
    UnknownModifyTarget(String),
    #[error("added object {0} is already in the base")]
    DuplicateAdd(String),
    #[error("result is not a valid snapshot: {0}")]
    InvalidResult(String),
}

impl ChangeSet {
    /// True when no object changed.
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.modified.is_empty() && self.deleted.is_empty()
    }

    pub fn len(&self) -> usize {
        self.added.len() + self.modified.len() + self.deleted.len()
    }

    /// Every GUID mentioned, in list order.
    pub fn guids(&self) -> impl Iterator<Item = &str> {
        self.added
            .iter()
            .map(|a| a.object.guid.as_str())
            .chain(self.modified.iter().map(|m| m.object.guid.as_str()))
            .chain(self.deleted.iter().map(|d| d.guid.as_str()))
    }
}

/// Compares two snapshots of one discipline by GUID.
///
/// Added objects keep the order of `new`, modified ones too, and deletions
/// follow the order of `old`.
pub fn diff(old: &DisciplineSnapshot, new: &DisciplineSnapshot) -> Result<ChangeSet, DiffError> {
    if old.discipline != new.discipline {
        return Err(DiffError::DisciplineMismatch(old.discipline, new.discipline));
    }
    let old_objects: BTreeMap<&str, &ModelObject> =
        old.objects.iter().map(|o| (o.guid.as_str(), o)).collect();
    let new_guids: BTreeSet<&str> = new.objects.iter().map(|o| o.guid.as_str()).collect();

    let mut cs = ChangeSet {
        discipline: new.discipline,
        base_version: old.version_tag.clone(),
        new_version: new.version_tag.clone(),
        created_at: new.created_at,
        storeys: new.storeys.clone(),
        spaces: new.spaces.clone(),
        added: Vec::new(),
        modified: Vec::new(),
        deleted: Vec::new(),
    };
    for obj in &new.objects {
        let geometry = new.geometry.get(&obj.guid).cloned();
        let Some(before) = old_objects.get(obj.guid.as_str()) else {
            cs.added.push(Added {
                object: obj.clone(),
                geometry,
            });
            continue;
        };
        let a = old.digest_of(before);
        let b = new.digest_of(obj);
        let kind = match (a.attr_hash != b.attr_hash, a.geom_hash != b.geom_hash) {
            (false, false) => continue,
            (true, false) => ChangeKind::Attribute,
            (false, true) => ChangeKind::Geometry,
            (true, true) => ChangeKind::Both,
        };
        cs.modified.push(Modified {
            object: obj.clone(),
            kind,
            geometry: if kind.geometry_changed() { geometry } else { None },
        });
    }
    for obj in &old.objects {
        if !new_guids.contains(obj.guid.as_str()) {
            cs.deleted.push(Deleted {
                guid: obj.guid.clone(),
                category: obj.category.clone(),
            });
        }
    }
    Ok(cs)
}

/// Rebuilds the new snapshot from `base` and a change set made against it.
pub fn apply(base: &DisciplineSnapshot, cs: &ChangeSet) -> Result<DisciplineSnapshot, DiffError> {
    if base.discipline != cs.discipline {
        return Err(DiffError::DisciplineMismatch(base.discipline, cs.discipline));
    }
    if base.version_tag != cs.base_version {
        return Err(DiffError::VersionMismatch {
            expected: cs.base_version.clone(),
            found: base.version_tag.clone(),
        });
    }
    let mut out = base.clone();
    out.version_tag = cs.new_version.clone();
    out.created_at = cs.created_at;
    out.storeys = cs.storeys.clone();
    out.spaces = cs.spaces.clone();

    let index: BTreeMap<String, usize> = out
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| (o.guid.clone(), i))
        .collect();
    let mut removed = BTreeSet::new();
    for d in &cs.deleted {
        if !index.contains_key(&d.guid) || !removed.insert(d.guid.as_str()) {
            return Err(DiffError::UnknownDeleteTarget(d.guid.clone()));
        }
        out.geometry.remove(&d.guid);
    }
    for m in &cs.modified {
        let i = *index
            .get(&m.object.guid)
            .filter(|_| !removed.contains(m.object.guid.as_str()))
            .ok_or_else(|| DiffError::UnknownModifyTarget(m.object.guid.clone()))?;
        out.objects[i] = m.object.clone();
        if m.kind.geometry_changed() {
            match &m.geometry {
                Some(bytes) => out.geometry.insert(m.object.guid.clone(), bytes.clone()),
                None => out.geometry.remove(&m.object.guid),
            };
        }
    }
    out.objects.retain(|o| !removed.contains(o.guid.as_str()));
    for a in &cs.added {
        if index.contains_key(&a.object.guid) && !removed.contains(a.object.guid.as_str()) {
            return Err(DiffError::DuplicateAdd(a.object.guid.clone()));
        }
        out.objects.push(a.object.clone());
        if let Some(bytes) = &a.geometry {
            out.geometry.insert(a.object.guid.clone(), bytes.clone());
        }
    }
    out.validate()
        .map_err(|e: ContainerError| DiffError::InvalidResult(e.to_string()))?;
    Ok(out)
}
