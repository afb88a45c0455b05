//! Discipline snapshots and the neutral model container.
//!
//! A container is a directory holding `model.json` and a `geometry/`
//! directory with one PLY mesh per physical object:
//!
//! ```text
//! model.json
//! geometry/<guid>.ply
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::ply;

pub const MANIFEST_FILE: &str = "model.json";
pub const GEOMETRY_DIR: &str = "geometry";
pub const SCHEMA_VERSION: &str = "1";
pub const UNITS: &str = "m";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discipline {
    Architecture,
    Structure,
}

impl Discipline {
    pub const ALL: [Discipline; 2] = [Discipline::Architecture, Discipline::Structure];

    pub fn as_str(self) -> &'static str {
        match self {
            Discipline::Architecture => "architecture",
            Discipline::Structure => "structure",
        }
    }

    /// Every discipline except `self`.
    pub fn others(self) -> impl Iterator<Item = Discipline> {
        Self::ALL.into_iter().filter(move |d| *d != self)
    }
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown discipline {0:?}")]
pub struct UnknownDiscipline(pub String);

impl FromStr for Discipline {
    type Err = UnknownDiscipline;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "architecture" => Ok(Discipline::Architecture),
            "structure" => Ok(Discipline::Structure),
            other => Err(UnknownDiscipline(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a GUID: {0:?}")]
pub struct NotAGuid(pub String);

/// Normalises a UUID to lowercase 8-4-4-4-12 form, accepting upper case
/// and a surrounding pair of braces.
pub fn canonical_guid(raw: &str) -> Result<String, NotAGuid> {
    let trimmed = raw.trim();
    let inner = match (trimmed.strip_prefix('{'), trimmed.strip_suffix('}')) {
        (Some(_), Some(_)) => &trimmed[1..trimmed.len() - 1],
        (None, None) => trimmed,
        _ => return Err(NotAGuid(raw.to_string())),
    };
    let groups: Vec<&str> = inner.split('-').collect();
    let lens = [8, 4, 4, 4, 12];
    if groups.len() != lens.len()
        || groups
            .iter()
            .zip(lens)
            .any(|(g, n)| g.len() != n || !g.bytes().all(|b| b.is_ascii_hexdigit()))
    {
        return Err(NotAGuid(raw.to_string()));
    }
    Ok(inner.to_ascii_lowercase())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Storey {
    pub key: String,
    pub name: String,
    /// Meters.
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Space {
    pub key: String,
    pub name: String,
    pub storey: String,
}

/// One discipline-owned building element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelObject {
    pub guid: String,
    pub discipline: Discipline,
    pub category: String,
    pub name: String,
    pub storey: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<String>,
    /// Attribute names are kept exactly as the authoring tool exported them.
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    /// Container-relative path of the PLY mesh; absent for abstract objects.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry_path: Option<String>,
}

/// One version of one discipline model, with geometry bytes loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct DisciplineSnapshot {
    pub discipline: Discipline,
    pub version_tag: String,
    pub created_at: DateTime<Utc>,
    pub storeys: Vec<Storey>,
    pub spaces: Vec<Space>,
    pub objects: Vec<ModelObject>,
    /// Raw PLY bytes keyed by object GUID, exactly as read from the container.
    pub geometry: BTreeMap<String, Vec<u8>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ContainerError {
    #[error("no {MANIFEST_FILE} in {0}")]
    MissingManifest(PathBuf),
    #[error("malformed manifest at line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("duplicate guid {0}")]
    DuplicateGuid(String),
    #[error("object {guid} references missing geometry {path}")]
    DanglingGeometryRef { guid: String, path: String },
    #[error("object {guid} has unreadable geometry: {source}")]
    BadGeometry {
        guid: String,
        #[source]
        source: ply::PlyError,
    },
    #[error("object {0} references an undeclared storey")]
    BadStoreyRef(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl DisciplineSnapshot {
    pub fn empty(discipline: Discipline) -> Self {
        DisciplineSnapshot {
            discipline,
            version_tag: String::new(),
            created_at: DateTime::<Utc>::UNIX_EPOCH,
            storeys: Vec::new(),
            spaces: Vec::new(),
            objects: Vec::new(),
            geometry: BTreeMap::new(),
        }
    }

    pub fn object(&self, guid: &str) -> Option<&ModelObject> {
        self.objects.iter().find(|o| o.guid == guid)
    }

    pub fn geometry_of(&self, guid: &str) -> Option<&[u8]> {
        self.geometry.get(guid).map(Vec::as_slice)
    }

    pub fn digest_of(&self, obj: &ModelObject) -> ObjectDigest {
        digest(obj, self.geometry_of(&obj.guid))
    }

    /// Per-object digests keyed by GUID.
    pub fn digests(&self) -> BTreeMap<String, ObjectDigest> {
        self.objects
            .iter()
            .map(|o| (o.guid.clone(), self.digest_of(o)))
            .collect()
    }

    /// True when both snapshots hold the same objects with the same digests.
    pub fn digest_eq(&self, other: &DisciplineSnapshot) -> bool {
        self.discipline == other.discipline && self.digests() == other.digests()
    }

    /// Checks the structural invariants that do not need the filesystem.
    pub fn validate(&self) -> Result<(), ContainerError> {
        if self.version_tag.is_empty() {
            return Err(malformed(0, "version_tag is empty"));
        }
        let storeys: BTreeSet<&str> = self.storeys.iter().map(|s| s.key.as_str()).collect();
        let spaces: BTreeSet<&str> = self.spaces.iter().map(|s| s.key.as_str()).collect();
        for space in &self.spaces {
            if !storeys.contains(space.storey.as_str()) {
                return Err(malformed(
                    0,
                    format!("space {} references unknown storey {}", space.key, space.storey),
                ));
            }
        }
        let mut seen = BTreeSet::new();
        for obj in &self.objects {
            if !seen.insert(obj.guid.as_str()) {
                return Err(ContainerError::DuplicateGuid(obj.guid.clone()));
            }
            if obj.discipline != self.discipline {
                return Err(malformed(
                    0,
                    format!("object {} belongs to {}", obj.guid, obj.discipline),
                ));
            }
            if obj.category.is_empty() {
                return Err(malformed(0, format!("object {} has an empty category", obj.guid)));
            }
            if !storeys.contains(obj.storey.as_str()) {
                return Err(ContainerError::BadStoreyRef(obj.guid.clone()));
            }
            if let Some(space) = &obj.space {
                if !spaces.contains(space.as_str()) {
                    return Err(malformed(
                        0,
                        format!("object {} references unknown space {space}", obj.guid),
                    ));
                }
            }
            match (&obj.geometry_path, self.geometry.contains_key(&obj.guid)) {
                (Some(path), false) => {
                    return Err(ContainerError::DanglingGeometryRef {
                        guid: obj.guid.clone(),
                        path: path.clone(),
                    })
                }
                (None, true) => {
                    return Err(malformed(
                        0,
                        format!("object {} has geometry bytes but no geometry path", obj.guid),
                    ))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> ContainerError {
    ContainerError::MalformedManifest {
        line,
        reason: reason.into(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema_version: String,
    units: String,
    discipline: String,
    version_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    created_at: Option<DateTime<Utc>>,
    #[serde(default)]
    storeys: Vec<Storey>,
    #[serde(default)]
    spaces: Vec<Space>,
    #[serde(default)]
    objects: Vec<ManifestObject>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestObject {
    guid: String,
    category: String,
    #[serde(default)]
    name: String,
    storey: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    space: Option<String>,
    #[serde(default)]
    attributes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geometry: Option<String>,
}

/// 1-based line of the first occurrence of `needle`, or 0.
fn line_of(text: &str, needle: &str) -> usize {
    text.lines()
        .position(|l| l.contains(needle))
        .map_or(0, |i| i + 1)
}

fn check_relative(path: &str) -> bool {
    let p = Path::new(path);
    !path.is_empty()
        && p.components()
            .all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

/// Reads and validates a model container.
pub fn parse_container(root: impl AsRef<Path>) -> Result<DisciplineSnapshot, ContainerError> {
    let root = root.as_ref();
    let manifest_path = root.join(MANIFEST_FILE);
    let text = match fs::read(&manifest_path) {
        Ok(bytes) => String::from_utf8(bytes).map_err(|e| {
            let line = e.as_bytes()[..e.utf8_error().valid_up_to()]
                .iter()
                .filter(|b| **b == b'\n')
                .count()
                + 1;
            malformed(line, "manifest is not valid UTF-8")
        })?,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(ContainerError::MissingManifest(root.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| malformed(e.line(), e.to_string()))?;

    if manifest.schema_version != SCHEMA_VERSION {
        return Err(malformed(
            line_of(&text, "schema_version"),
            format!("unsupported schema_version {:?}", manifest.schema_version),
        ));
    }
    if manifest.units != UNITS {
        return Err(malformed(
            line_of(&text, "\"units\""),
            format!("units must be \"m\", got {:?}", manifest.units),
        ));
    }
    let discipline: Discipline = manifest
        .discipline
        .parse()
        .map_err(|e: UnknownDiscipline| malformed(line_of(&text, "\"discipline\""), e.to_string()))?;
    if manifest.version_tag.is_empty() {
        return Err(malformed(line_of(&text, "version_tag"), "version_tag is empty"));
    }
    let created_at = match manifest.created_at {
        Some(t) => t,
        None => fs::metadata(&manifest_path)?
            .modified()
            .map(DateTime::<Utc>::from)
            .unwrap_or(DateTime::<Utc>::UNIX_EPOCH),
    };

    let mut objects = Vec::with_capacity(manifest.objects.len());
    let mut geometry = BTreeMap::new();
    for raw in manifest.objects {
        let guid = canonical_guid(&raw.guid)
            .map_err(|e| malformed(line_of(&text, &raw.guid), e.to_string()))?;
        if raw.category.is_empty() {
            return Err(malformed(
                line_of(&text, &raw.guid),
                format!("object {guid} has an empty category"),
            ));
        }
        if let Some(path) = &raw.geometry {
            if !check_relative(path) {
                return Err(ContainerError::DanglingGeometryRef {
                    guid,
                    path: path.clone(),
                });
            }
            let bytes = match fs::read(root.join(path)) {
                Ok(b) => b,
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    return Err(ContainerError::DanglingGeometryRef {
                        guid,
                        path: path.clone(),
                    })
                }
                Err(e) => return Err(e.into()),
            };
            if let Err(source) = ply::read_ply(&bytes) {
                return Err(ContainerError::BadGeometry { guid, source });
            }
            if geometry.insert(guid.clone(), bytes).is_some() {
                return Err(ContainerError::DuplicateGuid(guid));
            }
        }
        objects.push(ModelObject {
            guid,
            discipline,
            category: raw.category,
            name: raw.name,
            storey: raw.storey,
            space: raw.space,
            attributes: raw.attributes,
            geometry_path: raw.geometry,
        });
    }

    let snapshot = DisciplineSnapshot {
        discipline,
        version_tag: manifest.version_tag,
        created_at,
        storeys: manifest.storeys,
        spaces: manifest.spaces,
        objects,
        geometry,
    };
    snapshot.validate().map_err(|e| match e {
        ContainerError::MalformedManifest { line: 0, reason } => {
            // Point at the first object the message names, when there is one.
            let line = snapshot_line_hint(&text, &reason);
            ContainerError::MalformedManifest { line, reason }
        }
        other => other,
    })?;
    Ok(snapshot)
}

fn snapshot_line_hint(text: &str, reason: &str) -> usize {
    reason
        .split_whitespace()
        .filter(|w| w.len() > 2)
        .map(|w| line_of(text, w))
        .find(|l| *l > 0)
        .unwrap_or(0)
}

/// Writes `snapshot` as a container under `root`, creating directories as
/// needed. Geometry files are written to each object's `geometry_path`.
pub fn write_container(snapshot: &DisciplineSnapshot, root: impl AsRef<Path>) -> io::Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root.join(GEOMETRY_DIR))?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION.to_string(),
        units: UNITS.to_string(),
        discipline: snapshot.discipline.as_str().to_string(),
        version_tag: snapshot.version_tag.clone(),
        created_at: Some(snapshot.created_at),
        storeys: snapshot.storeys.clone(),
        spaces: snapshot.spaces.clone(),
        objects: snapshot
            .objects
            .iter()
            .map(|o| ManifestObject {
                guid: o.guid.clone(),
                category: o.category.clone(),
                name: o.name.clone(),
                storey: o.storey.clone(),
                space: o.space.clone(),
                attributes: o.attributes.clone(),
                geometry: o.geometry_path.clone(),
            })
            .collect(),
    };
    for obj in &snapshot.objects {
        if let (Some(path), Some(bytes)) = (&obj.geometry_path, snapshot.geometry.get(&obj.guid)) {
            let target = root.join(path);
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(target, bytes)?;
        }
    }
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(io::Error::other)?;
    json.push(b'\n');
    fs::write(root.join(MANIFEST_FILE), json)
}

/// Conventional container-relative geometry path for an object.
pub fn geometry_path_for(guid: &str) -> String {
    format!("{GEOMETRY_DIR}/{guid}.ply")
}

/// Content hashes of one object, split so that attribute edits and
/// geometry edits can be told apart.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectDigest {
    pub attr_hash: [u8; 32],
    pub geom_hash: [u8; 32],
}

impl fmt::Debug for ObjectDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ObjectDigest")
            .field("attr_hash", &hex(&self.attr_hash))
            .field("geom_hash", &hex(&self.geom_hash))
            .finish()
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn escape_into(out: &mut String, s: &str) {
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '=' => out.push_str("\\="),
            '@' => out.push_str("\\@"),
            c => out.push(c),
        }
    }
}

/// Canonical attribute text: fixed fields first, then `key=value` lines in
/// key order. Keys and values are escaped so the encoding is injective.
pub fn canonical_attributes(obj: &ModelObject) -> String {
    let mut out = String::new();
    let fields = [
        ("@category", Some(obj.category.as_str())),
        ("@name", Some(obj.name.as_str())),
        ("@storey", Some(obj.storey.as_str())),
        ("@space", obj.space.as_deref()),
    ];
    for (field, value) in fields {
        out.push_str(field);
        match value {
            Some(v) => {
                out.push('=');
                escape_into(&mut out, v);
            }
            None => out.push('!'),
        }
        out.push('\n');
    }
    for (k, v) in &obj.attributes {
        escape_into(&mut out, k);
        out.push('=');
        escape_into(&mut out, v);
        out.push('\n');
    }
    out
}

fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

/// Digests an object and its geometry bytes.
///
/// Geometry is hashed in canonical PLY form, so ASCII and binary encodings of
/// the same mesh agree. Bytes that do not parse are hashed verbatim.
pub fn digest(obj: &ModelObject, geometry: Option<&[u8]>) -> ObjectDigest {
    let attr_hash = sha256(canonical_attributes(obj).as_bytes());
    let geom_hash = match geometry {
        None => [0u8; 32],
        Some(bytes) => match ply::read_ply(bytes) {
            Ok(mesh) => sha256(&ply::write_ply(&mesh)),
            Err(_) => sha256(bytes),
        },
    };
    ObjectDigest {
        attr_hash,
        geom_hash,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TriMesh;

    fn wall() -> ModelObject {
        ModelObject {
            guid: "a1b2c3d4-0000-0000-0000-000000000001".into(),
            discipline: Discipline::Architecture,
            category: "Wall".into(),
            name: "Basic Wall".into(),
            storey: "L1".into(),
            space: None,
            attributes: BTreeMap::from([("Base Constraint".into(), "L1".into())]),
            geometry_path: Some(geometry_path_for("a1b2c3d4-0000-0000-0000-000000000001")),
        }
    }

    fn snapshot_with(objects: Vec<ModelObject>) -> DisciplineSnapshot {
        let geometry = objects
            .iter()
            .filter(|o| o.geometry_path.is_some())
            .map(|o| {
                let mesh = TriMesh::cuboid([0.0; 3], [1.0; 3]);
                (o.guid.clone(), ply::write_ply(&mesh))
            })
            .collect();
        DisciplineSnapshot {
            discipline: Discipline::Architecture,
            version_tag: "v1".into(),
            created_at: DateTime::<Utc>::UNIX_EPOCH,
            storeys: vec![Storey {
                key: "L1".into(),
                name: "Level 1".into(),
                elevation: 0.0,
            }],
            spaces: vec![],
            objects,
            geometry,
        }
    }

    #[test]
    fn guid_canonicalisation() {
        assert_eq!(
            canonical_guid("A1B2C3D4-0000-0000-0000-000000000001").unwrap(),
            "a1b2c3d4-0000-0000-0000-000000000001"
        );
        assert_eq!(
            canonical_guid("{a1b2c3d4-0000-0000-0000-000000000001}").unwrap(),
            "a1b2c3d4-0000-0000-0000-000000000001"
        );
        assert!(canonical_guid("not-a-guid").is_err());
        assert!(canonical_guid("{a1b2c3d4-0000-0000-0000-000000000001").is_err());
        assert!(canonical_guid("a1b2c3d4-0000-0000-0000-00000000000g").is_err());
    }

    #[test]
    fn single_wall_container() {
        let dir = tempfile::tempdir().unwrap();
        let snap = snapshot_with(vec![wall()]);
        write_container(&snap, dir.path()).unwrap();
        let back = parse_container(dir.path()).unwrap();
        assert_eq!(back.objects.len(), 1);
        assert!(back.geometry_of(&wall().guid).is_some());
        assert_eq!(back, snap);
    }

    #[test]
    fn duplicate_guid_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let snap = snapshot_with(vec![wall(), wall()]);
        write_container(&snap, dir.path()).unwrap();
        assert!(matches!(
            parse_container(dir.path()),
            Err(ContainerError::DuplicateGuid(_))
        ));
    }

    #[test]
    fn container_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            parse_container(dir.path()),
            Err(ContainerError::MissingManifest(_))
        ));

        let snap = snapshot_with(vec![wall()]);
        write_container(&snap, dir.path()).unwrap();
        fs::remove_file(dir.path().join(geometry_path_for(&wall().guid))).unwrap();
        assert!(matches!(
            parse_container(dir.path()),
            Err(ContainerError::DanglingGeometryRef { .. })
        ));

        let mut bad = wall();
        bad.storey = "L9".into();
        write_container(&snapshot_with(vec![bad]), dir.path()).unwrap();
        assert!(matches!(
            parse_container(dir.path()),
            Err(ContainerError::BadStoreyRef(_))
        ));

        let text = fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        fs::write(
            dir.path().join(MANIFEST_FILE),
            text.replace("\"units\": \"m\"", "\"units\": \"mm\""),
        )
        .unwrap();
        match parse_container(dir.path()) {
            Err(ContainerError::MalformedManifest { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }

        fs::write(dir.path().join(MANIFEST_FILE), "{\n  \"schema_version\": \"1\",\n  oops\n}").unwrap();
        match parse_container(dir.path()) {
            Err(ContainerError::MalformedManifest { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn upper_case_guid_is_canonicalised_on_parse() {
        let dir = tempfile::tempdir().unwrap();
        let mut obj = wall();
        obj.guid = obj.guid.to_uppercase();
        let mut snap = snapshot_with(vec![obj]);
        snap.geometry = BTreeMap::from([(
            wall().guid.to_uppercase(),
            ply::write_ply(&TriMesh::cuboid([0.0; 3], [1.0; 3])),
        )]);
        write_container(&snap, dir.path()).unwrap();
        let back = parse_container(dir.path()).unwrap();
        assert_eq!(back.objects[0].guid, wall().guid);
        assert!(back.geometry.contains_key(&wall().guid));
    }

    #[test]
    fn digest_separates_attribute_and_geometry_edits() {
        let obj = wall();
        let cube = ply::write_ply(&TriMesh::cuboid([0.0; 3], [1.0; 3]));
        let a = digest(&obj, Some(&cube));
        assert_eq!(a, digest(&obj, Some(&cube)));

        let mut edited = obj.clone();
        edited.attributes.insert("Base Constraint".into(), "L2".into());
        let b = digest(&edited, Some(&cube));
        assert_ne!(a.attr_hash, b.attr_hash);
        assert_eq!(a.geom_hash, b.geom_hash);

        let moved = ply::write_ply(&TriMesh::cuboid([0.5, 0.0, 0.0], [1.5, 1.0, 1.0]));
        let c = digest(&obj, Some(&moved));
        assert_eq!(a.attr_hash, c.attr_hash);
        assert_ne!(a.geom_hash, c.geom_hash);

        assert_eq!(digest(&obj, None).geom_hash, [0u8; 32]);
    }

    #[test]
    fn attribute_encoding_is_injective_on_separators() {
        let mut a = wall();
        a.attributes = BTreeMap::from([("k=1".into(), "v".into())]);
        let mut b = wall();
        b.attributes = BTreeMap::from([("k".into(), "1=v".into())]);
        assert_ne!(canonical_attributes(&a), canonical_attributes(&b));

        let mut c = wall();
        c.attributes = BTreeMap::from([("@name".into(), "Basic Wall".into())]);
        let mut d = wall();
        d.name = "x".into();
        d.attributes.clear();
        assert_ne!(canonical_attributes(&c), canonical_attributes(&d));
    }
}
