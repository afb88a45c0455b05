//! Python bindings: snapshots, change sets, meshes and an embedded
//! coordination server.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use cbim_core::geometry::{self, ply};
use cbim_core::graph::turtle;
use cbim_core::model::{parse_container, write_container};
use cbim_core::propagation::drain_queue;
use cbim_core::server::Rules;
use cbim_core::{fixtures, Discipline, Tolerances};

create_exception!(cbim, CbimError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    CbimError::new_err(e.to_string())
}

fn discipline(s: &str) -> PyResult<Discipline> {
    s.parse().map_err(|e: cbim_core::model::UnknownDiscipline| PyValueError::new_err(e.to_string()))
}

#[pyclass(module = "cbim", frozen)]
struct Snapshot {
    inner: cbim_core::DisciplineSnapshot,
}

#[pymethods]
impl Snapshot {
    /// Reads and validates a model container directory.
    #[staticmethod]
    fn parse(path: PathBuf) -> PyResult<Self> {
        Ok(Snapshot { inner: parse_container(path).map_err(err)? })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_container(&self.inner, path).map_err(err)
    }

    #[getter]
    fn discipline(&self) -> &'static str {
        self.inner.discipline.as_str()
    }

    #[getter]
    fn version_tag(&self) -> String {
        self.inner.version_tag.clone()
    }

    fn guids(&self) -> Vec<String> {
        self.inner.objects.iter().map(|o| o.guid.clone()).collect()
    }

    fn category(&self, guid: &str) -> Option<String> {
        self.inner.object(guid).map(|o| o.category.clone())
    }

    fn geometry<'py>(&self, py: Python<'py>, guid: &str) -> Option<Bound<'py, PyBytes>> {
        self.inner.geometry_of(guid).map(|b| PyBytes::new(py, b))
    }

    /// Hex digests (attributes, geometry) of one object.
    fn digest(&self, guid: &str) -> Option<(String, String)> {
        let o = self.inner.object(guid)?;
        let d = self.inner.digest_of(o);
        let hex = |b: &[u8; 32]| b.iter().map(|x| format!("{x:02x}")).collect::<String>();
        Some((hex(&d.attr_hash), hex(&d.geom_hash)))
    }

    fn digest_eq(&self, other: &Snapshot) -> bool {
        self.inner.digest_eq(&other.inner)
    }

    /// Copy with a new version tag, optionally moving one object's mesh.
    #[pyo3(signature = (version_tag, guid=None, offset=None))]
    fn revised(&self, version_tag: String, guid: Option<&str>, offset: Option<[f64; 3]>) -> PyResult<Self> {
        let mut s = self.inner.clone();
        s.version_tag = version_tag;
        if let (Some(g), Some(by)) = (guid, offset) {
            let bytes = s.geometry.get(g).ok_or_else(|| PyValueError::new_err(format!("no geometry for {g}")))?;
            let mesh = ply::read_ply(bytes).map_err(err)?;
            s.geometry.insert(g.to_string(), ply::write_ply(&mesh.translated(by)));
        }
        Ok(Snapshot { inner: s })
    }

    fn __len__(&self) -> usize {
        self.inner.objects.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Snapshot({}, {:?}, {} objects)",
            self.inner.discipline,
            self.inner.version_tag,
            self.inner.objects.len()
        )
    }
}

#[pyclass(module = "cbim", frozen)]
struct ChangeSet {
    inner: cbim_core::ChangeSet,
}

#[pymethods]
impl ChangeSet {
    #[getter]
    fn added(&self) -> Vec<String> {
        self.inner.added.iter().map(|a| a.object.guid.clone()).collect()
    }

    /// (guid, kind) pairs, kind one of geometry, attribute, both.
    #[getter]
    fn modified(&self) -> Vec<(String, &'static str)> {
        self.inner.modified.iter().map(|m| (m.object.guid.clone(), m.kind.as_str())).collect()
    }

    #[getter]
    fn deleted(&self) -> Vec<String> {
        self.inner.deleted.iter().map(|d| d.guid.clone()).collect()
    }

    #[getter]
    fn base_version(&self) -> String {
        self.inner.base_version.clone()
    }

    #[getter]
    fn new_version(&self) -> String {
        self.inner.new_version.clone()
    }

    fn is_empty(&self) -> bool {
        self.inner.is_empty()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "ChangeSet({} -> {}: {} added, {} modified, {} deleted)",
            self.inner.base_version,
            self.inner.new_version,
            self.inner.added.len(),
            self.inner.modified.len(),
            self.inner.deleted.len()
        )
    }
}

#[pyfunction]
fn diff(old: &Snapshot, new: &Snapshot) -> PyResult<ChangeSet> {
    Ok(ChangeSet { inner: cbim_core::diff(&old.inner, &new.inner).map_err(err)? })
}

#[pyfunction]
fn apply(base: &Snapshot, cs: &ChangeSet) -> PyResult<Snapshot> {
    Ok(Snapshot { inner: cbim_core::apply(&base.inner, &cs.inner).map_err(err)? })
}

#[pyfunction]
fn empty_snapshot(discipline_name: &str) -> PyResult<Snapshot> {
    Ok(Snapshot { inner: cbim_core::DisciplineSnapshot::empty(discipline(discipline_name)?) })
}

#[pyclass(module = "cbim", frozen)]
struct Mesh {
    inner: cbim_core::TriMesh,
}

#[pymethods]
impl Mesh {
    #[staticmethod]
    fn cuboid(min: [f64; 3], max: [f64; 3]) -> Self {
        Mesh { inner: cbim_core::TriMesh::cuboid(min, max) }
    }

    #[staticmethod]
    fn from_ply(data: &[u8]) -> PyResult<Self> {
        Ok(Mesh { inner: ply::read_ply(data).map_err(err)? })
    }

    fn to_ply<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &ply::write_ply(&self.inner))
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertices.len()
    }

    #[getter]
    fn face_count(&self) -> usize {
        self.inner.faces.len()
    }

    fn is_closed(&self) -> bool {
        geometry::is_closed(&self.inner, Tolerances::default().weld_eps)
    }

    fn contains_point(&self, p: [f64; 3]) -> PyResult<bool> {
        geometry::point_inside(p, &self.inner).map_err(err)
    }
}

#[pyclass(module = "cbim", frozen, get_all)]
struct Relation {
    predicate: String,
    min_distance: f64,
    meshes_closed: bool,
    aabb_fallback: bool,
}

#[pymethods]
impl Relation {
    fn __repr__(&self) -> String {
        format!("Relation({}, {})", self.predicate, self.min_distance)
    }
}

#[pyfunction]
#[pyo3(signature = (a, b, touch_tol=None, near_tol=None))]
fn classify_spatial(a: &Mesh, b: &Mesh, touch_tol: Option<f64>, near_tol: Option<f64>) -> PyResult<Relation> {
    let mut tol = Tolerances::default();
    tol.touch_tol = touch_tol.unwrap_or(tol.touch_tol);
    tol.near_tol = near_tol.unwrap_or(tol.near_tol);
    let r = geometry::classify_spatial(&a.inner, &b.inner, &tol).map_err(err)?;
    Ok(Relation {
        predicate: r.predicate.as_str().to_string(),
        min_distance: r.min_distance,
        meshes_closed: r.meshes_closed,
        aabb_fallback: r.aabb_fallback,
    })
}

#[pyfunction]
fn min_distance(a: &Mesh, b: &Mesh) -> PyResult<f64> {
    geometry::min_distance(&a.inner, &b.inner).map_err(err)
}

#[pyclass(module = "cbim", frozen, get_all)]
struct PackageEntry {
    guid: String,
    category: String,
    change: String,
    kind: Option<String>,
    geometry: Option<Py<PyBytes>>,
}

#[pyclass(module = "cbim", frozen, get_all)]
struct Package {
    package_id: u64,
    source_discipline: String,
    source_version: String,
    target_discipline: String,
    entries: Vec<Py<PackageEntry>>,
}

#[pyclass(module = "cbim", frozen, get_all)]
struct PushResult {
    version_tag: String,
    accepted: usize,
    filtered_out: Vec<String>,
    packages_queued: Vec<(String, usize)>,
}

/// An in-process coordination server over a data directory; no sockets.
#[pyclass(module = "cbim", frozen)]
struct Coordinator {
    inner: cbim_core::server::Coordinator,
}

#[pymethods]
impl Coordinator {
    #[new]
    fn new(data_dir: PathBuf) -> PyResult<Self> {
        Ok(Coordinator { inner: cbim_core::server::Coordinator::open(data_dir, Rules::default()).map_err(err)? })
    }

    fn push(&self, py: Python<'_>, cs: &ChangeSet) -> PyResult<PushResult> {
        let out = py.detach(|| self.inner.push(&cs.inner)).map_err(err)?;
        Ok(PushResult {
            version_tag: out.version_tag.clone(),
            accepted: out.accepted,
            filtered_out: out.filtered_out.clone(),
            packages_queued: out.packages_queued().into_iter().map(|(d, n)| (d.to_string(), n)).collect(),
        })
    }

    #[pyo3(signature = (discipline_name, after_seq=0))]
    fn pull(&self, py: Python<'_>, discipline_name: &str, after_seq: u64) -> PyResult<Vec<Package>> {
        let d = discipline(discipline_name)?;
        let packages = drain_queue(&self.inner.state(), d, after_seq);
        packages
            .iter()
            .map(|p| {
                let entries = p
                    .entries
                    .iter()
                    .map(|e| {
                        Py::new(
                            py,
                            PackageEntry {
                                guid: e.guid.clone(),
                                category: e.category.clone(),
                                change: e.change.as_str().to_string(),
                                kind: e.kind.map(|k| k.as_str().to_string()),
                                geometry: e.geometry.as_ref().map(|g| PyBytes::new(py, g).unbind()),
                            },
                        )
                    })
                    .collect::<PyResult<Vec<_>>>()?;
                Ok(Package {
                    package_id: p.package_id,
                    source_discipline: p.source_discipline.to_string(),
                    source_version: p.source_version.clone(),
                    target_discipline: p.target_discipline.to_string(),
                    entries,
                })
            })
            .collect()
    }

    fn latest_version(&self, discipline_name: &str) -> PyResult<String> {
        Ok(self.inner.state().graph.latest_version(discipline(discipline_name)?).to_string())
    }

    /// (guid, guid, predicate, min_distance) for every cross-discipline edge.
    fn relations(&self) -> Vec<(String, String, String, f64)> {
        let st = self.inner.state();
        st.graph
            .relspatial_edges()
            .filter_map(|e| {
                let s = e.spatial.as_ref()?;
                Some((e.src.clone(), e.dst.clone(), s.predicate.as_str().to_string(), s.min_distance))
            })
            .collect()
    }

    fn export_turtle(&self) -> String {
        String::from_utf8(turtle::export_turtle(&self.inner.state().graph)).expect("turtle is UTF-8")
    }
}

#[pyfunction]
fn case_study_architecture() -> Snapshot {
    Snapshot { inner: fixtures::case_study_architecture() }
}

#[pyfunction]
fn case_study_structure() -> Snapshot {
    Snapshot { inner: fixtures::case_study_structure() }
}

#[pyfunction]
fn case_study_structure_relocated() -> Snapshot {
    Snapshot { inner: fixtures::case_study_structure_relocated() }
}

#[pymodule]
fn cbim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CbimError", m.py().get_type::<CbimError>())?;
    m.add_class::<Snapshot>()?;
    m.add_class::<ChangeSet>()?;
    m.add_class::<Mesh>()?;
    m.add_class::<Relation>()?;
    m.add_class::<Package>()?;
    m.add_class::<PackageEntry>()?;
    m.add_class::<PushResult>()?;
    m.add_class::<Coordinator>()?;
    m.add_function(wrap_pyfunction!(diff, m)?)?;
    m.add_function(wrap_pyfunction!(apply, m)?)?;
    m.add_function(wrap_pyfunction!(empty_snapshot, m)?)?;
    m.add_function(wrap_pyfunction!(classify_spatial, m)?)?;
    m.add_function(wrap_pyfunction!(min_distance, m)?)?;
    m.add_function(wrap_pyfunction!(case_study_architecture, m)?)?;
    m.add_function(wrap_pyfunction!(case_study_structure, m)?)?;
    m.add_function(wrap_pyfunction!(case_study_structure_relocated, m)?)?;
    Ok(())
}
