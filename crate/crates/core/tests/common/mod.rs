#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc;
use std::thread;

use cbim_core::geometry::{ply, Point, TriMesh};
use cbim_core::model::{geometry_path_for, Space, Storey};
use cbim_core::server::{serve, Coordinator, RunningServer, Rules};
use cbim_core::{Discipline, DisciplineSnapshot, ModelObject, Predicate};
use chrono::{TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn random_guid(rng: &mut impl Rng) -> String {
    let b: [u8; 16] = rng.gen();
    let h: String = b.iter().map(|x| format!("{x:02x}")).collect();
    format!("{}-{}-{}-{}-{}", &h[0..8], &h[8..12], &h[12..16], &h[16..20], &h[20..32])
}

pub fn categories(d: Discipline) -> &'static [&'static str] {
    match d {
        Discipline::Architecture => &["Wall", "Wall", "Floor", "Door", "Window", "Furniture"],
        Discipline::Structure => &["Column", "Beam", "Slab", "Foundation", "Column"],
    }
}

/// Coordinates on a 5 cm grid, with an occasional few-millimetre offset so
/// that touching pairs come up.
fn grid(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let steps = ((hi - lo) / 0.05) as i64;
    let mut v = lo + 0.05 * rng.gen_range(0..=steps) as f64;
    if rng.gen_bool(0.1) {
        v += 0.003;
    }
    v
}

pub fn random_box(rng: &mut impl Rng, extent: f64) -> (Point, Point) {
    let mut min = [0.0; 3];
    let mut max = [0.0; 3];
    for i in 0..3 {
        min[i] = grid(rng, 0.0, extent);
        max[i] = min[i] + grid(rng, 0.1, extent / 3.0).max(0.1);
    }
    (min, max)
}

pub fn random_object(rng: &mut impl Rng, snap: &mut DisciplineSnapshot, extent: f64) {
    let guid = random_guid(rng);
    let category = categories(snap.discipline).choose(rng).unwrap().to_string();
    let (min, max) = random_box(rng, extent);
    let mut attributes = BTreeMap::new();
    for _ in 0..rng.gen_range(0..4) {
        attributes.insert(format!("attr{}", rng.gen_range(0..6)), format!("{}", rng.gen_range(0..1000)));
    }
    let storey = if rng.gen_bool(0.5) { "L1" } else { "L2" };
    let space = (storey == "L1" && rng.gen_bool(0.2)).then(|| "S1".to_string());
    snap.geometry.insert(guid.clone(), ply::write_ply(&TriMesh::cuboid(min, max)));
    snap.objects.push(ModelObject {
        guid: guid.clone(),
        discipline: snap.discipline,
        category,
        name: format!("obj-{}", rng.gen_range(0..100)),
        storey: storey.into(),
        space,
        attributes,
        geometry_path: Some(geometry_path_for(&guid)),
    });
}

pub fn empty_snapshot(d: Discipline, version: &str) -> DisciplineSnapshot {
    let mut s = DisciplineSnapshot::empty(d);
    s.version_tag = version.into();
    s.created_at = Utc.timestamp_opt(1_750_000_000, 0).unwrap();
    s.storeys = vec![
        Storey { key: "L1".into(), name: "Level 1".into(), elevation: 0.0 },
        Storey { key: "L2".into(), name: "Level 2".into(), elevation: 3.0 },
    ];
    s.spaces = vec![Space { key: "S1".into(), name: "Hall".into(), storey: "L1".into() }];
    s
}

pub fn random_snapshot(rng: &mut impl Rng, d: Discipline, version: &str, max_objects: usize, extent: f64) -> DisciplineSnapshot {
    let mut s = empty_snapshot(d, version);
    for _ in 0..rng.gen_range(0..=max_objects) {
        random_object(rng, &mut s, extent);
    }
    s
}

/// A random next version: deletions, moves, attribute edits, additions.
/// With `quiet` probability nothing changes at all.
pub fn random_edit(rng: &mut impl Rng, s: &DisciplineSnapshot, version: &str, max_objects: usize, extent: f64) -> DisciplineSnapshot {
    let mut t = s.clone();
    t.version_tag = version.into();
    t.created_at = s.created_at + chrono::Duration::seconds(60);
    if rng.gen_bool(0.1) {
        return t;
    }
    let guids: Vec<String> = t.objects.iter().map(|o| o.guid.clone()).collect();
    for g in guids {
        let roll: f64 = rng.gen();
        if roll < 0.1 {
            t.objects.retain(|o| o.guid != g);
            t.geometry.remove(&g);
            continue;
        }
        let move_it = roll < 0.25 || (0.4..0.45).contains(&roll);
        let touch_attrs = (0.25..0.45).contains(&roll);
        if move_it {
            let mesh = ply::read_ply(&t.geometry[&g]).unwrap();
            let step = [0.05 * rng.gen_range(1..4) as f64, 0.0, -0.05 * rng.gen_range(0..3) as f64];
            t.geometry.insert(g.clone(), ply::write_ply(&mesh.translated(step)));
        }
        if touch_attrs {
            let o = t.objects.iter_mut().find(|o| o.guid == g).unwrap();
            match rng.gen_range(0..3) {
                0 => o.name.push('*'),
                1 => {
                    o.attributes.insert("Comment".into(), format!("rev {}", rng.gen::<u32>()));
                }
                _ => o.storey = if o.storey == "L1" { "L2".into() } else { "L1".into() },
            }
            if o.storey == "L2" {
                o.space = None;
            }
        }
    }
    while t.objects.len() < max_objects && rng.gen_bool(0.3) {
        random_object(rng, &mut t, extent);
    }
    t
}

/// Brute-force set difference: every GUID whose record or bytes differ.
pub fn brute_force_changes(old: &DisciplineSnapshot, new: &DisciplineSnapshot) -> BTreeSet<String> {
    let index = |s: &DisciplineSnapshot| -> BTreeMap<String, (ModelObject, Option<Vec<u8>>)> {
        s.objects
            .iter()
            .map(|o| (o.guid.clone(), (o.clone(), s.geometry.get(&o.guid).cloned())))
            .collect()
    };
    let (a, b) = (index(old), index(new));
    let mut out = BTreeSet::new();
    for (g, rec) in &a {
        if b.get(g) != Some(rec) {
            out.insert(g.clone());
        }
    }
    for g in b.keys() {
        if !a.contains_key(g) {
            out.insert(g.clone());
        }
    }
    out
}

/// Expected classification of two axis-aligned boxes, by interval arithmetic.
pub fn box_oracle(a: (Point, Point), b: (Point, Point), touch_tol: f64, near_tol: f64) -> (Predicate, f64) {
    let mut gap_sq = 0.0;
    for i in 0..3 {
        let g = (b.0[i] - a.1[i]).max(a.0[i] - b.1[i]).max(0.0);
        gap_sq += g * g;
    }
    let d = gap_sq.sqrt();
    if d == 0.0 {
        let strictly = |o: &(Point, Point), i: &(Point, Point)| (0..3).all(|k| o.0[k] < i.0[k] && i.1[k] < o.1[k]);
        if strictly(&a, &b) {
            return (Predicate::Contains, 0.0);
        }
        if strictly(&b, &a) {
            return (Predicate::Within, 0.0);
        }
        return (Predicate::Intersects, 0.0);
    }
    if d <= touch_tol {
        (Predicate::Touches, d)
    } else if d <= near_tol {
        (Predicate::Near, d)
    } else {
        (Predicate::Disjoint, d)
    }
}

pub fn start_server(data_dir: &Path) -> RunningServer {
    let c = Coordinator::open(data_dir, Rules::default()).expect("open coordinator");
    serve(c, "127.0.0.1:0").expect("bind")
}

/// A TCP relay that hands back every byte a client sent, one message per
/// closed connection.
pub struct Recorder {
    pub addr: SocketAddr,
    pub sessions: mpsc::Receiver<Vec<u8>>,
}

pub fn recording_proxy(upstream: SocketAddr) -> Recorder {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for conn in listener.incoming() {
            let Ok(mut client) = conn else { continue };
            let Ok(mut server) = TcpStream::connect(upstream) else { continue };
            let mut client_w = client.try_clone().unwrap();
            let mut server_r = server.try_clone().unwrap();
            thread::spawn(move || {
                let mut buf = [0u8; 8192];
                while let Ok(n) = server_r.read(&mut buf) {
                    if n == 0 || client_w.write_all(&buf[..n]).is_err() {
                        break;
                    }
                }
                let _ = client_w.shutdown(Shutdown::Write);
            });
            let tx = tx.clone();
            thread::spawn(move || {
                let mut seen = Vec::new();
                let mut buf = [0u8; 8192];
                while let Ok(n) = client.read(&mut buf) {
                    if n == 0 {
                        break;
                    }
                    seen.extend_from_slice(&buf[..n]);
                    if server.write_all(&buf[..n]).is_err() {
                        break;
                    }
                }
                let _ = server.shutdown(Shutdown::Write);
                let _ = tx.send(seen);
            });
        }
    });
    Recorder { addr, sessions: rx }
}

/// The cbim-server binary, started on a free port.
pub struct ServerProcess {
    pub child: Child,
    pub addr: String,
}

impl ServerProcess {
    pub fn start(data_dir: &Path) -> ServerProcess {
        let mut child = Command::new(env!("CARGO_BIN_EXE_cbim-server"))
            .args(["--port", "0", "--log-level", "warn", "--data-dir"])
            .arg(data_dir)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("spawn cbim-server");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("cbim-server listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_string();
        ServerProcess { child, addr }
    }

    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for ServerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Relative path to bytes for every file below `root`.
pub fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let Ok(rd) = std::fs::read_dir(&dir) else { continue };
        for e in rd.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
