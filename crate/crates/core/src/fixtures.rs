//! The two-storey house used in examples and end-to-end tests.
//!
//! A 10 m by 6 m house. The architecture model has six walls, two floors,
//! two doors and two pieces of furniture. The structure model places three
//! columns and two beams inside the east wall (x 9.8 to 10.0), corner
//! columns on the west side, a foundation, and one column well outside the
//! house that relates to nothing.

use std::collections::BTreeMap;

use chrono::{DateTime, TimeZone, Utc};

use crate::geometry::{ply, Point, TriMesh};
use crate::model::{geometry_path_for, Discipline, DisciplineSnapshot, ModelObject, Space, Storey};

/// Deterministic GUID for fixture object `n` of a discipline.
pub fn fixture_guid(discipline: Discipline, n: u32) -> String {
    let lead = match discipline {
        Discipline::Architecture => 0xa0c4_0000u32,
        Discipline::Structure => 0x57c0_0000u32,
    };
    format!("{:08x}-0000-4000-8000-{:012x}", lead + n, n)
}

fn at(secs: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap()
}

fn storeys() -> Vec<Storey> {
    vec![
        Storey {
            key: "L1".into(),
            name: "Ground floor".into(),
            elevation: 0.0,
        },
        Storey {
            key: "L2".into(),
            name: "Upper floor".into(),
            elevation: 3.0,
        },
    ]
}

/// Appends a box-shaped object with canonical PLY geometry.
pub fn push_box(
    snap: &mut DisciplineSnapshot,
    guid: String,
    category: &str,
    name: &str,
    storey: &str,
    min: Point,
    max: Point,
) {
    let mut attributes = BTreeMap::new();
    attributes.insert("Mark".to_string(), name.to_string());
    attributes.insert(
        "Type Name".to_string(),
        format!("{category} {:.0}x{:.0}", (max[0] - min[0]) * 1000.0, (max[1] - min[1]) * 1000.0),
    );
    snap.geometry
        .insert(guid.clone(), ply::write_ply(&TriMesh::cuboid(min, max)));
    snap.objects.push(ModelObject {
        guid: guid.clone(),
        discipline: snap.discipline,
        category: category.to_string(),
        name: name.to_string(),
        storey: storey.to_string(),
        space: None,
        attributes,
        geometry_path: Some(geometry_path_for(&guid)),
    });
}

/// Moves an object's box geometry by `by`.
pub fn translate_object(snap: &mut DisciplineSnapshot, guid: &str, by: Point) {
    let bytes = snap.geometry.get(guid).expect("fixture object has geometry");
    let mesh = ply::read_ply(bytes).expect("fixture geometry parses");
    snap.geometry
        .insert(guid.to_string(), ply::write_ply(&mesh.translated(by)));
}

/// Architecture version `a1`: 12 objects, 2 of them furniture.
pub fn case_study_architecture() -> DisciplineSnapshot {
    let d = Discipline::Architecture;
    let mut s = DisciplineSnapshot::empty(d);
    s.version_tag = "a1".into();
    s.created_at = at(0);
    s.storeys = storeys();
    s.spaces = vec![
        Space {
            key: "living".into(),
            name: "Living room".into(),
            storey: "L1".into(),
        },
        Space {
            key: "kitchen".into(),
            name: "Kitchen".into(),
            storey: "L1".into(),
        },
    ];
    let g = |n| fixture_guid(d, n);
    push_box(&mut s, g(1), "Wall", "South wall", "L1", [0.0, 0.0, 0.0], [10.0, 0.2, 3.0]);
    push_box(&mut s, g(2), "Wall", "North wall", "L1", [0.0, 5.8, 0.0], [10.0, 6.0, 3.0]);
    push_box(&mut s, g(3), "Wall", "West wall", "L1", [0.0, 0.2, 0.0], [0.2, 5.8, 3.0]);
    push_box(&mut s, g(4), "Wall", "East wall", "L1", [9.8, 0.2, 0.0], [10.0, 5.8, 3.0]);
    push_box(&mut s, g(5), "Wall", "Partition wall", "L1", [4.9, 0.2, 0.0], [5.1, 5.8, 3.0]);
    push_box(&mut s, g(6), "Wall", "Hall wall", "L1", [0.2, 2.9, 0.0], [4.9, 3.1, 3.0]);
    push_box(&mut s, g(7), "Floor", "Ground slab finish", "L1", [0.0, 0.0, -0.1], [10.0, 6.0, 0.0]);
    push_box(&mut s, g(8), "Floor", "Upper floor", "L2", [0.0, 0.0, 3.0], [10.0, 6.0, 3.2]);
    push_box(&mut s, g(9), "Door", "Entrance door", "L1", [2.0, -0.01, 0.0], [2.9, 0.21, 2.1]);
    push_box(&mut s, g(10), "Door", "Kitchen door", "L1", [4.89, 4.0, 0.0], [5.11, 4.9, 2.1]);
    push_box(&mut s, g(11), "Furniture", "Dining table", "L1", [6.5, 2.0, 0.0], [8.0, 3.0, 0.75]);
    push_box(&mut s, g(12), "Furniture", "Sofa", "L1", [1.0, 0.8, 0.0], [3.0, 1.7, 0.9]);
    s.objects[10].space = Some("kitchen".into());
    s.objects[11].space = Some("living".into());
    s
}

pub fn east_column_guids() -> [String; 3] {
    [1, 2, 3].map(|n| fixture_guid(Discipline::Structure, n))
}

pub fn east_beam_guids() -> [String; 2] {
    [4, 5].map(|n| fixture_guid(Discipline::Structure, n))
}

/// The column standing away from the house.
pub fn detached_column_guid() -> String {
    fixture_guid(Discipline::Structure, 9)
}

/// Structure version `s1`.
pub fn case_study_structure() -> DisciplineSnapshot {
    let d = Discipline::Structure;
    let mut s = DisciplineSnapshot::empty(d);
    s.version_tag = "s1".into();
    s.created_at = at(600);
    s.storeys = storeys();
    let g = |n| fixture_guid(d, n);
    push_box(&mut s, g(1), "Column", "C-E1", "L1", [9.75, 0.3, 0.0], [10.05, 0.6, 3.0]);
    push_box(&mut s, g(2), "Column", "C-E2", "L1", [9.75, 2.85, 0.0], [10.05, 3.15, 3.0]);
    push_box(&mut s, g(3), "Column", "C-E3", "L1", [9.75, 5.4, 0.0], [10.05, 5.7, 3.0]);
    push_box(&mut s, g(4), "Beam", "B-E1", "L1", [9.8, 0.6, 2.7], [10.0, 2.85, 3.0]);
    push_box(&mut s, g(5), "Beam", "B-E2", "L1", [9.8, 3.15, 2.7], [10.0, 5.4, 3.0]);
    push_box(&mut s, g(6), "Column", "C-W1", "L1", [0.25, 0.3, 0.0], [0.55, 0.6, 3.0]);
    push_box(&mut s, g(7), "Column", "C-W2", "L1", [0.25, 5.4, 0.0], [0.55, 5.7, 3.0]);
    push_box(&mut s, g(8), "Foundation", "Raft", "L1", [-0.3, -0.3, -0.6], [10.3, 6.3, -0.1]);
    push_box(&mut s, g(9), "Column", "C-Carport", "L1", [13.0, 3.0, 0.0], [13.3, 3.3, 2.5]);
    s
}

/// Structure version `s2`: the east columns and beams move 0.1 m west, and
/// the detached column moves as well.
pub fn case_study_structure_relocated() -> DisciplineSnapshot {
    let mut s = case_study_structure();
    s.version_tag = "s2".into();
    s.created_at = at(1200);
    for guid in east_column_guids().iter().chain(east_beam_guids().iter()) {
        translate_object(&mut s, guid, [-0.1, 0.0, 0.0]);
    }
    translate_object(&mut s, &detached_column_guid(), [0.0, 0.5, 0.0]);
    s
}
