"""Smoke test for the cbim extension module.

Build and install first, e.g. `pip install --no-build-isolation ./crates/py`
(needs maturin), then run `python python/smoke_test.py`.
"""

import tempfile

import cbim


def main():
    a1 = cbim.case_study_architecture()
    s1 = cbim.case_study_structure()
    s2 = cbim.case_study_structure_relocated()
    assert len(a1) == 12 and a1.discipline == "architecture"

    cs = cbim.diff(cbim.empty_snapshot("architecture"), a1)
    assert len(cs.added) == 12 and not cs.modified and not cs.deleted
    assert cbim.apply(cbim.empty_snapshot("architecture"), cs).digest_eq(a1)

    moved = cbim.diff(s1, s2)
    assert len(moved.modified) == 6
    assert {k for _, k in moved.modified} == {"geometry"}

    wall = cbim.Mesh.cuboid([0, 0, 0], [5, 0.2, 3])
    column = cbim.Mesh.cuboid([2, 0.05, 0], [2.3, 0.35, 3])
    assert cbim.classify_spatial(wall, column).predicate == "intersects"
    gap = cbim.Mesh.cuboid([0, 0.5, 0], [1, 1, 1])
    rel = cbim.classify_spatial(wall, gap)
    assert rel.predicate == "near" and abs(rel.min_distance - 0.3) < 1e-12
    assert cbim.Mesh.from_ply(wall.to_ply()).face_count == 12

    with tempfile.TemporaryDirectory() as tmp:
        a1.write(tmp + "/a1")
        assert cbim.Snapshot.parse(tmp + "/a1").digest_eq(a1)

        cde = cbim.Coordinator(tmp + "/data")
        ack = cde.push(cs)
        assert (ack.accepted, len(ack.filtered_out)) == (10, 2)
        cde.push(cbim.diff(cbim.empty_snapshot("structure"), s1))
        assert len(cde.relations()) >= 5
        cde.push(moved)
        pkgs = cde.pull("architecture")
        last = pkgs[-1]
        assert last.source_version == "s2" and len(last.entries) == 5
        assert all(e.change == "modified" for e in last.entries)
        for e in cde.pull("structure")[0].entries:
            assert e.geometry == a1.geometry(e.guid)
        assert cde.export_turtle().startswith("@prefix bot:")

        try:
            cde.push(cs)
        except cbim.CbimError as err:
            assert "server holds" in str(err)
        else:
            raise AssertionError("stale push accepted")

    print("cbim smoke test passed")


if __name__ == "__main__":
    main()
