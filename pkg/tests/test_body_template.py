import numpy as np
import pytest

from mug.body_template import (
    BANK_SIZE,
    COCO19,
    H36M17,
    BodyTemplate,
    TemplateError,
    build_synthetic_template,
    build_template_bank,
    compute_nearest_joints,
    load_template,
    regress_joints,
    save_template,
    subdivision_upsample,
    upsample_mesh,
)


def test_default_template_counts(full_template):
    assert full_template.V == 431
    assert full_template.V_full == 1724  # exactly 4V
    assert full_template.J == 17
    assert len(full_template.skeleton_edges) == 16


def test_upsample_is_exactly_4v(toy_template, full_template):
    for t in (toy_template, full_template):
        assert t.V_full == 4 * t.V
        assert t.faces_full.shape[0] == 4 * t.faces.shape[0]


def test_regressor_rows_sum_to_one(full_template):
    assert np.allclose(full_template.regressor.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(full_template.regressor >= 0)


def test_closed_surface_edge_count(full_template):
    # Euler characteristic 0 (torus): E = 3V, F = 2V
    edges = set()
    for f in full_template.faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            edges.add((min(a, b), max(a, b)))
    assert len(edges) == 3 * full_template.V
    assert len(full_template.faces) == 2 * full_template.V


def test_every_edge_shared_by_two_faces(full_template):
    count = {}
    for f in full_template.faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            count[(min(a, b), max(a, b))] = count.get((min(a, b), max(a, b)), 0) + 1
    assert set(count.values()) == {2}


def test_mirror_symmetry_is_exact(full_template):
    t = full_template
    sw = t.vertex_swap
    mirrored = t.vertices[sw].copy()
    mirrored[:, 0] = -mirrored[:, 0]
    assert np.array_equal(mirrored, t.vertices)
    assert np.array_equal(sw[sw], np.arange(t.V))  # involution
    # regressor commutes with the two swaps
    assert np.array_equal(t.regressor, t.regressor[t.joint_swap][:, sw])


def test_no_degenerate_faces(full_template):
    v, f = full_template.vertices, full_template.faces
    areas = np.linalg.norm(
        np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1
    )
    assert areas.min() > 1e-3  # mm^2


def test_coco19_variant():
    t = build_synthetic_template("coco19")
    assert t.J == 19
    assert t.root_index == 17
    assert t.V == 431 and t.V_full == 1724
    t.validate()


def test_nearest_joints_tie_break_lower_index():
    # a vertex equidistant from joints 0 and 1 must pick 0 first
    tpl = BodyTemplate(
        vertices=np.array([[0.0, 0, 0], [2.0, 0, 0], [1.0, 5, 0]]),
        faces=np.array([[0, 1, 2]]),
        skeleton_edges=np.array([[0, 1]]),
        regressor=np.array([[1.0, 0, 0], [0, 1.0, 0]]),
        upsample=subdivision_upsample(np.array([[0, 1, 2]]), 3)[0],
        root_index=0,
        joint_names=("a", "b"),
    )
    nj = compute_nearest_joints(tpl)
    assert nj[2, 0] == 0 and nj[2, 1] == 1


def test_regress_and_upsample_shapes(full_template):
    joints = regress_joints(full_template, full_template.vertices)
    assert joints.shape == (17, 3)
    fine = upsample_mesh(full_template, full_template.vertices)
    assert fine.shape == (1724, 3)
    with pytest.raises(ValueError, match="expected"):
        regress_joints(full_template, full_template.vertices[:10])
    with pytest.raises(ValueError, match="expected"):
        upsample_mesh(full_template, full_template.vertices[:10])


def test_upsample_midpoints_exact(toy_template):
    fine = upsample_mesh(toy_template, toy_template.vertices)
    v = toy_template.vertices
    assert np.array_equal(fine[: toy_template.V], v)
    # every added vertex is the midpoint of some coarse edge
    up = toy_template.upsample.tocsr()
    for r in range(toy_template.V, toy_template.V_full):
        row = up[r]
        assert row.nnz == 2 and np.allclose(row.data, 0.5)


def test_validation_collects_all_errors(toy_template):
    bad = BodyTemplate(
        vertices=toy_template.vertices,
        faces=toy_template.faces,
        skeleton_edges=toy_template.skeleton_edges[:-1],  # not a tree
        regressor=toy_template.regressor * 2.0,  # rows sum to 2
        upsample=toy_template.upsample,
        root_index=99,
        joint_names=toy_template.joint_names,
    )
    with pytest.raises(TemplateError) as exc:
        bad.validate()
    msg = str(exc.value)
    assert "row 0 sums to 2" in msg
    assert "not a tree" in msg
    assert "root_index 99" in msg


def test_save_load_roundtrip(tmp_path, toy_template):
    path = tmp_path / "tpl.json"
    save_template(toy_template, path)
    loaded = load_template(path)
    assert np.array_equal(loaded.vertices, toy_template.vertices)
    assert np.array_equal(loaded.faces, toy_template.faces)
    assert np.array_equal(loaded.regressor, toy_template.regressor)
    assert np.array_equal(loaded.vertex_swap, toy_template.vertex_swap)
    assert loaded.content_hash() == toy_template.content_hash()


def test_load_reports_missing_keys(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"vertices": []}')
    with pytest.raises(TemplateError, match="missing keys"):
        load_template(path)
    with pytest.raises(TemplateError, match="cannot read"):
        load_template(tmp_path / "absent.json")


def test_bank_is_deterministic_and_sized(toy_template):
    b1 = build_template_bank(toy_template, seed=5)
    b2 = build_template_bank(toy_template, seed=5)
    b3 = build_template_bank(toy_template, seed=6)
    assert b1.size == BANK_SIZE
    assert np.array_equal(b1.vertex_sets[0], toy_template.vertices)
    for a, b in zip(b1.vertex_sets, b2.vertex_sets):
        assert np.array_equal(a, b)
    assert not np.array_equal(b1.vertex_sets[1], b3.vertex_sets[1])


def test_bank_variants_preserve_symmetry(toy_template):
    bank = build_template_bank(toy_template, seed=0)
    sw = toy_template.vertex_swap
    for vs in bank.vertex_sets:
        mirrored = vs[sw].copy()
        mirrored[:, 0] = -mirrored[:, 0]
        assert np.allclose(mirrored, vs, atol=1e-9)


def test_joint_sets_swap_are_involutions():
    for js in (H36M17, COCO19):
        sw = np.asarray(js.swap)
        assert np.array_equal(sw[sw], np.arange(js.J))
        assert sw[js.root_index] == js.root_index
