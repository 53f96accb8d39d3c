import numpy as np
import pytest

from mug import numerics as nx
from mug.features import build_features
from mug.graph_builder import assemble_scene_graph
from mug.network import (
    NetworkConfig,
    _count_formula,
    build_operators,
    forward,
    forward_with_params,
    init_params,
    paper_scale_hidden,
    param_count,
)


def make_inputs(bank, K=2, seed=0, epsilon=200.0, root_edges=True):
    from mug.synthetic_data import generate_scene

    scene = generate_scene(seed=seed, K=K, bank=bank)
    feats, canon, _ = build_features(scene.poses(), scene.image_w, scene.image_h, bank)
    graph = assemble_scene_graph(bank.template, canon, epsilon=epsilon, root_edges=root_edges)
    return scene, feats, graph


def test_config_validation():
    with pytest.raises(ValueError, match="hidden"):
        NetworkConfig(hidden=0)
    with pytest.raises(ValueError, match="edge_type_mode"):
        NetworkConfig(edge_type_mode="bogus")
    with pytest.raises(ValueError, match="divisible"):
        NetworkConfig(hidden=6, gn_groups=4)


def test_init_is_deterministic():
    cfg = NetworkConfig(hidden=8)
    p1 = init_params(3, cfg)
    p2 = init_params(3, cfg)
    p3 = init_params(4, cfg)
    assert p1.keys() == p2.keys()
    for k in p1:
        assert np.array_equal(p1[k], p2[k])
    assert any(not np.array_equal(p1[k], p3[k]) for k in p1)


def test_count_formula_matches_init():
    for mode in ("per_type", "split_root"):
        for h, q in ((8, 1), (8, 2), (12, 3)):
            cfg = NetworkConfig(hidden=h, cheb_order=q, edge_type_mode=mode)
            assert param_count(init_params(0, cfg)) == _count_formula(cfg)


def test_paper_scale_hidden_within_ten_percent():
    h = paper_scale_hidden()
    cfg = NetworkConfig(hidden=h)
    n = _count_formula(cfg)
    assert abs(n - 2_300_000) / 2_300_000 < 0.10


def test_forward_shapes_and_determinism(toy_bank):
    scene, feats, graph = make_inputs(toy_bank, K=3)
    cfg = NetworkConfig(hidden=8, feature_dim=feats.d)
    params = init_params(0, cfg)
    out1 = forward(graph, feats, params, cfg)
    out2 = forward(graph, feats, params, cfg)
    d, j, m = out1.numpy()
    assert d.shape == (3,)
    assert j.shape == (3, toy_bank.template.J, 3)
    assert m.shape == (3, toy_bank.template.V, 3)
    for a, b in zip(out1.numpy(), out2.numpy()):
        assert np.array_equal(a, b)


def test_forward_split_root_mode(toy_bank):
    scene, feats, graph = make_inputs(toy_bank, K=2)
    cfg = NetworkConfig(hidden=8, feature_dim=feats.d, edge_type_mode="split_root")
    params = init_params(0, cfg)
    out = forward(graph, feats, params, cfg)
    assert out.depth_measures.data.shape == (2,)


def test_forward_single_human(toy_bank):
    scene, feats, graph = make_inputs(toy_bank, K=1)
    cfg = NetworkConfig(hidden=8, feature_dim=feats.d)
    out = forward(graph, feats, init_params(0, cfg), cfg)
    assert out.depth_measures.data.shape == (1,)


def test_forward_rejects_mismatched_features(toy_bank):
    scene, feats, graph = make_inputs(toy_bank, K=2)
    cfg = NetworkConfig(hidden=8, feature_dim=feats.d)
    params = init_params(0, cfg)

    class Bad:
        joint_features = feats.joint_features[:-1]
        mesh_features = feats.mesh_features

    with pytest.raises(ValueError, match="feature rows"):
        forward(graph, Bad(), params, cfg)


def test_forward_flags_nonfinite_block(toy_bank):
    scene, feats, graph = make_inputs(toy_bank, K=2)
    cfg = NetworkConfig(hidden=8, feature_dim=feats.d)
    params = init_params(0, cfg)
    params["j1.0.jj.w0"] = params["j1.0.jj.w0"] * np.nan
    with pytest.raises(FloatingPointError, match="j1"):
        forward(graph, feats, params, cfg)


def test_gradients_flow_to_all_parameters(toy_bank):
    # every parameter must be reachable from the total output
    scene, feats, graph = make_inputs(toy_bank, K=2)
    cfg = NetworkConfig(hidden=8, feature_dim=feats.d)
    params = init_params(0, cfg)
    out, pvals = forward_with_params(graph, feats, params, cfg)
    loss = out.mesh.sum() + out.joints3d.sum() + out.depth_measures.sum()
    grads = nx.backward(loss, pvals)
    dead = [k for k, g in grads.items() if np.all(g == 0)]
    assert dead == [], f"parameters with identically zero gradient: {dead}"


def test_epsilon_changes_message_passing(toy_bank):
    # different epsilon -> different inter-human graph -> different outputs
    scene, feats, g_wide = make_inputs(toy_bank, K=2, epsilon=1000.0)
    _, _, g_none = make_inputs(toy_bank, K=2, epsilon=0.0, root_edges=False)
    cfg = NetworkConfig(hidden=8, feature_dim=feats.d)
    params = init_params(0, cfg)
    # inter-human weights start at zero; emulate a trained state so the
    # inter-human graph actually feeds the outputs
    noise = np.random.default_rng(1)
    params = {
        k: (v + 0.05 * noise.normal(size=v.shape) if ".inter" in k else v)
        for k, v in params.items()
    }
    out_wide = forward(g_wide, feats, params, cfg)
    out_none = forward(g_none, feats, params, cfg)
    assert not np.allclose(out_wide.depth_measures.data, out_none.depth_measures.data)


def test_operators_isolated_joint_nodes(toy_bank):
    # with no root edges and epsilon 0 the inter Laplacian is diag(-1)
    scene, feats, graph = make_inputs(toy_bank, K=2, epsilon=0.0, root_edges=False)
    cfg = NetworkConfig(hidden=8, feature_dim=feats.d, edge_type_mode="per_type")
    ops = build_operators(graph, cfg)
    inter = ops.joint_laps["inter"].toarray()
    assert np.array_equal(inter, -np.eye(graph.num_joint_nodes))
