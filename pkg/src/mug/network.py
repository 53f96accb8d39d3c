"""Dual-branch heterogeneous graph network.

Joint branch (skeleton + inter-human edges) feeds a depth head, a 3D-joint
head, and a connection block; the mesh branch (mesh-topology edges) consumes
the connection output and regresses root-relative mesh coordinates.

Every edge type carries its own Chebyshev weight set per layer; per-type
messages are summed. The directed joint->mesh edges are applied only in the
connection block as one-hop averaging (Chebyshev recurrences need a symmetric
operator).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import numerics as nx
from .graph_builder import SceneGraph

__all__ = [
    "NetworkConfig",
    "NetworkOutput",
    "GraphOperators",
    "build_operators",
    "init_params",
    "param_count",
    "forward",
    "paper_scale_hidden",
]


@dataclass(frozen=True)
class NetworkConfig:
    hidden: int = 64
    cheb_order: int = 2
    # split_root gives root-to-root and proximity edges their own Chebyshev
    # weights, so the network can weight (or ignore) each independently;
    # per_type shares one weight set across all inter-human edges
    edge_type_mode: str = "split_root"
    gn_groups: int = 4
    gn_eps: float = 1e-5
    feature_dim: int = 71

    def __post_init__(self):
        if self.hidden <= 0 or self.cheb_order < 1:
            raise ValueError("hidden > 0 and cheb_order >= 1 required")
        if self.edge_type_mode not in ("per_type", "split_root"):
            raise ValueError(f"unknown edge_type_mode {self.edge_type_mode!r}")
        if self.hidden % self.gn_groups != 0:
            raise ValueError("hidden width must be divisible by gn_groups")

    @property
    def joint_edge_types(self) -> tuple:
        if self.edge_type_mode == "split_root":
            return ("jj", "inter_root", "inter_prox")
        return ("jj", "inter")


@dataclass(frozen=True)
class NetworkOutput:
    depth_measures: nx.Value  # K
    joints3d: nx.Value  # K x J x 3 (meters, root-relative)
    mesh: nx.Value  # K x V x 3 (meters, root-relative)

    def numpy(self):
        return (
            self.depth_measures.data.copy(),
            self.joints3d.data.copy(),
            self.mesh.data.copy(),
        )


@dataclass(frozen=True)
class GraphOperators:
    joint_laps: dict  # edge type -> csr scaled Laplacian over K*J nodes
    mesh_lap: sp.csr_matrix  # over K*V nodes
    jm: sp.csr_matrix  # (K*V) x (K*J) one-hop averaging
    root_nodes: np.ndarray


def _lap_from_pairs(n: int, pairs: np.ndarray) -> sp.csr_matrix:
    adj = nx.SparseAdjacency.from_undirected(n, [tuple(map(int, p)) for p in pairs])
    return nx.scaled_laplacian(adj).to_csr()


def build_operators(graph: SceneGraph, config: NetworkConfig) -> GraphOperators:
    nj = graph.num_joint_nodes
    nm = graph.num_mesh_nodes
    joint_laps = {"jj": _lap_from_pairs(nj, graph.jj_pairs())}
    if config.edge_type_mode == "split_root":
        joint_laps["inter_root"] = _lap_from_pairs(
            nj, graph.inter_pairs(include_proximity=False)
        )
        joint_laps["inter_prox"] = _lap_from_pairs(
            nj, graph.inter_pairs(include_root=False)
        )
    else:
        joint_laps["inter"] = _lap_from_pairs(nj, graph.inter_pairs())
    mesh_lap = _lap_from_pairs(nm, graph.mm_pairs())
    jm_pairs = graph.jm_pairs()
    # each mesh node averages its two nearest joints
    jm = sp.csr_matrix(
        (np.full(len(jm_pairs), 0.5), (jm_pairs[:, 1], jm_pairs[:, 0])),
        shape=(nm, nj),
    )
    return GraphOperators(
        joint_laps=joint_laps, mesh_lap=mesh_lap, jm=jm, root_nodes=graph.root_nodes()
    )


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

_JOINT_BLOCKS = (("j1", "cascade"), ("j2", "residual"), ("depth", "residual"), ("joint", "residual"))
_MESH_BLOCKS = (("m1", "cascade"), ("m2", "residual"), ("m3", "residual"), ("m4", "residual"))


def _layer_dims(block_kind: str, d_in: int, h: int):
    if block_kind == "cascade":
        return [(d_in, h), (h, h), (h, h)]
    return [(h, h), (h, h)]  # residual


def init_params(
    seed: int,
    config: NetworkConfig,
) -> dict:
    """Deterministic fan-in-scaled uniform initialization.

    Group-norm gains start at 1, biases at 0.
    """
    rng = np.random.default_rng(seed)
    h, q, d = config.hidden, config.cheb_order, config.feature_dim
    params = {}

    def conv_layer(name, din, dout, types):
        bound = 1.0 / np.sqrt(din * q * len(types))
        for t in types:
            for k in range(q):
                if t in ("jj", "mm"):
                    params[f"{name}.{t}.w{k}"] = rng.uniform(-bound, bound, size=(din, dout))
                else:
                    # inter-human weights start silent: cross-human messages
                    # only fire once training finds a use for them, so graphs
                    # with sparse and dense inter-human edges start from the
                    # same function instead of injecting scene-dependent noise
                    params[f"{name}.{t}.w{k}"] = np.zeros((din, dout))
        params[f"{name}.b"] = np.zeros(dout)
        params[f"{name}.gn_gain"] = np.ones(dout)
        params[f"{name}.gn_bias"] = np.zeros(dout)

    def linear(name, din, dout, scale=1.0):
        bound = scale / np.sqrt(din)
        params[f"{name}.w"] = rng.uniform(-bound, bound, size=(din, dout))
        params[f"{name}.b"] = np.zeros(dout)

    jt = config.joint_edge_types
    for block, kind in _JOINT_BLOCKS:
        for i, (din, dout) in enumerate(_layer_dims(kind, d, h)):
            conv_layer(f"{block}.{i}", din, dout, jt)
    # output heads start small: predictions begin near the rest-body prior
    # (and near-zero depth deviations) instead of a large random mesh
    linear("depth.out", h, 1, scale=0.1)
    linear("joint.out", h, 3, scale=0.1)
    linear("conn.lin", h, h)
    params["conn.gn_gain"] = np.ones(h)
    params["conn.gn_bias"] = np.zeros(h)
    for block, kind in _MESH_BLOCKS:
        for i, (din, dout) in enumerate(_layer_dims(kind, d, h)):
            conv_layer(f"{block}.{i}", din, dout, ("mm",))
    linear("mesh_out", h, 3, scale=0.1)
    return params


def param_count(params: dict) -> int:
    return int(sum(p.size for p in params.values()))


def paper_scale_hidden(config_like: NetworkConfig | None = None, target: int = 2_300_000) -> int:
    """Hidden width (multiple of 4) whose parameter count is closest to target."""
    base = config_like or NetworkConfig()
    best_h, best_gap = 4, None
    for h in range(8, 512, 4):
        cfg = NetworkConfig(
            hidden=h,
            cheb_order=base.cheb_order,
            edge_type_mode=base.edge_type_mode,
            gn_groups=base.gn_groups,
            feature_dim=base.feature_dim,
        )
        n = param_count(init_params(0, cfg)) if h <= 16 else _count_formula(cfg)
        gap = abs(n - target)
        if best_gap is None or gap < best_gap:
            best_h, best_gap = h, gap
    return best_h


def _count_formula(cfg: NetworkConfig) -> int:
    """Closed-form parameter count (kept in sync with init_params by a test)."""
    h, q, d = cfg.hidden, cfg.cheb_order, cfg.feature_dim
    nt = len(cfg.joint_edge_types)
    total = 0
    for _, kind in _JOINT_BLOCKS:
        for din, dout in _layer_dims(kind, d, h):
            total += nt * q * din * dout + 3 * dout
    total += (h + 1) + (3 * h + 3)  # depth.out, joint.out
    total += h * h + h + 2 * h  # connection
    for _, kind in _MESH_BLOCKS:
        for din, dout in _layer_dims(kind, d, h):
            total += q * din * dout + 3 * dout
    total += 3 * h + 3  # mesh_out
    return total


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------


def _check_finite(x: nx.Value, block: str):
    if not np.all(np.isfinite(x.data)):
        raise FloatingPointError(f"non-finite activation in block '{block}'")


def _conv(x, name, laps, params, q):
    out = None
    for t, lap in laps.items():
        weights = [params[f"{name}.{t}.w{k}"] for k in range(q)]
        term = nx.cheb_conv(x, lap, weights, q)
        out = term if out is None else out + term
    return out + params[f"{name}.b"]


def _gn(x, name, params, cfg):
    return nx.group_norm(
        x, cfg.gn_groups, params[f"{name}.gn_gain"], params[f"{name}.gn_bias"], cfg.gn_eps
    )


def _cascade(x, block, laps, params, cfg):
    for i in range(3):
        name = f"{block}.{i}"
        x = nx.relu(_gn(_conv(x, name, laps, params, cfg.cheb_order), name, params, cfg))
    _check_finite(x, block)
    return x


def _residual(x, block, laps, params, cfg):
    y = nx.relu(_gn(_conv(x, f"{block}.0", laps, params, cfg.cheb_order), f"{block}.0", params, cfg))
    y = _gn(_conv(y, f"{block}.1", laps, params, cfg.cheb_order), f"{block}.1", params, cfg)
    out = nx.relu(y + x)
    _check_finite(out, block)
    return out


def forward(
    graph: SceneGraph,
    feats,
    params: dict,
    config: NetworkConfig,
    ops: GraphOperators | None = None,
) -> NetworkOutput:
    out, _ = forward_with_params(graph, feats, params, config, ops)
    return out


def forward_with_params(graph, feats, params, config, ops=None):
    """Forward returning (output, tracked parameter Values) for backprop."""
    pvals = {k: nx.as_value(v) for k, v in params.items()}
    out = _forward_tracked(graph, feats, pvals, config, ops)
    return out, pvals


def _forward_tracked(graph, feats, pvals, config, ops):
    # Same wiring as forward(), but over pre-wrapped parameter Values so the
    # caller can read gradients after backward().
    if ops is None:
        ops = build_operators(graph, config)
    K, J, V = graph.K, graph.J, graph.V
    xj = nx.as_value(feats.joint_features)
    xm = nx.as_value(feats.mesh_features)
    if xj.shape[0] != K * J or xm.shape[0] != K * V:
        raise ValueError("feature rows do not match graph nodes")
    if len(ops.root_nodes) != K:
        raise ValueError("missing root node for some human")
    xj = _cascade(xj, "j1", ops.joint_laps, pvals, config)
    xj = _residual(xj, "j2", ops.joint_laps, pvals, config)
    depth_feat = _residual(xj, "depth", ops.joint_laps, pvals, config)
    depth = (depth_feat @ pvals["depth.out.w"] + pvals["depth.out.b"]).take_rows(
        ops.root_nodes
    ).reshape(K)
    joint_feat = _residual(xj, "joint", ops.joint_laps, pvals, config)
    joints3d = joint_feat @ pvals["joint.out.w"] + pvals["joint.out.b"]
    if getattr(feats, "joint_base", None) is not None:
        joints3d = joints3d + feats.joint_base
    joints3d = joints3d.reshape(K, J, 3)
    conn = nx.spmm(ops.jm, xj) @ pvals["conn.lin.w"] + pvals["conn.lin.b"]
    conn = nx.relu(
        nx.group_norm(conn, config.gn_groups, pvals["conn.gn_gain"], pvals["conn.gn_bias"], config.gn_eps)
    )
    mesh_laps = {"mm": ops.mesh_lap}
    xm = _cascade(xm, "m1", mesh_laps, pvals, config)
    xm = xm + conn
    xm = _residual(xm, "m2", mesh_laps, pvals, config)
    xm = _residual(xm, "m3", mesh_laps, pvals, config)
    xm = _residual(xm, "m4", mesh_laps, pvals, config)
    mesh = xm @ pvals["mesh_out.w"] + pvals["mesh_out.b"]
    if getattr(feats, "mesh_base", None) is not None:
        mesh = mesh + feats.mesh_base
    mesh = mesh.reshape(K, V, 3)
    for name, val in (("depth", depth), ("joints3d", joints3d), ("mesh", mesh)):
        _check_finite(val, name)
    return NetworkOutput(depth_measures=depth, joints3d=joints3d, mesh=mesh)
