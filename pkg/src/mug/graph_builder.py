"""Heterogeneous multi-human scene graph construction.

Node ordering convention: all joint nodes first (human 0 .. K-1, J each),
then all mesh nodes (human 0 .. K-1, V each). Edge sets are typed:

  jj    joint-joint, undirected, mirrors the skeleton per human
  mm    mesh-mesh, undirected, mirrors the face topology per human
  jm    joint->mesh, directed, two incoming edges per mesh node
  inter joint-joint across humans, undirected, subtype Root or Proximity
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .body_template import BodyTemplate

__all__ = [
    "SceneGraph",
    "InterEdge",
    "build_subgraph",
    "build_inter_edges",
    "assemble_scene_graph",
    "DEFAULT_EPSILON",
]

DEFAULT_EPSILON = 200.0  # canonical pixels

ROOT = "root"
PROXIMITY = "proximity"


@dataclass(frozen=True)
class InterEdge:
    human_a: int
    joint_a: int
    human_b: int
    joint_b: int
    subtype: str  # ROOT or PROXIMITY


@dataclass(frozen=True)
class SceneGraph:
    K: int
    J: int
    V: int
    jj: tuple  # ((k, j1, j2), ...) undirected, local joint indices
    mm: tuple  # ((k, v1, v2), ...) undirected, local vertex indices
    jm: tuple  # ((k, j, v), ...) directed joint -> mesh
    inter: tuple  # InterEdge entries, human_a < human_b
    root_index: int

    @property
    def num_joint_nodes(self) -> int:
        return self.K * self.J

    @property
    def num_mesh_nodes(self) -> int:
        return self.K * self.V

    @property
    def num_nodes(self) -> int:
        return self.num_joint_nodes + self.num_mesh_nodes

    def joint_node(self, k: int, j: int) -> int:
        return k * self.J + j

    def mesh_node(self, k: int, v: int) -> int:
        return k * self.V + v  # index within the mesh block

    def root_nodes(self) -> np.ndarray:
        return np.arange(self.K) * self.J + self.root_index

    # -- index pair arrays over the joint / mesh blocks --

    def jj_pairs(self) -> np.ndarray:
        return np.array(
            [(k * self.J + a, k * self.J + b) for k, a, b in self.jj], dtype=np.int64
        ).reshape(-1, 2)

    def inter_pairs(self, include_root: bool = True, include_proximity: bool = True) -> np.ndarray:
        pairs = [
            (e.human_a * self.J + e.joint_a, e.human_b * self.J + e.joint_b)
            for e in self.inter
            if (e.subtype == ROOT and include_root)
            or (e.subtype == PROXIMITY and include_proximity)
        ]
        return np.array(pairs, dtype=np.int64).reshape(-1, 2)

    def mm_pairs(self) -> np.ndarray:
        return np.array(
            [(k * self.V + a, k * self.V + b) for k, a, b in self.mm], dtype=np.int64
        ).reshape(-1, 2)

    def jm_pairs(self) -> np.ndarray:
        """(joint block index, mesh block index) per directed jm edge."""
        return np.array(
            [(k * self.J + j, k * self.V + v) for k, j, v in self.jm], dtype=np.int64
        ).reshape(-1, 2)


def build_subgraph(template: BodyTemplate):
    """Typed edge sets for a single human, in local indices."""
    jj = tuple((int(a), int(b)) for a, b in template.skeleton_edges)
    mm_set = set()
    for f in template.faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            a, b = int(a), int(b)
            if a != b:
                mm_set.add((min(a, b), max(a, b)))
    mm = tuple(sorted(mm_set))
    jm = tuple(
        (int(template.nearest_joints[v, 0]), v) for v in range(template.V)
    ) + tuple((int(template.nearest_joints[v, 1]), v) for v in range(template.V))
    return jj, mm, jm


def build_inter_edges(
    poses_canonical: np.ndarray, epsilon: float, root_index: int, root_edges: bool = True
) -> tuple:
    """Inter-human edges from canonical-frame 2D joints.

    All root-to-root pairs (subtype Root) plus every cross-human joint pair
    strictly closer than epsilon (subtype Proximity). Root pairs keep the Root
    subtype even when within epsilon. `root_edges=False` is the 0+ ablation.
    """
    poses = np.asarray(poses_canonical, dtype=np.float64)
    if poses.ndim != 3 or poses.shape[2] != 2:
        raise ValueError("poses must be K x J x 2")
    K, J, _ = poses.shape
    if K < 1:
        raise ValueError("need at least one human")
    edges = []
    for a in range(K):
        for b in range(a + 1, K):
            if root_edges:
                edges.append(InterEdge(a, root_index, b, root_index, ROOT))
            if epsilon > 0:
                d = np.linalg.norm(
                    poses[a][:, None, :] - poses[b][None, :, :], axis=2
                )
                for ja, jb in zip(*np.nonzero(d < epsilon)):
                    if root_edges and ja == root_index and jb == root_index:
                        continue  # already present with Root subtype
                    edges.append(InterEdge(a, int(ja), b, int(jb), PROXIMITY))
    return tuple(edges)


def assemble_scene_graph(
    template: BodyTemplate,
    poses_canonical: np.ndarray,
    epsilon: float = DEFAULT_EPSILON,
    root_edges: bool = True,
) -> SceneGraph:
    """Union of K per-human subgraphs and the inter-human edges."""
    poses = np.asarray(poses_canonical, dtype=np.float64)
    K = poses.shape[0]
    jj1, mm1, jm1 = build_subgraph(template)
    jj = tuple((k, a, b) for k in range(K) for a, b in jj1)
    mm = tuple((k, a, b) for k in range(K) for a, b in mm1)
    jm = tuple((k, j, v) for k in range(K) for j, v in jm1)
    inter = build_inter_edges(poses, epsilon, template.root_index, root_edges)
    return SceneGraph(
        K=K,
        J=template.J,
        V=template.V,
        jj=jj,
        mm=mm,
        jm=jm,
        inter=inter,
        root_index=template.root_index,
    )


def graph_as_dict(graph: SceneGraph) -> dict:
    """JSON-friendly dump of the typed edge lists (for the dump-graph CLI)."""
    return {
        "K": graph.K,
        "J": graph.J,
        "V": graph.V,
        "root_index": graph.root_index,
        "jj": [list(e) for e in graph.jj],
        "mm": [list(e) for e in graph.mm],
        "jm": [list(e) for e in graph.jm],
        "inter": [
            [e.human_a, e.joint_a, e.human_b, e.joint_b, e.subtype] for e in graph.inter
        ],
    }
