"""Synthetic rest-pose body geometry.

The bundled template is a procedurally built humanoid: a closed triangulated
tube swept along a depth-first tour of the skeleton tree. The sweep makes the
mesh a closed surface of Euler characteristic zero, so one level of midpoint
subdivision upsamples V coarse vertices to exactly 4V. The construction is
mirror-symmetric about the x = 0 plane, yielding an exact left/right vertex
permutation used by flip augmentation.

All 3D coordinates are millimeters. Real (licensed) templates can be supplied
through the same JSON file format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "JointSet",
    "H36M17",
    "COCO19",
    "BodyTemplate",
    "TemplateBank",
    "build_synthetic_template",
    "build_template_bank",
    "load_template",
    "save_template",
    "regress_joints",
    "compute_nearest_joints",
    "skeleton_traversal",
    "upsample_mesh",
    "TemplateError",
]


class TemplateError(ValueError):
    """Raised when a template file violates its invariants."""


# ---------------------------------------------------------------------------
# Joint set definitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JointSet:
    names: tuple
    rest_positions: np.ndarray  # J x 3, mm
    edges: tuple  # parent-child pairs forming a tree
    root_index: int
    swap: tuple  # left/right involution, swap[j] = mirrored joint
    left_hip: int
    right_hip: int
    left_shoulder: int
    right_shoulder: int

    @property
    def J(self) -> int:
        return len(self.names)


def _joint_set(names, pos, edges, root, pairs, lh, rh, ls, rs):
    swap = list(range(len(names)))
    for a, b in pairs:
        swap[a], swap[b] = b, a
    return JointSet(
        names=tuple(names),
        rest_positions=np.asarray(pos, dtype=np.float64),
        edges=tuple(edges),
        root_index=root,
        swap=tuple(swap),
        left_hip=lh,
        right_hip=rh,
        left_shoulder=ls,
        right_shoulder=rs,
    )


H36M17 = _joint_set(
    names=[
        "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
        "spine", "thorax", "neck", "head",
        "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
    ],
    pos=[
        (0, 0, 0), (-100, 0, 0), (-110, -450, 0), (-120, -880, 0),
        (100, 0, 0), (110, -450, 0), (120, -880, 0),
        (0, 250, 0), (0, 480, 0), (0, 580, 0), (0, 700, 0),
        (180, 450, 0), (450, 450, 0), (700, 450, 0),
        (-180, 450, 0), (-450, 450, 0), (-700, 450, 0),
    ],
    edges=[
        (0, 1), (1, 2), (2, 3), (0, 4), (4, 5), (5, 6),
        (0, 7), (7, 8), (8, 9), (9, 10),
        (8, 11), (11, 12), (12, 13), (8, 14), (14, 15), (15, 16),
    ],
    root=0,
    pairs=[(1, 4), (2, 5), (3, 6), (11, 14), (12, 15), (13, 16)],
    lh=4, rh=1, ls=11, rs=14,
)

COCO19 = _joint_set(
    names=[
        "nose", "l_eye", "r_eye", "l_ear", "r_ear",
        "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist",
        "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle", "r_ankle",
        "pelvis", "neck",
    ],
    pos=[
        (0, 600, 30), (30, 630, 50), (-30, 630, 50), (70, 615, 10), (-70, 615, 10),
        (180, 450, 0), (-180, 450, 0), (450, 450, 0), (-450, 450, 0),
        (700, 450, 0), (-700, 450, 0),
        (100, 0, 0), (-100, 0, 0), (110, -450, 0), (-110, -450, 0),
        (120, -880, 0), (-120, -880, 0),
        (0, 0, 0), (0, 450, 0),
    ],
    edges=[
        (17, 11), (17, 12), (17, 18), (18, 5), (18, 6), (18, 0),
        (0, 1), (0, 2), (1, 3), (2, 4),
        (5, 7), (7, 9), (6, 8), (8, 10),
        (11, 13), (13, 15), (12, 14), (14, 16),
    ],
    root=17,
    pairs=[(1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16)],
    lh=11, rh=12, ls=5, rs=6,
)

JOINT_SETS = {"h36m17": H36M17, "coco19": COCO19}

BANK_SIZE = 11


# ---------------------------------------------------------------------------
# Template container
# ---------------------------------------------------------------------------


@dataclass
class BodyTemplate:
    vertices: np.ndarray  # V x 3 rest pose, mm
    faces: np.ndarray  # F x 3 int
    skeleton_edges: np.ndarray  # (J-1) x 2 int
    regressor: np.ndarray  # J x V, rows sum to 1
    upsample: sp.csr_matrix  # V_full x V
    root_index: int
    joint_names: tuple
    nearest_joints: np.ndarray = None  # V x 2, filled in __post_init__
    joint_swap: np.ndarray | None = None  # left/right joint involution
    vertex_swap: np.ndarray | None = None  # left/right vertex involution
    faces_full: np.ndarray | None = None  # subdivided faces when available
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.faces = np.asarray(self.faces, dtype=np.int64)
        self.skeleton_edges = np.asarray(self.skeleton_edges, dtype=np.int64)
        self.regressor = np.asarray(self.regressor, dtype=np.float64)
        if self.nearest_joints is None:
            self.nearest_joints = compute_nearest_joints(self)

    @property
    def V(self) -> int:
        return self.vertices.shape[0]

    @property
    def J(self) -> int:
        return self.regressor.shape[0]

    @property
    def V_full(self) -> int:
        return self.upsample.shape[0]

    def rest_joints(self) -> np.ndarray:
        return regress_joints(self, self.vertices)

    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for arr in (self.vertices, self.faces, self.skeleton_edges, self.regressor):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(np.ascontiguousarray(self.upsample.toarray()).tobytes())
        h.update(str(self.root_index).encode())
        return h.hexdigest()[:16]

    def validate(self):
        errors = validate_template(self)
        if errors:
            raise TemplateError("; ".join(errors))


def validate_template(t: BodyTemplate) -> list:
    errors = []
    V, J = t.V, t.J
    if t.regressor.shape != (J, V):
        errors.append(f"regressor shape {t.regressor.shape} != ({J},{V})")
    row_sums = t.regressor.sum(axis=1)
    bad = np.nonzero(np.abs(row_sums - 1.0) > 1e-6)[0]
    for j in bad:
        errors.append(f"regressor row {j} sums to {row_sums[j]:.6g}, expected 1")
    if np.any(t.regressor < -1e-12):
        errors.append("regressor has negative weights")
    if t.faces.size and (t.faces.min() < 0 or t.faces.max() >= V):
        errors.append("faces reference invalid vertices")
    if not (0 <= t.root_index < J):
        errors.append(f"root_index {t.root_index} out of range")
    if not _is_tree(t.skeleton_edges, J):
        errors.append("skeleton not a tree")
    if t.upsample.shape[1] != V:
        errors.append(f"upsample has {t.upsample.shape[1]} columns, expected {V}")
    if not np.all(np.isfinite(t.vertices)):
        errors.append("non-finite vertex coordinates")
    return errors


def _is_tree(edges: np.ndarray, n: int) -> bool:
    if len(edges) != n - 1:
        return False
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(int(a)), find(int(b))
        if ra == rb:
            return False
        parent[ra] = rb
    return True


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------


def regress_joints(template: BodyTemplate, T: np.ndarray) -> np.ndarray:
    """Joint positions as convex combinations of mesh vertices."""
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (template.V, 3):
        raise ValueError(f"expected ({template.V},3) vertices, got {T.shape}")
    return template.regressor @ T


def skeleton_traversal(edges, J: int, root: int):
    """Root-first DFS order and parent map over the skeleton tree."""
    adj = {j: [] for j in range(J)}
    for a, b in edges:
        adj[int(a)].append(int(b))
        adj[int(b)].append(int(a))
    order, parent = [], {root: -1}
    stack = [root]
    while stack:
        u = stack.pop()
        order.append(u)
        for w in sorted(adj[u], reverse=True):
            if w not in parent:
                parent[w] = u
                stack.append(w)
    return order, parent


def compute_nearest_joints(template: BodyTemplate) -> np.ndarray:
    """Per-vertex (j1, j2): the two rest-pose-nearest regressed joints.

    Ties break toward the lower joint index.
    """
    joints = template.regressor @ template.vertices
    d = np.linalg.norm(template.vertices[:, None, :] - joints[None, :, :], axis=2)
    order = np.argsort(d, axis=1, kind="stable")  # stable sort = index tie-break
    return order[:, :2].astype(np.int64)


def upsample_mesh(template: BodyTemplate, coarse: np.ndarray) -> np.ndarray:
    coarse = np.asarray(coarse, dtype=np.float64)
    if coarse.shape != (template.V, 3):
        raise ValueError(f"expected ({template.V},3) coarse mesh, got {coarse.shape}")
    return template.upsample @ coarse


def subdivision_upsample(faces: np.ndarray, V: int):
    """Midpoint-subdivision upsample matrix and the subdivided face list."""
    edge_index = {}
    edges = []
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(int(a), int(b)), max(int(a), int(b)))
            if key not in edge_index:
                edge_index[key] = V + len(edges)
                edges.append(key)
    rows, cols, vals = [], [], []
    for v in range(V):
        rows.append(v)
        cols.append(v)
        vals.append(1.0)
    for idx, (a, b) in enumerate(edges):
        for c in (a, b):
            rows.append(V + idx)
            cols.append(c)
            vals.append(0.5)
    up = sp.csr_matrix((vals, (rows, cols)), shape=(V + len(edges), V))
    fine = []
    for f in faces:
        a, b, c = (int(x) for x in f)
        mab = edge_index[(min(a, b), max(a, b))]
        mbc = edge_index[(min(b, c), max(b, c))]
        mca = edge_index[(min(c, a), max(c, a))]
        fine.extend([(a, mab, mca), (b, mbc, mab), (c, mca, mbc), (mab, mbc, mca)])
    return up, np.asarray(fine, dtype=np.int64)


# ---------------------------------------------------------------------------
# Procedural construction
# ---------------------------------------------------------------------------


def _dfs_tour(joint_set: JointSet):
    """Closed tour of directed skeleton edges (each tree edge twice)."""
    adj = {j: [] for j in range(joint_set.J)}
    for a, b in joint_set.edges:
        adj[a].append(b)
        adj[b].append(a)
    for v in adj.values():
        v.sort()
    tour = []

    def walk(u, parent):
        for w in adj[u]:
            if w == parent:
                continue
            tour.append((u, w))
            walk(w, u)
            tour.append((w, u))

    walk(joint_set.root_index, -1)
    return tour


def _leg_radius(joint_set: JointSet, a: int, b: int) -> float:
    names = {joint_set.names[a], joint_set.names[b]}
    torso = {"pelvis", "spine", "thorax", "neck"}
    head = {"head", "nose", "l_eye", "r_eye", "l_ear", "r_ear"}
    if names & head:
        return 70.0
    if names <= torso:
        return 110.0
    if any("hip" in n or "knee" in n or "ankle" in n for n in names) and not (names & torso):
        return 65.0
    if any("elbow" in n or "wrist" in n for n in names):
        return 45.0
    return 80.0  # pelvis-hip / thorax-shoulder transitions


def _allocate_rings(tour, joint_set: JointSet, positions: np.ndarray, total: int):
    """Mirror-symmetric ring counts per directed tour leg."""
    swap = joint_set.swap
    mirror = {(a, b): (swap[a], swap[b]) for a, b in tour}
    orbits = []
    seen = set()
    for leg in tour:
        if leg in seen:
            continue
        m = mirror[leg]
        orbit = (leg,) if m == leg else (leg, m)
        seen.update(orbit)
        orbits.append(orbit)
    lengths = {
        leg: float(np.linalg.norm(positions[leg[1]] - positions[leg[0]])) for leg in tour
    }
    total_len = sum(lengths.values())
    counts = {}
    shares = []
    for orbit in orbits:
        share = total * sum(lengths[l] for l in orbit) / total_len
        per_leg = int(share // len(orbit))
        counts[orbit] = per_leg
        shares.append((share - per_leg * len(orbit), orbit))
    deficit = total - sum(counts[o] * len(o) for o in orbits)
    shares.sort(key=lambda x: (-x[0], x[1]))
    i = 0
    while deficit > 0:
        rem, orbit = shares[i % len(shares)]
        if len(orbit) <= deficit:
            counts[orbit] += 1
            deficit -= len(orbit)
        i += 1
        if i > 10 * len(shares) and deficit == 1:
            # only size-2 orbits remain at the cursor; force a self orbit
            for orbit in orbits:
                if len(orbit) == 1:
                    counts[orbit] += 1
                    deficit -= 1
                    break
    _reserve_self_rings(orbits, counts, lengths, total)
    per_leg = {}
    for orbit, c in counts.items():
        for leg in orbit:
            per_leg[leg] = c
    return per_leg, mirror


def _reserve_self_rings(orbits, counts, lengths, total):
    """Ensure some self-mirrored leg carries >= 2 rings (odd splits need one)."""
    self_orbits = sorted(
        (o for o in orbits if len(o) == 1), key=lambda o: -lengths[o[0]]
    )
    if not self_orbits or total < 2:
        return
    if any(counts[o] >= 2 for o in self_orbits):
        return
    target = self_orbits[0]
    need = 2 - counts[target]
    counts[target] = 2
    while need > 0:
        donors1 = [o for o in orbits if o is not target and len(o) == 1 and counts[o] > 0]
        if donors1:
            donor = max(donors1, key=lambda o: counts[o])
            counts[donor] -= 1
            need -= 1
            continue
        donors2 = [o for o in orbits if len(o) == 2 and counts[o] > 0]
        donor = max(donors2, key=lambda o: counts[o])
        counts[donor] -= 1
        need -= 2
    if need == -1:
        counts[target] += 1


def _ring_frame(tangent: np.ndarray):
    ref = np.array([0.0, 0.0, 1.0])
    c = np.cross(ref, tangent)
    if np.linalg.norm(c) < 1e-6:
        ref = np.array([0.0, 1.0, 0.0])
        c = np.cross(ref, tangent)
    u = c / np.linalg.norm(c)
    v = np.cross(tangent, u)
    return u, v


def build_synthetic_template(
    joint_set: str | JointSet = "h36m17",
    target_v: int = 431,
    ring_size: int = 10,
) -> BodyTemplate:
    """Build the bundled humanoid template (swept-tube torus topology)."""
    if isinstance(joint_set, str):
        js_name = joint_set
        js = JOINT_SETS[joint_set]
    else:
        js = joint_set
        js_name = next((k for k, v in JOINT_SETS.items() if v is js), "custom")
    if ring_size % 2 != 0:
        raise ValueError("ring_size must be even")
    positions = js.rest_positions.copy()
    tour = _dfs_tour(js)
    s = ring_size
    n_extra = target_v % s
    n_rings = target_v // s
    if n_rings < 1:
        raise ValueError("target_v too small for the ring size")

    per_leg, mirror = _allocate_rings(tour, js, js.rest_positions, n_rings)

    # rings in tour order: (leg, fraction index)
    down_edges = set(js.edges)
    ring_leg, ring_centers, ring_radius, ring_uv = [], [], [], []
    ring_lookup = {}
    for leg in tour:
        a, b = leg
        n = per_leg[leg]
        pa, pb = positions[a], positions[b]
        tangent = pb - pa
        norm = np.linalg.norm(tangent)
        tangent = tangent / norm if norm > 0 else np.array([0.0, 1.0, 0.0])
        u, v = _ring_frame(tangent)
        radius = _leg_radius(js, a, b)
        # the return pass of the tour uses a thinner tube so forward and
        # return rings never coincide (coincident rings make zero-area faces)
        if leg not in down_edges:
            radius *= 0.82
        for i in range(n):
            frac = (i + 0.5) / n
            ring_lookup[(leg, i)] = len(ring_centers)
            ring_leg.append((leg, i))
            ring_centers.append(pa + frac * (pb - pa))
            ring_radius.append(radius)
            ring_uv.append((u, v))
    r = len(ring_centers)
    assert r == n_rings

    theta = 2.0 * np.pi * np.arange(s) / s
    verts = np.empty((r * s, 3), dtype=np.float64)
    for i in range(r):
        c, rad = ring_centers[i], ring_radius[i]
        u, v = ring_uv[i]
        verts[i * s : (i + 1) * s] = (
            c + rad * (np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v)
        )

    def mirror_ring(i):
        leg, idx = ring_leg[i]
        return ring_lookup[(mirror[leg], idx)]

    def sigma_grid(i, k):
        return mirror_ring(i) * s + (s // 2 - k) % s

    # quads between consecutive rings (cyclic); some become centroid splits
    quads = {}
    for i in range(r):
        j = (i + 1) % r
        for k in range(s):
            quads[(i, k)] = (i * s + k, i * s + (k + 1) % s, j * s + k, j * s + (k + 1) % s)

    def mirror_quad(q):
        i, k = q
        return ((mirror_ring(i)), (s // 2 - k - 1) % s)

    split = _select_splits(n_extra, r, s, ring_leg, mirror, mirror_ring, mirror_quad)

    faces = []
    extra_verts = []
    split_center_index = {}
    for q, (a, b, c, d) in sorted(quads.items()):
        if q in split:
            center = len(verts) + len(extra_verts)
            split_center_index[q] = center
            extra_verts.append(0.25 * (verts[a] + verts[b] + verts[c] + verts[d]))
            faces.extend([(a, b, center), (b, d, center), (d, c, center), (c, a, center)])
        else:
            faces.extend([(a, c, d), (a, d, b)])
    if extra_verts:
        verts = np.vstack([verts, np.asarray(extra_verts)])
    faces = np.asarray(faces, dtype=np.int64)
    assert verts.shape[0] == target_v

    # exact left/right vertex involution
    vertex_swap = np.empty(target_v, dtype=np.int64)
    for i in range(r):
        for k in range(s):
            vertex_swap[i * s + k] = sigma_grid(i, k)
    for q, center in split_center_index.items():
        vertex_swap[center] = split_center_index[mirror_quad(q)]
    # symmetrize geometry so the involution is exact
    mirrored = verts[vertex_swap].copy()
    mirrored[:, 0] = -mirrored[:, 0]
    verts = 0.5 * (verts + mirrored)

    regressor = _build_regressor(verts, js, positions)
    # enforce regressor symmetry: J[swap(j), sigma(v)] == J[j, v]
    jswap = np.asarray(js.swap, dtype=np.int64)
    regressor = 0.5 * (regressor + regressor[jswap][:, vertex_swap])

    upsample, faces_full = subdivision_upsample(faces, target_v)

    template = BodyTemplate(
        vertices=verts,
        faces=faces,
        skeleton_edges=np.asarray(js.edges, dtype=np.int64),
        regressor=regressor,
        upsample=upsample,
        root_index=js.root_index,
        joint_names=js.names,
        joint_swap=jswap,
        vertex_swap=vertex_swap,
        faces_full=faces_full,
        meta={
            "joint_set": js_name,
            "ring_size": s,
            "left_hip": js.left_hip,
            "right_hip": js.right_hip,
            "left_shoulder": js.left_shoulder,
            "right_shoulder": js.right_shoulder,
        },
    )
    template.validate()
    return template


def _select_splits(n_extra, r, s, ring_leg, mirror, mirror_ring, mirror_quad):
    """Pick quads for centroid splits, preserving mirror symmetry."""
    if n_extra == 0:
        return set()
    # self-mirrored quads: ring pair on a self leg, column pair fixed by mirror
    k_self = None
    for k in range(s):
        if (2 * k) % s == (s // 2 - 1) % s:
            k_self = k
            break
    self_quads = []
    pair_quads = []
    for i in range(r):
        leg, idx = ring_leg[i]
        j = (i + 1) % r
        if ring_leg[j][0] != leg:
            continue  # keep splits inside a single leg
        if mirror[leg] == leg and mirror_ring(i) == i and k_self is not None:
            self_quads.append((i, k_self))
        elif mirror[leg] != leg:
            pair_quads.append((i, 0))
    chosen = set()
    need_self = n_extra % 2
    idx = 0
    while need_self and idx < len(self_quads):
        q = self_quads[idx]
        if q not in chosen:
            chosen.add(q)
            need_self = 0
        idx += 1
    if need_self:
        raise ValueError("cannot place an odd split: no self-mirrored quad available")
    remaining = n_extra - (n_extra % 2)
    idx = 0
    while remaining > 0:
        if idx >= len(pair_quads):
            raise ValueError("not enough quads for the requested vertex count")
        q = pair_quads[idx]
        m = mirror_quad(q)
        if q not in chosen and m not in chosen and q != m:
            chosen.update((q, m))
            remaining -= 2
        idx += 1
    return chosen


def _build_regressor(verts: np.ndarray, js: JointSet, positions: np.ndarray) -> np.ndarray:
    """Inverse-distance weights over the 8 nearest vertices to each joint."""
    J, V = js.J, verts.shape[0]
    reg = np.zeros((J, V), dtype=np.float64)
    k = min(8, V)
    for j in range(J):
        d = np.linalg.norm(verts - positions[j], axis=1)
        idx = np.argsort(d, kind="stable")[:k]
        w = 1.0 / (d[idx] + 1.0)
        reg[j, idx] = w / w.sum()
    return reg


def build_template_bank(template: BodyTemplate, seed: int = 0) -> "TemplateBank":
    """Canonical template plus 10 seeded body-proportion variants.

    Variants are per-axis rescalings of the rest pose (height, width, depth),
    so all bank members share V, faces, and the regressor, and mirror symmetry
    is preserved.
    """
    rng = np.random.default_rng(seed)
    variants = [template.vertices.copy()]
    for _ in range(BANK_SIZE - 1):
        # x/y proportions show up in the 2D pose and can be recognized;
        # overall metric scale and depth-axis stretch are invisible in a
        # single view, so their spread is kept small (it bounds how well any
        # monocular model can recover metric, root-relative coordinates)
        overall = rng.uniform(0.985, 1.015)
        stretch = np.array(
            [
                rng.uniform(0.92, 1.08),
                rng.uniform(0.92, 1.08),
                rng.uniform(0.98, 1.02),
            ]
        )
        variants.append(template.vertices * (overall * stretch))
    return TemplateBank(template=template, vertex_sets=tuple(variants), seed=seed)


@dataclass(frozen=True)
class TemplateBank:
    template: BodyTemplate
    vertex_sets: tuple  # BANK_SIZE arrays of V x 3 (mm)
    seed: int = 0

    @property
    def size(self) -> int:
        return len(self.vertex_sets)

    def joints(self, b: int) -> np.ndarray:
        return self.template.regressor @ self.vertex_sets[b]


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------


def save_template(template: BodyTemplate, path):
    up = template.upsample.tocoo()
    doc = {
        "vertices": template.vertices.tolist(),
        "faces": template.faces.tolist(),
        "skeleton_edges": template.skeleton_edges.tolist(),
        "regressor": template.regressor.tolist(),
        "upsample": {
            "shape": list(up.shape),
            "triplets": [
                [int(r), int(c), float(v)] for r, c, v in zip(up.row, up.col, up.data)
            ],
        },
        "root_index": int(template.root_index),
        "joint_names": list(template.joint_names),
    }
    if template.joint_swap is not None:
        doc["joint_symmetry"] = template.joint_swap.tolist()
    if template.vertex_swap is not None:
        doc["vertex_symmetry"] = template.vertex_swap.tolist()
    if template.faces_full is not None:
        doc["faces_full"] = template.faces_full.tolist()
    if template.meta:
        doc["meta"] = template.meta
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_template(path) -> BodyTemplate:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise TemplateError(f"cannot read template file: {exc}") from exc
    required = ["vertices", "faces", "skeleton_edges", "regressor", "upsample", "root_index", "joint_names"]
    missing = [k for k in required if k not in doc]
    if missing:
        raise TemplateError(f"missing keys: {', '.join(missing)}")
    up = doc["upsample"]
    rows = [t[0] for t in up["triplets"]]
    cols = [t[1] for t in up["triplets"]]
    vals = [t[2] for t in up["triplets"]]
    upsample = sp.csr_matrix((vals, (rows, cols)), shape=tuple(up["shape"]))
    template = BodyTemplate(
        vertices=np.asarray(doc["vertices"], dtype=np.float64),
        faces=np.asarray(doc["faces"], dtype=np.int64),
        skeleton_edges=np.asarray(doc["skeleton_edges"], dtype=np.int64),
        regressor=np.asarray(doc["regressor"], dtype=np.float64),
        upsample=upsample,
        root_index=int(doc["root_index"]),
        joint_names=tuple(doc["joint_names"]),
        joint_swap=np.asarray(doc["joint_symmetry"], dtype=np.int64)
        if "joint_symmetry" in doc
        else None,
        vertex_swap=np.asarray(doc["vertex_symmetry"], dtype=np.int64)
        if "vertex_symmetry" in doc
        else None,
        faces_full=np.asarray(doc["faces_full"], dtype=np.int64)
        if "faces_full" in doc
        else None,
        meta=doc.get("meta", {}),
    )
    template.validate()
    return template
