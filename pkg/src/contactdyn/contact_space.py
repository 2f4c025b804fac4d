"""Per-step frozen contact space: frames, H operators, groups, Delassus.

Everything the force solver needs is condensed here into a ContactProblem:
the operator W mapping contact forces to contact-space displacement
corrections, the free gaps accumulated during unconstrained motion, and the
friction coefficients. Contact components are ordered (n, t1, t2) per
contact, contacts in discovery order; that ordering is deterministic
because iterative solves depend on it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

W_NN_FLOOR = 1e-12


class ContactSpaceError(ValueError):
    pass


@dataclass(frozen=True)
class ContactFrame:
    """Right-handed orthonormal triad (n, t1, t2)."""

    n: np.ndarray
    t1: np.ndarray
    t2: np.ndarray

    def axes(self) -> np.ndarray:
        """Rows n, t1, t2."""
        return np.vstack([self.n, self.t1, self.t2])


def build_frame(n) -> ContactFrame:
    """Deterministic tangent frame for a unit normal.

    t1 is the global axis least aligned with n, projected onto the tangent
    plane; t2 = n x t1 completes the right-handed triad.
    """
    n = np.asarray(n, dtype=np.float64)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        raise ContactSpaceError("zero normal")
    if abs(norm - 1.0) > 1e-9:
        raise ContactSpaceError("normal must be unit length")
    e = np.zeros(3)
    e[int(np.argmin(np.abs(n)))] = 1.0
    t1 = e - (e @ n) * n
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return ContactFrame(n=n.copy(), t1=t1, t2=t2)


@dataclass
class BodyContactMap:
    """How one body's surface nodes map to compliance columns.

    tris: (nt, 3) global vertex ids of the surface triangles.
    node_col: global vertex id -> surface-node column index (into C_surf).
    rotation: body-to-world rotation when nodal DOFs live in a moving frame
    (corotational); identity when nodal DOFs are world-aligned.
    """

    body: object
    tris: np.ndarray
    node_col: dict
    n_nodes: int
    rotation: np.ndarray = None


@dataclass
class HOperator:
    """Sparse map from one body's nodal DOFs to contact-frame components.

    Sign conventions folded in: delta = sum_over_bodies H_i U_i + delta_free
    and nodal force F_i = H_i^T f, with the Q-side rows carrying -1.
    """

    body: object
    matrix: sp.csr_matrix

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.matrix @ u

    def apply_transpose(self, f: np.ndarray) -> np.ndarray:
        return self.matrix.T @ f


def assemble_H(pairs, frames, maps: dict) -> dict:
    """Per-body H operators for a list of contacts.

    pairs: ProximityPair list (defines P/Q sides); frames: ContactFrame per
    pair; maps: body id -> BodyContactMap for every mapped (non-fixed) body.
    Bodies not in maps contribute no operator.
    """
    m = len(pairs)
    rows: dict = {b: [] for b in maps}
    cols: dict = {b: [] for b in maps}
    vals: dict = {b: [] for b in maps}
    for c, (pair, frame) in enumerate(zip(pairs, frames)):
        for body, sign, tri, bary in (
            (pair.body_a, +1.0, pair.tri_a, pair.bary_p),
            (pair.body_b, -1.0, pair.tri_b, pair.bary_q),
        ):
            cmap = maps.get(body)
            if cmap is None:
                continue
            axes = frame.axes()
            if cmap.rotation is not None:
                axes = axes @ cmap.rotation  # world axes in body coordinates
            tri_nodes = cmap.tris[tri]
            for node, w in zip(tri_nodes, bary):
                if w == 0.0:
                    continue
                try:
                    col_node = cmap.node_col[int(node)]
                except KeyError:
                    raise ContactSpaceError(
                        f"contact {c} references node {int(node)} absent from "
                        f"body {body!r} map"
                    ) from None
                for k in range(3):
                    for i in range(3):
                        rows[body].append(3 * c + k)
                        cols[body].append(3 * col_node + i)
                        vals[body].append(sign * w * axes[k, i])
    out = {}
    for body, cmap in maps.items():
        mat = sp.coo_matrix(
            (vals[body], (rows[body], cols[body])),
            shape=(3 * m, 3 * cmap.n_nodes),
        ).tocsr()
        out[body] = HOperator(body=body, matrix=mat)
    return out


def free_gaps(pairs, frames, step_displacement) -> np.ndarray:
    """Free-gap vector (3m,): detected normal gap plus the relative
    tangential displacement accumulated during free motion.

    step_displacement(body, pair, side) returns the material point's
    displacement increment over the step, or None for bodies that do not
    move (fixed).
    """
    m = len(pairs)
    d = np.zeros(3 * m)
    for c, (pair, frame) in enumerate(zip(pairs, frames)):
        d[3 * c] = pair.gap
        dp = step_displacement(pair.body_a, pair, "p")
        dq = step_displacement(pair.body_b, pair, "q")
        rel = np.zeros(3)
        if dp is not None:
            rel += dp
        if dq is not None:
            rel -= dq
        d[3 * c + 1] = frame.t1 @ rel
        d[3 * c + 2] = frame.t2 @ rel
    return d


@dataclass
class ContactGroup:
    """Connected component of bodies linked by contacts."""

    bodies: set
    contact_indices: list


def group_contacts(pairs) -> list:
    """Union-find partition of contacts into groups by shared bodies."""
    parent: dict = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        parent.setdefault(a, a)
        parent.setdefault(b, b)
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[rb] = ra

    for pair in pairs:
        union(pair.body_a, pair.body_b)
    groups: dict = {}
    order = []
    for idx, pair in enumerate(pairs):
        root = find(pair.body_a)
        if root not in groups:
            groups[root] = ContactGroup(bodies=set(), contact_indices=[])
            order.append(root)
        g = groups[root]
        g.bodies.update((pair.body_a, pair.body_b))
        g.contact_indices.append(idx)
    return [groups[r] for r in order]


class DeformableSource:
    """Delassus contribution H C_surf H^T of one deformable body."""

    def __init__(self, cmap: BodyContactMap, c_surf: np.ndarray):
        self.cmap = cmap
        self.c_surf = c_surf

    def contribution(self, pairs, frames) -> np.ndarray:
        h = assemble_H(pairs, frames, {self.cmap.body: self.cmap})[self.cmap.body]
        mat = h.matrix
        active = np.unique(mat.indices)  # csr: columns with support
        if active.size == 0:
            return np.zeros((mat.shape[0], mat.shape[0]))
        # only the compliance block of the touched columns matters
        hd = mat[:, active].toarray()
        c_sub = self.c_surf[np.ix_(active, active)]
        return hd @ c_sub @ hd.T

    def h_operator(self, pairs, frames) -> HOperator:
        return assemble_H(pairs, frames, {self.cmap.body: self.cmap})[self.cmap.body]


class RigidSource:
    """Delassus contribution J (A/dt^2)^-1 J^T of one rigid frame."""

    def __init__(self, jacobian: np.ndarray, a_gen: np.ndarray, dt: float):
        self.jacobian = jacobian
        self.a_gen = a_gen
        self.dt = dt

    def contribution(self, pairs, frames) -> np.ndarray:
        try:
            inv = np.linalg.inv(self.a_gen / self.dt**2)
        except np.linalg.LinAlgError:
            raise ContactSpaceError("singular rigid inertia") from None
        return self.jacobian @ inv @ self.jacobian.T


@dataclass
class ContactProblem:
    """Everything a contact-force solver needs for one group."""

    m: int
    W: np.ndarray
    delta_free: np.ndarray
    mu: np.ndarray
    group_id: int = 0
    keys: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    frames: list = field(default_factory=list)


def assemble_delassus(pairs, frames, sources, delta_free, mu,
                      group_id=0) -> ContactProblem:
    """Sum per-body compliance contributions into the group operator W."""
    if not pairs:
        raise ContactSpaceError("empty contact group")
    m = len(pairs)
    w = np.zeros((3 * m, 3 * m))
    if not sources:
        raise ContactSpaceError("no compliance source in group")
    for src in sources:
        w += src.contribution(pairs, frames)
    asym = np.abs(w - w.T).max()
    scale = max(np.abs(w).max(), 1.0e-30)
    if asym > 1e-9 * scale:
        raise ContactSpaceError(f"W asymmetric: {asym / scale:.2e} relative")
    w = 0.5 * (w + w.T)
    wnn = w[np.arange(0, 3 * m, 3), np.arange(0, 3 * m, 3)]
    bad = np.nonzero(wnn < W_NN_FLOOR)[0]
    if bad.size:
        raise ContactSpaceError(
            f"contact {bad[0]} has vanishing normal compliance W_nn={wnn[bad[0]]:.2e}"
        )
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (m,):
        raise ContactSpaceError("mu must have one entry per contact")
    return ContactProblem(
        m=m, W=w, delta_free=np.asarray(delta_free, dtype=np.float64),
        mu=mu, group_id=group_id,
        keys=[p.feature for p in pairs], pairs=list(pairs), frames=list(frames),
    )


def dump_contact_problem(problem: ContactProblem, w_path, gaps_path=None) -> None:
    """Debug CSV dump of W (row-major) and delta_free with contact ordering."""
    header = []
    for c in range(problem.m):
        for comp in ("n", "t1", "t2"):
            header.append(f"c{c}_{comp}")
    with open(w_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in problem.W:
            writer.writerow([repr(float(v)) for v in row])
    if gaps_path is not None:
        with open(gaps_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerow([repr(float(v)) for v in problem.delta_free])
