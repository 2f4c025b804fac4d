"""Deterministic proximity detection between triangulated surfaces.

Produces the contact-point data the solver consumes: paired points P/Q
with barycentric supports, a unit normal directed from Q toward P (into
the first body), and a signed gap (negative when penetrating). Pairs are
classified as vertex-face (either orientation) or edge-edge; broad phase
is a uniform grid over triangle bounding boxes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

MERGE_TOL = 1e-4       # m; near-duplicate suppression radius
DEGENERATE_QP = 1e-9   # m; below this, fall back to the face normal
FLAT_COS = np.cos(np.radians(5.0))   # dihedral below 5 deg counts as flat
ALIGN_COS = np.cos(np.radians(45.0))  # smooth-vertex normal compatibility

VERTEX_FACE = 0   # vertex of body A against a face of body B
FACE_VERTEX = 1   # face of body A against a vertex of body B
EDGE_EDGE = 2

KIND_NAMES = {VERTEX_FACE: "vertex_face", FACE_VERTEX: "face_vertex",
              EDGE_EDGE: "edge_edge"}


@dataclass
class ProximityPair:
    """One candidate contact between two bodies.

    point_p lies on body_a, point_q on body_b; normal points from Q toward
    P; gap = (P - Q) . n when separated, negative penetration depth otherwise.
    feature is a stable id used for warm starting and deduplication.
    """

    body_a: object
    body_b: object
    tri_a: int
    tri_b: int
    point_p: np.ndarray
    point_q: np.ndarray
    bary_p: np.ndarray
    bary_q: np.ndarray
    normal: np.ndarray
    gap: float
    kind: str
    feature: tuple


@njit(cache=True)
def _closest_point_triangle(p, a, b, c):
    """Closest point on triangle abc to p, with barycentric coordinates."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab @ ap
    d2 = ac @ ap
    if d1 <= 0.0 and d2 <= 0.0:
        return a, 1.0, 0.0, 0.0
    bp = p - b
    d3 = ab @ bp
    d4 = ac @ bp
    if d3 >= 0.0 and d4 <= d3:
        return b, 0.0, 1.0, 0.0
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return a + v * ab, 1.0 - v, v, 0.0
    cp = p - c
    d5 = ab @ cp
    d6 = ac @ cp
    if d6 >= 0.0 and d5 <= d6:
        return c, 0.0, 0.0, 1.0
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return a + w * ac, 1.0 - w, 0.0, w
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + w * (c - b), 0.0, 1.0 - w, w
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return a + ab * v + ac * w, 1.0 - v - w, v, w


@njit(cache=True)
def _closest_segment_segment(p1, q1, p2, q2):
    """Closest-point parameters (s, t) between segments p1q1 and p2q2."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    eps = 1e-14
    if a <= eps and e <= eps:
        return 0.0, 0.0
    if a <= eps:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
        return s, t
    c = d1 @ r
    if e <= eps:
        t = 0.0
        s = min(max(-c / a, 0.0), 1.0)
        return s, t
    b = d1 @ d2
    denom = a * e - b * b
    if denom > eps:
        s = min(max((b * f - c * e) / denom, 0.0), 1.0)
    else:
        s = 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = min(max(-c / a, 0.0), 1.0)
    elif t > 1.0:
        t = 1.0
        s = min(max((b - c) / a, 0.0), 1.0)
    return s, t


@njit(cache=True)
def _narrow_phase(pos_a, tris_a, pos_b, tris_b, cand_a, cand_b, threshold,
                  edge_flat_a, edge_flat_b):
    """Raw proximity hits for candidate triangle pairs.

    Returns (count, kind, feat1, feat2, tri_ids, p, q, bp, bq) with one row
    per hit; features are vertex ids or packed edge ids on their own body.
    """
    k = cand_a.shape[0]
    cap = k * 15
    kind = np.empty(cap, dtype=np.int64)
    feat1 = np.empty(cap, dtype=np.int64)
    feat2 = np.empty(cap, dtype=np.int64)
    tri_ids = np.empty((cap, 2), dtype=np.int64)
    pp = np.empty((cap, 3))
    qq = np.empty((cap, 3))
    bp = np.empty((cap, 3))
    bq = np.empty((cap, 3))
    n_out = 0
    nva = pos_a.shape[0]
    nvb = pos_b.shape[0]
    for idx in range(k):
        ta = cand_a[idx]
        tb = cand_b[idx]
        ia0, ia1, ia2 = tris_a[ta, 0], tris_a[ta, 1], tris_a[ta, 2]
        ib0, ib1, ib2 = tris_b[tb, 0], tris_b[tb, 1], tris_b[tb, 2]
        a0, a1, a2 = pos_a[ia0], pos_a[ia1], pos_a[ia2]
        b0, b1, b2 = pos_b[ib0], pos_b[ib1], pos_b[ib2]
        # vertices of A against face of B
        for which in range(3):
            vid = tris_a[ta, which]
            p = pos_a[vid]
            cq, u, v, w = _closest_point_triangle(p, b0, b1, b2)
            d = np.sqrt(((p - cq) ** 2).sum())
            if d < threshold:
                kind[n_out] = VERTEX_FACE
                feat1[n_out] = vid
                feat2[n_out] = tb
                tri_ids[n_out, 0] = ta
                tri_ids[n_out, 1] = tb
                pp[n_out] = p
                qq[n_out] = cq
                bp[n_out, 0] = 1.0 if which == 0 else 0.0
                bp[n_out, 1] = 1.0 if which == 1 else 0.0
                bp[n_out, 2] = 1.0 if which == 2 else 0.0
                bq[n_out, 0] = u
                bq[n_out, 1] = v
                bq[n_out, 2] = w
                n_out += 1
        # vertices of B against face of A
        for which in range(3):
            vid = tris_b[tb, which]
            p = pos_b[vid]
            cq, u, v, w = _closest_point_triangle(p, a0, a1, a2)
            d = np.sqrt(((p - cq) ** 2).sum())
            if d < threshold:
                kind[n_out] = FACE_VERTEX
                feat1[n_out] = ta
                feat2[n_out] = vid
                tri_ids[n_out, 0] = ta
                tri_ids[n_out, 1] = tb
                pp[n_out] = cq
                qq[n_out] = p
                bp[n_out, 0] = u
                bp[n_out, 1] = v
                bp[n_out, 2] = w
                bq[n_out, 0] = 1.0 if which == 0 else 0.0
                bq[n_out, 1] = 1.0 if which == 1 else 0.0
                bq[n_out, 2] = 1.0 if which == 2 else 0.0
                n_out += 1
        # interior edge-edge pairs (endpoint cases are covered above)
        lo = 1e-6
        hi = 1.0 - 1e-6
        for ea in range(3):
            if edge_flat_a[ta, ea]:
                continue
            va0 = tris_a[ta, ea]
            va1 = tris_a[ta, (ea + 1) % 3]
            pa0 = pos_a[va0]
            pa1 = pos_a[va1]
            for eb in range(3):
                if edge_flat_b[tb, eb]:
                    continue
                vb0 = tris_b[tb, eb]
                vb1 = tris_b[tb, (eb + 1) % 3]
                pb0 = pos_b[vb0]
                pb1 = pos_b[vb1]
                s, t = _closest_segment_segment(pa0, pa1, pb0, pb1)
                if s <= lo or s >= hi or t <= lo or t >= hi:
                    continue
                cp = pa0 + s * (pa1 - pa0)
                cq2 = pb0 + t * (pb1 - pb0)
                d = np.sqrt(((cp - cq2) ** 2).sum())
                if d < threshold:
                    e1 = min(va0, va1) * nva + max(va0, va1)
                    e2 = min(vb0, vb1) * nvb + max(vb0, vb1)
                    kind[n_out] = EDGE_EDGE
                    feat1[n_out] = e1
                    feat2[n_out] = e2
                    tri_ids[n_out, 0] = ta
                    tri_ids[n_out, 1] = tb
                    pp[n_out] = cp
                    qq[n_out] = cq2
                    # barycentric weights on the owning triangles
                    bp[n_out, 0] = 0.0
                    bp[n_out, 1] = 0.0
                    bp[n_out, 2] = 0.0
                    bp[n_out, ea] = 1.0 - s
                    bp[n_out, (ea + 1) % 3] = s
                    bq[n_out, 0] = 0.0
                    bq[n_out, 1] = 0.0
                    bq[n_out, 2] = 0.0
                    bq[n_out, eb] = 1.0 - t
                    bq[n_out, (eb + 1) % 3] = t
                    n_out += 1
    return (n_out, kind[:n_out], feat1[:n_out], feat2[:n_out],
            tri_ids[:n_out], pp[:n_out], qq[:n_out], bp[:n_out], bq[:n_out])


_TOPOLOGY_CACHE: dict = {}


def _edge_topology(tris, nv):
    """Cached per-topology data: edge partner slots and boundary vertices."""
    key = id(tris)
    hit = _TOPOLOGY_CACHE.get(key)
    if hit is not None and hit[0] is tris:
        return hit[1], hit[2]
    nt = tris.shape[0]
    edges = np.stack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]],
                     axis=1).reshape(-1, 2)
    keys = np.sort(edges, axis=1)
    order = np.lexsort((keys[:, 1], keys[:, 0]))
    sk = keys[order]
    partner = np.full(3 * nt, -1, dtype=np.int64)
    boundary_vertex = np.zeros(nv, dtype=np.bool_)
    same_as_next = np.all(sk[:-1] == sk[1:], axis=1)
    i = 0
    while i < len(order):
        if i + 1 < len(order) and same_as_next[i]:
            a, b = order[i], order[i + 1]
            partner[a] = b
            partner[b] = a
            i += 2
        else:
            boundary_vertex[keys[order[i]]] = True
            i += 1
    _TOPOLOGY_CACHE[key] = (tris, partner, boundary_vertex)
    if len(_TOPOLOGY_CACHE) > 64:
        _TOPOLOGY_CACHE.pop(next(iter(_TOPOLOGY_CACHE)))
    return partner, boundary_vertex


def _surface_features(pos, tris):
    """Flat-feature flags guarding against internal-edge catching.

    Returns (face_normals (nt,3), edge_flat (nt,3), vertex_smooth (nv,),
    vertex_normal (nv,3)). An edge is flat when its two faces are coplanar
    within tolerance; a vertex is smooth when it is interior (no boundary
    edge) and all adjacent faces agree with its mean normal. Contacts at
    flat edges are dropped entirely and contacts at smooth vertices must
    align with the vertex normal; sharp features keep all contacts.
    """
    nt = tris.shape[0]
    nv = pos.shape[0]
    p = pos[tris]
    fn = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    norms = np.linalg.norm(fn, axis=1)
    norms[norms == 0] = 1.0
    fn = fn / norms[:, None]

    partner, boundary_vertex = _edge_topology(tris, nv)
    slot_tri = np.arange(3 * nt) // 3
    has_partner = partner >= 0
    edge_flat = np.zeros(3 * nt, dtype=np.bool_)
    dots = np.einsum(
        "ec,ec->e", fn[slot_tri[has_partner]],
        fn[slot_tri[partner[has_partner]]],
    )
    edge_flat[has_partner] = dots > FLAT_COS
    edge_flat = edge_flat.reshape(nt, 3)

    vsum = np.zeros((nv, 3))
    np.add.at(vsum, tris.ravel(), np.repeat(fn, 3, axis=0))
    vn = np.linalg.norm(vsum, axis=1)
    vn[vn == 0] = 1.0
    vertex_normal = vsum / vn[:, None]
    min_dot = np.ones(nv)
    dots = np.einsum("tc,tkc->tk", fn, vertex_normal[tris])
    np.minimum.at(min_dot, tris.ravel(), dots.ravel())
    vertex_smooth = (min_dot > FLAT_COS) & ~boundary_vertex
    return fn, edge_flat, vertex_smooth, vertex_normal


def _tri_aabbs(pos, tris):
    p = pos[tris]
    return p.min(axis=1), p.max(axis=1)


def _candidate_pairs(pos_a, tris_a, pos_b, tris_b, threshold):
    """Broad phase: all triangle pairs with overlapping inflated boxes.

    Vectorized all-pairs AABB overlap; at desk scale (thousands of
    triangles per body) this beats maintaining a spatial grid per step.
    """
    lo_a, hi_a = _tri_aabbs(pos_a, tris_a)
    lo_b, hi_b = _tri_aabbs(pos_b, tris_b)
    lo_a = lo_a - threshold
    hi_a = hi_a + threshold
    # quick reject on body-level boxes
    if np.any(lo_a.min(axis=0) > hi_b.max(axis=0)) or np.any(
        hi_a.max(axis=0) < lo_b.min(axis=0)
    ):
        return (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
    overlap = np.ones((tris_a.shape[0], tris_b.shape[0]), dtype=bool)
    for k in range(3):
        overlap &= lo_a[:, k][:, None] <= hi_b[:, k][None, :]
        overlap &= hi_a[:, k][:, None] >= lo_b[:, k][None, :]
    ia, ib = np.nonzero(overlap)
    return ia.astype(np.int64), ib.astype(np.int64)




def detect_proximities(surfaces, threshold, merge_tol=MERGE_TOL,
                       cap=None) -> list:
    """All vertex-face and edge-edge proximity pairs closer than threshold.

    surfaces: list of (body_id, triangles, positions). Pairs are reported
    between distinct bodies only, in listed body order (P on the earlier
    body). With cap set, pairs are thinned deterministically, evenly across
    the feature-sorted list.
    """
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    pairs: list = []
    for ia in range(len(surfaces)):
        for ib in range(ia + 1, len(surfaces)):
            pairs.extend(
                _detect_pair(surfaces[ia], surfaces[ib], threshold, merge_tol)
            )
    if cap is not None and len(pairs) > cap:
        pairs.sort(key=lambda pr: (str(pr.body_a), str(pr.body_b), pr.feature))
        idx = np.unique(np.linspace(0, len(pairs) - 1, cap).round().astype(int))
        pairs = [pairs[i] for i in idx]
    return pairs


def _detect_pair(surf_a, surf_b, threshold, merge_tol):
    body_a, tris_a, pos_a = surf_a
    body_b, tris_b, pos_b = surf_b
    tris_a = np.ascontiguousarray(tris_a, dtype=np.int64)
    tris_b = np.ascontiguousarray(tris_b, dtype=np.int64)
    pos_a = np.ascontiguousarray(pos_a, dtype=np.float64)
    pos_b = np.ascontiguousarray(pos_b, dtype=np.float64)
    if not tris_a.size or not tris_b.size:
        return []
    cand_a, cand_b = _candidate_pairs(pos_a, tris_a, pos_b, tris_b, threshold)
    if not cand_a.size:
        return []
    fn_a, eflat_a, smooth_a, vnorm_a = _surface_features(pos_a, tris_a)
    fn_b, eflat_b, smooth_b, vnorm_b = _surface_features(pos_b, tris_b)
    (n, kind, feat1, feat2, tri_ids, pp, qq, bp, bq) = _narrow_phase(
        pos_a, tris_a, pos_b, tris_b, cand_a, cand_b, threshold,
        eflat_a, eflat_b,
    )
    if n == 0:
        return []
    dists = np.linalg.norm(pp - qq, axis=1)

    # one hit per feature: for vertex probes the nearest projection wins,
    # plus extra projections whose Q is genuinely distinct (dihedral edges);
    # edge-edge duplicates from shared triangles collapse to one
    selected = []
    order = np.lexsort((dists, feat2, feat1, kind))
    emitted: dict = {}
    for row in order:
        key = (int(kind[row]),
               int(feat1[row]) if kind[row] != FACE_VERTEX else int(feat2[row]))
        if kind[row] == EDGE_EDGE:
            key = (EDGE_EDGE, int(feat1[row]), int(feat2[row]))
            if key in emitted:
                continue
            emitted[key] = [row]
            selected.append(row)
            continue
        anchor = qq[row] if kind[row] == VERTEX_FACE else pp[row]
        bucket = emitted.setdefault(key, [])
        dup = False
        for prev in bucket:
            prev_anchor = qq[prev] if kind[prev] == VERTEX_FACE else pp[prev]
            if np.linalg.norm(anchor - prev_anchor) < merge_tol:
                dup = True
                break
        if not dup:
            bucket.append(row)
            selected.append(row)

    out = []
    for row in sorted(selected):
        p = pp[row]
        q = qq[row]
        d = dists[row]
        if kind[row] == FACE_VERTEX:
            face_n = -fn_a[int(tri_ids[row, 0])]
        else:
            face_n = fn_b[int(tri_ids[row, 1])]
        if d < DEGENERATE_QP:
            normal = face_n
        else:
            normal = (p - q) / d
            if kind[row] != EDGE_EDGE and normal @ face_n < 0.0:
                # probe point is behind the face: penetration
                normal = face_n
        # smooth (flat-neighborhood) vertices only admit contacts along
        # their surface normal; sideways hits there are mesh artifacts
        if kind[row] == VERTEX_FACE and smooth_a[feat1[row]]:
            if normal @ vnorm_a[feat1[row]] > -ALIGN_COS:
                continue
        if kind[row] == FACE_VERTEX and smooth_b[feat2[row]]:
            if normal @ vnorm_b[feat2[row]] < ALIGN_COS:
                continue
        gap = float((p - q) @ normal)
        out.append(
            ProximityPair(
                body_a=body_a, body_b=body_b,
                tri_a=int(tri_ids[row, 0]), tri_b=int(tri_ids[row, 1]),
                point_p=p.copy(), point_q=q.copy(),
                bary_p=bp[row].copy(), bary_q=bq[row].copy(),
                normal=normal.copy(), gap=gap,
                kind=KIND_NAMES[int(kind[row])],
                feature=(int(kind[row]), int(feat1[row]), int(feat2[row])),
            )
        )

    # spec-level merge: near-coincident P on the same triangle pair
    final = []
    by_tris: dict = {}
    for pr in out:
        bucket = by_tris.setdefault((pr.tri_a, pr.tri_b), [])
        merged = False
        for i, other in enumerate(bucket):
            if np.linalg.norm(pr.point_p - other.point_p) < merge_tol:
                if pr.gap < other.gap:
                    bucket[i] = pr
                merged = True
                break
        if not merged:
            bucket.append(pr)
    for key in sorted(by_tris):
        final.extend(by_tris[key])
    return final
