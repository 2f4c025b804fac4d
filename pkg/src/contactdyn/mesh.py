"""Tetrahedral volume meshes with indexed surface triangles.

A TetMesh is the geometric substrate for both elasticity assembly and
collision detection: tets carry the volume discretization, surface_tris
the outward-oriented boundary used for proximity queries and contact
interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Signed volume below this is treated as a degenerate element (m^3).
DEGENERATE_VOLUME = 1e-12

# Faces of tet (0,1,2,3), ordered so each triangle's normal points away
# from the opposite vertex when the tet has positive signed volume.
_TET_FACES = ((0, 2, 1), (0, 1, 3), (1, 2, 3), (0, 3, 2))


class MeshError(ValueError):
    """Invalid mesh data (bad indices, degenerate or inconsistent elements)."""


@dataclass
class TetMesh:
    """Tet mesh with an explicit boundary triangulation.

    vertices: (n, 3) float positions in meters.
    tets: (nt, 4) int vertex indices, positive signed volume.
    surface_tris: (ns, 3) int vertex indices, outward oriented.
    """

    vertices: np.ndarray
    tets: np.ndarray
    surface_tris: np.ndarray
    _edge_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.tets = np.ascontiguousarray(self.tets, dtype=np.int64)
        self.surface_tris = np.ascontiguousarray(self.surface_tris, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be (n, 3)")
        if self.tets.ndim != 2 or self.tets.shape[1] != 4:
            raise MeshError("tets must be (nt, 4)")
        if self.surface_tris.ndim != 2 or self.surface_tris.shape[1] != 3:
            raise MeshError("surface_tris must be (ns, 3)")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    def tet_volumes(self) -> np.ndarray:
        """Signed volumes of all tets."""
        x = self.vertices[self.tets]
        d = x[:, 1:] - x[:, :1]
        return np.linalg.det(d) / 6.0

    def surface_nodes(self) -> np.ndarray:
        """Sorted unique vertex indices appearing in surface triangles."""
        return np.unique(self.surface_tris)

    def validate(self) -> None:
        """Check all structural invariants; raises MeshError on the first failure."""
        n = self.n_vertices
        if self.tets.size and (self.tets.min() < 0 or self.tets.max() >= n):
            raise MeshError("tet index out of range")
        if self.surface_tris.size and (
            self.surface_tris.min() < 0 or self.surface_tris.max() >= n
        ):
            raise MeshError("surface triangle index out of range")
        vols = self.tet_volumes()
        bad = np.nonzero(vols <= DEGENERATE_VOLUME)[0]
        if bad.size:
            raise MeshError(
                f"tet {bad[0]} degenerate or inverted (volume {vols[bad[0]]:.3e})"
            )
        boundary = _boundary_face_set(self.tets)
        for i, tri in enumerate(self.surface_tris):
            key = tuple(sorted(tri))
            if key not in boundary:
                raise MeshError(f"surface triangle {i} is not a boundary face")

    def mean_edge_length(self) -> float:
        e = self.vertices[self.tets[:, [0, 0, 0, 1, 1, 2]]] - self.vertices[
            self.tets[:, [1, 2, 3, 2, 3, 3]]
        ]
        return float(np.linalg.norm(e, axis=2).mean())

    def surface_triangle_of_vertex(self, v: int) -> int:
        """Index of one surface triangle containing vertex v (first by order)."""
        if not self._edge_cache.get("tri_of_vertex"):
            owner = {}
            for t, tri in enumerate(self.surface_tris):
                for vi in tri:
                    owner.setdefault(int(vi), t)
            self._edge_cache["tri_of_vertex"] = owner
        try:
            return self._edge_cache["tri_of_vertex"][int(v)]
        except KeyError:
            raise MeshError(f"vertex {v} is not on the surface") from None


def _boundary_face_set(tets: np.ndarray) -> set:
    counts: dict = {}
    for tet in tets:
        for fa, fb, fc in _TET_FACES:
            key = tuple(sorted((int(tet[fa]), int(tet[fb]), int(tet[fc]))))
            counts[key] = counts.get(key, 0) + 1
    return {k for k, c in counts.items() if c == 1}


def extract_surface(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Outward-oriented boundary triangles of a tet soup.

    A face is on the boundary when it belongs to exactly one tet; its
    orientation is taken from that tet's face ordering, which points away
    from the opposite vertex for positive-volume tets.
    """
    faces: dict = {}
    for tet in tets:
        for fa, fb, fc in _TET_FACES:
            tri = (int(tet[fa]), int(tet[fb]), int(tet[fc]))
            key = tuple(sorted(tri))
            if key in faces:
                faces[key] = None
            else:
                faces[key] = tri
    tris = [t for t in faces.values() if t is not None]
    return np.array(tris, dtype=np.int64).reshape(-1, 3)


def fix_tet_orientation(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Swap two vertices of any negative-volume tet to make all volumes positive."""
    tets = np.array(tets, dtype=np.int64)
    x = vertices[tets]
    vols = np.linalg.det(x[:, 1:] - x[:, :1]) / 6.0
    flip = vols < 0
    tets[flip] = tets[flip][:, [0, 2, 1, 3]]
    return tets


def load_mesh(path) -> TetMesh:
    """Read the text mesh format: `v x y z`, `t i j k l`, `s i j k`, `#` comments."""
    verts, tets, tris = [], [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag, args = parts[0], parts[1:]
            try:
                if tag == "v":
                    if len(args) != 3:
                        raise ValueError("expected 3 coordinates")
                    verts.append([float(a) for a in args])
                elif tag == "t":
                    if len(args) != 4:
                        raise ValueError("expected 4 indices")
                    tets.append([int(a) for a in args])
                elif tag == "s":
                    if len(args) != 3:
                        raise ValueError("expected 3 indices")
                    tris.append([int(a) for a in args])
                else:
                    raise ValueError(f"unknown record type {tag!r}")
            except ValueError as exc:
                raise MeshError(f"{path}:{lineno}: {exc}") from None
    mesh = TetMesh(
        np.array(verts, dtype=np.float64).reshape(-1, 3),
        np.array(tets, dtype=np.int64).reshape(-1, 4),
        np.array(tris, dtype=np.int64).reshape(-1, 3),
    )
    mesh.validate()
    return mesh


def save_mesh(mesh: TetMesh, path) -> None:
    """Write the text mesh format read by load_mesh."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for t in mesh.tets:
        lines.append(f"t {t[0]} {t[1]} {t[2]} {t[3]}")
    for s in mesh.surface_tris:
        lines.append(f"s {s[0]} {s[1]} {s[2]}")
    Path(path).write_text("\n".join(lines) + "\n")
