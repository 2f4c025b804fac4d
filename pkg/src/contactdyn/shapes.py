"""Procedural tet meshes for the built-in scenes (no binary assets).

All solids come from structured grids of hexahedral cells split into
tetrahedra. Two split rules are used, both conforming across shared faces:

- parity rule for grids indexed by (i, j, k): each cell is cut into 5 tets,
  the central tet spanning the corners whose global index parity i+j+k is
  even, so neighboring cells always agree on face diagonals;
- lowest-index rule for triangular prisms: each prism is relabeled so its
  smallest global vertex id sits at corner 0, which forces every quad face
  diagonal through the face's smallest vertex id.
"""

from __future__ import annotations

import numpy as np

from .mesh import TetMesh, extract_surface, fix_tet_orientation

# Local corner order of a grid cell: bit 0 -> +i, bit 1 -> +j, bit 2 -> +k.
_CUBE_CORNERS = [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0),
                 (0, 0, 1), (1, 0, 1), (0, 1, 1), (1, 1, 1)]


def _split_cell(corner_ids, parity_even: bool):
    """5-tet split of one cell; corner_ids in _CUBE_CORNERS order."""
    c = corner_ids
    if parity_even:
        # central tet on even-parity corners (0,0,0),(1,1,0),(1,0,1),(0,1,1)
        center = (c[0], c[3], c[5], c[6])
        odd = ((c[1], (c[0], c[3], c[5])),
               (c[2], (c[0], c[3], c[6])),
               (c[4], (c[0], c[5], c[6])),
               (c[7], (c[3], c[5], c[6])))
    else:
        center = (c[1], c[2], c[4], c[7])
        odd = ((c[0], (c[1], c[2], c[4])),
               (c[3], (c[1], c[2], c[7])),
               (c[5], (c[1], c[4], c[7])),
               (c[6], (c[2], c[4], c[7])))
    tets = [center]
    tets.extend((apex, *tri) for apex, tri in odd)
    return tets


def grid_tets(node_id, occupied) -> list:
    """Tets for all occupied cells of a structured grid.

    node_id(i, j, k) -> global vertex id; occupied is a bool array over cells.
    """
    tets = []
    nx, ny, nz = occupied.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if not occupied[i, j, k]:
                    continue
                ids = [node_id(i + di, j + dj, k + dk) for di, dj, dk in _CUBE_CORNERS]
                tets.extend(_split_cell(ids, (i + j + k) % 2 == 0))
    return tets


def _mesh_from_grid(points, node_index, occupied) -> TetMesh:
    """Compact unused nodes, split cells, and extract the boundary."""
    used = sorted(node_index)
    remap = {key: n for n, key in enumerate(used)}
    verts = np.array([points[key] for key in used], dtype=np.float64)
    tets = np.array(
        grid_tets(lambda i, j, k: remap[(i, j, k)], occupied), dtype=np.int64
    )
    tets = fix_tet_orientation(verts, tets)
    return TetMesh(verts, tets, extract_surface(verts, tets))


def voxel_mesh(occupied: np.ndarray, voxel, origin=(0.0, 0.0, 0.0)) -> TetMesh:
    """Tet mesh of the occupied voxels of a regular grid."""
    occupied = np.asarray(occupied, dtype=bool)
    hx, hy, hz = (voxel, voxel, voxel) if np.isscalar(voxel) else voxel
    points, index = {}, set()
    nx, ny, nz = occupied.shape
    for i in range(nx + 1):
        for j in range(ny + 1):
            for k in range(nz + 1):
                cells = occupied[max(i - 1, 0):i + 1, max(j - 1, 0):j + 1,
                                 max(k - 1, 0):k + 1]
                if cells.any():
                    points[(i, j, k)] = (
                        origin[0] + i * hx, origin[1] + j * hy, origin[2] + k * hz
                    )
                    index.add((i, j, k))
    return _mesh_from_grid(points, index, occupied)


def box_mesh(size=(0.1, 0.1, 0.1), divisions=(2, 2, 2), origin=None) -> TetMesh:
    """Solid rectangular box; origin defaults to centering the box at (0,0,0)."""
    if np.isscalar(size):
        size = (size, size, size)
    if np.isscalar(divisions):
        divisions = (divisions, divisions, divisions)
    nx, ny, nz = divisions
    occ = np.ones((nx, ny, nz), dtype=bool)
    voxel = (size[0] / nx, size[1] / ny, size[2] / nz)
    if origin is None:
        origin = (-size[0] / 2, -size[1] / 2, -size[2] / 2)
    return voxel_mesh(occ, voxel, origin)


def bar_mesh(length=0.3, section=0.05, divisions=(6, 1, 1)) -> TetMesh:
    """Slender bar along x, centered."""
    return box_mesh((length, section, section), divisions)


def table_mesh(width=0.4, top_thickness=0.05, leg_height=0.2, leg_width=0.05,
               voxel=0.05, reinforced=False, reinforcement_axis="x") -> TetMesh:
    """Four-legged table standing on the z=0 plane, centered in x/y.

    With reinforced=True, horizontal beams join the leg pairs along the
    given axis one voxel above the feet.
    """
    nx = max(int(round(width / voxel)), 2)
    nl = max(int(round(leg_width / voxel)), 1)
    nz_leg = max(int(round(leg_height / voxel)), 1)
    nz_top = max(int(round(top_thickness / voxel)), 1)
    nz = nz_leg + nz_top
    occ = np.zeros((nx, nx, nz), dtype=bool)
    occ[:, :, nz_leg:] = True
    for cx in (slice(0, nl), slice(nx - nl, nx)):
        for cy in (slice(0, nl), slice(nx - nl, nx)):
            occ[cx, cy, :nz_leg] = True
    if reinforced:
        zs = slice(1, 1 + max(nl, 1))
        if reinforcement_axis == "x":
            for cy in (slice(0, nl), slice(nx - nl, nx)):
                occ[:, cy, zs] = True
        else:
            for cx in (slice(0, nl), slice(nx - nl, nx)):
                occ[cx, :, zs] = True
    origin = (-nx * voxel / 2, -nx * voxel / 2, 0.0)
    return voxel_mesh(occ, voxel, origin)


def floor_mesh(half_extent=1.0, thickness=0.05) -> TetMesh:
    """Thin slab whose top face lies in the z=0 plane (fixed environment body)."""
    return box_mesh(
        (2 * half_extent, 2 * half_extent, thickness),
        divisions=(2, 2, 1),
        origin=(-half_extent, -half_extent, -thickness),
    )


def clip_mesh(inner_radius=0.010, thickness=0.0025, depth=0.010,
              opening_deg=110.0, n_theta=22, n_r=2, n_y=2,
              handle_length=0.010, tip_flare=1.35, flare_frac=0.06) -> TetMesh:
    """C-shaped snap clip in the x-z plane, extruded along y.

    The arc is centered on the origin with its opening facing -z; a handle
    block extends radially outward at the top (+z). The tips flare outward
    (tip_flare scales the tip inner radius) to give a lead-in chamfer.
    """
    half_open = np.radians(opening_deg) / 2.0
    # material spans from the right tip, over the top, to the left tip
    theta0 = -np.pi / 2 + half_open
    theta1 = 3 * np.pi / 2 - half_open
    thetas = np.linspace(theta0, theta1, n_theta + 1)
    dr = thickness / n_r
    n_handle = max(int(round(handle_length / dr)), 1)
    # handle occupies the angular cells around theta = +pi/2
    mid = np.pi / 2
    handle_cols = [
        it for it in range(n_theta)
        if abs(0.5 * (thetas[it] + thetas[it + 1]) - mid) <= np.radians(18.0)
    ]

    def inner_r(theta):
        # flare the arc ends over flare_frac of the span (lead-in chamfer)
        span = theta1 - theta0
        s = min((theta - theta0) / span, (theta1 - theta) / span)
        if s >= flare_frac:
            return inner_radius
        w = (flare_frac - s) / flare_frac
        return inner_radius * (1.0 + (tip_flare - 1.0) * w * w)

    points, index = {}, set()
    occ = np.zeros((n_theta, n_r + n_handle, n_y), dtype=bool)
    occ[:, :n_r, :] = True
    for it in handle_cols:
        occ[it, n_r:, :] = True
    for it in range(n_theta + 1):
        th = thetas[it]
        r0 = inner_r(th)
        for ir in range(n_r + n_handle + 1):
            r = r0 + ir * dr
            for iy in range(n_y + 1):
                y = -depth / 2 + depth * iy / n_y
                points[(it, ir, iy)] = (r * np.cos(th), y, r * np.sin(th))
                index.add((it, ir, iy))
    # drop nodes not touching any occupied cell
    needed = set()
    nx, ny, nz = occ.shape
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                if occ[i, j, k]:
                    for di, dj, dk in _CUBE_CORNERS:
                        needed.add((i + di, j + dj, k + dk))
    points = {key: points[key] for key in needed}
    return _mesh_from_grid(points, set(points), occ)


def _prism_split(prism):
    """Lowest-index 3-tet split of a prism (bottom v0..v2, top v3..v5)."""
    rotations = [(0, 1, 2, 3, 4, 5), (1, 2, 0, 4, 5, 3), (2, 0, 1, 5, 3, 4)]
    labelings = rotations + [tuple(rot[i] for i in (3, 5, 4, 0, 2, 1))
                             for rot in rotations]
    best = min(labelings, key=lambda lab: prism[lab[0]])
    v = [prism[i] for i in best]
    if min(v[1], v[5]) < min(v[2], v[4]):
        return [(v[0], v[1], v[2], v[5]), (v[0], v[1], v[5], v[4]),
                (v[0], v[4], v[5], v[3])]
    return [(v[0], v[1], v[2], v[4]), (v[0], v[4], v[2], v[5]),
            (v[0], v[4], v[5], v[3])]


def cylinder_mesh(radius=0.010, length=0.040, n_angular=16, n_radial=2,
                  n_axial=4) -> TetMesh:
    """Solid circular rod with axis along y, centered at the origin."""
    # 2D disk triangulation: center fan plus quad rings split by lowest index
    pts2d = [(0.0, 0.0)]
    ring_start = [None, 1]
    for ir in range(1, n_radial + 1):
        r = radius * ir / n_radial
        for ia in range(n_angular):
            a = 2 * np.pi * ia / n_angular
            pts2d.append((r * np.cos(a), r * np.sin(a)))
        ring_start.append(1 + ir * n_angular)
    tris2d = []
    for ia in range(n_angular):
        tris2d.append((0, 1 + ia, 1 + (ia + 1) % n_angular))
    for ir in range(1, n_radial):
        s0, s1 = ring_start[ir], ring_start[ir + 1]
        for ia in range(n_angular):
            a0, a1 = s0 + ia, s0 + (ia + 1) % n_angular
            b0, b1 = s1 + ia, s1 + (ia + 1) % n_angular
            if min(a0, b1) < min(a1, b0):
                tris2d.append((a0, b0, b1))
                tris2d.append((a0, b1, a1))
            else:
                tris2d.append((a0, b0, a1))
                tris2d.append((a1, b0, b1))
    n2d = len(pts2d)
    verts = []
    for iz in range(n_axial + 1):
        y = -length / 2 + length * iz / n_axial
        for x, z in pts2d:
            verts.append((x, y, z))
    verts = np.array(verts, dtype=np.float64)
    tets = []
    for iz in range(n_axial):
        lo, hi = iz * n2d, (iz + 1) * n2d
        for a, b, c in tris2d:
            tets.extend(_prism_split((lo + a, lo + b, lo + c,
                                      hi + a, hi + b, hi + c)))
    tets = fix_tet_orientation(verts, np.array(tets, dtype=np.int64))
    return TetMesh(verts, tets, extract_surface(verts, tets))
