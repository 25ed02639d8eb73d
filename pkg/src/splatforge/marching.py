"""Marching-cubes isosurface extraction from a density grid.

Classic 256-case tables with linear edge interpolation. Vertices are
deduplicated on global lattice edges, so the surface is watertight across
interior cells. Vertex normals come from the density gradient (central
differences), oriented toward decreasing density; triangle winding is
flipped to agree with those normals so backface culling works downstream.
"""

import numpy as np

from .density import grid_coordinates
from .mc_tables import TRI_TABLE
from .mesh import TexturedMesh

# cube corner offsets and the (base corner, axis) of each of the 12 edges,
# numbered to match the tables
VERT_OFFSETS = np.array(
    [
        [0, 0, 0],
        [1, 0, 0],
        [1, 1, 0],
        [0, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [1, 1, 1],
        [0, 1, 1],
    ],
    dtype=np.int64,
)
EDGE_BASE = np.array([0, 1, 3, 0, 4, 5, 7, 4, 0, 1, 2, 3], dtype=np.int64)
EDGE_AXIS = np.array([0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2], dtype=np.int64)

# per-case (k, 3) arrays of edge indices
_CASE_TRIS = []
for _row in TRI_TABLE:
    _k = int(np.argmax(_row < 0)) if np.any(_row < 0) else 15
    _CASE_TRIS.append(_row[:_k].reshape(-1, 3).astype(np.int64))

MIN_TRIANGLE_AREA = 1e-12


def _empty_mesh():
    return TexturedMesh(
        vertices=np.zeros((0, 3)),
        triangles=np.zeros((0, 3), dtype=np.int32),
        normals=np.zeros((0, 3)),
    )


def marching_cubes(grid, threshold):
    """Extract the `density == threshold` surface as a triangle mesh.

    A threshold outside the grid's value range yields an empty mesh.
    """
    values = grid.values
    g = values.shape[0]
    if not (values.min() < threshold < values.max()):
        return _empty_mesh()

    inside = (values < threshold).astype(np.uint16)
    case = np.zeros((g - 1,) * 3, dtype=np.uint16)
    for bit, (ox, oy, oz) in enumerate(VERT_OFFSETS):
        case |= inside[ox : g - 1 + ox, oy : g - 1 + oy, oz : g - 1 + oz] << bit

    active = (case > 0) & (case < 255)
    if not np.any(active):
        return _empty_mesh()

    cell_ids = np.flatnonzero(active.ravel())
    cell_cases = case.ravel()[cell_ids]
    n1 = g - 1
    cz = cell_ids % n1
    cy = (cell_ids // n1) % n1
    cx = cell_ids // (n1 * n1)

    tri_edge_ids = []  # (M, 3) global edge ids per chunk
    tri_order = []  # (M,) cell id * 8 + slot, for the final deterministic sort
    for c in np.unique(cell_cases):
        tris = _CASE_TRIS[c]
        if len(tris) == 0:
            continue
        sel = cell_cases == c
        bx, by, bz = cx[sel], cy[sel], cz[sel]
        base_cell = cell_ids[sel]
        for slot, tri in enumerate(tris):
            ids = np.empty((len(bx), 3), dtype=np.int64)
            for corner, edge in enumerate(tri):
                off = VERT_OFFSETS[EDGE_BASE[edge]]
                px = bx + off[0]
                py = by + off[1]
                pz = bz + off[2]
                ids[:, corner] = ((px * g + py) * g + pz) * 3 + EDGE_AXIS[edge]
            tri_edge_ids.append(ids)
            tri_order.append(base_cell * 8 + slot)

    tri_edge_ids = np.concatenate(tri_edge_ids)
    tri_order = np.concatenate(tri_order)
    order = np.argsort(tri_order, kind="stable")
    tri_edge_ids = tri_edge_ids[order]

    unique_edges, tri_vert = np.unique(tri_edge_ids, return_inverse=True)
    tri_vert = tri_vert.reshape(-1, 3).astype(np.int64)

    coords = grid_coordinates()
    axis = unique_edges % 3
    flat = unique_edges // 3
    pz = flat % g
    py = (flat // g) % g
    px = flat // (g * g)
    val_p = values[px, py, pz]
    qx = px + (axis == 0)
    qy = py + (axis == 1)
    qz = pz + (axis == 2)
    val_q = values[qx, qy, qz]
    t = (threshold - val_p) / (val_q - val_p)
    pos = np.stack([coords[px], coords[py], coords[pz]], axis=1)
    pos_q = np.stack([coords[qx], coords[qy], coords[qz]], axis=1)
    verts = pos + t[:, None] * (pos_q - pos)

    normals = _gradient_normals(values, coords, verts)

    # align winding with the density-gradient normals
    e1 = verts[tri_vert[:, 1]] - verts[tri_vert[:, 0]]
    e2 = verts[tri_vert[:, 2]] - verts[tri_vert[:, 0]]
    geom_n = np.cross(e1, e2)
    vote = np.einsum(
        "ij,ij->i",
        geom_n,
        normals[tri_vert[:, 0]] + normals[tri_vert[:, 1]] + normals[tri_vert[:, 2]],
    )
    flip = vote < 0
    tri_vert[flip] = tri_vert[flip][:, [0, 2, 1]]

    area = 0.5 * np.linalg.norm(geom_n, axis=1)
    distinct = (
        (tri_vert[:, 0] != tri_vert[:, 1])
        & (tri_vert[:, 1] != tri_vert[:, 2])
        & (tri_vert[:, 0] != tri_vert[:, 2])
    )
    keep = distinct & (area > MIN_TRIANGLE_AREA)
    tri_vert = tri_vert[keep]

    used = np.unique(tri_vert)
    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TexturedMesh(
        vertices=verts[used],
        triangles=remap[tri_vert].astype(np.int32),
        normals=normals[used],
    )


def _gradient_normals(values, coords, verts):
    """Outward normals: negated, trilinearly sampled central-difference gradient."""
    step = coords[1] - coords[0]
    gx, gy, gz = np.gradient(values, step)
    g = values.shape[0]

    fidx = (verts - coords[0]) / step
    fidx = np.clip(fidx, 0.0, g - 1.0)
    i0 = np.clip(np.floor(fidx).astype(np.int64), 0, g - 2)
    frac = fidx - i0

    def tri_sample(field):
        c000 = field[i0[:, 0], i0[:, 1], i0[:, 2]]
        c100 = field[i0[:, 0] + 1, i0[:, 1], i0[:, 2]]
        c010 = field[i0[:, 0], i0[:, 1] + 1, i0[:, 2]]
        c110 = field[i0[:, 0] + 1, i0[:, 1] + 1, i0[:, 2]]
        c001 = field[i0[:, 0], i0[:, 1], i0[:, 2] + 1]
        c101 = field[i0[:, 0] + 1, i0[:, 1], i0[:, 2] + 1]
        c011 = field[i0[:, 0], i0[:, 1] + 1, i0[:, 2] + 1]
        c111 = field[i0[:, 0] + 1, i0[:, 1] + 1, i0[:, 2] + 1]
        fx, fy, fz = frac[:, 0], frac[:, 1], frac[:, 2]
        c00 = c000 * (1 - fx) + c100 * fx
        c10 = c010 * (1 - fx) + c110 * fx
        c01 = c001 * (1 - fx) + c101 * fx
        c11 = c011 * (1 - fx) + c111 * fx
        c0 = c00 * (1 - fy) + c10 * fy
        c1 = c01 * (1 - fy) + c11 * fy
        return c0 * (1 - fz) + c1 * fz

    grad = np.stack([tri_sample(gx), tri_sample(gy), tri_sample(gz)], axis=1)
    normals = -grad
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    degenerate = norms[:, 0] < 1e-12
    normals[degenerate] = (0.0, 0.0, 1.0)
    norms[degenerate] = 1.0
    return normals / norms
