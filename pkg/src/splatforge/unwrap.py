"""Normal-binned UV unwrapping with shelf-packed charts.

Triangles cluster into six charts by the dominant signed axis of their
geometric normal, each chart projects onto its axis plane (projected area is
at least 1/sqrt(3) of true area, so UV area stays positive), and charts pack
into the unit atlas with two-texel gutters. Vertices shared across charts
are duplicated so each copy carries its own UVs.
"""

import numpy as np

SHRINK_STEPS = 48  # binary-search iterations for the global packing scale


def _chart_bins(mesh):
    """Dominant-axis bin (0..5: +x, -x, +y, -y, +z, -z) per triangle."""
    normals = mesh.triangle_normals()
    axis = np.argmax(np.abs(normals), axis=1)
    sign = normals[np.arange(len(normals)), axis] < 0
    return axis * 2 + sign


_PLANE_AXES = {0: (1, 2), 1: (0, 2), 2: (0, 1)}


def _shelf_pack(sizes, gutter):
    """Shelf-pack boxes of (w, h) into the unit square at the largest scale.

    Returns (scale, offsets) with deterministic placement: boxes sorted by
    height (desc), then index.
    """
    order = sorted(range(len(sizes)), key=lambda i: (-sizes[i][1], i))

    def try_pack(scale):
        offsets = [None] * len(sizes)
        x = gutter
        y = gutter
        shelf_h = 0.0
        for i in order:
            w = sizes[i][0] * scale
            h = sizes[i][1] * scale
            if w > 1.0 - 2 * gutter or h > 1.0 - 2 * gutter:
                return None
            if x + w > 1.0 - gutter:
                y += shelf_h + gutter
                x = gutter
                shelf_h = 0.0
            if y + h > 1.0 - gutter:
                return None
            offsets[i] = (x, y)
            x += w + gutter
            shelf_h = max(shelf_h, h)
        return offsets

    lo, hi = 0.0, 1.0
    total = sum(w * h for w, h in sizes)
    if total > 0:
        hi = 1.0 / np.sqrt(total)  # cannot beat perfect packing
    best = None
    for _ in range(SHRINK_STEPS):
        mid = 0.5 * (lo + hi)
        placed = try_pack(mid)
        if placed is None:
            hi = mid
        else:
            lo = mid
            best = placed
    if best is None:
        raise RuntimeError("atlas packing failed; degenerate chart sizes")
    return lo, best


def uv_unwrap(mesh, texture_size=1024):
    """Return a copy of the mesh with a packed UV atlas (and split vertices)."""
    if mesh.n_triangles == 0:
        return mesh.with_geometry(
            mesh.vertices[:0], mesh.triangles[:0], mesh.normals[:0], uvs=np.zeros((0, 2))
        )
    gutter = 2.0 / texture_size
    bins = _chart_bins(mesh)

    charts = []  # (bin, tri_ids, local_verts, local_uv, sizes)
    new_vertices, new_normals, new_uvlocal, new_tris = [], [], [], []
    chart_sizes = []
    chart_vertex_base = []
    base = 0
    for b in range(6):
        tri_ids = np.flatnonzero(bins == b)
        if len(tri_ids) == 0:
            continue
        tris = mesh.triangles[tri_ids]
        used, local = np.unique(tris, return_inverse=True)
        local_tris = local.reshape(-1, 3)
        u_axis, v_axis = _PLANE_AXES[b // 2]
        pts = mesh.vertices[used]
        uv = np.stack([pts[:, u_axis], pts[:, v_axis]], axis=1)
        uv = uv - uv.min(axis=0)
        size = uv.max(axis=0)
        size = np.maximum(size, 1e-9)
        new_vertices.append(pts)
        new_normals.append(mesh.normals[used])
        new_uvlocal.append(uv)
        new_tris.append(local_tris + base)
        chart_sizes.append((float(size[0]), float(size[1])))
        chart_vertex_base.append((base, len(used)))
        base += len(used)

    scale, offsets = _shelf_pack(chart_sizes, gutter)

    uvs = np.zeros((base, 2))
    for chart, ((start, count), (ox, oy)) in enumerate(zip(chart_vertex_base, offsets)):
        uvs[start : start + count] = new_uvlocal[chart] * scale + (ox, oy)

    return mesh.with_geometry(
        vertices=np.concatenate(new_vertices),
        triangles=np.concatenate(new_tris).astype(np.int32),
        normals=np.concatenate(new_normals),
        uvs=np.clip(uvs, 0.0, 1.0),
    )


def chart_count(mesh):
    """Number of occupied normal bins (charts the unwrap would produce)."""
    if mesh.n_triangles == 0:
        return 0
    return len(np.unique(_chart_bins(mesh)))


def atlas_utilization(mesh):
    """Fraction of the unit atlas covered by triangle UV area."""
    return float(mesh.uv_areas().sum())
