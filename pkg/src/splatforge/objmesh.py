"""Wavefront OBJ + MTL export/import for textured meshes.

OBJ carries v/vt/vn/f records with 1-based v/vt/vn face triples; the MTL
references the texture PNG via map_Kd. Internal UVs have v increasing down
texture rows, so vt lines are written flipped (1 - v) per OBJ convention.
"""

from pathlib import Path

import numpy as np

from .errors import ContractViolationError
from .mesh import TexturedMesh
from .png import load_png, save_png


def save_mesh(mesh, obj_path):
    """Write mesh.obj + mesh.mtl + texture PNG next to each other."""
    if mesh.uvs is None or mesh.texture is None:
        raise ContractViolationError("save_mesh needs a UV-mapped, textured mesh")
    obj_path = Path(obj_path)
    stem = obj_path.stem
    mtl_path = obj_path.with_suffix(".mtl")
    png_path = obj_path.with_name(stem + "_texture.png")

    lines = [f"mtllib {mtl_path.name}", f"usemtl {stem}"]
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for uv in mesh.uvs:
        lines.append(f"vt {uv[0]:.9g} {1.0 - uv[1]:.9g}")
    for n in mesh.normals:
        lines.append(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}")
    for t in mesh.triangles:
        a, b, c = (int(i) + 1 for i in t)
        lines.append(f"f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}")
    obj_path.write_text("\n".join(lines) + "\n")

    mtl_path.write_text(
        "\n".join(
            [
                f"newmtl {stem}",
                "Ka 1.0 1.0 1.0",
                "Kd 1.0 1.0 1.0",
                "Ks 0.0 0.0 0.0",
                f"map_Kd {png_path.name}",
            ]
        )
        + "\n"
    )
    save_png(mesh.texture, png_path)
    return {"obj": obj_path, "mtl": mtl_path, "texture": png_path}


def load_mesh(obj_path):
    """Read back a mesh written by save_mesh (v/vt/vn indices must agree)."""
    obj_path = Path(obj_path)
    verts, uvs, normals, tris = [], [], [], []
    texture_name = None
    mtl_name = None
    for line in obj_path.read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif tag == "vt":
            u, v = float(parts[1]), float(parts[2])
            uvs.append([u, 1.0 - v])
        elif tag == "vn":
            normals.append([float(x) for x in parts[1:4]])
        elif tag == "f":
            idx = []
            for corner in parts[1:4]:
                fields = corner.split("/")
                v_i = int(fields[0])
                if len(fields) >= 2 and fields[1] and int(fields[1]) != v_i:
                    raise ContractViolationError(
                        f"face uses split v/vt indices ({corner}); not our layout"
                    )
                idx.append(v_i - 1)
            tris.append(idx)
        elif tag == "mtllib":
            mtl_name = parts[1]
    if mtl_name:
        mtl_path = obj_path.with_name(mtl_name)
        if mtl_path.exists():
            for line in mtl_path.read_text().splitlines():
                if line.startswith("map_Kd"):
                    texture_name = line.split()[1]

    texture = None
    if texture_name:
        png_path = obj_path.with_name(texture_name)
        if png_path.exists():
            texture = load_png(png_path)

    uv_arr = np.asarray(uvs) if uvs else None
    if uv_arr is not None:
        uv_arr = np.clip(uv_arr, 0.0, 1.0)
    return TexturedMesh(
        vertices=np.asarray(verts, dtype=np.float64).reshape(-1, 3),
        triangles=np.asarray(tris, dtype=np.int32).reshape(-1, 3),
        normals=np.asarray(normals, dtype=np.float64).reshape(-1, 3),
        uvs=uv_arr,
        texture=texture,
    )
