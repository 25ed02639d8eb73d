"""Triangle mesh with optional UV atlas and baked texture."""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractViolationError, InvalidParameterError
from .types import ImageRGBA


@dataclass(frozen=True)
class TexturedMesh:
    """Mesh geometry plus (after unwrap/bake) UVs and a texture image.

    normals are per-vertex, unit length, oriented outward. uvs live in
    [0, 1]^2 with v increasing down texture rows.
    """

    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int32
    normals: np.ndarray  # (V, 3) float64
    uvs: np.ndarray = None  # (V, 2) float64 or None before unwrap
    texture: ImageRGBA = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        t = np.ascontiguousarray(self.triangles, dtype=np.int32)
        n = np.ascontiguousarray(self.normals, dtype=np.float64)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "normals", n)
        if v.ndim != 2 or v.shape[1] != 3:
            raise InvalidParameterError(f"vertices must be (V, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise InvalidParameterError(f"triangles must be (T, 3), got {t.shape}")
        if n.shape != v.shape:
            raise InvalidParameterError("normals must match vertices")
        if len(t) and (t.min() < 0 or t.max() >= len(v)):
            raise InvalidParameterError("triangle index out of range")
        if len(v):
            norms = np.linalg.norm(n, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-4):
                raise InvalidParameterError("normals must be unit length within 1e-4")
        if self.uvs is not None:
            uv = np.ascontiguousarray(self.uvs, dtype=np.float64)
            object.__setattr__(self, "uvs", uv)
            if uv.shape != (len(v), 2):
                raise InvalidParameterError(f"uvs must be (V, 2), got {uv.shape}")
            if len(uv) and (uv.min() < -1e-9 or uv.max() > 1.0 + 1e-9):
                raise InvalidParameterError("uvs must lie in [0, 1]^2")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def with_uvs(self, uvs):
        return replace(self, uvs=uvs)

    def with_texture(self, texture):
        if self.uvs is None:
            raise ContractViolationError("mesh needs a UV atlas before a texture")
        return replace(self, texture=texture)

    def with_geometry(self, vertices, triangles, normals, uvs=None):
        """New geometry invalidates any baked texture; rebake afterwards."""
        return TexturedMesh(vertices=vertices, triangles=triangles, normals=normals, uvs=uvs)

    def triangle_areas(self):
        tri = self.vertices[self.triangles]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def triangle_normals(self):
        tri = self.vertices[self.triangles]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norms = np.linalg.norm(cross, axis=1, keepdims=True)
        return cross / np.maximum(norms, 1e-300)

    def uv_areas(self):
        if self.uvs is None:
            raise ContractViolationError("mesh has no UVs")
        tri = self.uvs[self.triangles]
        e1 = tri[:, 1] - tri[:, 0]
        e2 = tri[:, 2] - tri[:, 0]
        return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
