"""Binary PLY checkpoints in the de-facto splat interchange layout.

Little-endian float32 per-vertex properties:
    x, y, z, f_dc_0, f_dc_1, f_dc_2, opacity, scale_0..2, rot_0..3
Opacity is stored as its logit and scales in log space, exactly as the
optimizer parameterizes them, so save/load round-trips bit for bit.
"""

import numpy as np

from .errors import CheckpointFormatError
from .types import GaussianCloud

PROPERTIES = (
    "x",
    "y",
    "z",
    "f_dc_0",
    "f_dc_1",
    "f_dc_2",
    "opacity",
    "scale_0",
    "scale_1",
    "scale_2",
    "rot_0",
    "rot_1",
    "rot_2",
    "rot_3",
)
FLOATS_PER_VERTEX = len(PROPERTIES)


def _header(count):
    lines = ["ply", "format binary_little_endian 1.0", f"element vertex {count}"]
    lines += [f"property float {name}" for name in PROPERTIES]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def save_checkpoint(cloud, path):
    """Write a cloud to a binary PLY file."""
    n = len(cloud)
    payload = np.empty((n, FLOATS_PER_VERTEX), dtype="<f4")
    payload[:, 0:3] = cloud.centers
    payload[:, 3:6] = cloud.colors
    payload[:, 6] = cloud.opacity_logits
    payload[:, 7:10] = cloud.log_scales
    payload[:, 10:14] = cloud.rotations
    with open(path, "wb") as f:
        f.write(_header(n))
        f.write(payload.tobytes())


def load_checkpoint(path):
    """Read a cloud from a binary PLY file written by save_checkpoint."""
    with open(path, "rb") as f:
        blob = f.read()

    end_marker = b"end_header\n"
    header_end = blob.find(end_marker)
    if not blob.startswith(b"ply\n") or header_end < 0:
        raise CheckpointFormatError("not a PLY file (missing ply magic or end_header)", offset=0)
    header = blob[:header_end].decode("ascii", errors="replace").splitlines()
    offset = header_end + len(end_marker)

    if "format binary_little_endian 1.0" not in header[1]:
        raise CheckpointFormatError(f"unsupported format line {header[1]!r}", offset=4)

    count = None
    props = []
    for line in header[2:]:
        if line.startswith("element vertex "):
            try:
                count = int(line.split()[-1])
            except ValueError:
                raise CheckpointFormatError(f"bad vertex count line {line!r}", offset=4)
        elif line.startswith("property float "):
            props.append(line.split()[-1])
        elif line.startswith("element "):
            raise CheckpointFormatError(f"unexpected element {line!r}", offset=4)
    if count is None:
        raise CheckpointFormatError("header missing 'element vertex'", offset=4)
    if tuple(props) != PROPERTIES:
        raise CheckpointFormatError(
            f"properties {props} do not match the splat layout {list(PROPERTIES)}", offset=4
        )

    expected = count * FLOATS_PER_VERTEX * 4
    if len(blob) - offset != expected:
        raise CheckpointFormatError(
            f"payload is {len(blob) - offset} bytes, expected {expected}",
            offset=offset + min(len(blob) - offset, expected),
        )
    data = np.frombuffer(blob, dtype="<f4", count=count * FLOATS_PER_VERTEX, offset=offset)
    data = data.reshape(count, FLOATS_PER_VERTEX)
    return GaussianCloud(
        centers=data[:, 0:3],
        log_scales=data[:, 7:10],
        rotations=data[:, 10:14],
        opacity_logits=data[:, 6],
        colors=np.clip(data[:, 3:6], 0.0, 1.0),
    )
