"""Orbit camera construction and pose sampling.

All cameras look at the origin from a sphere of fixed radius. The reference
view (azimuth 0, elevation 0) sits on the +z axis; azimuth rotates about +y.
"""

import numpy as np

from .types import Camera, CameraSample

ORBIT_RADIUS = 2.0
DEFAULT_FOV_Y = 49.1
AZIMUTH_RANGE = (-180.0, 180.0)
ELEVATION_RANGE = (-30.0, 30.0)
POLAR_ELEVATION = 89.0  # top/bottom views; +-90 would degenerate the up vector


def orbit_position(azimuth_deg, elevation_deg, radius):
    """World position on the orbit sphere (y-up convention)."""
    az = np.radians(azimuth_deg)
    el = np.radians(elevation_deg)
    return np.array(
        [
            radius * np.cos(el) * np.sin(az),
            radius * np.sin(el),
            radius * np.cos(el) * np.cos(az),
        ]
    )


def camera_from_sample(sample, fov_y=DEFAULT_FOV_Y, resolution=512):
    """Concrete pinhole camera for an orbit pose, square resolution."""
    return Camera(
        position=orbit_position(sample.azimuth, sample.elevation, sample.radius),
        fov_y=fov_y,
        width=int(resolution),
        height=int(resolution),
    )


def sample_training_camera(rng, radius=ORBIT_RADIUS):
    """Draw one training pose: azimuth U(-180, 180), elevation U(-30, 30)."""
    azimuth = rng.uniform(*AZIMUTH_RANGE)
    elevation = rng.uniform(*ELEVATION_RANGE)
    return CameraSample(azimuth=azimuth, elevation=elevation, radius=radius)


def reference_view(radius=ORBIT_RADIUS):
    return CameraSample(azimuth=0.0, elevation=0.0, radius=radius)


def texturing_views(radius=ORBIT_RADIUS):
    """The 26 color back-projection poses: 8 azimuths x 3 elevations + poles."""
    azimuths = [-180.0 + 45.0 * k for k in range(8)]
    samples = [
        CameraSample(azimuth=az, elevation=el, radius=radius)
        for el in (-30.0, 0.0, 30.0)
        for az in azimuths
    ]
    samples.append(CameraSample(azimuth=0.0, elevation=POLAR_ELEVATION, radius=radius))
    samples.append(CameraSample(azimuth=0.0, elevation=-POLAR_ELEVATION, radius=radius))
    return samples


def heldout_views(radius=ORBIT_RADIUS):
    """Eight evaluation poses offset 22.5 deg from every texturing azimuth."""
    return [
        CameraSample(
            azimuth=a if a <= 180.0 else a - 360.0,
            elevation=15.0 if i % 2 == 0 else -15.0,
            radius=radius,
        )
        for i, a in enumerate(22.5 + 45.0 * np.arange(8))
    ]


def turntable_views(count=16, elevation=0.0, radius=ORBIT_RADIUS):
    """Evenly spaced snapshot poses for visual inspection."""
    azimuths = -180.0 + 360.0 * np.arange(count) / count
    return [CameraSample(azimuth=a, elevation=elevation, radius=radius) for a in azimuths]
