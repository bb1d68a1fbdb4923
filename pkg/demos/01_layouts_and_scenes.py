"""Deployment geometries and random scenes.

Builds the two array structures over a 30 m x 30 m service region:
all subarrays on one waveguide along the center line, or one waveguide
per subarray anchored on the region boundary. Writes PA coordinates and
a sampled scene to CSV for external plotting.
"""

from pathlib import Path

import numpy as np

from passloc.channel import RadioConfig
from passloc.geometry import (
    ServiceRegion,
    build_mw_layout,
    build_sw_layout,
    layout_points_csv,
    sample_scene,
    scene_points_csv,
)

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

region = ServiceRegion(30.0, 30.0, 2.0)
radio = RadioConfig(28e9)
d = radio.wavelength / 2.0
print(f"carrier {radio.frequency / 1e9:.0f} GHz, PA spacing {d * 1e3:.3f} mm")

sw = build_sw_layout(region, 3, 32, d)
mw = build_mw_layout(region, 4, 32, d)

print("\nsingle-waveguide anchors (shared center line):")
for sub in sw.subarrays:
    print(f"  {sub.reference_position}")
print("multi-waveguide anchors (boundary corners, right column shifted in):")
for sub in mw.subarrays:
    print(f"  {sub.reference_position}")

# one user plus two scatterers, heights pinned to the floor for planar work
scene = sample_scene(region, l=2, rng_seed=5)
print(f"\nscene: user {scene.user[:2]}, {scene.l} scatterers")
for i, sc in enumerate(scene.scatterers):
    print(f"  scatterer {i}: {sc[:2]}")

layout_points_csv(mw, out / "mw_layout.csv")
scene_points_csv(scene, out / "scene.csv")
print(f"\nwrote {out / 'mw_layout.csv'} and {out / 'scene.csv'}")
