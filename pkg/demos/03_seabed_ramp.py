"""A long stiff platform over a seabed that shoals from 60 m to 30 m beneath it.

With a flat "ramp" the variable-depth mesh must reproduce the constant-depth
run exactly; with a real slope the response changes with the wave frequency.
"""
import dataclasses

import numpy as np

from hydroelastic.mesh import BathymetryProfile
from hydroelastic.scenarios import build_scenario, run_scenario

flat = run_scenario(build_scenario("liu", omega=0.4, depth_right=60.0))
cfg = build_scenario("liu", omega=0.4, depth_right=60.0)
cfg = dataclasses.replace(cfg, geometry=dataclasses.replace(cfg.geometry, depth=BathymetryProfile.constant(60.0)))
const = run_scenario(cfg)
print(f"flat ramp against constant depth: {np.linalg.norm(flat.gauges - const.gauges) / np.linalg.norm(const.gauges):.1e}")

for omega in (0.4, 0.8):
    res = run_scenario(build_scenario("liu", omega=omega, depth_right=30.0))
    amp = np.abs(res.gauges[0]) / res.config["wave"]["amplitude"]
    print(f"omega = {omega}: |eta|/eta0 on the platform from {amp.min():.3f} to {amp.max():.3f}, "
          f"solver residual {res.residuals['max_relative_residual']:.1e}")
