"""A two-segment floating beam with a rotational joint, in the frequency domain.

A hinge (no spring) lets the downstream segment move freely, so more of the
incident wave passes under the beam than for a stiff joint.
"""
import numpy as np

from hydroelastic.postprocess import surface_elevation_at, wave_decomposition
from hydroelastic.scenarios import build_scenario, run_scenario, setup_scenario

for xi in (0.0, 625.0):
    cfg = build_scenario("khabakhpasheva", xi=xi)
    setup = setup_scenario(cfg)
    res = run_scenario(cfg)
    k, a = cfg.wave.wavenumber, cfg.wave.amplitude
    xu, xd = np.linspace(12.6, 18.6, 60), np.linspace(31.4, 37.4, 60)
    _, refl = wave_decomposition(xu, surface_elevation_at(setup.spaces, res.solution, xu), k)
    trans, _ = wave_decomposition(xd, surface_elevation_at(setup.spaces, res.solution, xd), k)
    deflection = np.abs(res.gauges[0]) / a
    print(f"xi = {xi:5.0f}: reflected {abs(refl) / a:.3f}, transmitted {abs(trans) / a:.3f}, "
          f"max |eta|/eta0 on the beam {deflection.max():.3f}")

# The outlet sponge should have removed almost everything by the right edge.
edge = abs(surface_elevation_at(setup.spaces, res.solution, [cfg.geometry.length])[0]) / cfg.wave.amplitude
print(f"|eta|/eta0 at the outlet edge: {edge:.1e}")
