import threading

import numpy as np
import pytest

from hydroelastic.errors import ValidationError
from hydroelastic.scenarios import build_scenario, run_scenario
from hydroelastic.studies import (energy_history, energy_study, mixed_order_convergence, parameter_grid,
                                  spatial_convergence, sweep, temporal_convergence)


# ----------------------------------------------------------------------------- convergence drivers

class TestConvergenceDrivers:
    """Small versions of the refinement studies."""

    def test_spatial_rows_and_slopes(self):
        t = spatial_convergence(k=1.0, orders=(2,), nxs=(4, 8, 16), dt=1e-5, t_final=2e-5)
        assert [r["nx"] for r in t.rows] == [4, 8, 16]
        assert t.slopes["e_eta[r=2]"] > 2.5
        assert max(r["residual"] for r in t.rows) < 1e-10

    def test_mixed_orders_keep_potential_order(self):
        t = mixed_order_convergence(k=1.0, eta_orders=(2, 3), nxs=(4, 8), dt=1e-5, t_final=2e-5)
        assert {(r["r"], r["r_eta"]) for r in t.rows} == {(2, 2), (2, 3)}
        assert set(t.slopes) == {"e_eta[r_eta=2]", "e_eta[r_eta=3]"}

    def test_temporal_rejects_nondividing_step(self):
        with pytest.raises(ValidationError):
            temporal_convergence(r=2, nx=4, nz=2, dts=[0.3], t_final=1.0)

    def test_temporal_rows(self):
        t = temporal_convergence(r=2, nx=4, nz=2, dts=[0.1, 0.05], t_final=0.2)
        assert [r["nsteps"] for r in t.rows] == [2, 4]


# ----------------------------------------------------------------------------- energy

class TestEnergyDrivers:
    """Energy histories and the two-case study."""

    def test_history_starts_near_closed_form(self):
        h = energy_history(k=1.0, r=3, nx=16, dt=0.01, periods=0.2)
        assert h.times[0] == 0.0 and h.e_E.shape == h.times.shape
        assert h.e_E[0] < 1e-3
        slope, se = h.trend()
        assert np.isfinite(slope) and se >= 0

    def test_study_tables(self):
        c1, c2, hists = energy_study(k=1.0, r=2, nxs=(4, 8), dt=0.05, periods=0.2, case2_nx=4,
                                     case2_dts=(0.1, 0.05), case2_periods=0.2)
        assert [r["nx"] for r in c1.rows] == [4, 8] and len(hists) == 2
        assert set(c2.slopes) == {"max_e_E", "max_e_E_discrete"}


# ----------------------------------------------------------------------------- sweeps

class TestSweep:
    """Parameter grids and concurrent execution."""

    def test_grid_order(self):
        assert parameter_grid({"a": [1, 2], "b": ["x"]}) == [{"a": 1, "b": "x"}, {"a": 2, "b": "x"}]
        assert parameter_grid({}) == [{}]

    def test_threads_match_serial(self):
        base = build_scenario("khabakhpasheva", r=2, nx=40, nz=2)
        grid = {"wave.amplitude": [0.01, 0.02]}
        serial = sweep(base, grid, threads=1)
        threaded = sweep(base, grid, threads=2)
        for (p1, r1), (p2, r2) in zip(serial, threaded):
            assert p1 == p2
            np.testing.assert_array_equal(r1.solution, r2.solution)
        np.testing.assert_allclose(serial[1][1].solution, 2 * serial[0][1].solution, rtol=1e-12)

    def test_points_run_on_workers(self):
        seen = set()

        def runner(cfg):
            seen.add(threading.get_ident())
            return run_scenario(cfg)
        base = build_scenario("periodic_beam", k=1, r=2, nx=4, nz=2, dt=0.1, t_final=0.2)
        out = sweep(base, {"discretization.nx": [4, 6, 8]}, threads=3, runner=runner)
        assert [p["discretization.nx"] for p, _ in out] == [4, 6, 8]
        assert threading.get_ident() not in seen
