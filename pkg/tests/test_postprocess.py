import pathlib
import tempfile

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydroelastic.errors import ValidationError
from hydroelastic.postprocess import (config_hash, convergence_slope, energy, envelope, export, l2_errors,
                                      read_csv, relative_l2, wave_decomposition, write_csv)
from hydroelastic.scenarios import build_scenario, run_scenario, setup_scenario
from hydroelastic.timeloop import NewmarkState, set_initial_conditions


# ----------------------------------------------------------------------------- error norms

class TestErrorNorms:
    """L2 errors against the closed-form wave."""

    def test_exact_injection_is_zero(self):
        s = setup_scenario(build_scenario("periodic_beam", k=1, r=2, nx=4, nz=2))
        poly = type("P", (), {"phi": staticmethod(lambda x, z, t, d=0: 0 * x + 1.5 * z ** 2),
                              "eta": staticmethod(lambda x, t, d=0: 0.2 + 0 * x)})
        st0 = set_initial_conditions(s.spaces, poly)
        e_phi, e_eta = l2_errors(st0, poly, 0.0)
        assert e_phi < 1e-14 and e_eta < 1e-15

    @pytest.mark.parametrize("r", [2, 3])
    def test_interpolation_error_rate(self, r):
        errs = []
        for nx in (8, 16, 32):
            s = setup_scenario(build_scenario("periodic_beam", k=1, r=r, nx=nx, nz=nx // 2))
            errs.append(l2_errors(set_initial_conditions(s.spaces, s.exact), s.exact, 0.0))
        errs = np.array(errs)
        h = 2 * np.pi / np.array([8, 16, 32])
        for j in range(2):
            assert convergence_slope(np.column_stack([h, errs[:, j]])) > r + 0.8


# ----------------------------------------------------------------------------- energy

class TestEnergy:
    """Energy parts of a Newmark state."""

    def test_zero_state(self):
        s = setup_scenario(build_scenario("finite_beam", k=1, r=2, nx=8, nz=2))
        e = energy(NewmarkState.zeros(s.spaces), s.system)
        assert e.E_total == 0.0 and e.E_interface == 0.0

    def test_kinetic_flow_quarter(self):
        cfg = build_scenario("periodic_beam", k=1, r=4, nx=16, nz=8)
        s = setup_scenario(cfg)
        e = energy(set_initial_conditions(s.spaces, s.exact), s.system)
        quarter = 0.25 * 9.81 * 1e-4 * 2 * np.pi
        assert e.E_kin_flow == pytest.approx(quarter, rel=1e-5)
        assert e.E_pot_flow == pytest.approx(quarter, rel=1e-5)
        assert e.E_total == pytest.approx(sum(v for k, v in e.as_dict().items() if k not in ("E_total", "E_interface")))


# ----------------------------------------------------------------------------- rates and signals

class TestRates:
    """Least-squares slopes and signal helpers."""

    def test_power_law(self):
        h = np.array([0.4, 0.2, 0.1, 0.05])
        assert convergence_slope(np.column_stack([h, 7 * h ** 3])) == pytest.approx(3.0)

    def test_flat(self):
        assert convergence_slope([(0.1, 2.0), (0.05, 2.0)]) == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("bad", [[(0.1, 1.0)], [(0.1, -1.0), (0.2, 1.0)], [(0.1, 1.0), (0.1, 2.0)]])
    def test_invalid(self, bad):
        with pytest.raises(ValidationError):
            convergence_slope(bad)

    def test_constant_envelope(self):
        t = np.linspace(0, 1, 11)
        np.testing.assert_allclose(envelope(t, np.full((11, 3), -0.3), (0.0, 1.0)), 0.3)

    def test_sinusoid_envelope(self):
        A = np.array([0.5, 1.0, 2.0])
        t = np.linspace(0, 3, 3001)
        g = np.cos(2 * np.pi * t)[:, None] * A[None, :]
        np.testing.assert_allclose(envelope(t, g, (1.0, 3.0)), A, rtol=1e-6)
        # integer-period shift of the window does not change a steady envelope
        np.testing.assert_allclose(envelope(t, g, (0.0, 2.0)), envelope(t, g, (1.0, 3.0)), rtol=1e-2)
        with pytest.raises(ValidationError):
            envelope(t, g, (5.0, 6.0))

    def test_wave_decomposition(self):
        x = np.linspace(0, 5, 40)
        k = 1.7
        A, B = wave_decomposition(x, (0.3 - 0.1j) * np.exp(1j * k * x) + 0.05j * np.exp(-1j * k * x), k)
        assert A == pytest.approx(0.3 - 0.1j) and B == pytest.approx(0.05j)

    def test_relative_l2(self):
        assert relative_l2([1.0, 1.0], [1.0, 2.0]) == pytest.approx(1 / np.sqrt(5))


# ----------------------------------------------------------------------------- files

class TestExport:
    """CSV and legacy VTK writers."""

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=0, max_size=20))
    def test_csv_round_trip_bitwise(self, values):
        with tempfile.TemporaryDirectory() as d:
            p = write_csv(pathlib.Path(d) / "a.csv", {"t": values, "v": values[::-1]}, {"t": "s"})
            back = read_csv(p)
        np.testing.assert_array_equal(back["t"], np.asarray(values, dtype=float))
        np.testing.assert_array_equal(back["v"], np.asarray(values[::-1], dtype=float))

    def test_header_only(self, tmp_path):
        p = write_csv(tmp_path / "e.csv", {"t": [], "eta": []}, {"t": "s", "eta": "m"})
        assert p.read_text().strip() == "t [s],eta [m]"
        with pytest.raises(ValidationError):
            write_csv(tmp_path / "x.csv", {"a": [1.0], "b": [1.0, 2.0]})

    def test_frequency_vtk_triplets(self, tmp_path):
        res = run_scenario(build_scenario("khabakhpasheva", r=2, nx=40, nz=2))
        files = export(res, "vtk_legacy", tmp_path)
        text = files[0].read_text()
        for name in ("phi_re", "phi_im", "phi_abs", "eta_re", "eta_im", "eta_abs"):
            assert f"SCALARS {name} double 1" in text
        csvs = export(res, "csv", tmp_path)
        data = read_csv([p for p in csvs if "_eta_" in p.name][0])
        np.testing.assert_allclose(data["abs_rel"], data["abs"] / 0.01)

    def test_time_vtk_and_energy_csv(self, tmp_path):
        res = run_scenario(build_scenario("periodic_beam", k=1, r=2, nx=4, nz=2, periods=0.2))
        names = [p.name for p in export(res, "vtk", tmp_path)] + [p.name for p in export(res, "csv", tmp_path)]
        assert any(n.endswith("energy_all.csv") for n in names)
        assert any(n.startswith("periodic_beam_field_") for n in names)
        with pytest.raises(ValidationError):
            export(res, "hdf5", tmp_path)

    def test_config_hash(self):
        a = build_scenario("liu").to_dict()
        assert config_hash(a) == config_hash(build_scenario("liu").to_dict())
        assert config_hash(a) != config_hash(build_scenario("liu", omega=0.8).to_dict())
