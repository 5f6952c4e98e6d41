import numpy as np
import pytest
import scipy.sparse as sp
import sympy

from hydroelastic.errors import ValidationError
from hydroelastic.fe import build_fespace
from hydroelastic.forms import (PHI, DampingZone, FrequencyMode, MonolithicSystem, PhysicalParams,
                                StabilizationParams, assemble_fluid_laplacian, assemble_joint_block, assemble_rhs,
                                bending_matrix, compute_alpha_f, facet_rigidity, interface_penalty_matrix)
from hydroelastic.mesh import BathymetryProfile, GeometryConfig, build_structured_mesh
from hydroelastic.scenarios import make_wave
from hydroelastic.timeloop import NewmarkParams, NewmarkState

import oracles
from conftest import make_spaces


def nullity(A, tol=1e-10):
    s = np.linalg.svd(A.toarray() if sp.issparse(A) else A, compute_uv=False)
    return int(np.sum(s < tol * s.max()))


# ----------------------------------------------------------------------------- stabilization weight

class TestAlphaF:
    """Free-surface stabilization weight in both modes."""

    def test_time_mode(self):
        mode = NewmarkParams(0.1)
        assert mode.delta_t == pytest.approx(20.0)
        assert compute_alpha_f(mode, 0.5) == pytest.approx(20 / 9.81)

    def test_frequency_mode(self):
        assert compute_alpha_f(FrequencyMode(1.0), 0.5) == pytest.approx(-1j / 9.81)

    @pytest.mark.parametrize("beta", [0.0, 1.0, -0.5, 1.5])
    def test_open_interval(self, beta):
        with pytest.raises(ValidationError):
            compute_alpha_f(NewmarkParams(0.1), beta)


# ----------------------------------------------------------------------------- fluid

class TestLaplacian:
    """Stiffness of the potential over the fluid domain."""

    def test_dirichlet_energy_of_x(self):
        m = build_structured_mesh(GeometryConfig(1.0, BathymetryProfile.constant(1.0)), 1, 1)
        s = build_fespace(m, "volume", 1)
        A = assemble_fluid_laplacian(s)
        x = s.interpolate(lambda x, z: x)
        assert 0.5 * x @ A @ x == pytest.approx(0.5, rel=1e-14)

    def test_constants_in_kernel(self, jointed_geometry):
        m = build_structured_mesh(jointed_geometry, 4, 1)
        A = assemble_fluid_laplacian(build_fespace(m, "volume", 3))
        assert np.abs(A @ np.ones(A.shape[0])).max() < 1e-12
        assert nullity(A) == 1

    def test_symmetric(self, jointed_geometry):
        m = build_structured_mesh(jointed_geometry, 4, 1)
        A = assemble_fluid_laplacian(build_fespace(m, "volume", 4))
        assert abs(A - A.T).max() < 1e-12


# ----------------------------------------------------------------------------- free surface and damping

class TestFreeSurface:
    """Kinematic and stabilized dynamic rows, with and without damping."""

    def test_mu1_ramp(self):
        z = DampingZone(2.5, (0.0, 12.5), (37.5, 50.0), 1.0)
        assert float(z.mu1(6.25)) == pytest.approx(2.5 * (1 - np.sin(np.pi / 4)))
        assert float(z.mu1(6.25)) == pytest.approx(0.7322, abs=1e-4)
        assert float(z.mu1(25.0)) == 0.0
        assert float(z.mu1(0.0)) == pytest.approx(2.5) and float(z.mu1(50.0)) == pytest.approx(2.5)
        np.testing.assert_allclose(z.mu2([3.0, 40.0]), z.mu1([3.0, 40.0]))

    def test_overlap_rejected(self):
        with pytest.raises(ValidationError):
            DampingZone(1.0, (0.0, 2.0), None, 1.0).validate((1.5, 3.0))

    def test_phi_phi_block_scaling(self):
        # two free-surface facets: (φ,w) surface block equals (1-β) δ_t²/g times the oracle mass
        geom = GeometryConfig(2.0, BathymetryProfile.constant(1.0))
        m, spaces = make_spaces(geom, 2, 1, 2)
        mode = NewmarkParams(0.05)
        sysm = MonolithicSystem(spaces, PhysicalParams(draft=0.0), StabilizationParams(0.5), mode)
        P = spaces.slice(PHI)
        surf = (sysm.matrix[P, P] - sysm.laplacian).toarray()
        mass = oracles.surface_pieces(spaces.phi, spaces.kappa, 3)["pp"]
        np.testing.assert_allclose(surf, 0.5 * mode.delta_t ** 2 / 9.81 * mass, rtol=1e-12, atol=1e-12)

    def test_damping_off_equals_zero_mu(self, jointed_geometry):
        m, spaces = make_spaces(jointed_geometry, 4, 1, 2)
        phys = PhysicalParams(draft=0.1, rigidity=(5.0, 7.0))
        mode = FrequencyMode(2.0)
        a = MonolithicSystem(spaces, phys, StabilizationParams(), mode).matrix.toarray()
        zone = DampingZone.from_geometry(jointed_geometry, 0.0, 1.0)
        b = MonolithicSystem(spaces, phys, StabilizationParams(), mode, damping=zone).matrix.toarray()
        np.testing.assert_array_equal(a, b)


# ----------------------------------------------------------------------------- beam

class TestBeam:
    """C/DG bending form, interface penalty and joint springs."""

    def test_symbolic_quadratic_element(self):
        xs, h, D = sympy.symbols("x h D", positive=True)
        nodes = [0, h / 2, h]
        basis = []
        for i, xi in enumerate(nodes):
            expr = sympy.Integer(1)
            for j, xj in enumerate(nodes):
                if j != i:
                    expr *= (xs - xj) / (xi - xj)
            basis.append(expr)
        K = sympy.Matrix(3, 3, lambda i, j: sympy.integrate(D * sympy.diff(basis[i], xs, 2) * sympy.diff(basis[j], xs, 2), (xs, 0, h)))
        hv, Dv = 0.7, 3.0
        Kn = np.array(K.subs({h: hv, D: Dv}), dtype=float)
        geom = GeometryConfig(hv, BathymetryProfile.constant(1.0), (0.0, hv))
        m = build_structured_mesh(geom, 1, 1)
        s = build_fespace(m, "structure", 2)
        Kp = bending_matrix(s, np.array([Dv])).toarray()
        order = np.argsort(s.dof_coords[:, 0])
        np.testing.assert_allclose(Kp[np.ix_(order, order)], Kn, rtol=1e-13)

    def test_penalty_coefficient(self):
        assert StabilizationParams().penalty_for(4) == 200.0
        assert StabilizationParams(penalty=7.0).penalty_for(4) == 7.0

    def test_linear_deflection_has_no_stiffness(self):
        geom = GeometryConfig(3.0, BathymetryProfile.constant(1.0), (0.0, 3.0))
        m = build_structured_mesh(geom, 3, 1)
        s = build_fespace(m, "structure", 3)
        D = np.full(s.nentities, 2.0)
        S = bending_matrix(s, D) + interface_penalty_matrix(s, m.structure_interfaces, D, 120.0)
        v = s.interpolate(lambda x: 1.0 + 0.3 * x)
        assert np.abs(S @ v).max() < 1e-13 * abs(S).max() * np.abs(v).max() * s.ndofs

    def test_bending_kernel_free_beam(self):
        geom = GeometryConfig(4.0, BathymetryProfile.constant(1.0), (0.0, 4.0))
        m = build_structured_mesh(geom, 4, 1)
        s = build_fespace(m, "structure", 2)
        D = np.ones(s.nentities)
        S = bending_matrix(s, D) + interface_penalty_matrix(s, m.structure_interfaces, D, 60.0)
        assert nullity(S) == 2

    def test_bending_block_symmetric(self, jointed_geometry):
        m, spaces = make_spaces(jointed_geometry, 4, 1, 2, 4)
        phys = PhysicalParams(draft=0.1, rigidity=(5.0, 7.0), joint_xi=(3.0,))
        sysm = MonolithicSystem(spaces, phys, StabilizationParams(), NewmarkParams(0.01))
        p = sysm.str_pieces
        S = p["bending"] + p["interface"] + p["joint"]
        assert abs(S - S.T).max() < 1e-10

    def test_penalized_block_is_coercive(self):
        geom = GeometryConfig(4.0, BathymetryProfile.constant(1.0), (0.0, 4.0))
        m = build_structured_mesh(geom, 4, 1, snap=True)
        for r in (2, 3, 4):
            s = build_fespace(m, "structure", r)
            D = np.ones(s.nentities)
            S = (bending_matrix(s, D) + interface_penalty_matrix(s, m.structure_interfaces, D, 10.0 * r * (r + 1))).toarray()
            ev = np.linalg.eigvalsh(0.5 * (S + S.T))
            assert ev.min() > -1e-9 * ev.max()

    def test_joint_stiffness_value(self):
        phys = PhysicalParams(rho_w=1000.0, draft=0.01, rigidity=(47100.0, 471.0), joint_xi=(625.0,))
        np.testing.assert_allclose(phys.joint_stiffness(1, 12.5), [2355.0])

    def test_hinge_block_is_zero(self, jointed_geometry):
        m = build_structured_mesh(jointed_geometry, 4, 1)
        s = build_fespace(m, "structure", 3)
        J = assemble_joint_block(s, m.joint_interfaces, 0.0)
        assert J.count_nonzero() == 0 or abs(J).max() == 0.0

    def test_joint_ignores_smooth_gradient(self, jointed_geometry):
        m = build_structured_mesh(jointed_geometry, 4, 1)
        s = build_fespace(m, "structure", 3)
        J = assemble_joint_block(s, m.joint_interfaces, 10.0)
        assert np.abs(J @ s.interpolate(lambda x: x ** 3)).max() < 1e-10
        assert np.abs(J @ s.interpolate(lambda x: np.abs(x - 2.0))).max() > 1.0

    def test_negative_joint_rejected(self, jointed_geometry):
        m = build_structured_mesh(jointed_geometry, 4, 1)
        with pytest.raises(ValidationError):
            assemble_joint_block(build_fespace(m, "structure", 2), m.joint_interfaces, -1.0)

    def test_segment_rigidity_per_facet(self, jointed_geometry):
        m = build_structured_mesh(jointed_geometry, 4, 1)
        s = build_fespace(m, "structure", 2)
        np.testing.assert_allclose(facet_rigidity(s, PhysicalParams(draft=0.1, rigidity=(5000.0, 7000.0))),
                                   [5.0, 7.0])


# ----------------------------------------------------------------------------- monolithic operator

class TestMonolithic:
    """Assembled operator and right-hand side."""

    def test_pattern_symmetric(self, jointed_geometry):
        m, spaces = make_spaces(jointed_geometry, 4, 2, 2, 3)
        wave = make_wave(0.01, 2.0, k=1.0)
        zone = DampingZone.from_geometry(jointed_geometry, 1.0, wave.wavenumber)
        sysm = MonolithicSystem(spaces, PhysicalParams(draft=0.1, rigidity=(5.0, 7.0)), StabilizationParams(),
                                FrequencyMode(wave.omega), wave, zone)
        P = (sysm.matrix != 0).astype(int)
        Q = ((sysm.K != 0) + (sysm.C != 0) + (sysm.M != 0)).astype(int)
        Q = ((Q + Q.T) > 0).astype(int)
        assert (P - P.multiply(Q)).count_nonzero() == 0
        assert abs(Q - Q.T).max() == 0

    def test_zero_wave_zero_rhs(self, jointed_geometry):
        m, spaces = make_spaces(jointed_geometry, 4, 1, 2)
        mode = NewmarkParams(0.1)
        sysm = MonolithicSystem(spaces, PhysicalParams(draft=0.1, rigidity=(1.0,)), StabilizationParams(), mode)
        assert not np.any(assemble_rhs(sysm, history=NewmarkState.zeros(spaces)))
        with pytest.raises(ValidationError):
            assemble_rhs(sysm)

    def test_history_weight(self):
        c = NewmarkParams(0.1).coefficients()
        assert -c.velocity[1] + 1 == pytest.approx(2.0)
        assert c.acceleration[1] == pytest.approx(-40.0)

    def test_inlet_profile_deep_water(self):
        wave = make_wave(0.01, 10.0, k=5.0)
        u = wave.inlet_flux_amplitude(0.0)
        assert abs(u) == pytest.approx(wave.omega * wave.amplitude, rel=1e-12)

    @pytest.mark.parametrize("mode", [NewmarkParams(0.02), FrequencyMode(1.7)])
    def test_matches_dense_oracle(self, jointed_geometry, mode):
        m, spaces = make_spaces(jointed_geometry, 4, 1, 2, 3)
        phys = PhysicalParams(draft=0.1, rigidity=(5000.0, 7000.0), joint_xi=(8.0,))
        stab = StabilizationParams()
        zone = DampingZone.from_geometry(jointed_geometry, 2.5, 1.3)
        sysm = MonolithicSystem(spaces, phys, stab, mode, damping=zone)
        A = oracles.operator(spaces, phys, stab.beta, stab.penalty_for(3), mode.s1, mode.s2, sysm.alpha, zone)
        assert oracles.relative_difference(sysm.matrix, A) < 1e-12
