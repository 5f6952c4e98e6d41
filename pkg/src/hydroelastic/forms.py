"""Assembly of the monolithic fluid/free-surface/beam operator.

The coupled system is first written in semi-discrete form

    K x + C x_t + M x_tt = f(t),        x = [φ; κ; η],

with the stabilization parameter α_f treated as a fixed scalar. A solution
mode then fixes the two scalars ``s1`` and ``s2`` that replace the time
derivatives of the unknown:

* frequency domain, ``x(t) = Re(x̄ e^{-iωt})``: ``s1 = -iω``, ``s2 = -ω²``;
* Newmark step: ``s1 = δ_t = γ/(βΔt)``, ``s2 = δ_tt = 1/(βΔt²)``,
  the remaining history terms going to the right-hand side.

The operator is ``K + s1·C + s2·M``. Rows are test functions
(``w`` for φ, ``v`` for κ, ``u`` for η) and columns trial functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import TopologyError, ValidationError
from .fe import (FESpace, cell_jacobians, gauss_quadrature, map_points,
                 trace_injection)
from .mesh import Mesh2D

PHI, KAPPA, ETA = "phi", "kappa", "eta"
FIELDS = (PHI, KAPPA, ETA)


# --------------------------------------------------------------------------- parameters

@dataclass(frozen=True)
class PhysicalParams:
    """Material and gravity constants.

    Rigidities are given per structure segment (segments are separated by the
    joints, left to right). ``draft`` overrides ``rho_b*h_b/rho_w`` when the
    submerged depth is known directly.
    """

    g: float = 9.81
    rho_w: float = 1000.0
    rho_b: float | None = None
    h_b: float | None = None
    draft: float | None = None
    rigidity: tuple[float, ...] = (0.0,)
    joint_xi: tuple[float, ...] = ()
    joint_reference_segment: int = 0

    def validate(self, njoints: int = 0) -> None:
        if not (self.g > 0 and self.rho_w > 0):
            raise ValidationError("g and rho_w must be positive")
        if self.draft is None:
            if self.rho_b is None or self.h_b is None:
                raise ValidationError("give either the draft or both rho_b and h_b")
            if not (self.rho_b > 0 and self.h_b > 0):
                raise ValidationError("rho_b and h_b must be positive")
        elif self.draft < 0:
            raise ValidationError("the draft must be non-negative")
        if any(D < 0 for D in self.rigidity):
            raise ValidationError("rigidities must be non-negative")
        if len(self.rigidity) not in (1, njoints + 1):
            raise ValidationError(f"expected 1 or {njoints + 1} segment rigidities, got {len(self.rigidity)}")
        if len(self.joint_xi) not in (0, 1, njoints) or (njoints == 0 and self.joint_xi):
            raise ValidationError("joint_xi must list one value per joint")
        if any(x < 0 for x in self.joint_xi):
            raise ValidationError("joint stiffness must be non-negative")
        if not 0 <= self.joint_reference_segment < max(1, len(self.rigidity)):
            raise ValidationError("joint_reference_segment out of range")

    @property
    def d0(self) -> float:
        if self.draft is not None:
            return float(self.draft)
        return self.rho_b * self.h_b / self.rho_w

    def segment_rigidity(self, nsegments: int) -> np.ndarray:
        """Density-normalized rigidity ``D/ρ_w`` of each segment."""
        D = np.asarray(self.rigidity, dtype=float)
        if len(D) == 1:
            D = np.full(nsegments, D[0])
        return D / self.rho_w

    def joint_stiffness(self, njoints: int, structure_length: float) -> np.ndarray:
        """Rotational spring constants ``k_ρ = ξ·D_ρ/L`` of the joints."""
        if njoints == 0:
            return np.zeros(0)
        xi = np.asarray(self.joint_xi if self.joint_xi else (0.0,), dtype=float)
        if len(xi) == 1:
            xi = np.full(njoints, xi[0])
        Dref = self.segment_rigidity(njoints + 1)[self.joint_reference_segment]
        return xi * Dref / structure_length

    def to_dict(self) -> dict:
        return {"g": self.g, "rho_w": self.rho_w, "rho_b": self.rho_b, "h_b": self.h_b, "draft": self.draft,
                "rigidity": list(self.rigidity), "joint_xi": list(self.joint_xi),
                "joint_reference_segment": self.joint_reference_segment}

    @classmethod
    def from_dict(cls, d: dict) -> "PhysicalParams":
        opt = lambda k: None if d.get(k) is None else float(d[k])  # noqa: E731
        rig = d.get("rigidity", (0.0,))
        rig = (float(rig),) if np.isscalar(rig) else tuple(float(v) for v in rig)
        xi = d.get("joint_xi", ())
        xi = (float(xi),) if np.isscalar(xi) else tuple(float(v) for v in xi)
        return cls(g=float(d.get("g", 9.81)), rho_w=float(d.get("rho_w", 1000.0)), rho_b=opt("rho_b"),
                   h_b=opt("h_b"), draft=opt("draft"), rigidity=rig, joint_xi=xi,
                   joint_reference_segment=int(d.get("joint_reference_segment", 0)))


@dataclass(frozen=True)
class StabilizationParams:
    """Free-surface weighting β and interior penalty γ (``None`` means ``10 r (r+1)``)."""

    beta: float = 0.5
    penalty: float | None = None

    def validate(self) -> None:
        if not 0 < self.beta < 1:
            raise ValidationError(f"beta must lie in (0, 1), got {self.beta}")
        if self.penalty is not None and not self.penalty > 0:
            raise ValidationError("the penalty must be positive")

    def penalty_for(self, r: int) -> float:
        return 10.0 * r * (r + 1) if self.penalty is None else float(self.penalty)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "penalty": self.penalty}


def _cosh_ratio(k, z_bottom, depth):
    """``cosh(k z̃)/sinh(k H)`` without overflow for large ``kH``."""
    zt = np.asarray(z_bottom, dtype=float)
    return np.exp(k * (zt - depth)) * (1 + np.exp(-2 * k * zt)) / (1 - np.exp(-2 * k * depth))


def _sinh_ratio(k, z_bottom, depth):
    zt = np.asarray(z_bottom, dtype=float)
    return np.exp(k * (zt - depth)) * (1 - np.exp(-2 * k * zt)) / (1 - np.exp(-2 * k * depth))


@dataclass(frozen=True)
class WaveInput:
    """Linear progressive wave ``η = η0 cos(k x - ω t)`` on depth ``depth``.

    Complex amplitudes follow ``q(t) = Re(q̄ e^{-iωt})``.
    """

    amplitude: float
    wavenumber: float
    omega: float
    depth: float
    g: float = 9.81

    def validate(self, rtol: float = 1e-10) -> None:
        if not (self.wavenumber > 0 and self.omega > 0 and self.depth > 0):
            raise ValidationError("wavenumber, frequency and depth must be positive")
        w2 = self.g * self.wavenumber * np.tanh(self.wavenumber * self.depth)
        if abs(self.omega ** 2 - w2) > rtol * w2:
            raise ValidationError(f"ω={self.omega} violates the dispersion relation (expected {np.sqrt(w2)})")

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    def elevation_amplitude(self, x):
        return self.amplitude * np.exp(1j * self.wavenumber * np.asarray(x, dtype=float))

    def potential_amplitude(self, x, z):
        """``φ̄`` at ``(x, z)`` with ``z ∈ [-H, 0]``."""
        k = self.wavenumber
        c = _cosh_ratio(k, np.asarray(z) + self.depth, self.depth)
        return -1j * self.amplitude * self.omega / k * c * np.exp(1j * k * np.asarray(x, dtype=float))

    def vertical_velocity_amplitude(self, x, z=0.0):
        k = self.wavenumber
        s = _sinh_ratio(k, np.asarray(z) + self.depth, self.depth)
        return -1j * self.amplitude * self.omega * s * np.exp(1j * k * np.asarray(x, dtype=float))

    def inlet_flux_amplitude(self, z, x_in: float = 0.0):
        """Outward normal derivative ``n·∇φ̄`` on a left boundary (``n = -x``)."""
        k = self.wavenumber
        c = _cosh_ratio(k, np.asarray(z) + self.depth, self.depth)
        return -self.omega * self.amplitude * c * np.exp(1j * k * x_in)

    def to_dict(self) -> dict:
        return {"amplitude": self.amplitude, "wavenumber": self.wavenumber, "omega": self.omega,
                "depth": self.depth, "g": self.g}

    @classmethod
    def from_dict(cls, d: dict) -> "WaveInput":
        return cls(float(d["amplitude"]), float(d["wavenumber"]), float(d["omega"]), float(d["depth"]),
                   float(d.get("g", 9.81)))


@dataclass(frozen=True)
class DampingZone:
    """Absorbing layers at the ends of the free surface.

    ``μ1`` decays from ``mu0`` at the domain end to zero at the inner edge of
    each zone; ``μ2 = k μ1``. The inlet zone relaxes towards the incident wave,
    the outlet zone towards still water.
    """

    mu0: float
    inlet: tuple[float, float] | None
    outlet: tuple[float, float] | None
    wavenumber: float

    @classmethod
    def from_geometry(cls, geom, mu0: float, wavenumber: float) -> "DampingZone":
        inlet = (0.0, geom.damping_inlet) if geom.damping_inlet > 0 else None
        outlet = (geom.length - geom.damping_outlet, geom.length) if geom.damping_outlet > 0 else None
        return cls(float(mu0), inlet, outlet, float(wavenumber))

    def validate(self, structure=None) -> None:
        if self.mu0 < 0:
            raise ValidationError("mu0 must be non-negative")
        if structure is not None:
            xl, xr = structure
            for zone in (self.inlet, self.outlet):
                if zone is not None and zone[0] < xr and zone[1] > xl:
                    raise ValidationError(f"damping zone {zone} overlaps the structure span {structure}")

    def mu1(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if self.inlet is not None:
            a, b = self.inlet
            m = (x >= a) & (x <= b)
            out[m] = self.mu0 * (1.0 - np.sin(0.5 * np.pi * (x[m] - a) / (b - a)))
        if self.outlet is not None:
            a, b = self.outlet
            m = (x >= a) & (x <= b)
            out[m] = self.mu0 * (1.0 - np.cos(0.5 * np.pi * (x[m] - a) / (b - a)))
        return out

    def mu2(self, x) -> np.ndarray:
        return self.wavenumber * self.mu1(x)

    def in_inlet(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.inlet is None:
            return np.zeros(x.shape, dtype=bool)
        return (x >= self.inlet[0]) & (x <= self.inlet[1])


@dataclass(frozen=True)
class FrequencyMode:
    """Time-harmonic solution ``x(t) = Re(x̄ e^{-iωt})``."""

    omega: float
    kind: str = field(default="frequency", init=False)

    @property
    def s1(self) -> complex:
        return -1j * self.omega

    @property
    def s2(self) -> float:
        return -self.omega ** 2

    @property
    def dtype(self):
        return np.complex128


def compute_alpha_f(mode, beta: float, g: float = 9.81):
    """Stabilization weight of the dynamic free-surface condition.

    Newmark mode: ``(1-β) δ_t/(β g)``; frequency mode: ``(-iω/g)(1-β)/β``.
    """
    if not 0 < beta < 1:
        raise ValidationError(f"beta must lie in (0, 1), got {beta}")
    if mode.kind == "frequency":
        if not mode.omega > 0:
            raise ValidationError("ω must be positive")
        return (-1j * mode.omega / g) * (1 - beta) / beta
    if not mode.s1 > 0:
        raise ValidationError("δ_t must be positive")
    return (1 - beta) * mode.s1 / (beta * g)


# --------------------------------------------------------------------------- block containers

@dataclass
class BlockSet:
    """Semi-discrete contributions keyed by ``(row_field, col_field)``."""

    K: dict = field(default_factory=dict)
    C: dict = field(default_factory=dict)
    M: dict = field(default_factory=dict)

    def add(self, which: str, key, mat) -> None:
        d = getattr(self, which)
        d[key] = mat if key not in d else d[key] + mat

    def merge(self, other: "BlockSet") -> "BlockSet":
        for which in ("K", "C", "M"):
            for key, mat in getattr(other, which).items():
                self.add(which, key, mat)
        return self

    def operator_blocks(self, mode) -> dict:
        """Blocks of ``K + s1 C + s2 M``."""
        out: dict = {}
        for which, s in (("K", 1.0), ("C", mode.s1), ("M", mode.s2)):
            for key, mat in getattr(self, which).items():
                term = mat if s == 1.0 else s * mat
                out[key] = term if key not in out else out[key] + term
        return out


@dataclass(frozen=True)
class FieldSpaces:
    phi: FESpace
    kappa: FESpace
    eta: FESpace

    def __getitem__(self, name: str) -> FESpace:
        return getattr(self, name)

    @property
    def mesh(self) -> Mesh2D:
        return self.phi.mesh

    @property
    def sizes(self) -> dict:
        return {PHI: self.phi.ndofs, KAPPA: self.kappa.ndofs, ETA: self.eta.ndofs}

    @property
    def offsets(self) -> dict:
        n = self.sizes
        return {PHI: 0, KAPPA: n[PHI], ETA: n[PHI] + n[KAPPA]}

    @property
    def ndofs(self) -> int:
        return sum(self.sizes.values())

    def slice(self, name: str) -> slice:
        o = self.offsets[name]
        return slice(o, o + self.sizes[name])


def global_matrix(blocks: dict, spaces: FieldSpaces, dtype=float) -> sp.csr_matrix:
    """Stack field blocks into the monolithic matrix over ``[φ; κ; η]``."""
    n = spaces.sizes
    rows = []
    for a in FIELDS:
        row = []
        for b in FIELDS:
            m = blocks.get((a, b))
            row.append(m if m is not None else sp.csr_matrix((n[a], n[b]), dtype=dtype))
        rows.append(row)
    return sp.bmat(rows, format="csr", dtype=dtype)


def _csr(rows, cols, vals, shape) -> sp.csr_matrix:
    rows = np.broadcast_to(rows, vals.shape).ravel()
    cols = np.broadcast_to(cols, vals.shape).ravel()
    return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=shape)


# --------------------------------------------------------------------------- trace evaluation

@dataclass
class _FacetEval:
    values: np.ndarray      # (nf, nq, nb)
    dofs: np.ndarray        # (nf, nb)
    weights: np.ndarray     # (nf, nq) quadrature weight times facet Jacobian
    x: np.ndarray           # (nf, nq)
    dz: np.ndarray | None = None  # (nf, nq, nb) vertical derivative (volume space only)


def _facet_eval(space: FESpace, columns: np.ndarray, npts: int, with_dz: bool = False) -> _FacetEval:
    mesh = space.mesh
    quad = gauss_quadrature(1, npts)
    xi = quad.points[:, 0]
    x0 = mesh.x_lines[columns]
    h = mesh.x_lines[columns + 1] - x0
    x = x0[:, None] + 0.5 * (xi[None, :] + 1.0) * h[:, None]
    w = quad.weights[None, :] * 0.5 * h[:, None]
    if space.is_trace:
        pos = {c: f for f, c in enumerate(space.columns)}
        idx = np.array([pos[c] for c in columns], dtype=int)
        N = space.element.values(xi[:, None])
        vals = np.broadcast_to(N, (len(columns),) + N.shape)
        return _FacetEval(vals, space.cell_dofs[idx], w, x)
    cells = mesh.top_cells(columns)
    pts = np.stack([xi, np.ones_like(xi)], axis=1)
    ref = space.element
    N = ref.values(pts)
    vals = np.broadcast_to(N, (len(columns),) + N.shape)
    dz = None
    if with_dz:
        _, _, inv = cell_jacobians(mesh, pts, cells)
        dN = ref.gradients(pts)
        dz = np.einsum("cqj,qbj->cqb", inv[..., :, 1], dN)
    return _FacetEval(vals, space.cell_dofs[cells], w, x, dz)


def _surface_matrix(row: _FacetEval, col: _FacetEval, shape, coef=None, col_values=None) -> sp.csr_matrix:
    w = row.weights if coef is None else row.weights * coef
    cv = col.values if col_values is None else col_values
    vals = np.einsum("fq,fqa,fqb->fab", w, row.values, cv)
    return _csr(row.dofs[:, :, None], col.dofs[:, None, :], vals, shape)


def _surface_load(row: _FacetEval, data, size: int) -> np.ndarray:
    vals = np.einsum("fq,fqa->fa", row.weights * data, row.values)
    out = np.zeros(size, dtype=vals.dtype)
    np.add.at(out, row.dofs.ravel(), vals.ravel())
    return out


def _surface_npts(*spaces) -> int:
    return max(s.order for s in spaces) + 1


# --------------------------------------------------------------------------- fluid

def assemble_fluid_laplacian(space_phi: FESpace, mesh: Mesh2D | None = None, quadrature=None) -> sp.csr_matrix:
    """Stiffness matrix of ``(∇φ, ∇w)`` over the fluid domain."""
    mesh = space_phi.mesh if mesh is None else mesh
    quad = gauss_quadrature(2, space_phi.order + 1) if quadrature is None else quadrature
    ref = space_phi.element
    dN = ref.gradients(quad.points)
    _, det, inv = cell_jacobians(mesh, quad.points)
    if np.any(det <= 0):
        raise ValidationError("non-positive cell Jacobian")
    G = np.einsum("cqji,qbj->cqbi", inv, dN)
    Ke = np.einsum("cq,cqai,cqbi->cab", det * quad.weights[None, :], G, G)
    cd = space_phi.cell_dofs
    return _csr(cd[:, :, None], cd[:, None, :], Ke, (space_phi.ndofs, space_phi.ndofs))


def free_surface_pieces(space_phi: FESpace, space_kappa: FESpace, damping: DampingZone | None = None) -> dict:
    """Mass-type integrals on the free surface, before any mode scaling."""
    np_, nk = space_phi.ndofs, space_kappa.ndofs
    cols = space_kappa.columns
    out = {}
    if len(cols) == 0:
        return out
    trace_injection(space_phi, space_kappa)
    q = _surface_npts(space_phi, space_kappa)
    ev_p = _facet_eval(space_phi, cols, q, with_dz=damping is not None)
    ev_k = _facet_eval(space_kappa, cols, q)
    out["phi_w"] = _surface_matrix(ev_p, ev_p, (np_, np_))
    out["kappa_w"] = _surface_matrix(ev_p, ev_k, (np_, nk))
    out["phi_v"] = _surface_matrix(ev_k, ev_p, (nk, np_))
    out["kappa_v"] = _surface_matrix(ev_k, ev_k, (nk, nk))
    if damping is not None:
        mu1 = damping.mu1(ev_p.x)
        mu2 = damping.mu2(ev_p.x)
        out["damp_kappa_w"] = _surface_matrix(ev_p, ev_k, (np_, nk), coef=mu2)
        out["damp_dz_w"] = _surface_matrix(ev_p, ev_p, (np_, np_), coef=mu1, col_values=ev_p.dz)
        out["damp_dz_v"] = _surface_matrix(ev_k, ev_p, (nk, np_), coef=mu1, col_values=ev_p.dz)
    return out


def assemble_free_surface_block(space_phi: FESpace, space_kappa: FESpace, mode, stab: StabilizationParams,
                                damping: DampingZone | None = None, g: float = 9.81) -> BlockSet:
    """Kinematic and stabilized dynamic conditions on the free surface.

    Kinematic row (test ``w``): ``-(κ_t, w) - (μ2 κ, w)``.
    Dynamic row, weighted by ``β`` and tested with ``α_f w + v``:
    ``φ_t + g κ + μ1 ∂_z φ``.
    """
    stab.validate()
    alpha = compute_alpha_f(mode, stab.beta, g)
    beta = stab.beta
    p = free_surface_pieces(space_phi, space_kappa, damping)
    bs = BlockSet()
    if not p:
        return bs
    bs.add("K", (PHI, KAPPA), beta * g * alpha * p["kappa_w"])
    bs.add("K", (KAPPA, KAPPA), beta * g * p["kappa_v"])
    bs.add("C", (PHI, KAPPA), -p["kappa_w"])
    bs.add("C", (PHI, PHI), beta * alpha * p["phi_w"])
    bs.add("C", (KAPPA, PHI), beta * p["phi_v"])
    if damping is not None:
        bs.add("K", (PHI, KAPPA), -p["damp_kappa_w"])
        bs.add("K", (PHI, PHI), beta * alpha * p["damp_dz_w"])
        bs.add("K", (KAPPA, PHI), beta * p["damp_dz_v"])
    return bs


# --------------------------------------------------------------------------- structure

def facet_rigidity(space_eta: FESpace, params: PhysicalParams) -> np.ndarray:
    """Density-normalized rigidity on each structure facet (segments split at joints)."""
    joints = np.asarray(space_eta.mesh.geometry.joints, dtype=float)
    centers = space_eta.facet_bounds.mean(axis=1)
    seg = np.searchsorted(joints, centers)
    return params.segment_rigidity(len(joints) + 1)[seg]


def _interface_vectors(space_eta: FESpace, interfaces, D_facet):
    """Per-interface gradient-jump vector, moment-average vector and local dofs."""
    ref = space_eta.element
    pos = {c: f for f, c in enumerate(space_eta.columns)}
    try:
        fl = np.array([pos[i.left] for i in interfaces], dtype=int)
        fr = np.array([pos[i.right] for i in interfaces], dtype=int)
    except KeyError as exc:
        raise TopologyError(f"interface facet {exc} is not a structure facet") from None
    hl = space_eta.facet_lengths[fl][:, None]
    hr = space_eta.facet_lengths[fr][:, None]
    d1_end, d1_start = ref.gradients([1.0])[0, :, 0], ref.gradients([-1.0])[0, :, 0]
    d2_end, d2_start = ref.second_derivatives([1.0])[0], ref.second_derivatives([-1.0])[0]
    jump = np.concatenate([d1_end[None, :] * 2 / hl, -d1_start[None, :] * 2 / hr], axis=1)
    avg = 0.5 * np.concatenate([D_facet[fl][:, None] * d2_end[None, :] * 4 / hl ** 2,
                                D_facet[fr][:, None] * d2_start[None, :] * 4 / hr ** 2], axis=1)
    dofs = np.concatenate([space_eta.cell_dofs[fl], space_eta.cell_dofs[fr]], axis=1)
    h = np.array([i.h for i in interfaces])
    Dmean = 0.5 * (D_facet[fl] + D_facet[fr])
    return jump, avg, dofs, h, Dmean


def bending_matrix(space_eta: FESpace, D_facet) -> sp.csr_matrix:
    """Element-wise ``(D_ρ η'', u'')`` over the structure facets."""
    n = space_eta.ndofs
    if space_eta.nentities == 0:
        return sp.csr_matrix((n, n))
    q = gauss_quadrature(1, space_eta.order + 1)
    h = space_eta.facet_lengths
    d2 = space_eta.element.second_derivatives(q.points[:, 0])
    d2 = d2[None, :, :] * (4.0 / h ** 2)[:, None, None]
    w = q.weights[None, :] * 0.5 * h[:, None] * np.asarray(D_facet)[:, None]
    Ke = np.einsum("fq,fqa,fqb->fab", w, d2, d2)
    cd = space_eta.cell_dofs
    return _csr(cd[:, :, None], cd[:, None, :], Ke, (n, n))


def interface_penalty_matrix(space_eta: FESpace, interfaces, D_facet, gamma: float) -> sp.csr_matrix:
    """Consistency, symmetry and penalty terms on the interior structure interfaces."""
    n = space_eta.ndofs
    if len(interfaces) == 0:
        return sp.csr_matrix((n, n))
    jump, avg, dofs, h, Dm = _interface_vectors(space_eta, interfaces, D_facet)
    Ke = (-np.einsum("pa,pb->pab", jump, avg) - np.einsum("pa,pb->pab", avg, jump)
          + (gamma * Dm / h)[:, None, None] * np.einsum("pa,pb->pab", jump, jump))
    return _csr(dofs[:, :, None], dofs[:, None, :], Ke, (n, n))


def assemble_joint_block(space_eta: FESpace, joints, k_rho) -> sp.csr_matrix:
    """Rotational springs ``k_ρ [η'][u']`` at the joints."""
    n = space_eta.ndofs
    k_rho = np.atleast_1d(np.asarray(k_rho, dtype=float))
    if len(joints) == 0:
        return sp.csr_matrix((n, n))
    if len(k_rho) == 1 and len(joints) > 1:
        k_rho = np.full(len(joints), k_rho[0])
    if np.any(k_rho < 0):
        raise ValidationError("joint stiffness must be non-negative")
    if len(k_rho) != len(joints):
        raise ValidationError("one stiffness per joint expected")
    jump, _, dofs, _, _ = _interface_vectors(space_eta, joints, np.zeros(space_eta.nentities))
    Ke = k_rho[:, None, None] * np.einsum("pa,pb->pab", jump, jump)
    return _csr(dofs[:, :, None], dofs[:, None, :], Ke, (n, n))


def structure_pieces(space_phi: FESpace, space_eta: FESpace, params: PhysicalParams,
                     stab: StabilizationParams) -> dict:
    np_, ne = space_phi.ndofs, space_eta.ndofs
    mesh = space_eta.mesh
    if space_eta.nentities == 0:
        return {}
    trace_injection(space_phi, space_eta)
    cols = space_eta.columns
    q = _surface_npts(space_phi, space_eta)
    ev_p = _facet_eval(space_phi, cols, q)
    ev_e = _facet_eval(space_eta, cols, q)
    D = facet_rigidity(space_eta, params)
    gamma = stab.penalty_for(space_eta.order)
    kr = params.joint_stiffness(len(mesh.joint_interfaces), mesh.geometry.structure_length)
    return {
        "eta_w": _surface_matrix(ev_p, ev_e, (np_, ne)),
        "phi_u": _surface_matrix(ev_e, ev_p, (ne, np_)),
        "eta_u": _surface_matrix(ev_e, ev_e, (ne, ne)),
        "bending": bending_matrix(space_eta, D),
        "interface": interface_penalty_matrix(space_eta, mesh.structure_interfaces, D, gamma),
        "joint": assemble_joint_block(space_eta, mesh.joint_interfaces, kr),
    }


def assemble_structure_cdg_block(space_phi: FESpace, space_eta: FESpace, mode, params: PhysicalParams,
                                 stab: StabilizationParams, mesh: Mesh2D | None = None,
                                 include_joints: bool = True) -> BlockSet:
    """Beam equation on the structure coupled with the fluid.

    Kinematic row (test ``w``): ``-(η_t, w)``; beam row (test ``u``):
    ``(d0 η_tt + φ_t + g η, u) + a_h(η, u)`` where ``a_h`` is the C/DG
    bending form plus the joint springs.
    """
    p = structure_pieces(space_phi, space_eta, params, stab)
    bs = BlockSet()
    if not p:
        return bs
    stiff = p["bending"] + p["interface"]
    if include_joints:
        stiff = stiff + p["joint"]
    bs.add("K", (ETA, ETA), params.g * p["eta_u"] + stiff)
    bs.add("C", (PHI, ETA), -p["eta_w"])
    bs.add("C", (ETA, PHI), p["phi_u"])
    bs.add("M", (ETA, ETA), params.d0 * p["eta_u"])
    return bs


# --------------------------------------------------------------------------- forcing

def inlet_load(space_phi: FESpace, flux) -> np.ndarray:
    """``∫_Γin u_in w`` for a flux function ``u_in(z)`` (complex allowed)."""
    mesh = space_phi.mesh
    if mesh.periodic:
        return np.zeros(space_phi.ndofs)
    r = space_phi.order
    quad = gauss_quadrature(1, r + 2)
    zeta = quad.points[:, 0]
    pts = np.stack([-np.ones_like(zeta), zeta], axis=1)
    cells = mesh.cell_id(0, np.arange(mesh.nz))
    X = map_points(mesh, pts, cells)
    J, _, _ = cell_jacobians(mesh, pts, cells)
    jac = np.hypot(J[..., 0, 1], J[..., 1, 1])
    N = space_phi.element.values(pts)
    data = np.asarray(flux(X[..., 1]))
    vals = np.einsum("cq,qa->ca", quad.weights[None, :] * jac * data, N)
    out = np.zeros(space_phi.ndofs, dtype=vals.dtype)
    np.add.at(out, space_phi.cell_dofs[cells].ravel(), vals.ravel())
    return out


def forcing_amplitude(spaces: FieldSpaces, mode, stab: StabilizationParams, wave: WaveInput | None,
                      damping: DampingZone | None = None, g: float = 9.81) -> np.ndarray:
    """Complex amplitude of the load vector generated by the incident wave."""
    out = np.zeros(spaces.ndofs, dtype=complex)
    if wave is None or wave.amplitude == 0:
        return out
    sphi, skap = spaces.phi, spaces.kappa
    out[spaces.slice(PHI)] += inlet_load(sphi, wave.inlet_flux_amplitude)
    if damping is not None and damping.inlet is not None and len(skap.columns):
        alpha = compute_alpha_f(mode, stab.beta, g)
        beta = stab.beta
        q = _surface_npts(sphi, skap)
        ev_p = _facet_eval(sphi, skap.columns, q)
        ev_k = _facet_eval(skap, skap.columns, q)
        inside = damping.in_inlet(ev_p.x)
        eta_t = np.where(inside, wave.elevation_amplitude(ev_p.x), 0)
        dz_t = np.where(inside, wave.vertical_velocity_amplitude(ev_p.x, 0.0), 0)
        mu1, mu2 = damping.mu1(ev_p.x), damping.mu2(ev_p.x)
        out[spaces.slice(PHI)] += _surface_load(ev_p, -mu2 * eta_t + beta * alpha * mu1 * dz_t, sphi.ndofs)
        out[spaces.slice(KAPPA)] += _surface_load(ev_k, beta * mu1 * dz_t, skap.ndofs)
    return out


# --------------------------------------------------------------------------- monolithic system

class MonolithicSystem:
    """Assembled semi-discrete matrices and operator for one solution mode.

    :param mode: :class:`FrequencyMode` or :class:`~hydroelastic.timeloop.NewmarkParams`.
    :param forcing_ramp: time over which the incident wave is switched on
        smoothly in the time domain (0 = sudden start).
    """

    def __init__(self, spaces: FieldSpaces, physics: PhysicalParams, stab: StabilizationParams, mode,
                 wave: WaveInput | None = None, damping: DampingZone | None = None, forcing_ramp: float = 0.0):
        mesh = spaces.mesh
        physics.validate(len(mesh.geometry.joints))
        stab.validate()
        if damping is not None:
            damping.validate(mesh.geometry.structure)
        self.spaces = spaces
        self.physics = physics
        self.stab = stab
        self.mode = mode
        self.wave = wave
        self.damping = damping
        self.forcing_ramp = float(forcing_ramp)
        g = physics.g

        self.laplacian = assemble_fluid_laplacian(spaces.phi)
        self.fs_pieces = free_surface_pieces(spaces.phi, spaces.kappa, damping)
        self.str_pieces = structure_pieces(spaces.phi, spaces.eta, physics, stab)

        blocks = BlockSet()
        blocks.add("K", (PHI, PHI), self.laplacian)
        blocks.merge(assemble_free_surface_block(spaces.phi, spaces.kappa, mode, stab, damping, g))
        blocks.merge(assemble_structure_cdg_block(spaces.phi, spaces.eta, mode, physics, stab))
        self.blocks = blocks
        dtype = getattr(mode, "dtype", float)
        self.K = global_matrix(blocks.K, spaces, dtype=float if np.isrealobj(self.alpha) else complex)
        self.C = global_matrix(blocks.C, spaces, dtype=float if np.isrealobj(self.alpha) else complex)
        self.M = global_matrix(blocks.M, spaces)
        self.matrix = global_matrix(blocks.operator_blocks(mode), spaces, dtype=dtype)
        self.forcing_vector = forcing_amplitude(spaces, mode, stab, wave, damping, g)

    @property
    def alpha(self):
        return compute_alpha_f(self.mode, self.stab.beta, self.physics.g)

    @property
    def ndofs(self) -> int:
        return self.spaces.ndofs

    def ramp(self, t: float) -> float:
        if self.forcing_ramp <= 0 or t >= self.forcing_ramp:
            return 1.0
        s = t / self.forcing_ramp
        return 0.5 * (1.0 - np.cos(np.pi * s))

    def forcing(self, t: float | None = None) -> np.ndarray:
        """Load vector: complex amplitude in frequency mode, real value at time ``t`` otherwise."""
        if self.mode.kind == "frequency":
            return self.forcing_vector
        if self.wave is None or not np.any(self.forcing_vector):
            return np.zeros(self.ndofs)
        phase = np.exp(-1j * self.wave.omega * t)
        return self.ramp(t) * np.real(self.forcing_vector * phase)

    def split(self, x) -> dict:
        return {f: x[self.spaces.slice(f)] for f in FIELDS}


def assemble_rhs(system: MonolithicSystem, t: float | None = None, history=None) -> np.ndarray:
    """Right-hand side of one solve.

    Frequency mode returns the incident-wave load amplitude. Newmark mode needs
    the previous state ``history`` (a :class:`~hydroelastic.timeloop.NewmarkState`)
    and returns ``f(t) - C h_v - M h_a`` at ``t = tⁿ + Δt`` where ``h_v`` and
    ``h_a`` collect the known parts of the velocity and acceleration updates.
    """
    mode = system.mode
    if mode.kind == "frequency":
        return system.forcing()
    if history is None:
        raise ValidationError("a Newmark right-hand side needs the previous state")
    hv, ha = mode.history_terms(history.x, history.xt, history.xtt)
    t_new = history.t + mode.dt if t is None else t
    return system.forcing(t_new) - system.C @ hv - system.M @ ha


def dump_matrix_market(matrix, path) -> Path:
    """Write a sparse operator in Matrix Market text format (debugging aid)."""
    path = Path(path)
    if path.suffix != ".mtx":
        path = path.with_name(path.name + ".mtx")
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix), precision=17)
    return path
