"""Lagrange reference elements, Gauss quadrature and dof maps.

Three field spaces are built on a :class:`~hydroelastic.mesh.Mesh2D`:

* the volume space for the velocity potential (tensor-product ``Q_r`` on each cell),
* the free-surface trace space for the surface elevation,
* the structure trace space for the beam deflection.

Volume dofs live on the ``(r*nx + 1) x (r*nz + 1)`` node lattice; in a
periodic mesh the last lattice column is identified with the first one.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ValidationError
from .mesh import FREE_SURFACE, STRUCTURE, Mesh2D

VOLUME = "volume"


class ReferenceElement:
    """Equispaced Lagrange element of order ``r`` on ``[-1, 1]^d``.

    In 2D the local index of the node ``(a, b)`` (``a`` along ξ, ``b`` along ζ)
    is ``b*(r+1) + a``.
    """

    def __init__(self, dim: int, order: int):
        if dim not in (1, 2):
            raise ValidationError(f"unsupported dimension {dim}")
        if order < 1:
            raise ValidationError(f"order must be >= 1, got {order}")
        self.dim = dim
        self.order = order
        self.nodes_1d = np.linspace(-1.0, 1.0, order + 1)
        coeffs = []
        for i, xi in enumerate(self.nodes_1d):
            others = np.delete(self.nodes_1d, i)
            c = P.polyfromroots(others) / np.prod(xi - others)
            coeffs.append(c)
        self._c0 = coeffs
        self._c1 = [P.polyder(c) for c in coeffs]
        self._c2 = [P.polyder(c, 2) for c in coeffs]
        if dim == 1:
            self.nodes = self.nodes_1d[:, None]
        else:
            a, b = np.meshgrid(self.nodes_1d, self.nodes_1d)
            self.nodes = np.stack([a.ravel(), b.ravel()], axis=1)

    @property
    def nbasis(self) -> int:
        return (self.order + 1) ** self.dim

    def _eval1d(self, coeffs, x):
        x = np.asarray(x, dtype=float)
        return np.stack([P.polyval(x, c) for c in coeffs], axis=-1)

    def values(self, pts) -> np.ndarray:
        """Shape function values, shape ``(npts, nbasis)``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float).reshape(-1, self.dim))
        if self.dim == 1:
            return self._eval1d(self._c0, pts[:, 0])
        nx = self._eval1d(self._c0, pts[:, 0])
        nz = self._eval1d(self._c0, pts[:, 1])
        return (nz[:, :, None] * nx[:, None, :]).reshape(len(pts), -1)

    def gradients(self, pts) -> np.ndarray:
        """Reference gradients, shape ``(npts, nbasis, dim)``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float).reshape(-1, self.dim))
        if self.dim == 1:
            return self._eval1d(self._c1, pts[:, 0])[:, :, None]
        n = len(pts)
        vx, dx = self._eval1d(self._c0, pts[:, 0]), self._eval1d(self._c1, pts[:, 0])
        vz, dz = self._eval1d(self._c0, pts[:, 1]), self._eval1d(self._c1, pts[:, 1])
        gx = (vz[:, :, None] * dx[:, None, :]).reshape(n, -1)
        gz = (dz[:, :, None] * vx[:, None, :]).reshape(n, -1)
        return np.stack([gx, gz], axis=-1)

    def second_derivatives(self, pts) -> np.ndarray:
        """Second reference derivatives of the 1D basis, shape ``(npts, nbasis)``."""
        if self.dim != 1:
            raise ValidationError("second derivatives are only provided for 1D elements")
        pts = np.asarray(pts, dtype=float).reshape(-1)
        return self._eval1d(self._c2, pts)


@lru_cache(maxsize=None)
def lagrange_reference_element(d: int, r: int) -> ReferenceElement:
    return ReferenceElement(d, r)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def gauss_quadrature(d: int, npts_per_axis: int) -> QuadratureRule:
    """Tensor Gauss-Legendre rule, exact for per-axis degree ``2n - 1``."""
    if d not in (1, 2):
        raise ValidationError(f"unsupported dimension {d}")
    if npts_per_axis < 1:
        raise ValidationError("need at least one quadrature point per axis")
    x, w = np.polynomial.legendre.leggauss(npts_per_axis)
    if d == 1:
        return QuadratureRule(x[:, None], w, 2 * npts_per_axis - 1)
    a, b = np.meshgrid(x, x)
    wa, wb = np.meshgrid(w, w)
    pts = np.stack([a.ravel(), b.ravel()], axis=1)
    return QuadratureRule(pts, (wa * wb).ravel(), 2 * npts_per_axis - 1)


@dataclass(eq=False)
class FESpace:
    """Continuous Lagrange space of one field.

    :ivar cell_dofs: for the volume space, ``(ncells, (r+1)^2)`` global dofs of
        each cell; for trace spaces, ``(nfacets, r+1)`` dofs of each top facet.
    :ivar columns: trace spaces only, top-facet column of each facet.
    :ivar dof_coords: ``(ndofs, 2)`` physical coordinates of the dof nodes.
    """

    mesh: Mesh2D
    domain: str
    order: int
    ndofs: int
    cell_dofs: np.ndarray
    dof_coords: np.ndarray
    columns: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def element(self) -> ReferenceElement:
        return lagrange_reference_element(1 if self.is_trace else 2, self.order)

    @property
    def is_trace(self) -> bool:
        return self.domain != VOLUME

    @property
    def nentities(self) -> int:
        return len(self.cell_dofs)

    @property
    def facet_cells(self) -> np.ndarray:
        return self.mesh.top_cells(self.columns)

    @property
    def facet_bounds(self) -> np.ndarray:
        """``(nfacets, 2)`` horizontal end points of each facet."""
        xl = self.mesh.x_lines
        return np.stack([xl[self.columns], xl[self.columns + 1]], axis=1)

    @property
    def facet_lengths(self) -> np.ndarray:
        b = self.facet_bounds
        return b[:, 1] - b[:, 0]

    def interpolate(self, f) -> np.ndarray:
        """Nodal interpolant of ``f(x, z)`` (volume) or ``f(x)`` (trace)."""
        if self.is_trace:
            return np.asarray(f(self.dof_coords[:, 0]), dtype=float) * np.ones(self.ndofs)
        return np.asarray(f(self.dof_coords[:, 0], self.dof_coords[:, 1])) * np.ones(self.ndofs)

    def evaluate_trace(self, coeffs, x) -> np.ndarray:
        """Evaluate a trace field at horizontal positions ``x`` covered by the space."""
        if not self.is_trace:
            raise ValidationError("evaluate_trace needs a trace space")
        x = np.asarray(x, dtype=float)
        bounds = self.facet_bounds
        order = np.argsort(bounds[:, 0])
        k = np.searchsorted(bounds[order, 0], x, side="right") - 1
        k = np.clip(k, 0, len(order) - 1)
        f = order[k]
        lo, hi = bounds[f, 0], bounds[f, 1]
        if np.any((x < lo - 1e-12 * (hi - lo)) | (x > hi + 1e-12 * (hi - lo))):
            raise ValidationError("evaluation point outside the trace space support")
        xi = 2.0 * (x - lo) / (hi - lo) - 1.0
        N = self.element.values(xi[:, None])
        c = np.asarray(coeffs)[self.cell_dofs[f]]
        return np.sum(N * c, axis=1)


def _volume_space(mesh: Mesh2D, r: int) -> FESpace:
    nx, nz = mesh.nx, mesh.nz
    nix = r * nx if mesh.periodic else r * nx + 1
    niz = r * nz + 1
    a = np.arange(r + 1)
    la, lb = np.meshgrid(a, a)
    la, lb = la.ravel(), lb.ravel()
    cx = np.tile(np.arange(nx), nz)
    cz = np.repeat(np.arange(nz), nx)
    I = r * cx[:, None] + la[None, :]
    J = r * cz[:, None] + lb[None, :]
    if mesh.periodic:
        I = I % nix
    cell_dofs = J * nix + I

    ref = lagrange_reference_element(2, r)
    X = map_points(mesh, ref.nodes)
    coords = np.empty((nix * niz, 2))
    coords[cell_dofs.ravel()] = X.reshape(-1, 2)
    if mesh.periodic:
        # the identified lattice column keeps its x = 0 representative
        first = cell_dofs[cx == 0][:, la == 0].ravel()
        coords[first] = X[cx == 0][:, la == 0].reshape(-1, 2)
    return FESpace(mesh, VOLUME, r, nix * niz, cell_dofs, coords)


def _trace_space(mesh: Mesh2D, tag: str, r: int) -> FESpace:
    cols = mesh.columns(tag)
    nx = mesh.nx
    vertex_dof: dict[int, int] = {}
    cell_dofs = np.empty((len(cols), r + 1), dtype=int)
    coords: list[float] = []
    xl = mesh.x_lines
    nodes = np.linspace(0.0, 1.0, r + 1)
    n = 0
    for f, c in enumerate(cols):
        x0, x1 = xl[c], xl[c + 1]
        left = c % nx if mesh.periodic else c
        right = (c + 1) % nx if mesh.periodic else c + 1
        if left not in vertex_dof:
            vertex_dof[left] = n
            coords.append(x0)
            n += 1
        cell_dofs[f, 0] = vertex_dof[left]
        for a in range(1, r):
            cell_dofs[f, a] = n
            coords.append(x0 + nodes[a] * (x1 - x0))
            n += 1
        if right not in vertex_dof:
            vertex_dof[right] = n
            coords.append(x1)
            n += 1
        cell_dofs[f, r] = vertex_dof[right]
    xy = np.zeros((n, 2))
    xy[:, 0] = coords
    return FESpace(mesh, tag, r, n, cell_dofs, xy, cols)


def build_fespace(mesh: Mesh2D, domain: str, r: int) -> FESpace:
    """Build the space of one field.

    :param domain: ``"volume"``, ``"free_surface"`` or ``"structure"``.
    :param r: polynomial order (``>= 2`` for the structure space, which carries
        a fourth-order operator).
    """
    if int(r) != r or r < 1:
        raise ValidationError(f"order must be a positive integer, got {r}")
    r = int(r)
    if domain == VOLUME:
        return _volume_space(mesh, r)
    if domain == STRUCTURE:
        if r < 2:
            raise ValidationError("the structure space needs order r >= 2")
        return _trace_space(mesh, STRUCTURE, r)
    if domain == FREE_SURFACE:
        return _trace_space(mesh, FREE_SURFACE, r)
    raise ValidationError(f"unknown field domain {domain!r}")


def bilinear_vertex_functions(pts) -> tuple[np.ndarray, np.ndarray]:
    """Vertex functions of the bilinear cell map and their reference gradients."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    s, t = pts[:, 0], pts[:, 1]
    M = 0.25 * np.stack([(1 - s) * (1 - t), (1 + s) * (1 - t), (1 + s) * (1 + t), (1 - s) * (1 + t)], axis=1)
    dM = 0.25 * np.stack([
        np.stack([-(1 - t), -(1 - s)], axis=1),
        np.stack([(1 - t), -(1 + s)], axis=1),
        np.stack([(1 + t), (1 + s)], axis=1),
        np.stack([-(1 + t), (1 - s)], axis=1),
    ], axis=1)
    return M, dM


def map_points(mesh: Mesh2D, pts, cells=None) -> np.ndarray:
    """Physical coordinates ``(ncells, npts, 2)`` of reference points."""
    M, _ = bilinear_vertex_functions(pts)
    X = mesh.nodes[mesh.cells if cells is None else mesh.cells[cells]]
    return np.einsum("qv,cvi->cqi", M, X)


def cell_jacobians(mesh: Mesh2D, pts, cells=None):
    """Jacobian ``J[c, q, i, j] = dx_i/dξ_j``, its determinant and inverse."""
    _, dM = bilinear_vertex_functions(pts)
    X = mesh.nodes[mesh.cells if cells is None else mesh.cells[cells]]
    J = np.einsum("cvi,qvj->cqij", X, dM)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    return J, det, inv


@dataclass(frozen=True)
class TraceCollocation:
    """Geometric data to evaluate a volume field on a trace space's facets.

    A facet point with 1D reference coordinate ξ is the point ``(ξ, 1)`` of the
    reference cell ``cells[f]`` (top edge).
    """

    cells: np.ndarray
    volume_order: int
    surface_order: int

    def reference_points(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float).reshape(-1)
        return np.stack([xi, np.ones_like(xi)], axis=1)


def trace_injection(volume_space: FESpace, surface_space: FESpace):
    """Relate a trace space to the boundary dofs of the volume space.

    :returns: for equal orders, an integer array mapping each surface dof to
        its volume dof; for a richer surface space, a :class:`TraceCollocation`.
    :raises ValidationError: if the surface order is lower than the volume order.
    """
    if volume_space.is_trace or not surface_space.is_trace:
        raise ValidationError("expected a volume space and a trace space")
    rv, rs = volume_space.order, surface_space.order
    if rs < rv:
        raise ValidationError(f"trace space order {rs} is below the volume order {rv}")
    cells = surface_space.facet_cells
    if rs > rv:
        return TraceCollocation(cells, rv, rs)
    r = rv
    top = np.arange(r + 1) + r * (r + 1)
    vol = volume_space.cell_dofs[cells][:, top]
    out = np.full(surface_space.ndofs, -1, dtype=int)
    sd = surface_space.cell_dofs
    out[sd.ravel()] = vol.ravel()
    if np.any(out < 0):
        raise ValidationError("trace dofs not covered by the volume boundary")
    return out
