"""Direct sparse LU solves (real or complex) with residual reporting."""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularMatrixError, SolverError, ValidationError

#: Matrices up to this size are re-factored densely to locate a zero pivot.
_DENSE_PIVOT_LIMIT = 4000


class Factorization:
    """Reusable LU factors of a square sparse matrix.

    Rows are first scaled by their largest entry: the beam rows of a stiff
    structure are many orders of magnitude larger than the potential rows, and
    without equilibration the residual of those rows is set by round-off in
    the matrix-vector product. Residuals are reported for the scaled system.

    SuperLU is run with a minimum-degree ordering on ``A + Aᵀ`` and diagonal
    preference, which suits the nearly symmetric pattern of the monolithic
    system; if the probe residual of that factorization is poor it is redone
    with COLAMD and partial pivoting. Both paths are deterministic, so reusing
    one factorization gives the same bits as refactoring before each solve.
    """

    #: unrefined scaled residual of a probe solve above which the fallback ordering is used
    probe_tol = 1e-6

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValidationError(f"matrix must be square, got {A.shape}")
        if not np.all(np.isfinite(A.data)):
            raise ValidationError("matrix has non-finite entries")
        rowmax = np.asarray(abs(A).max(axis=1).todense()).ravel()
        self.row_scale = 1.0 / np.where(rowmax > 0, rowmax, 1.0)
        self.original = A
        self.matrix = A = sp.csc_matrix(sp.diags(self.row_scale) @ A)
        self.shape = A.shape
        self.dtype = A.dtype
        self.ordering = "MMD_AT_PLUS_A"
        try:
            self._lu = spla.splu(A, permc_spec=self.ordering, diag_pivot_thresh=0.1,
                                 options=dict(SymmetricMode=True))
            probe = np.ones(A.shape[0], dtype=A.dtype)
            ok = relative_residual(A, self._lu.solve(probe), probe) <= self.probe_tol
        except RuntimeError:
            ok = False
        if not ok:
            self.ordering = "COLAMD"
            try:
                self._lu = spla.splu(A, permc_spec=self.ordering)
            except RuntimeError as exc:
                raise SingularMatrixError(f"factorization failed: {exc}", _locate_zero_pivot(A)) from None
        self.last_residual = 0.0
        self.max_residual = 0.0

    @property
    def n(self) -> int:
        return self.shape[0]

    def solve(self, b, check: bool = True, rtol: float | None = None, refine: int = 3) -> np.ndarray:
        return solve(self, b, check=check, rtol=rtol, refine=refine)


def _locate_zero_pivot(A) -> int | None:
    if A.shape[0] > _DENSE_PIVOT_LIMIT:
        return None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, _ = scipy.linalg.lu_factor(A.toarray(), check_finite=False)
    d = np.abs(np.diag(lu))
    scale = max(d.max(initial=0.0), 1.0)
    zero = np.flatnonzero(d <= 1e-14 * scale)
    return int(zero[0]) if zero.size else None


def factorize(A) -> Factorization:
    """Factor ``A``; raises :class:`SingularMatrixError` on exact singularity."""
    return Factorization(A)


def relative_residual(A, x, b) -> float:
    r = A @ x - b
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))


def solve(F: Factorization, b, check: bool = True, rtol: float | None = None,
          refine: int = 3, refine_tol: float = 1e-13) -> np.ndarray:
    """Solve ``A x = b`` with a stored factorization.

    Up to ``refine`` steps of iterative refinement are taken while the scaled
    relative residual exceeds ``refine_tol``. The residual is recorded on
    ``F.last_residual`` (running maximum on ``F.max_residual``) when ``check``
    is true; if ``rtol`` is given and exceeded, :class:`SolverError` is raised.
    """
    b = np.asarray(b)
    if b.shape[0] != F.n:
        raise ValidationError(f"right-hand side has length {b.shape[0]}, expected {F.n}")
    b = F.row_scale * b
    x = _lu_solve(F, b)
    res = relative_residual(F.matrix, x, b) if (check or refine) else 0.0
    for _ in range(refine):
        if not res > refine_tol:
            break
        x_new = x + _lu_solve(F, b - F.matrix @ x)
        res_new = relative_residual(F.matrix, x_new, b)
        if not res_new < res:
            break
        x, res = x_new, res_new
    if check:
        F.last_residual = res
        F.max_residual = max(F.max_residual, res)
        if rtol is not None and not res <= rtol:
            raise SolverError(f"relative residual {res:.3e} exceeds {rtol:.1e}")
    return x


def _lu_solve(F: Factorization, b) -> np.ndarray:
    if np.iscomplexobj(b) and not np.iscomplexobj(np.empty(0, dtype=F.dtype)):
        return F._lu.solve(np.ascontiguousarray(b.real)) + 1j * F._lu.solve(np.ascontiguousarray(b.imag))
    return F._lu.solve(np.ascontiguousarray(b, dtype=F.dtype))
