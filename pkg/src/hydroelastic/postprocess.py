"""Error norms, energy bookkeeping, rates, envelopes and file export."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .fe import FESpace, cell_jacobians, gauss_quadrature, lagrange_reference_element, map_points
from .forms import ETA, KAPPA, PHI, FieldSpaces, MonolithicSystem


# --------------------------------------------------------------------------- error norms

def volume_l2_error(space: FESpace, coeffs, exact, npts: int | None = None) -> float:
    """``‖f - f_h‖`` over the fluid domain for ``exact(x, z)``."""
    q = gauss_quadrature(2, space.order + 2 if npts is None else npts)
    N = space.element.values(q.points)
    X = map_points(space.mesh, q.points)
    _, det, _ = cell_jacobians(space.mesh, q.points)
    uh = np.einsum("qb,cb->cq", N, np.asarray(coeffs)[space.cell_dofs])
    ue = exact(X[..., 0], X[..., 1])
    return float(np.sqrt(np.sum(q.weights[None, :] * det * np.abs(ue - uh) ** 2)))


def trace_l2_error(space: FESpace, coeffs, exact, npts: int | None = None) -> float:
    """``‖f - f_h‖`` over the facets of a trace space for ``exact(x)``."""
    if space.nentities == 0:
        return 0.0
    q = gauss_quadrature(1, space.order + 2 if npts is None else npts)
    xi = q.points[:, 0]
    N = space.element.values(q.points)
    b = space.facet_bounds
    h = b[:, 1] - b[:, 0]
    x = b[:, :1] + 0.5 * (xi[None, :] + 1) * h[:, None]
    uh = np.einsum("qa,fa->fq", N, np.asarray(coeffs)[space.cell_dofs])
    w = q.weights[None, :] * 0.5 * h[:, None]
    return float(np.sqrt(np.sum(w * np.abs(exact(x) - uh) ** 2)))


def l2_errors(state, exact, t: float, spaces: FieldSpaces | None = None) -> tuple[float, float]:
    """``(e_φ, e_η)`` of a state against a closed-form solution at time ``t``.

    Quadrature uses ``r + 2`` points per axis, exact to degree ``2r + 3``.
    """
    spaces = state.spaces if spaces is None else spaces
    x = state.x if hasattr(state, "x") else np.asarray(state)
    e_phi = volume_l2_error(spaces.phi, x[spaces.slice(PHI)], lambda X, Z: exact.phi(X, Z, t, 0))
    e_eta = trace_l2_error(spaces.eta, x[spaces.slice(ETA)], lambda X: exact.eta(X, t, 0))
    return e_phi, e_eta


# --------------------------------------------------------------------------- energy

@dataclass(frozen=True)
class EnergyBreakdown:
    """Energy per unit width divided by the water density.

    ``E_interface`` holds the C/DG consistency and penalty contribution
    ``½ a_Λ(η, η)``; it is reported for diagnostics and is not part of the
    total (it can be negative).
    """

    E_kin_flow: float
    E_pot_flow: float
    E_kin_str: float
    E_ela_str: float
    E_joint: float
    E_interface: float = 0.0

    @property
    def E_total(self) -> float:
        return self.E_kin_flow + self.E_pot_flow + self.E_kin_str + self.E_ela_str + self.E_joint

    @property
    def E_total_discrete(self) -> float:
        """Total including the interface terms; the quantity the scheme conserves exactly."""
        return self.E_total + self.E_interface

    def as_dict(self) -> dict:
        return {"E_kin_flow": self.E_kin_flow, "E_pot_flow": self.E_pot_flow, "E_kin_str": self.E_kin_str,
                "E_ela_str": self.E_ela_str, "E_joint": self.E_joint, "E_total": self.E_total,
                "E_interface": self.E_interface}


def energy(state, system: MonolithicSystem) -> EnergyBreakdown:
    """Kinetic, potential and elastic energy of a Newmark state."""
    sp_ = system.spaces
    phi = state.x[sp_.slice(PHI)]
    kap = state.x[sp_.slice(KAPPA)]
    eta = state.x[sp_.slice(ETA)]
    eta_t = state.xt[sp_.slice(ETA)]
    g, d0 = system.physics.g, system.physics.d0
    e_kin = 0.5 * phi @ (system.laplacian @ phi)
    e_pot = 0.0
    if system.fs_pieces:
        e_pot += 0.5 * g * kap @ (system.fs_pieces["kappa_v"] @ kap)
    e_kin_s = e_ela = e_joint = e_if = 0.0
    p = system.str_pieces
    if p:
        e_pot += 0.5 * g * eta @ (p["eta_u"] @ eta)
        e_kin_s = 0.5 * d0 * eta_t @ (p["eta_u"] @ eta_t)
        e_ela = 0.5 * eta @ (p["bending"] @ eta)
        e_joint = 0.5 * eta @ (p["joint"] @ eta)
        e_if = 0.5 * eta @ (p["interface"] @ eta)
    return EnergyBreakdown(float(e_kin), float(e_pot), float(e_kin_s), float(e_ela), float(e_joint), float(e_if))


# --------------------------------------------------------------------------- rates and signals

def convergence_slope(pairs) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
        raise ValidationError("need at least two (h, error) pairs")
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise ValidationError("step sizes and errors must be positive and finite")
    lh, le = np.log(arr[:, 0]), np.log(arr[:, 1])
    if np.ptp(lh) == 0:
        raise ValidationError("need at least two distinct step sizes")
    return float(np.polyfit(lh, le, 1)[0])


def envelope(times, gauges, window) -> np.ndarray:
    """Pointwise ``max |η|`` over the samples with ``t`` inside ``window``."""
    times = np.asarray(times, dtype=float)
    gauges = np.asarray(gauges)
    a, b = window
    tol = 1e-9 * max(1.0, abs(b))
    mask = (times >= a - tol) & (times <= b + tol)
    if not np.any(mask):
        raise ValidationError(f"no samples inside the window {window}")
    return np.max(np.abs(gauges[mask]), axis=0)


def relative_l2(a, b) -> float:
    """``‖a - b‖ / ‖b‖`` for two sampled curves."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def wave_decomposition(x, values, wavenumber: float) -> tuple[complex, complex]:
    """Least-squares split of a complex surface profile into ``A e^{ikx} + B e^{-ikx}``.

    :returns: ``(A, B)``, the right- and left-going amplitudes.
    """
    x = np.asarray(x, dtype=float)
    G = np.stack([np.exp(1j * wavenumber * x), np.exp(-1j * wavenumber * x)], axis=1)
    sol, *_ = np.linalg.lstsq(G, np.asarray(values, dtype=complex), rcond=None)
    return complex(sol[0]), complex(sol[1])


# --------------------------------------------------------------------------- results

@dataclass
class RunResult:
    """Everything a scenario run produces."""

    scenario: str
    mode: str
    config: dict
    spaces: FieldSpaces | None = field(default=None, repr=False)
    solution: np.ndarray | None = field(default=None, repr=False)
    state: object | None = field(default=None, repr=False)
    gauge_x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gauge_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gauges: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    snapshots: list = field(default_factory=list, repr=False)
    energy_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    energies: list = field(default_factory=list, repr=False)
    errors: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def field_values(self, name: str):
        vec = self.solution if self.solution is not None else self.state.x
        return vec[self.spaces.slice(name)]

    @property
    def eta(self):
        return self.field_values(ETA)

    @property
    def kappa(self):
        return self.field_values(KAPPA)

    @property
    def phi(self):
        return self.field_values(PHI)


def config_hash(config: dict) -> str:
    """SHA-256 of the canonical JSON form of a configuration dictionary."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(text.encode()).hexdigest()


# --------------------------------------------------------------------------- CSV

def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_csv(path, columns: dict, units: dict | None = None) -> Path:
    """Write equal-length columns with a ``name [unit]`` header and 17 significant digits."""
    path = Path(path)
    units = units or {}
    names = list(columns)
    arrays = [np.asarray(columns[n], dtype=float).reshape(-1) for n in names]
    lengths = {len(a) for a in arrays}
    if len(lengths) > 1:
        raise ValidationError("CSV columns must have the same length")
    header = [f"{n} [{units[n]}]" if units.get(n) else n for n in names]
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in zip(*arrays):
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> dict:
    """Read a file written by :func:`write_csv`; keys are the bare column names."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    names = [h.split(" [")[0] for h in rows[0]]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(names))
    return {n: data[:, i] for i, n in enumerate(names)}


# --------------------------------------------------------------------------- VTK

def _lattice_geometry(space: FESpace):
    """Points and sub-quads of the unwrapped volume node lattice.

    :returns: ``(points, quads, dof_of_point)``.
    """
    mesh, r = space.mesh, space.order
    nix, niz = r * mesh.nx + 1, r * mesh.nz + 1
    ref = lagrange_reference_element(2, r)
    X = map_points(mesh, ref.nodes)
    a = np.arange(r + 1)
    la, lb = np.meshgrid(a, a)
    cx = np.tile(np.arange(mesh.nx), mesh.nz)
    cz = np.repeat(np.arange(mesh.nz), mesh.nx)
    I = r * cx[:, None] + la.ravel()[None, :]
    J = r * cz[:, None] + lb.ravel()[None, :]
    pts = np.zeros((nix * niz, 2))
    pts[(J * nix + I).ravel()] = X.reshape(-1, 2)
    wrap = nix - 1 if mesh.periodic else nix
    jj, ii = np.meshgrid(np.arange(niz), np.arange(nix), indexing="ij")
    dof = (jj * wrap + (ii % wrap)).ravel()
    i0, j0 = np.meshgrid(np.arange(nix - 1), np.arange(niz - 1))
    bl = (j0 * nix + i0).ravel()
    quads = np.stack([bl, bl + 1, bl + nix + 1, bl + nix], axis=1)
    return pts, quads, dof


def surface_elevation_at(spaces: FieldSpaces, x_vec, xq) -> np.ndarray:
    """Free-surface or structure elevation at horizontal positions ``xq``."""
    xq = np.asarray(xq, dtype=float)
    out = np.zeros(xq.shape, dtype=np.asarray(x_vec).dtype)
    for name in (KAPPA, ETA):
        sp_ = spaces[name]
        if sp_.ndofs == 0:
            continue
        b = sp_.facet_bounds
        tol = 1e-12 * spaces.mesh.geometry.length
        inside = np.zeros(xq.shape, dtype=bool)
        for lo, hi in b:
            inside |= (xq >= lo - tol) & (xq <= hi + tol)
        if np.any(inside):
            out[inside] = sp_.evaluate_trace(np.asarray(x_vec)[spaces.slice(name)], xq[inside])
    return out


def write_vtk(path, spaces: FieldSpaces, x_vec, title: str = "hydroelastic solution") -> Path:
    """Legacy ASCII unstructured grid on the volume node lattice.

    Point data ``phi`` and ``eta`` (the elevation of the column above each
    point); complex solutions give ``_re``, ``_im`` and ``_abs`` arrays.
    """
    path = Path(path)
    pts, quads, dof = _lattice_geometry(spaces.phi)
    x_vec = np.asarray(x_vec)
    phi = x_vec[spaces.slice(PHI)][dof]
    eta = surface_elevation_at(spaces, x_vec, pts[:, 0])
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(pts)} double"]
    lines += [f"{_fmt(px)} {_fmt(pz)} 0" for px, pz in pts]
    lines.append(f"CELLS {len(quads)} {5 * len(quads)}")
    lines += ["4 " + " ".join(map(str, q)) for q in quads]
    lines.append(f"CELL_TYPES {len(quads)}")
    lines += ["9"] * len(quads)
    lines.append(f"POINT_DATA {len(pts)}")

    def scalars(name, values):
        lines.extend([f"SCALARS {name} double 1", "LOOKUP_TABLE default"])
        lines.extend(_fmt(v) for v in values)

    for name, vals in (("phi", phi), ("eta", eta)):
        if np.iscomplexobj(vals):
            scalars(f"{name}_re", vals.real)
            scalars(f"{name}_im", vals.imag)
            scalars(f"{name}_abs", np.abs(vals))
        else:
            scalars(name, vals)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


# --------------------------------------------------------------------------- export driver

def output_name(scenario: str, quantity: str, tag) -> str:
    return f"{scenario}_{quantity}_{tag}"


def export(result: RunResult, fmt: str, outdir) -> list[Path]:
    """Write the series (``csv``) or the final field (``vtk_legacy``) of a run."""
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {outdir}: {exc}") from None
    name = result.scenario
    files: list[Path] = []
    if fmt == "csv":
        files += _export_csv(result, outdir, name)
    elif fmt in ("vtk", "vtk_legacy"):
        if result.spaces is None:
            raise ValidationError("result has no field data")
        if result.mode == "frequency":
            files.append(write_vtk(outdir / (output_name(name, "field", "freq") + ".vtk"),
                                   result.spaces, result.solution))
        else:
            for step, t, vec in result.snapshots:
                files.append(write_vtk(outdir / (output_name(name, "field", f"{step:06d}") + ".vtk"),
                                       result.spaces, vec, title=f"t = {t:.17g}"))
            if result.state is not None and not result.snapshots:
                step = result.metadata.get("nsteps", 0)
                files.append(write_vtk(outdir / (output_name(name, "field", f"{step:06d}") + ".vtk"),
                                       result.spaces, result.state.x))
    else:
        raise ValidationError(f"unknown export format {fmt!r}")
    return files


def _export_csv(result: RunResult, outdir: Path, name: str) -> list[Path]:
    files = []
    sp_ = result.spaces
    if result.mode == "frequency" and sp_ is not None:
        eta0 = result.config.get("wave", {}) or {}
        amp = eta0.get("amplitude") or 1.0
        for field_name in (ETA, KAPPA):
            space = sp_[field_name]
            vals = result.field_values(field_name)
            order = np.argsort(space.dof_coords[:, 0], kind="stable")
            cols = {"x": space.dof_coords[order, 0], "re": vals.real[order], "im": vals.imag[order],
                    "abs": np.abs(vals)[order], "abs_rel": np.abs(vals)[order] / amp}
            units = {"x": "m", "re": "m", "im": "m", "abs": "m", "abs_rel": "-"}
            files.append(write_csv(outdir / (output_name(name, field_name, "freq") + ".csv"), cols, units))
    if result.mode == "time":
        cols = {"t": result.gauge_times}
        units = {"t": "s"}
        for i, xg in enumerate(result.gauge_x):
            key = f"eta_x{i:04d}_{xg:.6g}"
            cols[key] = result.gauges[:, i] if result.gauges.size else np.zeros(0)
            units[key] = "m"
        files.append(write_csv(outdir / (output_name(name, "gauges", "all") + ".csv"), cols, units))
        if result.energies:
            keys = list(result.energies[0].as_dict())
            cols = {"t": result.energy_times}
            cols.update({k: [e.as_dict()[k] for e in result.energies] for k in keys})
            units = {"t": "s", **{k: "J/(kg/m^3) per unit width" for k in keys}}
            files.append(write_csv(outdir / (output_name(name, "energy", "all") + ".csv"), cols, units))
        if "envelope" in result.errors:
            env = np.asarray(result.errors["envelope"])
            files.append(write_csv(outdir / (output_name(name, "envelope", "window") + ".csv"),
                                   {"x": result.gauge_x, "envelope": env}, {"x": "m", "envelope": "m"}))
    scalars = {k: v for k, v in result.errors.items() if np.isscalar(v)}
    if scalars:
        files.append(write_csv(outdir / (output_name(name, "errors", "final") + ".csv"),
                               {k: [v] for k, v in scalars.items()}))
    return files
