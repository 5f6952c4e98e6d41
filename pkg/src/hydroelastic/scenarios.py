"""Linear wave utilities, declarative scenario configurations and the run driver.

Four built-in scenarios are provided:

``periodic_beam``
    an infinitely long beam (periodic tank) carrying a progressive wave that
    is an exact solution of the coupled problem;
``finite_beam``
    the same tank with a beam of length π in the middle and free surface
    elsewhere;
``khabakhpasheva``
    a two-segment beam with a rotational-spring joint in a tank with inlet
    forcing and absorbing zones;
``liu``
    a long beam over a seabed that slopes linearly under the structure.
"""
from __future__ import annotations

import copy
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import ValidationError
from .fe import build_fespace
from .forms import (ETA, DampingZone, FieldSpaces, FrequencyMode, MonolithicSystem, PhysicalParams,
                    StabilizationParams, WaveInput, dump_matrix_market)
from .mesh import BathymetryProfile, GeometryConfig, build_structured_mesh
from .postprocess import RunResult, config_hash, energy, envelope, l2_errors
from .solver import factorize
from .timeloop import NewmarkParams, run_newmark, set_initial_conditions

SCHEMA_VERSION = 1


# --------------------------------------------------------------------------- dispersion

def dispersion_omega(k: float, H: float, g: float = 9.81) -> float:
    """Angular frequency of a linear wave of wavenumber ``k`` on depth ``H``."""
    if not (k > 0 and H > 0):
        raise ValidationError("wavenumber and depth must be positive")
    return float(np.sqrt(g * k * np.tanh(k * H)))


def dispersion_k(omega: float, H: float, g: float = 9.81, rtol: float = 1e-14) -> float:
    """Positive root of ``ω² = g k tanh(kH)``."""
    if not (omega > 0 and H > 0):
        raise ValidationError("frequency and depth must be positive")
    f = lambda k: g * k * np.tanh(k * H) - omega ** 2  # noqa: E731
    hi = max(omega ** 2 / g, omega / np.sqrt(g * H))
    while f(hi) < 0:
        hi *= 2.0
    return float(optimize.brentq(f, 0.0, hi, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps), maxiter=400))


def make_wave(amplitude: float, depth: float, k: float | None = None, omega: float | None = None,
              g: float = 9.81) -> WaveInput:
    """Dispersion-consistent wave from either its wavenumber or its frequency."""
    if (k is None) == (omega is None):
        raise ValidationError("give exactly one of k and omega")
    if k is None:
        k = dispersion_k(omega, depth, g)
    omega = dispersion_omega(k, depth, g)
    return WaveInput(float(amplitude), float(k), float(omega), float(depth), g)


@dataclass(frozen=True)
class AiryFields:
    """Closed-form progressive wave and its time derivatives.

    ``phi(x, z, t, d)`` and ``eta(x, t, d)`` give the ``d``-th time derivative;
    ``z`` is measured from the still-water level (``z ∈ [-H, 0]``).
    """

    wave: WaveInput

    def _time_factor(self, t, d):
        w = self.wave.omega
        return (-1j * w) ** d * np.exp(-1j * w * np.asarray(t, dtype=float))

    def phi(self, x, z, t, d: int = 0):
        return np.real(self.wave.potential_amplitude(x, z) * self._time_factor(t, d))

    def eta(self, x, t, d: int = 0):
        return np.real(self.wave.elevation_amplitude(x) * self._time_factor(t, d))

    def dphi_dz(self, x, z, t, d: int = 0):
        return np.real(self.wave.vertical_velocity_amplitude(x, z) * self._time_factor(t, d))


def airy_fields(wave: WaveInput) -> AiryFields:
    wave.validate()
    return AiryFields(wave)


def _sin2_integral(k, a, b):
    return 0.5 * (b - a) - (np.sin(2 * k * b) - np.sin(2 * k * a)) / (4 * k)


def _cos2_integral(k, a, b):
    return 0.5 * (b - a) + (np.sin(2 * k * b) - np.sin(2 * k * a)) / (4 * k)


def initial_energy_closed_form(wave: WaveInput, length: float, d0: float, D_rho: float,
                               structure: tuple[float, float] | None) -> float:
    """Energy of the progressive wave at ``t = 0`` in a periodic tank of length ``length``.

    The flow kinetic and potential energies are each ``¼ g η0² L``; the beam adds
    ``½ d0 ∫ η_t²`` and ``½ D_ρ ∫ η''²`` over its span.
    """
    a0, k, w, g = wave.amplitude, wave.wavenumber, wave.omega, wave.g
    e = 0.5 * g * a0 ** 2 * length
    if structure is not None:
        xl, xr = structure
        e += 0.5 * d0 * (a0 * w) ** 2 * _sin2_integral(k, xl, xr)
        e += 0.5 * D_rho * (a0 * k ** 2) ** 2 * _cos2_integral(k, xl, xr)
    return float(e)


# --------------------------------------------------------------------------- configuration

@dataclass(frozen=True)
class Discretization:
    nx: int
    nz: int
    grading: float = 1.0
    r_phi: int = 4
    r_kappa: int | None = None
    r_eta: int | None = None
    snap: bool = True

    @property
    def orders(self) -> tuple[int, int, int]:
        rk = self.r_phi if self.r_kappa is None else self.r_kappa
        re = self.r_phi if self.r_eta is None else self.r_eta
        return self.r_phi, rk, re


@dataclass(frozen=True)
class ModeConfig:
    """``kind="frequency"`` or ``kind="time"`` (then ``dt`` and ``t_final`` in seconds)."""

    kind: str = "frequency"
    dt: float | None = None
    t_final: float | None = None
    gamma_nb: float = 0.5
    beta_nb: float = 0.25
    forcing_ramp: float = 0.0

    @property
    def nsteps(self) -> int:
        n = self.t_final / self.dt
        return int(round(n))


@dataclass(frozen=True)
class OutputConfig:
    snapshot_every: int = 0
    energy: bool = False
    errors: bool = False
    error_times: tuple[float, ...] = ()
    envelope_window: tuple[float, float] | None = None
    gauges: bool = True
    vtk: bool = False
    csv: bool = True
    dump_matrix: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete declarative description of one run."""

    name: str
    geometry: GeometryConfig
    physics: PhysicalParams
    discretization: Discretization
    wave: WaveInput | None = None
    damping_mu0: float | None = None
    stabilization: StabilizationParams = StabilizationParams()
    mode: ModeConfig = ModeConfig()
    initial: str = "rest"
    outputs: OutputConfig = OutputConfig()
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ValidationError(f"unsupported schema version {self.schema_version}")
        self.geometry.validate()
        self.physics.validate(len(self.geometry.joints))
        self.stabilization.validate()
        if self.wave is not None:
            self.wave.validate()
            H_in = float(self.geometry.depth.depth(0.0))
            if abs(self.wave.depth - H_in) > 1e-12 * H_in:
                raise ValidationError(f"wave depth {self.wave.depth} differs from the inlet depth {H_in}")
        if self.initial not in ("rest", "airy"):
            raise ValidationError(f"unknown initial condition {self.initial!r}")
        if self.initial == "airy" and self.wave is None:
            raise ValidationError("an exact initial condition needs a wave")
        if self.damping_mu0 is not None:
            if self.wave is None:
                raise ValidationError("damping zones need a wave (μ2 = k μ1)")
            DampingZone.from_geometry(self.geometry, self.damping_mu0, self.wave.wavenumber).validate(
                self.geometry.structure)
        d = self.discretization
        if d.nx < 1 or d.nz < 1:
            raise ValidationError("nx and nz must be positive")
        rp, rk, re = d.orders
        if rp < 1 or rk < rp or re < rp or re < 2:
            raise ValidationError(f"invalid orders (phi={rp}, kappa={rk}, eta={re})")
        m = self.mode
        if m.kind not in ("frequency", "time"):
            raise ValidationError(f"unknown mode {m.kind!r}")
        if m.kind == "frequency" and self.wave is None:
            raise ValidationError("a frequency-domain run needs a wave")
        if m.kind == "time":
            if m.dt is None or m.t_final is None or not (m.dt > 0 and m.t_final >= 0):
                raise ValidationError("time mode needs positive dt and non-negative t_final")
        if self.outputs.errors and self.initial != "airy":
            raise ValidationError("error norms need the exact progressive-wave solution")

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "geometry": self.geometry.to_dict(),
            "physics": self.physics.to_dict(),
            "wave": None if self.wave is None else self.wave.to_dict(),
            "damping": None if self.damping_mu0 is None else {"mu0": self.damping_mu0},
            "discretization": _plain(self.discretization.__dict__),
            "stabilization": self.stabilization.to_dict(),
            "mode": _plain(self.mode.__dict__),
            "initial": self.initial,
            "outputs": _plain(self.outputs.__dict__),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        try:
            ver = int(d.get("schema_version", SCHEMA_VERSION))
            damping = d.get("damping")
            out = dict(d.get("outputs", {}))
            if out.get("envelope_window") is not None:
                out["envelope_window"] = tuple(out["envelope_window"])
            out["error_times"] = tuple(out.get("error_times", ()))
            return cls(
                name=str(d["name"]),
                geometry=GeometryConfig.from_dict(d["geometry"]),
                physics=PhysicalParams.from_dict(d["physics"]),
                discretization=Discretization(**d["discretization"]),
                wave=None if d.get("wave") is None else WaveInput.from_dict(d["wave"]),
                damping_mu0=None if damping is None else float(damping["mu0"]),
                stabilization=StabilizationParams(**d.get("stabilization", {})),
                mode=ModeConfig(**d.get("mode", {})),
                initial=str(d.get("initial", "rest")),
                outputs=OutputConfig(**out),
                schema_version=ver,
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed scenario configuration: {exc}") from None


def _plain(d: dict) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"configuration file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"configuration file {path} is not valid JSON: {exc}") from None
    return ScenarioConfig.from_dict(data)


def apply_overrides(config: ScenarioConfig, overrides) -> ScenarioConfig:
    """Apply ``dotted.key=value`` overrides; values are parsed as JSON when possible."""
    d = copy.deepcopy(config.to_dict())
    for item in overrides:
        if "=" not in item:
            raise ValidationError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        parts = key.strip().split(".")
        node, created = d, False
        for p in parts[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ValidationError(f"unknown configuration key {key!r}")
            if node[p] is None:
                node[p], created = {}, True
            node = node[p]
        if not isinstance(node, dict) or (parts[-1] not in node and not created):
            raise ValidationError(f"unknown configuration key {key!r}")
        node[parts[-1]] = value
    return ScenarioConfig.from_dict(d)


# --------------------------------------------------------------------------- built-in scenarios

def build_scenario(name: str, **kw) -> ScenarioConfig:
    """Pre-built configuration of a named experiment; keyword arguments tune it."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ValidationError(f"unknown scenario {name!r}; choose from {sorted(_BUILDERS)}") from None
    try:
        return builder(**kw)
    except TypeError as exc:
        raise ValidationError(f"scenario {name!r}: {exc}") from None


def _periodic(name, k=1.0, r=4, nx=20, nz=10, grading=1.0, dt=None, t_final=None, periods=1.0,
              steps_per_period=50, r_eta=None, finite=False, outputs=None, amplitude=0.01, penalty=None,
              beta=0.5, **extra):
    if extra:
        raise ValidationError(f"unknown parameters {sorted(extra)}")
    L, H, g = 2 * np.pi, 1.0, 9.81
    rho_w, rho_b, h_b = 1000.0, 100.0, 0.01
    wave = make_wave(amplitude, H, k=float(k), g=g)
    if abs(k * L / (2 * np.pi) - round(k * L / (2 * np.pi))) > 1e-12:
        raise ValidationError("the periodic tank needs an integer wavenumber")
    D = rho_b * h_b * wave.omega ** 2 / wave.wavenumber ** 4
    span = (0.5 * np.pi, 1.5 * np.pi) if finite else (0.0, L)
    geom = GeometryConfig(L, BathymetryProfile.constant(H), span, periodic=True)
    if dt is None:
        dt = wave.period / steps_per_period
    if t_final is None:
        t_final = periods * wave.period
    return ScenarioConfig(
        name=name, geometry=geom,
        physics=PhysicalParams(g=g, rho_w=rho_w, rho_b=rho_b, h_b=h_b, rigidity=(float(D),)),
        discretization=Discretization(int(nx), int(nz), float(grading), int(r), None, r_eta),
        wave=wave, stabilization=StabilizationParams(beta, penalty),
        mode=ModeConfig("time", float(dt), float(t_final)), initial="airy",
        outputs=outputs or OutputConfig(errors=True, energy=True, snapshot_every=max(1, round(t_final / dt) // 5),
                                        vtk=True))


def periodic_beam(**kw) -> ScenarioConfig:
    return _periodic("periodic_beam", **kw)


def finite_beam(**kw) -> ScenarioConfig:
    return _periodic("finite_beam", finite=True, **kw)


def khabakhpasheva(xi=0.0, mode="frequency", r=4, nx=80, nz=5, grading=0.2, beta_loc=0.2,
                   joint_reference_segment=0, mu0=2.5, periods=50, steps_per_period=40, ramp_periods=0.0,
                   amplitude=0.01, outputs=None) -> ScenarioConfig:
    """Two-segment beam with a joint, forced by an incident wave."""
    L, Lf, H, g = 12.5, 25.0, 1.1, 9.81
    Ld = L
    xl = Ld + 0.5 * (Lf - L)
    joint = xl + (1.0 - beta_loc) * L
    lam = 0.249 * L
    wave = make_wave(amplitude, H, k=2 * np.pi / lam, g=g)
    geom = GeometryConfig(2 * Ld + Lf, BathymetryProfile.constant(H), (xl, xl + L), (joint,),
                          damping_inlet=Ld, damping_outlet=Ld)
    physics = PhysicalParams(g=g, rho_w=1000.0, draft=8.1561e-3, rigidity=(47100.0, 471.0),
                             joint_xi=(float(xi),), joint_reference_segment=int(joint_reference_segment))
    T = wave.period
    if mode == "time":
        m = ModeConfig("time", T / steps_per_period, periods * T, forcing_ramp=ramp_periods * T)
        out = outputs or OutputConfig(envelope_window=(25 * T, 50 * T) if periods >= 50 else None)
    else:
        m = ModeConfig("frequency")
        out = outputs or OutputConfig()
    return ScenarioConfig("khabakhpasheva", geom, physics, Discretization(nx, nz, grading, r), wave, mu0,
                          StabilizationParams(), m, "rest", out)


def liu(omega=0.4, depth_right=30.0, r=4, nx=650, nz=5, grading=0.2, mu0=10.0, amplitude=1.0,
        outputs=None) -> ScenarioConfig:
    """Long beam over a seabed ramp from 60 m to ``depth_right`` under the structure."""
    L, Lf, Hl, g = 300.0, 1500.0, 60.0, 9.81
    Ld = 4 * L
    xl = Ld + 0.5 * (Lf - L)
    profile = BathymetryProfile.linear_ramp(Hl, float(depth_right), xl, xl + L)
    geom = GeometryConfig(2 * Ld + Lf, profile, (xl, xl + L), damping_inlet=Ld, damping_outlet=Ld)
    wave = make_wave(amplitude, Hl, omega=float(omega), g=g)
    physics = PhysicalParams(g=g, rho_w=1025.0, draft=0.4878, rigidity=(1e10,))
    return ScenarioConfig("liu", geom, physics, Discretization(nx, nz, grading, r), wave, mu0,
                          StabilizationParams(), ModeConfig("frequency"), "rest", outputs or OutputConfig())


_BUILDERS = {"periodic_beam": periodic_beam, "finite_beam": finite_beam, "khabakhpasheva": khabakhpasheva,
             "liu": liu}


# --------------------------------------------------------------------------- run driver

@dataclass
class Setup:
    """Mesh, spaces and assembled system of a configuration."""

    config: ScenarioConfig
    mesh: object
    spaces: FieldSpaces
    system: MonolithicSystem
    damping: DampingZone | None = None
    exact: AiryFields | None = None
    assembly_time: float = 0.0


def setup_scenario(config: ScenarioConfig) -> Setup:
    config.validate()
    t0 = time.perf_counter()
    d = config.discretization
    mesh = build_structured_mesh(config.geometry, d.nx, d.nz, d.grading, snap=d.snap)
    rp, rk, re = d.orders
    spaces = FieldSpaces(build_fespace(mesh, "volume", rp), build_fespace(mesh, "free_surface", rk),
                         build_fespace(mesh, "structure", re))
    damping = None
    if config.damping_mu0 is not None:
        damping = DampingZone.from_geometry(config.geometry, config.damping_mu0, config.wave.wavenumber)
    m = config.mode
    if m.kind == "time":
        mode = NewmarkParams(m.dt, m.gamma_nb, m.beta_nb)
    else:
        mode = FrequencyMode(config.wave.omega)
    system = MonolithicSystem(spaces, config.physics, config.stabilization, mode, config.wave, damping,
                              forcing_ramp=m.forcing_ramp)
    exact = AiryFields(config.wave) if config.initial == "airy" else None
    return Setup(config, mesh, spaces, system, damping, exact, time.perf_counter() - t0)


def run_scenario(config: ScenarioConfig, outdir=None, callback=None) -> RunResult:
    """Assemble and solve one configuration; deterministic given the config.

    :param outdir: when given and ``outputs.dump_matrix`` is set, the operator is
        written there in Matrix Market format.
    :param callback: optional ``callback(step, state)`` hook in time mode.
    """
    setup = setup_scenario(config)
    cfg_dict = config.to_dict()
    res = RunResult(config.name, config.mode.kind, cfg_dict, setup.spaces)
    res.metadata = {"config_hash": config_hash(cfg_dict), "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
                    "ndofs": setup.spaces.ndofs, "nx": setup.mesh.nx, "nz": setup.mesh.nz,
                    "assembly_seconds": setup.assembly_time}
    if outdir is not None and config.outputs.dump_matrix:
        dump_matrix_market(setup.system.matrix, Path(outdir) / f"{config.name}_operator.mtx")
    t0 = time.perf_counter()
    if config.mode.kind == "frequency":
        _run_frequency(setup, res)
    else:
        _run_time(setup, res, callback)
    res.metadata["solve_seconds"] = time.perf_counter() - t0
    res.metadata["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    return res


def _run_frequency(setup: Setup, res: RunResult) -> None:
    sysm = setup.system
    F = factorize(sysm.matrix)
    x = F.solve(sysm.forcing(), rtol=1e-8)
    res.solution = x
    res.residuals = {"max_relative_residual": F.max_residual, "nsolves": 1}
    eta_space = setup.spaces.eta
    order = np.argsort(eta_space.dof_coords[:, 0], kind="stable")
    res.gauge_x = eta_space.dof_coords[order, 0]
    eta = x[setup.spaces.slice(ETA)][order]
    res.gauges = eta[None, :]
    if setup.config.wave is not None and setup.config.wave.amplitude > 0:
        res.errors["max_abs_eta_rel"] = float(np.max(np.abs(eta), initial=0.0) / setup.config.wave.amplitude)


def _run_time(setup: Setup, res: RunResult, user_callback=None) -> None:
    cfg, sysm, spaces = setup.config, setup.system, setup.spaces
    out = cfg.outputs
    nsteps = cfg.mode.nsteps
    state = set_initial_conditions(spaces, setup.exact, 0.0)
    eta_sl = spaces.slice(ETA)
    order = np.argsort(spaces.eta.dof_coords[:, 0], kind="stable")
    res.gauge_x = spaces.eta.dof_coords[order, 0]
    g_times, g_vals, e_times, e_vals, snaps = [], [], [], [], []
    err_steps = {int(round(t / cfg.mode.dt)): t for t in out.error_times}

    def cb(n, s):
        if out.gauges:
            g_times.append(s.t)
            g_vals.append(s.x[eta_sl][order].copy())
        if out.energy:
            e_times.append(s.t)
            e_vals.append(energy(s, sysm))
        if out.snapshot_every and n % out.snapshot_every == 0:
            snaps.append((n, s.t, s.x.copy()))
        if setup.exact is not None and n in err_steps:
            res.errors[f"e_phi@{s.t:.6g}"], res.errors[f"e_eta@{s.t:.6g}"] = l2_errors(s, setup.exact, s.t)
        if user_callback is not None:
            user_callback(n, s)

    state, F = run_newmark(sysm, state, nsteps, callback=cb)
    res.state = state
    res.snapshots = snaps
    res.gauge_times = np.asarray(g_times)
    res.gauges = np.asarray(g_vals) if g_vals else np.zeros((0, len(res.gauge_x)))
    res.energy_times = np.asarray(e_times)
    res.energies = e_vals
    res.residuals = {"max_relative_residual": F.max_residual, "nsolves": nsteps}
    res.metadata["nsteps"] = nsteps
    if setup.exact is not None and out.errors:
        res.errors["e_phi"], res.errors["e_eta"] = l2_errors(state, setup.exact, state.t)
    if out.envelope_window is not None and out.gauges:
        res.errors["envelope"] = envelope(res.gauge_times, res.gauges, out.envelope_window)
