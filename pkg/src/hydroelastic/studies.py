"""Convergence, energy and parameter-sweep drivers built on the scenario runner."""
from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ValidationError
from .postprocess import convergence_slope
from .scenarios import (OutputConfig, ScenarioConfig, apply_overrides, build_scenario, initial_energy_closed_form,
                        run_scenario)


@dataclass
class StudyTable:
    """Rows of a study plus the fitted slopes of each error column."""

    name: str
    abscissa: str
    rows: list[dict] = field(default_factory=list)
    slopes: dict = field(default_factory=dict)

    def columns(self) -> dict:
        keys = list(self.rows[0]) if self.rows else [self.abscissa]
        return {k: [r[k] for r in self.rows] for k in keys}

    def fit(self, error_keys, group: str | None = None) -> dict:
        """Least-squares log-log slopes, optionally per value of a grouping column."""
        groups = {None: self.rows} if group is None else {}
        if group is not None:
            for r in self.rows:
                groups.setdefault(r[group], []).append(r)
        for g, rows in groups.items():
            for key in error_keys:
                pairs = [(r[self.abscissa], r[key]) for r in rows]
                label = key if g is None else f"{key}[{group}={g}]"
                self.slopes[label] = convergence_slope(pairs)
        return self.slopes


def spatial_convergence(k=15.0, orders=(2, 3, 4), nxs=(16, 32, 64, 128), dt=1e-6, t_final=1e-4,
                        r_eta=None, scenario="periodic_beam") -> StudyTable:
    """Mesh refinement at a time step small enough for the spatial error to dominate.

    ``r_eta`` fixes nothing by default (equal orders); give an integer to keep
    the potential at each ``orders`` entry while the elevation uses ``r_eta``.
    """
    table = StudyTable("converge_space", "h")
    for r in orders:
        for nx in nxs:
            cfg = build_scenario(scenario, k=k, r=r, r_eta=r_eta, nx=nx, nz=max(1, nx // 2), dt=dt,
                                 t_final=t_final, outputs=OutputConfig(errors=True, gauges=False, csv=False))
            res = run_scenario(cfg)
            L = cfg.geometry.length
            table.rows.append({"r": r, "r_eta": cfg.discretization.orders[2], "nx": nx, "h": L / nx,
                               "e_phi": res.errors["e_phi"], "e_eta": res.errors["e_eta"],
                               "residual": res.residuals["max_relative_residual"]})
    table.fit(("e_phi", "e_eta"), group="r")
    return table


def mixed_order_convergence(k=15.0, eta_orders=(2, 3, 4), r_phi=2, **kw) -> StudyTable:
    """Potential order fixed, elevation order varied."""
    table = StudyTable("converge_mixed", "h")
    for re in eta_orders:
        sub = spatial_convergence(k=k, orders=(r_phi,), r_eta=re, **kw)
        table.rows += sub.rows
    table.fit(("e_eta",), group="r_eta")
    return table


def temporal_convergence(k=1.0, r=4, nx=128, nz=64, dts=None, t_final=1.0, scenario="periodic_beam") -> StudyTable:
    """Time-step halving on a fixed mesh fine enough for the time error to dominate."""
    if dts is None:
        dts = [0.1 / 2 ** i for i in range(5)]
    table = StudyTable("converge_time", "dt")
    for dt in dts:
        cfg = build_scenario(scenario, k=k, r=r, nx=nx, nz=nz, dt=dt, t_final=t_final,
                             outputs=OutputConfig(errors=True, gauges=False, csv=False))
        if abs(cfg.mode.nsteps * dt - t_final) > 1e-9 * t_final:
            raise ValidationError(f"time step {dt} does not divide the final time {t_final}")
        res = run_scenario(cfg)
        table.rows.append({"dt": dt, "nsteps": cfg.mode.nsteps, "e_phi": res.errors["e_phi"],
                           "e_eta": res.errors["e_eta"], "residual": res.residuals["max_relative_residual"]})
    table.fit(("e_phi", "e_eta"))
    return table


@dataclass
class EnergyHistory:
    """Relative energy error ``e_E(t) = |E - E_h(t)| / E`` of one run."""

    nx: int
    dt: float
    times: np.ndarray
    e_E: np.ndarray
    e_E_discrete: np.ndarray
    E_closed_form: float
    E_initial: float
    length: float

    @property
    def max_error(self) -> float:
        return float(np.max(self.e_E))

    def trend(self):
        """Linear fit of ``e_E(t)``: ``(slope, standard error of the slope)``."""
        fit = stats.linregress(self.times, self.e_E)
        return float(fit.slope), float(fit.stderr)


def energy_history(scenario="periodic_beam", k=15.0, r=4, nx=16, dt=1e-3, periods=10.0, **kw) -> EnergyHistory:
    cfg = build_scenario(scenario, k=k, r=r, nx=nx, nz=max(1, nx // 2), dt=dt, periods=periods,
                         outputs=OutputConfig(energy=True, gauges=False, csv=False), **kw)
    res = run_scenario(cfg)
    g, p = cfg.geometry, cfg.physics
    E = initial_energy_closed_form(cfg.wave, g.length, p.d0, p.rigidity[0] / p.rho_w, g.structure)
    Et = np.array([e.E_total for e in res.energies])
    Ed = np.array([e.E_total_discrete for e in res.energies])
    return EnergyHistory(cfg.discretization.nx, dt, np.asarray(res.energy_times), np.abs(E - Et) / E,
                         np.abs(E - Ed) / E, E, float(Et[0]), g.length)


def energy_study(scenario="periodic_beam", k=15.0, r=4, nxs=(16, 32, 64, 128), dt=1e-3, periods=10.0,
                 case2_nx=128, case2_dts=(4e-3, 2e-3, 1e-3, 5e-4), case2_periods=1.0):
    """Case 1: mesh refinement at fixed ``dt``; case 2: ``dt`` sweep on one mesh.

    :returns: ``(case1, case2, histories)`` where the cases are :class:`StudyTable`.
    """
    case1 = StudyTable("energy_mesh", "h")
    hists = []
    for nx in nxs:
        h = energy_history(scenario, k, r, nx, dt, periods)
        slope, se = h.trend()
        hists.append(h)
        case1.rows.append({"nx": nx, "h": h.length / nx, "max_e_E": h.max_error,
                           "max_e_E_discrete": float(np.max(h.e_E_discrete)), "trend": slope, "trend_stderr": se,
                           "E_initial": h.E_initial, "E_closed_form": h.E_closed_form})
    case2 = StudyTable("energy_dt", "dt")
    for d in case2_dts:
        h = energy_history(scenario, k, r, case2_nx, d, case2_periods)
        case2.rows.append({"dt": d, "max_e_E": h.max_error, "max_e_E_discrete": float(np.max(h.e_E_discrete))})
    if len(case2.rows) >= 2:
        case2.fit(("max_e_E", "max_e_E_discrete"))
    return case1, case2, hists


def parameter_grid(spec: dict) -> list[dict]:
    """Cartesian product of ``{key: [values]}`` as a list of override dictionaries."""
    keys = list(spec)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(spec[k] for k in keys))]


def sweep(base: ScenarioConfig, grid: dict, threads: int = 1, runner=run_scenario) -> list:
    """Run ``base`` at every point of ``grid``; points are independent.

    :returns: list of ``(overrides, RunResult)`` in grid order.
    """
    points = parameter_grid(grid)
    configs = [apply_overrides(base, [f"{k}={json.dumps(v)}" for k, v in p.items()]) for p in points]
    if threads <= 1:
        results = [runner(c) for c in configs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(runner, configs))
    return list(zip(points, results))
