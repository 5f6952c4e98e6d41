"""Newmark-beta integration of the monolithic system.

With ``δ_t = γ/(βΔt)`` and ``δ_tt = 1/(βΔt²)`` the Newmark relations

    x^{n+1}    = xⁿ + Δt x_tⁿ + Δt² ((1/2 - β) x_ttⁿ + β x_tt^{n+1})
    x_t^{n+1}  = x_tⁿ + Δt ((1 - γ) x_ttⁿ + γ x_tt^{n+1})

are solved for the new derivatives:

    x_t^{n+1}  = δ_t  (x^{n+1} - xⁿ) + (1 - γ/β) x_tⁿ + Δt (1 - γ/(2β)) x_ttⁿ
    x_tt^{n+1} = δ_tt (x^{n+1} - xⁿ) - x_tⁿ/(βΔt) - (1/(2β) - 1) x_ttⁿ
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .forms import ETA, KAPPA, PHI, FieldSpaces, MonolithicSystem, assemble_rhs
from .solver import Factorization, factorize


@dataclass(frozen=True)
class NewmarkCoefficients:
    delta_t: float
    delta_tt: float
    #: weights of (xⁿ, x_tⁿ, x_ttⁿ) in the velocity update
    velocity: tuple[float, float, float]
    #: weights of (xⁿ, x_tⁿ, x_ttⁿ) in the acceleration update
    acceleration: tuple[float, float, float]


@dataclass(frozen=True)
class NewmarkParams:
    """Newmark-beta parameters; also acts as the time-domain solution mode."""

    dt: float
    gamma: float = 0.5
    beta: float = 0.25
    kind: str = field(default="time", init=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"time step must be positive, got {self.dt}")
        if not self.beta > 0:
            raise ValidationError(f"Newmark beta must be positive, got {self.beta}")
        if not self.gamma > 0:
            raise ValidationError(f"Newmark gamma must be positive, got {self.gamma}")

    @property
    def delta_t(self) -> float:
        return self.gamma / (self.beta * self.dt)

    @property
    def delta_tt(self) -> float:
        return 1.0 / (self.beta * self.dt ** 2)

    s1 = delta_t
    s2 = delta_tt

    @property
    def dtype(self):
        return np.float64

    def coefficients(self) -> NewmarkCoefficients:
        g, b, dt = self.gamma, self.beta, self.dt
        return NewmarkCoefficients(
            self.delta_t, self.delta_tt,
            (-self.delta_t, 1.0 - g / b, dt * (1.0 - g / (2.0 * b))),
            (-self.delta_tt, -1.0 / (b * dt), 1.0 - 1.0 / (2.0 * b)),
        )

    def history_terms(self, x, xt, xtt):
        """Known parts ``h_v``, ``h_a`` with ``x_t = δ_t x^{n+1} + h_v`` and ``x_tt = δ_tt x^{n+1} + h_a``."""
        c = self.coefficients()
        hv = c.velocity[0] * x + c.velocity[1] * xt + c.velocity[2] * xtt
        ha = c.acceleration[0] * x + c.acceleration[1] * xt + c.acceleration[2] * xtt
        return hv, ha


def newmark_coefficients(p: NewmarkParams) -> NewmarkCoefficients:
    return p.coefficients()


@dataclass(frozen=True)
class NewmarkState:
    """Monolithic value, velocity and acceleration vectors at time ``t``."""

    x: np.ndarray
    xt: np.ndarray
    xtt: np.ndarray
    t: float
    spaces: FieldSpaces | None = field(default=None, repr=False, compare=False)

    def field(self, name: str, derivative: int = 0) -> np.ndarray:
        vec = (self.x, self.xt, self.xtt)[derivative]
        return vec[self.spaces.slice(name)]

    @property
    def phi(self):
        return self.field(PHI)

    @property
    def kappa(self):
        return self.field(KAPPA)

    @property
    def eta(self):
        return self.field(ETA)

    @classmethod
    def zeros(cls, spaces: FieldSpaces, t: float = 0.0) -> "NewmarkState":
        n = spaces.ndofs
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), float(t), spaces)


def set_initial_conditions(spaces: FieldSpaces, exact=None, t0: float = 0.0) -> NewmarkState:
    """Initial state from a closed-form solution, or still water if ``exact`` is ``None``.

    ``exact`` must provide ``phi(x, z, t, d)`` and ``eta(x, t, d)`` where ``d``
    is the order of the time derivative; the same elevation function is used
    for the free surface and the structure.
    """
    if exact is None:
        return NewmarkState.zeros(spaces, t0)
    vecs = []
    for d in range(3):
        v = np.zeros(spaces.ndofs)
        v[spaces.slice(PHI)] = spaces.phi.interpolate(lambda x, z: exact.phi(x, z, t0, d))
        v[spaces.slice(KAPPA)] = spaces.kappa.interpolate(lambda x: exact.eta(x, t0, d))
        v[spaces.slice(ETA)] = spaces.eta.interpolate(lambda x: exact.eta(x, t0, d))
        vecs.append(v)
    return NewmarkState(vecs[0], vecs[1], vecs[2], float(t0), spaces)


def advance_step(state: NewmarkState, operator: Factorization, forms: MonolithicSystem,
                 p: NewmarkParams, rtol: float | None = None) -> NewmarkState:
    """One Newmark step: solve for ``x^{n+1}`` and update the derivatives."""
    rhs = assemble_rhs(forms, state.t + p.dt, state)
    x = operator.solve(rhs, rtol=rtol)
    hv, ha = p.history_terms(state.x, state.xt, state.xtt)
    xt = p.delta_t * x + hv
    xtt = p.delta_tt * x + ha
    return NewmarkState(x, xt, xtt, state.t + p.dt, state.spaces)


def run_newmark(system: MonolithicSystem, state: NewmarkState, nsteps: int, factorization=None,
                callback=None, rtol: float | None = 1e-8):
    """Integrate ``nsteps`` steps with one factorization of the step operator.

    :param callback: called as ``callback(step_index, state)`` after the initial
        state (index 0) and after every step.
    :returns: ``(final_state, factorization)``.
    """
    p = system.mode
    if p.kind != "time":
        raise ValidationError("run_newmark needs a system assembled in Newmark mode")
    F = factorize(system.matrix) if factorization is None else factorization
    if callback is not None:
        callback(0, state)
    for n in range(1, nsteps + 1):
        state = advance_step(state, F, system, p, rtol=rtol)
        if callback is not None:
            callback(n, state)
    return state, F


def scheme_defects(prev: NewmarkState, new: NewmarkState, p: NewmarkParams) -> tuple[float, float]:
    """Relative violation of the two Newmark relations between consecutive states."""
    dt, g, b = p.dt, p.gamma, p.beta
    x_pred = prev.x + dt * prev.xt + dt ** 2 * ((0.5 - b) * prev.xtt + b * new.xtt)
    v_pred = prev.xt + dt * ((1 - g) * prev.xtt + g * new.xtt)
    ex = np.linalg.norm(x_pred - new.x) / max(np.linalg.norm(new.x), 1e-300)
    ev = np.linalg.norm(v_pred - new.xt) / max(np.linalg.norm(new.xt), 1e-300)
    return float(ex), float(ev)
