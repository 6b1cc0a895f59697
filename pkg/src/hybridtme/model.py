"""Kinetics of the hybrid S/R/D/P/A model.

Response functions, the pointwise reaction terms of the full system, the
reduced (S, R) kinetics obtained once the inhibitory signal has decayed, its
coexistence equilibrium and Jacobian, and a fixed-step RK4 reference
integrator for the reduced flow.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np

from .errors import DegenerateParameterError, DomainError, InstabilityError

ArrayLike = float | np.ndarray

# Pluggable activation response: phi(D, params) -> values in [0, 1).
PhiFunction = Callable[[ArrayLike, "ModelParams"], ArrayLike]

_NONNEGATIVE = ("eta", "delta0", "theta", "beta", "alpha", "xi")


@dataclass(frozen=True)
class ModelParams:
    """Kinetic, diffusion and switching constants.

    Defaults are the documented desk-scale configuration: the reduced kinetics
    K=10, alpha=0.6, xi=0.4, lambda_S=1.5, lambda_R=1.0 plus artifact choices
    for the signal and switching constants.
    """

    d_S: float = 0.01
    d_R: float = 0.01
    d_D: float = 1.0
    lambda_S: float = 1.5
    lambda_R: float = 1.0
    K: float = 10.0
    alpha: float = 0.6
    xi: float = 0.4
    eta: float = 0.2
    delta0: float = 0.5
    K_D: float = 1.0
    gamma_d: float = 0.3
    theta: float = 0.7
    beta: float = 0.5
    K_phi: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite, got {value!r}")
            if f.name in _NONNEGATIVE:
                if value < 0:
                    raise ValueError(f"{f.name} must be >= 0, got {value!r}")
            elif value <= 0:
                raise ValueError(f"{f.name} must be > 0, got {value!r}")

    def replace(self, **changes) -> "ModelParams":
        data = asdict(self)
        data.update(changes)
        return ModelParams(**data)


@dataclass(frozen=True)
class PointState:
    S: float
    R: float
    D: float
    P: float
    A: float


@dataclass(frozen=True)
class Jacobian2:
    a: float
    b: float
    c: float
    d: float

    @property
    def trace(self) -> float:
        return self.a + self.d

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=float)


@dataclass(frozen=True)
class Equilibrium:
    S_star: float
    R_star: float
    c_star: float | None = None
    # True when alpha or xi vanishes and the state sits on a quadrant edge.
    boundary: bool = False


def _check_nonnegative(D: ArrayLike, name: str = "D") -> None:
    if np.any(np.asarray(D) < 0):
        raise DomainError(f"{name} must be >= 0")


def _delta(D, params: ModelParams):
    return params.delta0 * D / (D + params.K_D)


def hill_phi(D, params: ModelParams):
    """Default activation D / (D + K_phi): phi(0)=0, values in [0,1), Lipschitz 1/K_phi."""
    return D / (D + params.K_phi)


def delta_of(D: ArrayLike, params: ModelParams) -> ArrayLike:
    """Saturating inhibition rate delta0 * D / (D + K_D)."""
    _check_nonnegative(D)
    return _delta(D, params)


def phi_of(D: ArrayLike, params: ModelParams, phi: PhiFunction | None = None) -> ArrayLike:
    _check_nonnegative(D)
    return (phi or hill_phi)(D, params)


def reaction_terms(S, R, D, P, A, params: ModelParams, phi: PhiFunction | None = None):
    """Non-diffusive right-hand side of the full system, vectorised over arrays.

    Returns ``(G_S, G_R, G_D, G_P, G_A)``. The switching flux is computed once
    so that ``G_P + G_A`` cancels exactly.
    """
    p = params
    ph = (phi or hill_phi)(D, p)
    logistic = 1.0 - (S + R) / p.K
    back = p.xi * (1.0 - ph) * R
    G_S = p.lambda_S * S * logistic - p.alpha * S - _delta(D, p) * S + back
    G_R = p.lambda_R * R * logistic + p.alpha * S + p.eta * ph * A * R - back
    G_D = -p.gamma_d * D
    switch = p.theta * ph * P - p.beta * (1.0 - ph) * A
    return G_S, G_R, G_D, -switch, switch


def reaction_rhs(state: PointState, params: ModelParams, phi: PhiFunction | None = None) -> np.ndarray:
    values = (state.S, state.R, state.D, state.P, state.A)
    if not all(math.isfinite(v) for v in values):
        raise ValueError("state fields must be finite")
    return np.array(reaction_terms(*values, params, phi=phi), dtype=float)


def reduced_rhs(S: ArrayLike, R: ArrayLike, params: ModelParams):
    """Limiting (S, R) kinetics with the signal-mediated terms removed."""
    p = params
    logistic = 1.0 - (S + R) / p.K
    f_S = p.lambda_S * S * logistic - p.alpha * S + p.xi * R
    f_R = p.lambda_R * R * logistic + p.alpha * S - p.xi * R
    return f_S, f_R


def coexistence_equilibrium(params: ModelParams) -> Equilibrium:
    total = params.alpha + params.xi
    if total <= 0:
        raise DegenerateParameterError("alpha + xi must be > 0 for a coexistence equilibrium")
    S_star = params.xi * params.K / total
    R_star = params.alpha * params.K / total
    return Equilibrium(S_star, R_star, boundary=(params.alpha == 0 or params.xi == 0))


def reduced_jacobian(S: float, R: float, params: ModelParams) -> Jacobian2:
    p = params
    a = p.lambda_S * (1.0 - (2.0 * S + R) / p.K) - p.alpha
    b = -p.lambda_S * S / p.K + p.xi
    c = -p.lambda_R * R / p.K + p.alpha
    d = p.lambda_R * (1.0 - (S + 2.0 * R) / p.K) - p.xi
    return Jacobian2(a, b, c, d)


def equilibrium_jacobian(params: ModelParams) -> tuple[Equilibrium, Jacobian2]:
    eq = coexistence_equilibrium(params)
    return eq, reduced_jacobian(eq.S_star, eq.R_star, params)


def _rk4_reduced(S, R, params: ModelParams, dt: float):
    """One RK4 step on (S, R); works on floats or same-shape arrays."""
    k1s, k1r = reduced_rhs(S, R, params)
    k2s, k2r = reduced_rhs(S + 0.5 * dt * k1s, R + 0.5 * dt * k1r, params)
    k3s, k3r = reduced_rhs(S + 0.5 * dt * k2s, R + 0.5 * dt * k2r, params)
    k4s, k4r = reduced_rhs(S + dt * k3s, R + dt * k3r, params)
    return (S + dt / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s),
            R + dt / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r))


def _step_count(t_end: float, dt: float) -> tuple[int, float]:
    if dt <= 0 or t_end < 0:
        raise ValueError("need dt > 0 and t_end >= 0")
    n = max(1, math.ceil(t_end / dt - 1e-9)) if t_end > 0 else 0
    return n, (t_end / n if n else dt)


def reduced_flow(init, params: ModelParams, t_end: float, dt: float,
                 negative_tol: float = 1e-9) -> np.ndarray:
    """Advance one or many (S, R) states to ``t_end``; vectorised over leading axes.

    The step is shrunk slightly when ``dt`` does not divide ``t_end``.
    """
    y = np.array(init, dtype=float)
    n, h = _step_count(t_end, dt)
    S, R = y[..., 0].copy(), y[..., 1].copy()
    low = np.minimum(S, R)
    for i in range(n):
        S, R = _rk4_reduced(S, R, params, h)
        # running minimum every step, reported in batches to keep the loop lean
        low = np.minimum(low, np.minimum(S, R))
        if (i % 50 == 49 or i == n - 1) and not (low.min(initial=0.0) >= -negative_tol):
            raise InstabilityError(f"reduced ODE left the nonnegative quadrant by t={(i + 1) * h:g}; reduce dt")
    return np.stack([S, R], axis=-1)


def integrate_reduced_ode(init, params: ModelParams, t_end: float, dt: float,
                          negative_tol: float = 1e-9) -> np.ndarray:
    """Classical RK4 trajectory of the reduced kinetics.

    Returns an ``(n_steps + 1, 3)`` array of rows ``(t, S, R)``.
    """
    y = np.array(init, dtype=float)
    if y.shape != (2,):
        raise ValueError("init must be a pair (S0, R0)")
    if np.any(y < 0) or not np.any(y > 0):
        raise ValueError("init must be nonnegative and not the origin")
    n, h = _step_count(t_end, dt)
    rows = [(0.0, float(y[0]), float(y[1]))]
    S, R = rows[0][1], rows[0][2]
    for i in range(n):
        S, R = _rk4_reduced(S, R, params, h)
        if not (S >= -negative_tol and R >= -negative_tol and math.isfinite(S) and math.isfinite(R)):
            raise InstabilityError(f"reduced ODE left the nonnegative quadrant at t={(i + 1) * h:g}; reduce dt")
        rows.append(((i + 1) * h, S, R))
    return np.array(rows)
