"""Random parameter draws for property sweeps and the verification scenarios."""

from __future__ import annotations

import math

import numpy as np

from .model import ModelParams, equilibrium_jacobian
from .spectral import SignalCoupling


def log_uniform(rng: np.random.Generator, lo: float, hi: float, size=None):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), size))


def random_kinetics(rng: np.random.Generator) -> ModelParams:
    """Positive reduced-kinetics parameters (alpha, xi bounded away from zero)."""
    return ModelParams(
        lambda_S=float(rng.uniform(0.1, 3.0)),
        lambda_R=float(rng.uniform(0.1, 3.0)),
        K=float(rng.uniform(1.0, 20.0)),
        alpha=float(rng.uniform(0.05, 2.0)),
        xi=float(rng.uniform(0.05, 2.0)),
    )


def random_diffusion_pair(rng: np.random.Generator, lo: float = 1e-3, hi: float = 10.0) -> tuple[float, float]:
    d = log_uniform(rng, lo, hi, 2)
    return float(d[0]), float(d[1])


def random_oneway_case(rng: np.random.Generator):
    """(params, J, eq, d_S, d_R, coupling, lam) for a damped one-way configuration."""
    params = random_kinetics(rng)
    eq, J = equilibrium_jacobian(params)
    d_S, d_R = random_diffusion_pair(rng)
    coupling = SignalCoupling(
        chi_S=float(rng.uniform(0.0, 5.0)),
        chi_R=float(rng.uniform(0.0, 5.0)),
        d_c=float(log_uniform(rng, 1e-2, 10.0)),
        rho=float(rng.uniform(0.05, 5.0)),
    )
    lam = float(log_uniform(rng, 1e-3, 1e3))
    return params, J, eq, d_S, d_R, coupling, lam


def random_twoway_case(rng: np.random.Generator):
    """(params, J, eq, d_S, d_R, coupling, lam) for a damped two-way configuration."""
    params = random_kinetics(rng)
    eq, J = equilibrium_jacobian(params)
    d_S, d_R = random_diffusion_pair(rng)
    coupling = SignalCoupling(
        chi_S=float(rng.uniform(0.0, 2.0)),
        chi_R=float(rng.uniform(0.0, 2.0)),
        d_c=float(log_uniform(rng, 1e-2, 10.0)),
        q=-float(rng.uniform(0.05, 5.0)),
        h_S=float(rng.uniform(-2.0, 2.0)),
        h_R=float(rng.uniform(-2.0, 2.0)),
    )
    lam = float(log_uniform(rng, 1e-2, 1e2))
    return params, J, eq, d_S, d_R, coupling, lam


def circle_points(rng: np.random.Generator, radius: float, n: int) -> np.ndarray:
    return radius * np.exp(1j * rng.uniform(0.0, 2.0 * math.pi, n))
