"""Method-of-lines solver for the hybrid system on cell-centred Neumann grids.

Fields are held as one stacked array ``U[field, *cells]`` in the order
``S, R, D, P, A[, c]``.  Diffusion uses the 3-point (5-point in 2D) stencil
with reflected ghost cells; chemotaxis is a conservative face-flux
discretisation with arithmetic-mean face densities.  Time stepping is
classical RK4 with a fixed step.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DivergenceError, GridMismatchError, PositivityError
from .model import ModelParams, coexistence_equilibrium, reaction_terms
from .spectral import SignalCoupling, SpatialDomain

VARIANTS = ("core", "oneway", "twoway_full", "twoway_reduced")
FLUX_SCHEMES = ("central",)
BASE_FIELDS = ("S", "R", "D", "P", "A")
NEGATIVE_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    domain: SpatialDomain
    cells: tuple[int, ...]

    def __post_init__(self):
        cells = tuple(int(n) for n in np.atleast_1d(self.cells))
        if len(cells) == 1 and self.domain.dim == 2:
            cells = cells * 2
        if len(cells) != self.domain.dim:
            raise ValueError("one cell count per domain axis is required")
        if any(n < 8 for n in cells):
            raise ValueError("grids need at least 8 cells per axis")
        object.__setattr__(self, "cells", cells)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.domain.lengths, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple((np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing))

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    def check(self, arr: np.ndarray, what: str = "field") -> None:
        if np.shape(arr)[-self.dim:] != self.cells:
            raise GridMismatchError(f"{what} has shape {np.shape(arr)}, grid expects {self.cells}")


@dataclass
class FieldState:
    S: np.ndarray
    R: np.ndarray
    D: np.ndarray
    P: np.ndarray
    A: np.ndarray
    c: np.ndarray | None = None
    t: float = 0.0

    @property
    def names(self) -> tuple[str, ...]:
        return BASE_FIELDS + (("c",) if self.c is not None else ())

    def stack(self) -> np.ndarray:
        return np.stack([np.asarray(getattr(self, n), dtype=float) for n in self.names])

    @classmethod
    def from_stack(cls, U: np.ndarray, t: float) -> "FieldState":
        parts = [U[i].copy() for i in range(U.shape[0])]
        return cls(*parts[:5], c=parts[5] if len(parts) > 5 else None, t=t)

    def copy(self) -> "FieldState":
        return FieldState.from_stack(self.stack(), self.t)


@dataclass(frozen=True)
class InitialRecipe:
    """Uniform value (or ``"eq"``) + optional cosine mode + optional seeded noise."""

    value: float | str = 0.0
    mode: tuple[int, ...] | None = None
    amplitude: float = 0.0
    noise: float = 0.0


@dataclass(frozen=True)
class SolverConfig:
    t_end: float
    dt: float | None = None
    snapshot_every: float | None = None
    variant: str = "core"
    flux: str = "central"
    safety: float = 0.4
    initial: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError("t_end must be > 0")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.flux not in FLUX_SCHEMES:
            raise ValueError(f"flux scheme must be one of {FLUX_SCHEMES}")
        if not 0 < self.safety <= 1:
            raise ValueError("safety must be in (0, 1]")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.snapshot_every is not None and not self.snapshot_every > 0:
            raise ValueError("snapshot_every must be > 0")
        unknown = set(self.initial) - set(BASE_FIELDS + ("c",))
        if unknown:
            raise ValueError(f"unknown initial-condition fields: {sorted(unknown)}")

    @property
    def has_cue(self) -> bool:
        return self.variant in ("oneway", "twoway_full")


# --------------------------------------------------------------------------
# spatial operators
# --------------------------------------------------------------------------

def _lap(u: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """Neumann Laplacian over the trailing ``len(spacing)`` axes.

    Reflected ghost cells equal their boundary neighbour, so each boundary
    cell only sees its single interior neighbour.
    """
    nd = len(spacing)
    out = np.zeros_like(u)
    for k, h in enumerate(spacing):
        v = np.moveaxis(u, u.ndim - nd + k, -1)
        o = np.moveaxis(out, u.ndim - nd + k, -1)
        inv = 1.0 / (h * h)
        d = (v[..., 1:] - v[..., :-1]) * inv
        o[..., :-1] += d
        o[..., 1:] -= d
    return out


def _chemo(pop: np.ndarray, cue: np.ndarray, spacing: Sequence[float]) -> np.ndarray:
    """-div(pop grad cue) in conservative form, zero flux through the boundary."""
    nd = len(spacing)
    out = np.zeros_like(pop)
    for k, h in enumerate(spacing):
        ax = pop.ndim - nd + k
        n = pop.shape[ax]
        a = [slice(None)] * pop.ndim
        b = [slice(None)] * pop.ndim
        a[ax] = slice(0, n - 1)
        b[ax] = slice(1, n)
        mean = 0.5 * (pop[tuple(a)] + pop[tuple(b)])
        flux = mean * (cue[tuple(b)] - cue[tuple(a)]) / h
        pad = [(0, 0)] * pop.ndim
        pad[ax] = (1, 1)
        flux = np.pad(flux, pad)  # zero flux at both boundary faces
        hi = [slice(None)] * pop.ndim
        lo = [slice(None)] * pop.ndim
        hi[ax] = slice(1, None)
        lo[ax] = slice(None, -1)
        out -= (flux[tuple(hi)] - flux[tuple(lo)]) / h
    return out


def laplacian_neumann(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Second-order Neumann Laplacian of a gridded field."""
    u = np.asarray(values, dtype=float)
    if u.shape != grid.cells:
        raise GridMismatchError(f"field shape {u.shape} does not match grid {grid.cells}")
    return _lap(u, grid.spacing)


def chemotaxis_divergence(pop: np.ndarray, cue: np.ndarray, chi: float, grid: Grid) -> np.ndarray:
    """The transport term -chi div(pop grad cue)."""
    if chi < 0:
        raise ValueError("chi must be >= 0")
    p = np.asarray(pop, dtype=float)
    c = np.asarray(cue, dtype=float)
    if p.shape != grid.cells or c.shape != grid.cells:
        raise GridMismatchError(f"population {p.shape} / cue {c.shape} do not match grid {grid.cells}")
    if chi == 0:
        return np.zeros_like(p)
    return chi * _chemo(p, c, grid.spacing)


def _gradient_max(u: np.ndarray, spacing: Sequence[float]) -> float:
    nd = len(spacing)
    best = 0.0
    for k, h in enumerate(spacing):
        d = np.diff(u, axis=u.ndim - nd + k) / h
        if d.size:
            best = max(best, float(np.max(np.abs(d))))
    return best


# --------------------------------------------------------------------------
# method of lines
# --------------------------------------------------------------------------

class _System:
    """Right-hand side of one variant, bound to parameters and grid."""

    def __init__(self, params: ModelParams, coupling: SignalCoupling, config: SolverConfig, grid: Grid):
        self.p = params
        self.cp = coupling
        self.variant = config.variant
        self.grid = grid
        self.spacing = grid.spacing
        if self.variant == "twoway_full":
            coupling.require_twoway()
        if self.variant == "oneway":
            coupling.oneway_damping  # validates rho

    def cue(self, U: np.ndarray) -> np.ndarray | None:
        if self.variant in ("oneway", "twoway_full"):
            return U[5]
        if self.variant == "twoway_reduced":
            return self.cp.g_S * U[0] + self.cp.g_R * U[1]
        return None

    def __call__(self, U: np.ndarray) -> np.ndarray:
        p, cp = self.p, self.cp
        S, R, D, P, A = U[0], U[1], U[2], U[3], U[4]
        out = np.empty_like(U)
        gS, gR, gD, gP, gA = reaction_terms(S, R, D, P, A, p)
        lap = _lap(U[:3], self.spacing)
        out[0] = p.d_S * lap[0] + gS
        out[1] = p.d_R * lap[1] + gR
        out[2] = p.d_D * lap[2] + gD
        out[3] = gP
        out[4] = gA
        c = self.cue(U)
        if c is not None:
            if cp.chi_S:
                out[0] += cp.chi_S * _chemo(S, c, self.spacing)
            if cp.chi_R:
                out[1] += cp.chi_R * _chemo(R, c, self.spacing)
        if self.variant == "oneway":
            out[5] = cp.d_c * _lap(c, self.spacing) + cp.kappa * A - cp.rho * c
        elif self.variant == "twoway_full":
            out[5] = (cp.d_c * _lap(c, self.spacing) + cp.q * c + cp.h_S * S + cp.h_R * R) / cp.epsilon
        return out

    def stable_dt(self, U: np.ndarray, safety: float) -> float:
        p, cp = self.p, self.cp
        h2 = min(self.spacing) ** 2
        n = self.grid.dim
        d_max = max(p.d_S, p.d_R, p.d_D)
        if self.variant == "oneway":
            d_max = max(d_max, cp.d_c)
        elif self.variant == "twoway_full":
            d_max = max(d_max, cp.d_c / cp.epsilon)
        dt = safety * h2 / (2 * n * d_max)
        c = self.cue(U)
        chi = max(cp.chi_S, cp.chi_R) if c is not None else 0.0
        if chi > 0:
            speed = chi * _gradient_max(c, self.spacing)
            if speed > 0:
                dt = min(dt, safety * min(self.spacing) / speed)
        if self.variant == "twoway_full":
            dt = min(dt, safety * 2.5 * cp.epsilon / abs(cp.q))
        return dt


def _rk4(f: Callable[[np.ndarray], np.ndarray], U: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(U)
    k2 = f(U + 0.5 * dt * k1)
    k3 = f(U + 0.5 * dt * k2)
    k4 = f(U + dt * k3)
    return U + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _field_names(U: np.ndarray) -> tuple[str, ...]:
    return BASE_FIELDS + (("c",) if U.shape[0] > 5 else ())


def _validate(U: np.ndarray, t: float) -> None:
    finite = np.isfinite(U)
    if not finite.all():
        f, *cell = (int(i) for i in np.argwhere(~finite)[0])
        name = _field_names(U)[f]
        raise DivergenceError(f"non-finite {name} at cell {tuple(cell)}, t={t:g}", name, tuple(int(i) for i in cell))
    low = U < -NEGATIVE_TOL
    if low.any():
        f, *cell = (int(i) for i in np.argwhere(low)[0])
        name = _field_names(U)[f]
        raise PositivityError(
            f"{name} = {U[(f, *cell)]:.3e} at cell {tuple(cell)}, t={t:g} is below -{NEGATIVE_TOL:g}; reduce dt",
            name, tuple(int(i) for i in cell))


def step(state: FieldState, params: ModelParams, coupling: SignalCoupling, config: SolverConfig,
         grid: Grid, dt: float | None = None) -> FieldState:
    """One RK4 step of the active variant."""
    U = state.stack()
    grid.check(U, "state")
    needs_c = config.has_cue
    if needs_c != (state.c is not None):
        raise ValueError(f"variant {config.variant!r} {'needs' if needs_c else 'does not use'} a cue field c")
    system = _System(params, coupling, config, grid)
    h = dt if dt is not None else (config.dt or system.stable_dt(U, config.safety))
    U = _rk4(system, U, h)
    _validate(U, state.t + h)
    return FieldState.from_stack(U, state.t + h)


# --------------------------------------------------------------------------
# initial data and the spectral oracle for D
# --------------------------------------------------------------------------

def _cosine(grid: Grid, mode: Sequence[int]) -> np.ndarray:
    out = np.ones(grid.cells)
    for ax, (m, x, L) in enumerate(zip(mode, grid.mesh(), grid.domain.lengths)):
        out = out * np.cos(m * math.pi * x / L)
    return out


def _equilibrium_value(name: str, params: ModelParams, coupling: SignalCoupling, variant: str) -> float:
    eq = coexistence_equilibrium(params)
    if name == "S":
        return eq.S_star
    if name == "R":
        return eq.R_star
    if name in ("D", "A"):
        return 0.0
    if name == "c":
        if variant == "twoway_full":
            return -(coupling.h_S * eq.S_star + coupling.h_R * eq.R_star) / coupling.q
        return 0.0
    raise ValueError("P has no distinguished equilibrium value; give a number")


def initial_state(config: SolverConfig, params: ModelParams, coupling: SignalCoupling, grid: Grid) -> FieldState:
    """Build the t=0 fields from the config recipes (fields without a recipe start at 0)."""
    rng = np.random.default_rng(config.seed)
    names = BASE_FIELDS + (("c",) if config.has_cue else ())
    arrays = []
    for name in names:
        rec = config.initial.get(name, InitialRecipe())
        base = (_equilibrium_value(name, params, coupling, config.variant)
                if rec.value == "eq" else float(rec.value))
        u = np.full(grid.cells, base)
        if rec.mode is not None and rec.amplitude:
            mode = tuple(rec.mode) if np.ndim(rec.mode) else (int(rec.mode),)
            if len(mode) != grid.dim:
                raise ValueError(f"mode for {name} needs {grid.dim} indices")
            u = u + rec.amplitude * _cosine(grid, mode)
        # Always draw so that adding noise to one field does not shift another's stream.
        draw = rng.uniform(-1.0, 1.0, grid.cells)
        if rec.noise:
            u = u + rec.noise * draw
        arrays.append(u)
    return FieldState(*arrays[:5], c=arrays[5] if len(arrays) > 5 else None, t=0.0)


def spectral_D_oracle(D0_coeffs, params: ModelParams, t: float, grid: Grid) -> np.ndarray:
    """Exact damped-heat solution sum_k c_k exp(-(d_D lam_k + gamma_d) t) w_k on the grid.

    ``D0_coeffs`` holds ``(mode_indices, coefficient)`` pairs against the
    L2-normalised cosine eigenfunctions.
    """
    out = np.zeros(grid.cells)
    for mode, coef in D0_coeffs:
        mode = tuple(np.atleast_1d(mode).astype(int))
        if len(mode) != grid.dim:
            raise ValueError("mode indices must match the grid dimension")
        lam = sum((m * math.pi / L) ** 2 for m, L in zip(mode, grid.domain.lengths))
        norm = math.prod(math.sqrt((1.0 if m == 0 else 2.0) / L) for m, L in zip(mode, grid.domain.lengths))
        out += coef * norm * math.exp(-(params.d_D * lam + params.gamma_d) * t) * _cosine(grid, mode)
    return out


def integrate_damped_heat(D0: np.ndarray, params: ModelParams, grid: Grid, t_end: float,
                          dt: float | None = None, safety: float = 0.4) -> np.ndarray:
    """Advance D_t = d_D Lap D - gamma_d D alone with the solver's stencil and RK4.

    D does not see the other fields, so this is exactly the D row of the full
    system at a fraction of the cost.
    """
    D = np.array(D0, dtype=float)
    grid.check(D, "D0")
    p = params
    h_max = dt if dt is not None else safety * min(grid.spacing) ** 2 / (2 * grid.dim * p.d_D)
    n = max(1, math.ceil(t_end / h_max - 1e-9))
    h = t_end / n

    def f(u):
        return p.d_D * _lap(u, grid.spacing) - p.gamma_d * u

    for _ in range(n):
        D = _rk4(f, D, h)
    _validate(D[None], t_end)
    return D


# --------------------------------------------------------------------------
# runs
# --------------------------------------------------------------------------

@dataclass
class RunRecord:
    config: SolverConfig
    params: ModelParams
    coupling: SignalCoupling
    grid: Grid
    snapshots: list[FieldState] = field(default_factory=list)
    dt: float = 0.0
    steps: int = 0
    wall_time: float = 0.0
    status: str = "running"
    message: str = ""

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def series(self, name: str) -> np.ndarray:
        """Stack one field over all snapshots: shape ``(n_snap, *cells)``."""
        return np.stack([getattr(s, name) for s in self.snapshots])

    @property
    def final(self) -> FieldState:
        return self.snapshots[-1]


SnapshotCallback = Callable[[FieldState, RunRecord], None]


def run_simulation(config: SolverConfig, params: ModelParams, coupling: SignalCoupling, grid: Grid,
                   initial: FieldState | None = None,
                   callbacks: Sequence[SnapshotCallback] = ()) -> RunRecord:
    """Integrate to ``config.t_end`` with snapshots at the configured cadence.

    On divergence the error is re-raised with ``err.record`` holding every
    snapshot accepted so far.
    """
    state = initial if initial is not None else initial_state(config, params, coupling, grid)
    if config.has_cue != (state.c is not None):
        raise ValueError(f"variant {config.variant!r} and the initial cue field disagree")
    U = state.stack()
    grid.check(U, "initial state")
    _validate(U, state.t)
    system = _System(params, coupling, config, grid)
    dt_max = config.dt if config.dt is not None else system.stable_dt(U, config.safety)
    every = config.snapshot_every or config.t_end
    n_intervals = max(1, math.ceil(config.t_end / every - 1e-9))
    n_sub = max(1, math.ceil(every / dt_max - 1e-9))
    record = RunRecord(config, params, coupling, grid, dt=0.0)
    t0 = time.perf_counter()

    def emit(st: FieldState):
        record.snapshots.append(st)
        for cb in callbacks:
            cb(st, record)

    emit(FieldState.from_stack(U, state.t))
    t_start = state.t
    try:
        for j in range(n_intervals):
            t_a = t_start + j * every
            t_b = min(t_start + (j + 1) * every, t_start + config.t_end)
            h = (t_b - t_a) / n_sub
            record.dt = max(record.dt, h)
            for i in range(n_sub):
                U = _rk4(system, U, h)
                _validate(U, t_a + (i + 1) * h)
                record.steps += 1
            emit(FieldState.from_stack(U, t_b))
    except DivergenceError as err:
        record.status = "diverged"
        record.message = str(err)
        record.wall_time = time.perf_counter() - t0
        err.record = record
        raise
    record.status = "completed"
    record.wall_time = time.perf_counter() - t0
    return record


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

def snapshot_rows(state: FieldState, grid: Grid) -> tuple[list[str], np.ndarray]:
    coords = [m.ravel() for m in grid.mesh()]
    header = ["x", "y"][: grid.dim] + list(state.names)
    cols = coords + [np.asarray(getattr(state, n)).ravel() for n in state.names]
    return header, np.column_stack(cols)


def write_snapshot_csv(path: str | Path, state: FieldState, grid: Grid) -> Path:
    header, rows = snapshot_rows(state, grid)
    path = Path(path)
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=",".join(header), comments="")
    return path


def manifest_lines(record: RunRecord) -> list[str]:
    cfg = record.config
    lines = [
        f"variant = {cfg.variant}",
        f"cells = {'x'.join(str(n) for n in record.grid.cells)}",
        f"lengths = {','.join(repr(L) for L in record.grid.domain.lengths)}",
        f"t_end = {cfg.t_end!r}",
        f"dt_used = {record.dt!r}",
        f"steps = {record.steps}",
        f"snapshots = {len(record.snapshots)}",
        f"status = {record.status}",
        f"wall_time_s = {record.wall_time:.3f}",
    ]
    if record.message:
        lines.append(f"message = {record.message}")
    return lines


def with_dt(config: SolverConfig, dt: float | None) -> SolverConfig:
    return replace(config, dt=dt)
