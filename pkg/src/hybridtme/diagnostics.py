"""Checks on run records: conservation, decay, modal growth and convergence."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import Equilibrium, ModelParams, _delta, hill_phi
from .solver import Grid, RunRecord
from .spectral import EigenMode

DEFAULT_TOLERANCES = {
    "pa_drift": 1e-12,
    "d_max_slack": 1e-12,
    "d_decay_factor": 1e-6,
    "negativity": 1e-9,
}


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    bound: float
    # pass iff measured <sense> bound, sense in {le, lt, ge, gt, eq}
    sense: str = "le"

    @property
    def margin(self) -> float:
        if self.sense in ("le", "lt"):
            return self.bound - self.measured
        if self.sense in ("ge", "gt"):
            return self.measured - self.bound
        return -abs(self.measured - self.bound)


_SENSES = {
    "le": lambda m, b: m <= b,
    "lt": lambda m, b: m < b,
    "ge": lambda m, b: m >= b,
    "gt": lambda m, b: m > b,
    "eq": lambda m, b: m == b,
}


def make_check(name: str, measured: float, bound: float, sense: str = "le") -> Check:
    measured = float(measured)
    ok = _SENSES[sense](measured, bound)
    finite = math.isfinite(measured) or (sense in ("ge", "gt") and measured == math.inf)
    return Check(name, bool(ok and finite), measured, float(bound), sense)


@dataclass
class DiagnosticsReport:
    checks: list[Check] = field(default_factory=list)
    series: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def extend(self, other: "DiagnosticsReport") -> None:
        self.checks.extend(other.checks)
        self.series.update(other.series)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def rows(self) -> list[str]:
        out = ["name,pass,measured,bound"]
        for c in self.checks:
            out.append(f"{c.name},{str(c.passed).lower()},{c.measured:.17g},{c.bound:.17g}")
        return out

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text("\n".join(self.rows()) + "\n")
        return path


# --------------------------------------------------------------------------
# structural identities
# --------------------------------------------------------------------------

def _l2(u: np.ndarray, grid: Grid) -> float:
    return math.sqrt(float(np.sum(u * u)) * grid.cell_volume)


def check_conservation_suite(record: RunRecord, tolerances: dict | None = None) -> DiagnosticsReport:
    """P+A conservation, D maximum principle, D energy decay and nonnegativity."""
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    snaps = record.snapshots
    if len(snaps) < 2:
        raise ValueError("conservation checks need at least two snapshots")
    report = DiagnosticsReport()
    first = snaps[0]

    total0 = first.P + first.A
    scale = float(np.max(np.abs(total0)))
    drift = np.array([float(np.max(np.abs(s.P + s.A - total0))) for s in snaps])
    rel = drift / scale if scale > 0 else drift
    report.series["pa_drift"] = rel
    report.add(make_check("pa_drift", rel.max(), tol["pa_drift"]))

    d_max0 = float(np.max(first.D))
    excess = np.array([float(np.max(s.D)) - d_max0 for s in snaps])
    report.series["d_max_excess"] = excess
    report.add(make_check("d_max_principle", excess.max(), tol["d_max_slack"]))

    gamma = record.params.gamma_d
    n0 = _l2(first.D, record.grid)
    if n0 > 0:
        ratios = np.array([_l2(s.D, record.grid) / (math.exp(-gamma * (s.t - first.t)) * n0) for s in snaps])
    else:
        ratios = np.array([_l2(s.D, record.grid) for s in snaps])
    report.series["d_decay_ratio"] = ratios
    report.add(make_check("d_l2_decay", ratios.max(), 1.0 + tol["d_decay_factor"]))

    lows = np.array([min(float(np.min(getattr(s, n))) for n in s.names) for s in snaps])
    report.series["min_field"] = lows
    report.add(make_check("nonnegativity", lows.min(), -tol["negativity"], sense="ge"))
    return report


@dataclass
class ResidualSeries:
    times: np.ndarray
    delta_S: np.ndarray
    phi_R: np.ndarray
    phiA_R: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.delta_S + self.phi_R + self.phiA_R

    def tail_envelope(self) -> np.ndarray:
        """sup over t' >= t of the summed residual, for every snapshot time t."""
        return np.maximum.accumulate(self.total[::-1])[::-1]


def residual_coupling_norms(record: RunRecord, params: ModelParams | None = None) -> ResidualSeries:
    """Sup norms of the D-mediated terms of the S and R equations per snapshot."""
    if record.config.variant != "core":
        raise ValueError(f"residual coupling norms need a core-variant run, got {record.config.variant!r}")
    p = params or record.params
    t, dS, pR, paR = [], [], [], []
    for s in record.snapshots:
        phi = hill_phi(s.D, p)
        r_inf = float(np.max(np.abs(s.R)))
        t.append(s.t)
        dS.append(float(np.max(np.abs(_delta(s.D, p) * s.S))))
        pR.append(float(np.max(np.abs(phi))) * r_inf)
        paR.append(float(np.max(np.abs(phi * s.A))) * r_inf)
    return ResidualSeries(np.array(t), np.array(dS), np.array(pR), np.array(paR))


def check_residual_decay(series: ResidualSeries, final_bound: float = 1e-4,
                         t_compare: float = 40.0, factor: float = 1e2) -> DiagnosticsReport:
    report = DiagnosticsReport(series={"residual_total": series.total})
    env = series.tail_envelope()
    report.add(make_check("residual_envelope_increase", float(np.max(np.diff(env), initial=0.0)), 0.0))
    report.add(make_check("residual_final", float(series.total[-1]), final_bound))
    i = int(np.argmin(np.abs(series.times - t_compare)))
    start = series.total[0]
    # a run without D never had a residual to shed
    drop = start / series.total[i] if series.total[i] > 0 else math.inf
    report.add(make_check("residual_drop_factor", drop, factor, sense="ge"))
    return report


# --------------------------------------------------------------------------
# modal projection and growth fits
# --------------------------------------------------------------------------

def mode_amplitude(values: np.ndarray, mode: EigenMode, grid: Grid) -> float:
    """Midpoint-rule L2 inner product with the normalised eigenfunction."""
    if tuple(mode.lengths) != tuple(grid.domain.lengths):
        raise ValueError("mode and grid live on different domains")
    w = mode.evaluate(*grid.mesh())
    return float(np.sum(np.asarray(values) * w) * grid.cell_volume)


def mode_amplitudes(values: np.ndarray, modes: list[EigenMode], grid: Grid) -> np.ndarray:
    basis = np.stack([m.evaluate(*grid.mesh()).ravel() for m in modes])
    return basis @ np.asarray(values).ravel() * grid.cell_volume


@dataclass(frozen=True)
class WindowPolicy:
    """Where a log-linear growth fit is taken.

    Auto mode keeps the first contiguous run of samples whose amplitude lies in
    ``[lower_factor * a(0), upper_fraction * scale]``; explicit ``t_min``/``t_max``
    override it.
    """

    lower_factor: float = 10.0
    upper_fraction: float = 0.01
    scale: float | None = None
    t_min: float | None = None
    t_max: float | None = None
    min_samples: int = 10

    def describe(self) -> str:
        if self.t_min is not None or self.t_max is not None:
            return f"explicit t in [{self.t_min}, {self.t_max}]"
        upper = "inf" if self.scale is None else f"{self.upper_fraction:g}*{self.scale:.6g}"
        return f"auto amplitude in [{self.lower_factor:g}*a0, {upper}]"


@dataclass(frozen=True)
class GrowthFit:
    mode: int | None
    window: tuple[float, float]
    sigma: float
    r2: float
    n_samples: int
    grew: bool
    predicted: float | None = None

    @property
    def valid(self) -> bool:
        return self.grew and self.r2 >= 0.99 and self.n_samples >= 10

    @property
    def rel_error(self) -> float | None:
        if self.predicted is None or self.predicted == 0:
            return None
        return abs(self.sigma - self.predicted) / abs(self.predicted)


def _linfit(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    A = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


def fit_growth_rate(times, amplitudes, policy: WindowPolicy = WindowPolicy(),
                    mode: int | None = None, predicted: float | None = None) -> GrowthFit:
    """Least-squares exponential rate of ``|amplitude|`` inside the policy window.

    When the window is empty the result is flagged ``grew=False`` and carries
    the decay rate of the last ``min_samples`` points.
    """
    t = np.asarray(times, dtype=float)
    a = np.abs(np.asarray(amplitudes, dtype=float))
    if t.shape != a.shape or t.size < 2:
        raise ValueError("times and amplitudes must be equal-length series")
    if np.any(a <= 0):
        raise ValueError("amplitudes must be nonzero for a log fit")

    if policy.t_min is not None or policy.t_max is not None:
        lo = -math.inf if policy.t_min is None else policy.t_min - 1e-12
        hi = math.inf if policy.t_max is None else policy.t_max + 1e-12
        sel = np.flatnonzero((t >= lo) & (t <= hi))
        explicit = True
    else:
        upper = math.inf if policy.scale is None else policy.upper_fraction * policy.scale
        ok = (a >= policy.lower_factor * a[0]) & (a <= upper)
        idx = np.flatnonzero(ok)
        if idx.size:
            # first contiguous block only; later re-entries are saturation artefacts
            breaks = np.flatnonzero(np.diff(idx) > 1)
            sel = idx[: breaks[0] + 1] if breaks.size else idx
        else:
            sel = idx
        explicit = False

    if sel.size >= policy.min_samples:
        sigma, r2 = _linfit(t[sel], np.log(a[sel]))
        grew = sigma > 0 if explicit else True
        return GrowthFit(mode, (float(t[sel[0]]), float(t[sel[-1]])), sigma, r2, int(sel.size), grew, predicted)

    tail = np.arange(max(0, t.size - policy.min_samples), t.size)
    sigma, r2 = _linfit(t[tail], np.log(a[tail]))
    return GrowthFit(mode, (float(t[tail[0]]), float(t[tail[-1]])), sigma, r2, int(tail.size), False, predicted)


@dataclass
class DominantMode:
    fitted_index: int
    raw_index: int
    indices: np.ndarray
    rates: np.ndarray
    final_amplitudes: np.ndarray


def dominant_mode(record: RunRecord, field_name: str, baseline: float, indices, t_min: float,
                  t_max: float) -> DominantMode:
    """Dominant cosine index of a 1D run: argmax of fitted linear-regime rates.

    The raw index (largest amplitude at the final snapshot) is returned too; it
    depends on the random phases of the seed when neighbouring rates are close.
    """
    grid = record.grid
    if grid.dim != 1:
        raise ValueError("dominant_mode works on 1D runs")
    idx = np.asarray(list(indices), dtype=int)
    (L,) = grid.domain.lengths
    modes = [EigenMode((m * math.pi / L) ** 2, (int(m),), int(m) + 1, grid.domain.lengths) for m in idx]
    amps = np.array([mode_amplitudes(getattr(s, field_name) - baseline, modes, grid) for s in record.snapshots])
    t = record.times
    policy = WindowPolicy(t_min=t_min, t_max=t_max, min_samples=5)
    rates = np.array([fit_growth_rate(t, amps[:, j], policy).sigma for j in range(len(idx))])
    final = np.abs(amps[-1])
    return DominantMode(int(idx[np.argmax(rates)]), int(idx[np.argmax(final)]), idx, rates, final)


# --------------------------------------------------------------------------
# convergence to the coexistence state
# --------------------------------------------------------------------------

def distance_series(source, eq: Equilibrium) -> tuple[np.ndarray, np.ndarray]:
    """Sup-norm distance to (S*, R*) from a run record or an ODE trajectory array."""
    if isinstance(source, RunRecord):
        t = source.times
        d = np.array([max(float(np.max(np.abs(s.S - eq.S_star))), float(np.max(np.abs(s.R - eq.R_star))))
                      for s in source.snapshots])
        return t, d
    traj = np.asarray(source, dtype=float)
    if traj.ndim != 2 or traj.shape[1] != 3 or traj.shape[0] == 0:
        raise ValueError("trajectory must be a nonempty (n, 3) array of (t, S, R)")
    d = np.maximum(np.abs(traj[:, 1] - eq.S_star), np.abs(traj[:, 2] - eq.R_star))
    return traj[:, 0], d


def equilibrium_convergence(source, eq: Equilibrium, tol: float, slack: float = 1e-12) -> DiagnosticsReport:
    """Terminal distance check plus a monotone-tail check after the last local maximum.

    Rises no larger than ``slack`` (roundoff jitter near the floor) do not count
    as local maxima.  A series that is still rising at its final sample has no
    tail and fails.
    """
    t, d = distance_series(source, eq)
    report = DiagnosticsReport(series={"time": t, "distance": d})
    report.add(make_check("terminal_distance", d[-1], tol))
    rises = np.flatnonzero(np.diff(d) > slack)
    start = int(rises[-1]) + 1 if rises.size else 0
    if start == len(d) - 1 and start > 0:
        worst = float(d[-1] - d[-2])
    else:
        worst = float(np.max(np.diff(d[start:]), initial=0.0))
    report.add(make_check("tail_monotone", worst, slack))
    report.series["tail_start"] = np.array([t[start]])
    return report


def mode_energy_series(record: RunRecord, baselines: dict[str, float], modes: list[EigenMode]) -> np.ndarray:
    """sqrt(sum over fields of a_k^2) per snapshot and mode, shape ``(n_snap, n_modes)``."""
    out = np.zeros((len(record.snapshots), len(modes)))
    for i, s in enumerate(record.snapshots):
        for name, base in baselines.items():
            out[i] += mode_amplitudes(getattr(s, name) - base, modes, record.grid) ** 2
    return np.sqrt(out)


def check_mode_decay(record: RunRecord, baselines: dict[str, float], modes: list[EigenMode],
                     transient: float, floor_rel: float = 1e-8) -> DiagnosticsReport:
    """Every listed mode's energy is nonincreasing after ``transient``.

    Samples below ``floor_rel`` times the largest initial energy sit at the
    roundoff floor and are ignored.
    """
    E = mode_energy_series(record, baselines, modes)
    t = record.times
    floor = floor_rel * float(np.max(E[0])) if E.size else 0.0
    after = E[t >= transient - 1e-12]
    rises = np.diff(after, axis=0)
    rises[after[1:] <= floor] = 0.0
    worst = float(np.max(rises, initial=0.0))
    offenders = int(np.count_nonzero((rises > 0).any(axis=0)))
    report = DiagnosticsReport(series={"mode_energy": E})
    report.add(make_check("mode_energy_max_rise", worst, 0.0))
    report.add(make_check("modes_with_rise", offenders, 0))
    live = after[0] > floor
    factor = float(np.max(after[-1, live] / after[0, live], initial=0.0))
    report.add(make_check("mode_energy_decay_factor", factor, 1.0, "lt"))
    return report
