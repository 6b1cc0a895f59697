"""Neumann modes, mode matrices and closed-form stability criteria.

Everything here works on a single Laplacian eigenvalue ``lam`` at a time (or
a vector of them).  Domains are intervals and rectangles, where Neumann
eigenpairs are cosine products.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConsistencyError,
    DampingSignError,
    InsufficientDataError,
    PairingError,
    PoleError,
)
from .model import Equilibrium, Jacobian2, ModelParams, equilibrium_jacobian

CLASSIFICATIONS = ("stable", "trace_unstable", "det_case_i", "det_case_ii", "det_case_iii")


# --------------------------------------------------------------------------
# domains and eigenmodes
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SpatialDomain:
    lengths: tuple[float, ...]

    def __post_init__(self):
        lengths = tuple(float(v) for v in np.atleast_1d(self.lengths))
        if len(lengths) not in (1, 2):
            raise ValueError("only intervals (N=1) and rectangles (N=2) are supported")
        if any(not (v > 0 and math.isfinite(v)) for v in lengths):
            raise ValueError("domain lengths must be positive and finite")
        object.__setattr__(self, "lengths", lengths)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))


@dataclass(frozen=True)
class EigenMode:
    lam: float
    indices: tuple[int, ...]
    rank: int
    lengths: tuple[float, ...]

    def evaluate(self, *coords: np.ndarray) -> np.ndarray:
        """L2-normalised eigenfunction at the given coordinates.

        For rectangles pass broadcastable ``x`` and ``y`` arrays.
        """
        if len(coords) != len(self.lengths):
            raise ValueError("number of coordinate arrays must match the domain dimension")
        out = 1.0
        for m, L, x in zip(self.indices, self.lengths, coords):
            norm = math.sqrt((1.0 if m == 0 else 2.0) / L)
            out = out * norm * np.cos(m * math.pi * np.asarray(x, dtype=float) / L)
        return np.asarray(out, dtype=float)


def _axis_eigenvalue(m: int, L: float) -> float:
    return (m * math.pi / L) ** 2


def enumerate_modes(domain: SpatialDomain, k_max: int) -> list[EigenMode]:
    """First ``k_max`` Neumann eigenpairs with multiplicity, sorted by eigenvalue."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if domain.dim == 1:
        (L,) = domain.lengths
        return [EigenMode(_axis_eigenvalue(m, L), (m,), m + 1, domain.lengths) for m in range(k_max)]

    Lx, Ly = domain.lengths
    # Grow the lattice box until the k_max smallest eigenvalues are certainly inside it.
    cutoff = (k_max + 1) * math.pi / (Lx * Ly) * 4.0 + _axis_eigenvalue(1, min(Lx, Ly))
    while True:
        mx = int(math.sqrt(cutoff) * Lx / math.pi) + 1
        my = int(math.sqrt(cutoff) * Ly / math.pi) + 1
        cand = [(_axis_eigenvalue(m, Lx) + _axis_eigenvalue(n, Ly), m, n)
                for m in range(mx + 1) for n in range(my + 1)]
        inside = [c for c in cand if c[0] <= cutoff]
        if len(inside) >= k_max:
            break
        cutoff *= 2.0
    inside.sort()
    return [EigenMode(lam, (m, n), k + 1, domain.lengths)
            for k, (lam, m, n) in enumerate(inside[:k_max])]


def weyl_check(modes: list[EigenMode], N: int, k_min: int = 5) -> tuple[float, float]:
    """Empirical constants (min, max) of lam_k / k^(2/N) over ranks k >= k_min."""
    if len(modes) < 10:
        raise InsufficientDataError("at least 10 modes are needed for a Weyl-ratio estimate")
    ratios = [m.lam / m.rank ** (2.0 / N) for m in modes if m.rank >= k_min]
    return float(min(ratios)), float(max(ratios))


# --------------------------------------------------------------------------
# couplings
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SignalCoupling:
    """Chemotactic sensitivities and cue-field coefficients.

    ``kappa``/``rho`` drive the one-way cue ``c_t = d_c c_xx + kappa A - rho c``;
    ``q``, ``h_S``, ``h_R`` the two-way cue ``eps c_t = d_c c_xx + q c + h(S, R)``
    with linear production ``h = h_S S + h_R R``; ``g_S``, ``g_R`` are the
    gradients of the local closure ``c ~ g(S, R)``.
    """

    chi_S: float = 0.0
    chi_R: float = 0.0
    d_c: float = 1.0
    kappa: float = 1.0
    rho: float = 0.5
    q: float = -0.5
    h_S: float = 0.0
    h_R: float = 0.0
    g_S: float = 0.0
    g_R: float = 0.0
    epsilon: float = 1.0
    Qprime_cstar: float | None = None

    def __post_init__(self):
        if self.chi_S < 0 or self.chi_R < 0:
            raise ValueError("chemotactic sensitivities must be >= 0")
        if not self.d_c > 0:
            raise ValueError("d_c must be > 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.Qprime_cstar is not None and not self.Qprime_cstar < 0:
            raise DampingSignError("Qprime_cstar must be < 0 (damped one-way cue)")

    @property
    def oneway_damping(self) -> float:
        """Q'(c*), falling back to -rho for the kappa*A - rho*c forcing."""
        if self.Qprime_cstar is not None:
            return self.Qprime_cstar
        if not self.rho > 0:
            raise DampingSignError("rho must be > 0 for one-way damping")
        return -self.rho

    def require_twoway(self) -> None:
        if not self.q < 0:
            raise DampingSignError(f"two-way cue needs q<0 (linear damping), got q={self.q!r}")


def closure_from_production(coupling: SignalCoupling) -> SignalCoupling:
    """Coupling whose local-closure gradients are g = -h/q."""
    from dataclasses import replace

    coupling.require_twoway()
    return replace(coupling, g_S=-coupling.h_S / coupling.q, g_R=-coupling.h_R / coupling.q)


# --------------------------------------------------------------------------
# small dense mode matrices
# --------------------------------------------------------------------------

def _quadratic_roots(b: complex, c: complex) -> tuple[complex, complex]:
    """Roots of z^2 + b z + c, avoiding cancellation."""
    disc = cmath.sqrt(b * b - 4.0 * c)
    if (b.conjugate() * disc).real >= 0:
        q = -0.5 * (b + disc)
    else:
        q = -0.5 * (b - disc)
    if q == 0:
        return 0j, 0j
    return q, c / q


def _real_cubic_root(p2: float, p1: float, p0: float) -> float:
    """One real root of z^3 + p2 z^2 + p1 z + p0 (Cardano start + Newton polish)."""
    shift = p2 / 3.0
    p = p1 - p2 * p2 / 3.0
    q = 2.0 * p2 ** 3 / 27.0 - p2 * p1 / 3.0 + p0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc >= 0:
        s = math.sqrt(disc)
        u = -q / 2.0 + (s if q <= 0 else -s)
        u = math.copysign(abs(u) ** (1.0 / 3.0), u)
        t = u - p / (3.0 * u) if u != 0 else 0.0
    else:
        r = math.sqrt(-p / 3.0)
        arg = max(-1.0, min(1.0, -q / (2.0 * r ** 3)))
        t = 2.0 * r * math.cos(math.acos(arg) / 3.0)
    z = t - shift
    for _ in range(50):
        f = ((z + p2) * z + p1) * z + p0
        df = (3.0 * z + 2.0 * p2) * z + p1
        if df == 0:
            break
        step = f / df
        z_new = z - step
        if abs(step) <= 1e-16 * max(1.0, abs(z_new)):
            z = z_new
            break
        z = z_new
    return z


@dataclass(frozen=True)
class ModeMatrix:
    """A 2x2 or 3x3 real mode matrix with closed-form spectrum."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.shape not in ((2, 2), (3, 3)):
            raise ValueError("mode matrices are 2x2 or 3x3")
        if not np.all(np.isfinite(m)):
            raise ValueError("mode matrix entries must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries))

    @property
    def det(self) -> float:
        return complex(self.char_poly(0.0) * (-1) ** self.dim).real

    @property
    def norm(self) -> float:
        return float(np.max(np.abs(self.entries)))

    def char_poly(self, mu: complex) -> complex:
        """det(mu I - M) by cofactor expansion."""
        B = mu * np.eye(self.dim) - self.entries
        if self.dim == 2:
            return B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
        return (B[0, 0] * (B[1, 1] * B[2, 2] - B[1, 2] * B[2, 1])
                - B[0, 1] * (B[1, 0] * B[2, 2] - B[1, 2] * B[2, 0])
                + B[0, 2] * (B[1, 0] * B[2, 1] - B[1, 1] * B[2, 0]))

    def eigenvalues(self, check: bool = True) -> np.ndarray:
        M = self.entries
        if self.dim == 2:
            roots = list(_quadratic_roots(complex(-self.trace), complex(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])))
        else:
            roots = self._cubic_roots()
        roots = np.array(sorted(roots, key=lambda z: (-z.real, z.imag)), dtype=complex)
        if check:
            bound = 1e-9 * (1.0 + self.norm ** 3)
            for mu in roots:
                res = abs(self.char_poly(mu))
                if res > bound * max(1.0, abs(mu)):
                    raise ConsistencyError(f"eigenvalue residual {res:.3e} exceeds {bound:.3e}")
        return roots

    def _cubic_roots(self) -> list[complex]:
        M = self.entries
        tr = float(np.trace(M))
        minors = (M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
                  + M[0, 0] * M[2, 2] - M[0, 2] * M[2, 0]
                  + M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
        det = -complex(self.char_poly(0.0)).real
        p2, p1, p0 = -tr, minors, -det
        r = _real_cubic_root(p2, p1, p0)
        b1 = p2 + r
        fwd = p1 + r * b1
        # Forward deflation is stable when r is the dominant root, backward otherwise.
        b0 = fwd if (r * r >= abs(fwd) or r == 0) else -p0 / r
        roots = [complex(r), *_quadratic_roots(complex(b1), complex(b0))]
        polished = []
        for z in roots:
            best, best_res = z, abs(self.char_poly(z))
            for _ in range(3):
                f = ((best + p2) * best + p1) * best + p0
                df = (3.0 * best + 2.0 * p2) * best + p1
                if df == 0:
                    break
                cand = best - f / df
                cand_res = abs(self.char_poly(cand))
                if cand_res < best_res:
                    best, best_res = cand, cand_res
                else:
                    break
            if abs(best.imag) <= 1e-14 * max(1.0, abs(best)):
                best = complex(best.real, 0.0)
            polished.append(best)
        return polished

    def max_real(self) -> float:
        return float(np.max(self.eigenvalues().real))


# --------------------------------------------------------------------------
# base reaction-diffusion block
# --------------------------------------------------------------------------

def base_dispersion(J: Jacobian2, d_S: float, d_R: float, lam):
    """Coefficients of mu^2 + a1 mu + a0 for J - lam diag(d_S, d_R), and max Re mu.

    ``lam`` may be a scalar or an array.
    """
    lam = np.asarray(lam, dtype=float)
    a1 = lam * (d_S + d_R) - J.trace
    a0 = d_S * d_R * lam ** 2 - (d_S * J.d + d_R * J.a) * lam + J.det
    disc = np.sqrt((a1 ** 2 - 4.0 * a0).astype(complex))
    mu_plus = ((-a1 + disc) / 2.0).real
    if lam.ndim == 0:
        return float(a1), float(a0), float(mu_plus)
    return a1, a0, mu_plus


def log_lambda_grid(lam_min: float = 1e-4, lam_max: float = 1e6, points: int = 400) -> np.ndarray:
    return np.logspace(math.log10(lam_min), math.log10(lam_max), points)


@dataclass
class NoTuringCertificate:
    stable: bool
    reason: str
    lam: np.ndarray
    a1: np.ndarray
    a0: np.ndarray
    mu_plus: np.ndarray

    @property
    def min_a0(self) -> float:
        return float(np.min(self.a0))

    @property
    def max_mu_plus(self) -> float:
        return float(np.max(self.mu_plus))


def no_turing_certificate(params: ModelParams, d_S: float, d_R: float,
                          lam_grid: np.ndarray | None = None) -> NoTuringCertificate:
    """Certify stability of every nonconstant mode of the base (S, R) block.

    The symbolic argument (a<0, d<0 at the equilibrium) is re-checked on a
    log-spaced eigenvalue grid; a numerical contradiction raises.
    """
    if not (d_S > 0 and d_R > 0):
        raise ValueError("diffusion coefficients must be > 0")
    _, J = equilibrium_jacobian(params)
    if not (J.a < 0 and J.d < 0 and J.det > 0):
        raise ConsistencyError(f"equilibrium Jacobian lost its sign structure: {J}")
    lam = log_lambda_grid() if lam_grid is None else np.asarray(lam_grid, dtype=float)
    a1, a0, mu = base_dispersion(J, d_S, d_R, lam)
    lower = d_S * d_R * lam ** 2 + J.det
    if not (np.all(a1 > 0) and np.all(a0 > 0) and np.all(mu < 0) and np.all(a0 >= lower * (1 - 1e-12))):
        raise ConsistencyError("dispersion grid contradicts the sign argument")
    reason = (f"a={J.a:.6g}<0 and d={J.d:.6g}<0 at the equilibrium, so a1(lam) > lam(d_S+d_R) > 0 "
              f"and a0(lam) >= d_S d_R lam^2 + det(J) with det(J)={J.det:.6g} > 0 for every lam > 0")
    return NoTuringCertificate(True, reason, lam, np.asarray(a1), np.asarray(a0), np.asarray(mu))


# --------------------------------------------------------------------------
# two-way feedback via the local closure
# --------------------------------------------------------------------------

def mobility_correction(coupling: SignalCoupling, eq: Equilibrium) -> np.ndarray:
    """Rank-one matrix (chi_S S*, chi_R R*)^T (g_S, g_R)."""
    col = np.array([coupling.chi_S * eq.S_star, coupling.chi_R * eq.R_star])
    row = np.array([coupling.g_S, coupling.g_R])
    return np.outer(col, row)


def twoway_mode_matrix(J: Jacobian2, d_S: float, d_R: float, H: np.ndarray, lam: float) -> ModeMatrix:
    return ModeMatrix(J.as_array() - lam * (np.diag([d_S, d_R]) - np.asarray(H, dtype=float)))


def det_quadratic(J: Jacobian2, d_S: float, d_R: float, coupling: SignalCoupling,
                  eq: Equilibrium) -> tuple[float, float, float]:
    """(A1, A2, det J) with det A(lam) = A1 lam^2 + A2 lam + det J."""
    a, b, c, d = J.a, J.b, J.c, J.d
    fS_gS = coupling.chi_S * coupling.g_S * eq.S_star
    fS_gR = coupling.chi_S * coupling.g_R * eq.S_star
    fR_gS = coupling.chi_R * coupling.g_S * eq.R_star
    fR_gR = coupling.chi_R * coupling.g_R * eq.R_star
    A1 = d_S * d_R - d_S * fR_gR - d_R * fS_gS
    A2 = -a * d_R - d * d_S + a * fR_gR + d * fS_gS - b * fR_gS - c * fS_gR
    return A1, A2, J.det


@dataclass(frozen=True)
class TraceData:
    """Kinetic trace plus the pieces the trace test and regime report need."""

    trace_J: float
    d_S: float
    d_R: float
    feedback_S: float  # chi_S g_S S*
    feedback_R: float  # chi_R g_R R*

    @property
    def slope(self) -> float:
        """Coefficient of lam in tr A(lam)."""
        return self.feedback_S + self.feedback_R - self.d_S - self.d_R


def trace_data(J: Jacobian2, d_S: float, d_R: float, coupling: SignalCoupling, eq: Equilibrium) -> TraceData:
    return TraceData(J.trace, d_S, d_R,
                     coupling.chi_S * coupling.g_S * eq.S_star,
                     coupling.chi_R * coupling.g_R * eq.R_star)


@dataclass
class StabilityVerdict:
    kinetically_stable: bool
    classification: str | None
    A1: float
    A2: float
    detJ: float
    unstable_interval: tuple[float, float] | None = None
    trace_condition: bool = False
    trace_threshold: float | None = None
    regimes: frozenset[str] = frozenset()
    per_mode: list[tuple[int, float, float]] = field(default_factory=list)
    unstable_modes: list[EigenMode] = field(default_factory=list)

    def summary_lines(self) -> list[str]:
        lo_hi = ("none" if self.unstable_interval is None
                 else f"{self.unstable_interval[0]:.17g},{self.unstable_interval[1]:.17g}")
        lines = [
            f"kinetically_stable = {str(self.kinetically_stable).lower()}",
            f"classification = {self.classification}",
            f"A1 = {self.A1:.17g}",
            f"A2 = {self.A2:.17g}",
            f"detJ = {self.detJ:.17g}",
            f"unstable_interval = {lo_hi}",
            f"trace_condition = {str(self.trace_condition).lower()}",
            f"regimes = {','.join(sorted(self.regimes)) or 'none'}",
        ]
        if self.unstable_modes:
            idx = ";".join("x".join(str(i) for i in m.indices) for m in self.unstable_modes)
            lines.append(f"unstable_mode_indices = {idx}")
        return lines


def _degenerate_A1(A1: float, td: TraceData) -> bool:
    scale = max(td.d_S * td.d_R, abs(td.d_S * td.feedback_R), abs(td.d_R * td.feedback_S))
    return abs(A1) <= 1e-12 * scale


def _positive_root_desc(A1: float, A2: float, detJ: float) -> float:
    """Single positive root of A1 x^2 + A2 x + detJ when A1 < 0 < detJ."""
    disc = math.sqrt(A2 * A2 - 4.0 * A1 * detJ)
    q = -0.5 * (A2 + math.copysign(disc, A2))
    roots = [q / A1, detJ / q] if q != 0 else [math.sqrt(-detJ / A1)]
    return max(roots)


def classify_instability(A1: float, A2: float, detJ: float, td: TraceData) -> StabilityVerdict:
    """Trace/determinant classification of nonconstant-mode instability.

    Determinant cases take precedence; ``trace_unstable`` is reported only when
    no determinant case applies (``trace_condition`` is always filled in).
    """
    if not (detJ > 0 and td.trace_J < 0):
        return StabilityVerdict(False, None, A1, A2, detJ)

    trace_cond = td.slope > 0
    trace_thr = -td.trace_J / td.slope if trace_cond else None
    regimes = set()
    if td.feedback_S > td.d_S or td.feedback_R > td.d_R:
        regimes.add("S1")
    if td.feedback_S / td.d_S + td.feedback_R / td.d_R > 1:
        regimes.add("S2")

    interval = None
    if _degenerate_A1(A1, td):
        if A2 < 0:
            classification = "det_case_ii"
            interval = (-detJ / A2, math.inf)
            regimes.add("S3")
        else:
            classification = None
    elif A1 < 0:
        classification = "det_case_i"
        interval = (_positive_root_desc(A1, A2, detJ), math.inf)
    elif A2 < 0 and A2 * A2 - 4.0 * A1 * detJ > 0:
        classification = "det_case_iii"
        disc = math.sqrt(A2 * A2 - 4.0 * A1 * detJ)
        q = -0.5 * (A2 - disc)  # A2 < 0, so q > 0 with no cancellation
        r1, r2 = detJ / q, q / A1
        interval = (min(r1, r2), max(r1, r2))
        regimes.add("S4")
    else:
        classification = None

    if classification is None:
        classification = "trace_unstable" if trace_cond else "stable"
    return StabilityVerdict(True, classification, A1, A2, detJ, interval,
                            trace_cond, trace_thr, frozenset(regimes))


def mu_plus_twoway(J: Jacobian2, d_S: float, d_R: float, H: np.ndarray, lam) -> np.ndarray:
    """max Re eig of J - lam (D - H), vectorised over ``lam``."""
    lam = np.asarray(lam, dtype=float)
    E = np.diag([d_S, d_R]) - np.asarray(H, dtype=float)
    tr = J.trace - lam * np.trace(E)
    A = J.as_array()
    m00 = A[0, 0] - lam * E[0, 0]
    m01 = A[0, 1] - lam * E[0, 1]
    m10 = A[1, 0] - lam * E[1, 0]
    m11 = A[1, 1] - lam * E[1, 1]
    det = m00 * m11 - m01 * m10
    disc = np.sqrt((tr ** 2 - 4.0 * det).astype(complex))
    return ((tr + disc) / 2.0).real


def assess_twoway(J: Jacobian2, d_S: float, d_R: float, coupling: SignalCoupling,
                  eq: Equilibrium, modes: list[EigenMode] | None = None) -> StabilityVerdict:
    """Continuous-lam verdict, then intersected with a concrete mode lattice."""
    A1, A2, detJ = det_quadratic(J, d_S, d_R, coupling, eq)
    verdict = classify_instability(A1, A2, detJ, trace_data(J, d_S, d_R, coupling, eq))
    if modes:
        H = mobility_correction(coupling, eq)
        for m in modes:
            mu = twoway_mode_matrix(J, d_S, d_R, H, m.lam).max_real()
            verdict.per_mode.append((m.rank, m.lam, mu))
            if m.lam > 0 and _lam_unstable(verdict, m.lam):
                verdict.unstable_modes.append(m)
    return verdict


def _lam_unstable(verdict: StabilityVerdict, lam: float) -> bool:
    if verdict.unstable_interval is not None:
        lo, hi = verdict.unstable_interval
        if lo < lam < hi:
            return True
    return verdict.trace_threshold is not None and lam > verdict.trace_threshold


def dispersion_rows(J: Jacobian2, d_S: float, d_R: float, H: np.ndarray | None, lam) -> np.ndarray:
    """Rows (lam, trace, det, mu_plus) of the 2x2 mode matrix along ``lam``."""
    lam = np.asarray(lam, dtype=float)
    H = np.zeros((2, 2)) if H is None else np.asarray(H, dtype=float)
    E = np.diag([d_S, d_R]) - H
    A = J.as_array()
    tr = J.trace - lam * np.trace(E)
    det = ((A[0, 0] - lam * E[0, 0]) * (A[1, 1] - lam * E[1, 1])
           - (A[0, 1] - lam * E[0, 1]) * (A[1, 0] - lam * E[1, 0]))
    return np.column_stack([lam, tr, det, mu_plus_twoway(J, d_S, d_R, H, lam)])


# --------------------------------------------------------------------------
# cue-field 3x3 systems
# --------------------------------------------------------------------------

@dataclass
class OnewaySpectrum:
    matrix: ModeMatrix
    eigenvalues: np.ndarray
    block_eigenvalues: np.ndarray
    signal_eigenvalue: float
    mismatch: float


def _match_spectra(a: np.ndarray, b: np.ndarray) -> float:
    """Max distance under the best one-to-one pairing (sizes <= 3)."""
    from itertools import permutations

    best = math.inf
    for perm in permutations(range(len(b))):
        best = min(best, max(abs(a[i] - b[j]) for i, j in enumerate(perm)))
    return best


def oneway_mode_spectrum(J: Jacobian2, d_S: float, d_R: float, coupling: SignalCoupling,
                         eq: Equilibrium, lam: float, tol: float = 1e-10) -> OnewaySpectrum:
    """Block upper-triangular one-way mode matrix and its spectrum."""
    Qp = coupling.oneway_damping
    M = np.zeros((3, 3))
    M[:2, :2] = J.as_array() - lam * np.diag([d_S, d_R])
    M[0, 2] = coupling.chi_S * eq.S_star * lam
    M[1, 2] = coupling.chi_R * eq.R_star * lam
    M[2, 2] = Qp - lam * coupling.d_c
    mm = ModeMatrix(M)
    eig = mm.eigenvalues()
    block = ModeMatrix(M[:2, :2]).eigenvalues()
    union = np.concatenate([block, [complex(M[2, 2])]])
    mismatch = _match_spectra(eig, union)
    scale = 1.0 + max(abs(z) for z in union)
    if mismatch > tol * scale:
        raise ConsistencyError(f"3x3 spectrum differs from block spectra by {mismatch:.3e}")
    return OnewaySpectrum(mm, eig, block, float(M[2, 2]), mismatch)


def full_twoway_mode_matrix(J: Jacobian2, d_S: float, d_R: float, coupling: SignalCoupling,
                            eq: Equilibrium, lam: float, epsilon: float = 1.0) -> ModeMatrix:
    """3x3 mode matrix of the linearised (S, R, c) system; third row scaled by 1/epsilon."""
    coupling.require_twoway()
    M = np.zeros((3, 3))
    M[:2, :2] = J.as_array() - lam * np.diag([d_S, d_R])
    M[0, 2] = coupling.chi_S * eq.S_star * lam
    M[1, 2] = coupling.chi_R * eq.R_star * lam
    M[2] = np.array([coupling.h_S, coupling.h_R, coupling.q - coupling.d_c * lam]) / epsilon
    return ModeMatrix(M)


def _feedback_column(coupling: SignalCoupling, eq: Equilibrium) -> np.ndarray:
    return np.array([coupling.chi_S * eq.S_star, coupling.chi_R * eq.R_star])


def effective_mode_matrix(base_block: np.ndarray, coupling: SignalCoupling, eq: Equilibrium,
                          lam: float, mu: complex) -> np.ndarray:
    """Schur complement of the cue row: (J - lam D) + lam/(mu - (q - d_c lam)) b h^T."""
    pole = coupling.q - coupling.d_c * lam
    if abs(mu - pole) <= 1e-14 * max(1.0, abs(pole)):
        raise PoleError(f"mu={mu!r} sits on the cue eigenvalue q - d_c lam = {pole!r}")
    outer = np.outer(_feedback_column(coupling, eq), [coupling.h_S, coupling.h_R])
    return np.asarray(base_block, dtype=complex) + lam / (mu - pole) * outer


def schur_factorization_residual(M: ModeMatrix, lam: float, coupling: SignalCoupling,
                                 eq: Equilibrium, mu: complex) -> float:
    """|det(mu I - M) - (mu - (q - d_c lam)) det(mu I - A_eff(mu; lam))|."""
    A_eff = effective_mode_matrix(M.entries[:2, :2], coupling, eq, lam, mu)
    B = mu * np.eye(2) - A_eff
    factored = (mu - (coupling.q - coupling.d_c * lam)) * (B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0])
    return float(abs(M.char_poly(mu) - factored))


def schur_scale(M: ModeMatrix, mu: complex) -> float:
    """Magnitude scale for Schur residuals: sum of the cofactor-expansion term sizes."""
    B = np.abs(mu * np.eye(3) - M.entries)
    return float(np.sum([B[0, i] * B[1, j] * B[2, k]
                         for i, j, k in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))]))


def qss_closure(J: Jacobian2, d_S: float, d_R: float, coupling: SignalCoupling, eq: Equilibrium,
                lam: float) -> tuple[tuple[float, float], ModeMatrix]:
    """Local closure gradients g = -h/q and the quasi-steady 2x2 mode matrix."""
    if not coupling.q < 0:
        raise DampingSignError(f"quasi-steady elimination needs q<0, got q={coupling.q!r}")
    g = (-coupling.h_S / coupling.q, -coupling.h_R / coupling.q)
    outer = np.outer(_feedback_column(coupling, eq), [coupling.h_S, coupling.h_R])
    A = J.as_array() - lam * np.diag([d_S, d_R]) - lam / (coupling.q - coupling.d_c * lam) * outer
    return g, ModeMatrix(A)


@dataclass
class EpsConvergence:
    eps: np.ndarray
    gaps: np.ndarray
    order: float
    fast_eigenvalues: np.ndarray
    fast_predicted: np.ndarray
    qss_eigenvalues: np.ndarray

    def rows(self) -> np.ndarray:
        return np.column_stack([self.eps, self.gaps, self.fast_eigenvalues.real, self.fast_predicted])


def eps_spectrum_convergence(J: Jacobian2, d_S: float, d_R: float, coupling: SignalCoupling,
                             eq: Equilibrium, lam: float, eps_list) -> EpsConvergence:
    """Gap between the slow 3x3 eigenvalues and the quasi-steady spectrum as eps -> 0."""
    eps = np.asarray(eps_list, dtype=float)
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValueError("eps_list must be positive and strictly decreasing")
    _, A_qss = qss_closure(J, d_S, d_R, coupling, eq, lam)
    target = A_qss.eigenvalues()
    gaps, fast = [], []
    for e in eps:
        eig = full_twoway_mode_matrix(J, d_S, d_R, coupling, eq, lam, epsilon=e).eigenvalues()
        fast_idx = int(np.argmax(np.abs(eig - target[0]) + np.abs(eig - target[1])))
        slow = np.delete(eig, fast_idx)
        pairs = [abs(slow[0] - target[0]) + abs(slow[1] - target[1]),
                 abs(slow[0] - target[1]) + abs(slow[1] - target[0])]
        if abs(pairs[0] - pairs[1]) <= 1e-12 * (1.0 + np.max(np.abs(target))) and pairs[0] > 1e-12:
            raise PairingError(f"cannot pair slow eigenvalues at eps={e:g}: targets coalesce")
        if pairs[0] <= pairs[1]:
            gap = max(abs(slow[0] - target[0]), abs(slow[1] - target[1]))
        else:
            gap = max(abs(slow[0] - target[1]), abs(slow[1] - target[0]))
        gaps.append(gap)
        fast.append(eig[fast_idx])
    gaps = np.array(gaps)
    positive = gaps > 0
    if positive.sum() >= 2:
        order = float(np.polyfit(np.log(eps[positive]), np.log(gaps[positive]), 1)[0])
    else:
        order = math.inf
    predicted = (coupling.q - coupling.d_c * lam) / eps
    return EpsConvergence(eps, gaps, order, np.array(fast), predicted, target)
