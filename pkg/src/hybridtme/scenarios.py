"""Scenario runners behind ``hybridtme run``.

Each runner takes a resolved :class:`ScenarioConfig` and an output
directory, writes its CSV artefacts and returns the checks it evaluated.
Runners never decide the exit status themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig
from .diagnostics import (
    DiagnosticsReport,
    WindowPolicy,
    check_conservation_suite,
    check_mode_decay,
    check_residual_decay,
    distance_series,
    dominant_mode,
    equilibrium_convergence,
    fit_growth_rate,
    make_check,
    mode_amplitudes,
    residual_coupling_norms,
)
from .errors import ConsistencyError, PairingError
from .model import equilibrium_jacobian
from .sampling import circle_points, random_diffusion_pair, random_oneway_case, random_twoway_case
from .solver import (
    Grid,
    RunRecord,
    integrate_damped_heat,
    run_simulation,
    spectral_D_oracle,
    write_snapshot_csv,
)
from .spectral import (
    EigenMode,
    assess_twoway,
    base_dispersion,
    det_quadratic,
    dispersion_rows,
    enumerate_modes,
    eps_spectrum_convergence,
    full_twoway_mode_matrix,
    log_lambda_grid,
    mobility_correction,
    mu_plus_twoway,
    no_turing_certificate,
    oneway_mode_spectrum,
    qss_closure,
    schur_factorization_residual,
    schur_scale,
    twoway_mode_matrix,
    weyl_check,
)


@dataclass
class ScenarioResult:
    report: DiagnosticsReport = field(default_factory=DiagnosticsReport)
    files: list[Path] = field(default_factory=list)
    summary: list[str] = field(default_factory=list)
    record: RunRecord | None = None


def write_csv(path: Path, header: list[str], rows) -> Path:
    """Numeric table with 17 significant digits; string cells are written as-is."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else f"{float(v):.17g}" for v in row) + "\n")
    return path


def _write_text(path: Path, lines: list[str]) -> Path:
    path.write_text("\n".join(lines) + "\n")
    return path


def _snapshots(cfg: ScenarioConfig, record: RunRecord, out: Path, res: ScenarioResult) -> None:
    policy = cfg["output.snapshots"]
    if policy == "none" or not record.snapshots:
        return
    chosen = record.snapshots if policy == "all" else [record.snapshots[-1]]
    for i, snap in enumerate(chosen):
        tag = f"{i:04d}" if policy == "all" else "final"
        res.files.append(write_snapshot_csv(out / f"snapshot_{tag}.csv", snap, record.grid))


def _cosine_modes(grid: Grid, indices) -> list[EigenMode]:
    (L,) = grid.domain.lengths
    return [EigenMode((m * math.pi / L) ** 2, (int(m),), int(m) + 1, grid.domain.lengths) for m in indices]


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------

def no_turing_scan(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    res = ScenarioResult()
    rng = np.random.default_rng(cfg.seed)
    eq, J = equilibrium_jacobian(cfg.params)
    lam = log_lambda_grid(cfg["scan.lambda_min"], cfg["scan.lambda_max"], cfg["scan.points"])
    rows, worst_mu, min_a1, min_a0 = [], -math.inf, math.inf, math.inf
    certified = True
    for i in range(cfg["scan.pairs"]):
        d_S, d_R = random_diffusion_pair(rng, cfg["scan.d_min"], cfg["scan.d_max"])
        a1, a0, mu = base_dispersion(J, d_S, d_R, lam)
        try:
            cert = no_turing_certificate(cfg.params, d_S, d_R, lam)
            reason = cert.reason
        except ConsistencyError as err:
            certified, reason = False, f"contradiction: {err}"
        worst_mu, min_a1, min_a0 = max(worst_mu, mu.max()), min(min_a1, a1.min()), min(min_a0, a0.min())
        rows.append((i + 1, d_S, d_R, a1.min(), a0.min(), mu.max()))
        res.files.append(write_csv(out / f"dispersion_pair{i + 1:02d}.csv", ["lambda", "trace", "det", "mu_plus"],
                                   dispersion_rows(J, d_S, d_R, None, lam)))
    res.files.append(write_csv(out / "pairs.csv", ["pair", "d_S", "d_R", "min_a1", "min_a0", "max_mu_plus"], rows))
    rep = res.report
    rep.add(make_check("max_mu_plus", worst_mu, 0.0, "lt"))
    rep.add(make_check("min_a1", min_a1, 0.0, "gt"))
    rep.add(make_check("min_a0", min_a0, 0.0, "gt"))
    rep.add(make_check("certificate", float(certified), 1.0, "eq"))
    res.summary = [f"equilibrium = {eq.S_star!r},{eq.R_star!r}", f"pairs = {cfg['scan.pairs']}",
                   f"max_mu_plus = {worst_mu:.17g}", f"reason = {reason}"]
    return res


def oneway_suppression(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    res = ScenarioResult()
    rng = np.random.default_rng(cfg.seed)
    rows, worst_gap, worst_re = [], 0.0, -math.inf
    for i in range(cfg["scan.samples"]):
        _, J, eq, d_S, d_R, coupling, lam = random_oneway_case(rng)
        spec = oneway_mode_spectrum(J, d_S, d_R, coupling, eq, lam, tol=math.inf)
        max_re = float(spec.eigenvalues.real.max())
        worst_gap, worst_re = max(worst_gap, spec.mismatch), max(worst_re, max_re)
        rows.append((i + 1, lam, max_re, spec.mismatch))
    res.files.append(write_csv(out / "spectra.csv", ["sample", "lambda", "max_re", "union_mismatch"], rows))
    rep = res.report
    rep.add(make_check("union_mismatch", worst_gap, cfg["checks.union_tol"]))
    rep.add(make_check("max_re_spectrum", worst_re, 0.0, "lt"))

    grid = cfg.grid
    record = run_simulation(cfg.solver, cfg.params, cfg.coupling, grid)
    res.record = record
    eq, _ = equilibrium_jacobian(cfg.params)
    modes = [m for m in enumerate_modes(grid.domain, cfg["domain.modes"]) if m.lam > 0]
    decay = check_mode_decay(record, {"S": eq.S_star, "R": eq.R_star}, modes,
                             cfg["analysis.transient"], cfg["checks.decay_floor"])
    rep.extend(decay)
    E = decay.series["mode_energy"]
    res.files.append(write_csv(out / "mode_energy.csv",
                               ["t"] + ["k" + "_".join(str(i) for i in m.indices) for m in modes],
                               np.column_stack([record.times, E])))
    _snapshots(cfg, record, out, res)
    res.summary = [f"samples = {cfg['scan.samples']}", f"max_re_spectrum = {worst_re:.17g}",
                   f"union_mismatch = {worst_gap:.17g}", f"dt_used = {record.dt!r}"]
    return res


def twoway_criteria(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    res = ScenarioResult()
    p, cp = cfg.params, cfg.coupling
    eq, J = equilibrium_jacobian(p)
    modes = enumerate_modes(cfg.domain, cfg["domain.modes"])
    verdict = assess_twoway(J, p.d_S, p.d_R, cp, eq, modes)
    H = mobility_correction(cp, eq)
    A1, A2, detJ = det_quadratic(J, p.d_S, p.d_R, cp, eq)

    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for lam in np.exp(rng.uniform(math.log(1e-3), math.log(1e3), 20)):
        direct = twoway_mode_matrix(J, p.d_S, p.d_R, H, lam).det
        poly = A1 * lam * lam + A2 * lam + detJ
        worst = max(worst, abs(direct - poly) / max(abs(direct), abs(detJ)))
    rep = res.report
    rep.add(make_check("det_quadratic_agreement", worst, cfg["checks.det_rel"]))

    unstable = {m.rank for m in verdict.unstable_modes}
    mismatches = 0
    rows = []
    for k, lam, mu in verdict.per_mode:
        flag = k in unstable
        if lam > 0 and abs(mu) > 1e-12 and (mu > 0) != flag:
            mismatches += 1
        idx = next(m.indices for m in modes if m.rank == k)
        rows.append((str(k), ";".join(str(i) for i in idx), lam, mu, "true" if flag else "false"))
    rep.add(make_check("lattice_consistency", mismatches, 0))
    res.files.append(write_csv(out / "modes.csv", ["k", "indices", "lambda", "mu_plus", "unstable"], rows))
    lam_grid = log_lambda_grid(cfg["scan.lambda_min"], cfg["scan.lambda_max"], cfg["scan.points"])
    res.files.append(write_csv(out / "dispersion.csv", ["lambda", "trace", "det", "mu_plus"],
                               dispersion_rows(J, p.d_S, p.d_R, H, lam_grid)))
    res.summary = verdict.summary_lines()
    if verdict.trace_threshold is not None:
        res.summary.append(f"trace_threshold = {verdict.trace_threshold:.17g}")
    res.files.append(_write_text(out / "verdict.txt", res.summary))
    return res


def twoway_simulate(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    res = ScenarioResult()
    p, cp = cfg.params, cfg.coupling
    grid = cfg.grid
    if grid.dim != 1:
        raise ValueError("twoway-simulate analyses 1D runs")
    eq, J = equilibrium_jacobian(p)
    record = run_simulation(cfg.solver, p, cp, grid)
    res.record = record
    name = cfg["analysis.field"]
    base = eq.S_star if name == "S" else eq.R_star
    (L,) = grid.domain.lengths

    def predicted(m: int) -> float:
        lam = (m * math.pi / L) ** 2
        if cfg.solver.variant == "twoway_full":
            return full_twoway_mode_matrix(J, p.d_S, p.d_R, cp, eq, lam, cp.epsilon).max_real()
        return float(mu_plus_twoway(J, p.d_S, p.d_R, mobility_correction(cp, eq), lam))

    rep = res.report
    if cfg["analysis.kind"] == "growth":
        m = cfg["analysis.mode"]
        amps = np.array([mode_amplitudes(getattr(s, name) - base, _cosine_modes(grid, [m]), grid)[0]
                         for s in record.snapshots])
        scale = base * math.sqrt(grid.domain.volume)
        policy = WindowPolicy(scale=scale, t_min=cfg["analysis.t_min"], t_max=cfg["analysis.t_max"])
        fit = fit_growth_rate(record.times, amps, policy, mode=m, predicted=predicted(m))
        res.files.append(write_csv(out / "amplitude.csv", ["t", f"a{m}"], np.column_stack([record.times, amps])))
        rep.add(make_check("fit_r2", fit.r2, 0.99, "ge"))
        rep.add(make_check("fit_grew", float(fit.grew), 1.0, "eq"))
        rep.add(make_check("growth_rel_error", fit.rel_error if fit.rel_error is not None else math.inf,
                           cfg["checks.growth_rel"]))
        res.summary = [f"mode = {m}", f"window = {fit.window[0]!r},{fit.window[1]!r}",
                       f"window_policy = {policy.describe()}", f"sigma = {fit.sigma:.17g}",
                       f"r2 = {fit.r2:.17g}", f"mu_plus = {fit.predicted:.17g}"]
    else:
        idx = list(range(1, cfg["analysis.max_mode"] + 1))
        t_min = cfg["analysis.t_min"] if cfg["analysis.t_min"] is not None else 0.25
        t_max = cfg["analysis.t_max"] if cfg["analysis.t_max"] is not None else 0.75
        dom = dominant_mode(record, name, base, idx, t_min, t_max)
        mus = np.array([predicted(m) for m in idx])
        expected = idx[int(np.argmax(mus))]
        res.files.append(write_csv(out / "mode_rates.csv", ["m", "fitted_rate", "mu_plus", "final_amplitude"],
                                   np.column_stack([dom.indices, dom.rates, mus, dom.final_amplitudes])))
        rep.add(make_check("dominant_mode", dom.fitted_index, expected, "eq"))
        res.summary = [f"dominant_fitted = {dom.fitted_index}", f"dominant_raw_peak = {dom.raw_index}",
                       f"predicted_argmax = {expected}", f"predicted_mu_max = {mus.max():.17g}",
                       f"window = {t_min!r},{t_max!r}"]
    res.summary.append(f"dt_used = {record.dt!r}")
    res.files.append(_write_text(out / "verdict.txt", res.summary))
    _snapshots(cfg, record, out, res)
    return res


def core_longtime(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    res = ScenarioResult()
    record = run_simulation(cfg.solver, cfg.params, cfg.coupling, cfg.grid)
    res.record = record
    eq, _ = equilibrium_jacobian(cfg.params)
    rep = res.report
    cons = check_conservation_suite(record, cfg.checks())
    rep.extend(cons)
    resid = residual_coupling_norms(record)
    rep.extend(check_residual_decay(resid, cfg["checks.residual_final"], cfg["checks.residual_compare_t"],
                                    cfg["checks.residual_drop"]))
    rep.extend(equilibrium_convergence(record, eq, cfg["checks.equilibrium_distance"]))
    _, dist = distance_series(record, eq)
    res.files.append(write_csv(
        out / "diagnostics_series.csv",
        ["t", "pa_drift", "d_max_excess", "d_decay_ratio", "min_field", "residual_total", "distance"],
        np.column_stack([record.times, cons.series["pa_drift"], cons.series["d_max_excess"],
                         cons.series["d_decay_ratio"], cons.series["min_field"], resid.total, dist])))
    _snapshots(cfg, record, out, res)
    res.summary = [f"terminal_distance = {dist[-1]:.17g}", f"dt_used = {record.dt!r}", f"steps = {record.steps}"]
    return res


def schur_verify(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    res = ScenarioResult()
    p, cp = cfg.params, cfg.coupling
    eq, J = equilibrium_jacobian(p)
    lam, mu = cfg["scan.lambda"], cfg["scan.mu"]
    M = full_twoway_mode_matrix(J, p.d_S, p.d_R, cp, eq, lam)
    rep = res.report
    char = complex(M.char_poly(mu))
    r0 = schur_factorization_residual(M, lam, cp, eq, mu)
    rep.add(make_check("instance_residual", r0 / schur_scale(M, mu), cfg["checks.schur_rel"]))

    rng = np.random.default_rng(cfg.seed)
    rows, worst = [], 0.0
    for i in range(cfg["scan.samples"]):
        _, Ji, eqi, dS, dR, ci, lami = random_twoway_case(rng)
        Mi = full_twoway_mode_matrix(Ji, dS, dR, ci, eqi, lami)
        for z in circle_points(rng, cfg["scan.mu_radius"], cfg["scan.mu_samples"]):
            r = schur_factorization_residual(Mi, lami, ci, eqi, z)
            sc = schur_scale(Mi, z)
            worst = max(worst, r / sc)
            rows.append((i + 1, lami, z.real, z.imag, r, sc))
    res.files.append(write_csv(out / "schur.csv", ["sample", "lambda", "mu_re", "mu_im", "residual", "scale"], rows))
    rep.add(make_check("random_residual", worst, cfg["checks.schur_rel"]))

    g, A_qss = qss_closure(J, p.d_S, p.d_R, cp, eq, lam)
    try:
        conv = eps_spectrum_convergence(J, p.d_S, p.d_R, cp, eq, lam, cfg["scan.eps"])
    except PairingError as err:
        rep.add(make_check("eps_pairing", 0.0, 1.0, "eq"))
        res.summary = [f"eps_pairing_failed = {err}"]
    else:
        res.files.append(write_csv(out / "eps_convergence.csv", ["eps", "gap", "fast_re", "fast_predicted"],
                                   conv.rows()))
        rep.add(make_check("eps_order", conv.order, cfg["checks.eps_order"], "ge"))
        rep.add(make_check("eps_gap_monotone", float(np.max(np.diff(conv.gaps), initial=-math.inf)), 0.0, "le"))
        fast_rel = abs(conv.fast_eigenvalues[-1].real - conv.fast_predicted[-1]) / abs(conv.fast_predicted[-1])
        rep.add(make_check("fast_eigenvalue_rel", fast_rel, 0.01))
        res.summary = [f"eps_order = {conv.order:.17g}"]
    res.summary = [
        f"lambda = {lam!r}", f"mu = {mu!r}",
        f"char_poly = {char.real:.17g}", f"instance_residual = {r0:.17g}",
        f"closure_gradients = {g[0]!r},{g[1]!r}",
        "A_qss = " + ";".join(",".join(f"{v:.17g}" for v in row) for row in A_qss.entries),
        f"max_random_residual_rel = {worst:.17g}",
    ] + res.summary
    res.files.append(_write_text(out / "verdict.txt", res.summary))
    return res


def d_oracle_check(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    res = ScenarioResult()
    coeffs, t = cfg["oracle.modes"], cfg["oracle.t"]
    rows, gaps = [], []
    for level in range(cfg["oracle.refine"]):
        cells = tuple(n * 2 ** level for n in cfg.cells)
        grid = Grid(cfg.domain, cells)
        D0 = spectral_D_oracle(coeffs, cfg.params, 0.0, grid)
        D = integrate_damped_heat(D0, cfg.params, grid, t, safety=cfg.solver.safety)
        exact = spectral_D_oracle(coeffs, cfg.params, t, grid)
        gap = float(np.max(np.abs(D - exact)))
        gaps.append(gap)
        rows.append((cells[0], grid.spacing[0], gap))
        if level == 0:
            cols = [m.ravel() for m in grid.mesh()]
            res.files.append(write_csv(out / "d_profile.csv", ["x", "y"][: grid.dim] + ["fd", "exact"],
                                       np.column_stack(cols + [D.ravel(), exact.ravel()])))
    res.files.append(write_csv(out / "oracle_gaps.csv", ["cells", "dx", "linf_gap"], rows))
    rep = res.report
    rep.add(make_check("oracle_gap", gaps[0], cfg["checks.oracle_gap"]))
    for a, b in zip(gaps, gaps[1:]):
        rep.add(make_check("refine_ratio", a / b if b > 0 else math.inf, cfg["checks.refine_ratio"], "ge"))
    res.summary = [f"gaps = {','.join(f'{g:.17g}' for g in gaps)}"]
    return res


def weyl_scaling(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    res = ScenarioResult()
    modes = enumerate_modes(cfg.domain, cfg["domain.modes"])
    N = cfg.domain.dim
    c1, c2 = weyl_check(modes, N)
    rows = [(str(m.rank), ";".join(str(i) for i in m.indices), m.lam, m.lam / m.rank ** (2.0 / N)) for m in modes]
    res.files.append(write_csv(out / "eigenvalues.csv", ["k", "indices", "lambda", "ratio"], rows))
    rep = res.report
    rep.add(make_check("C1_positive", c1, 0.0, "gt"))
    rep.add(make_check("weyl_band", c2 / c1, cfg["checks.weyl_band"]))
    res.summary = [f"C1 = {c1:.17g}", f"C2 = {c2:.17g}"]
    return res


RUNNERS = {
    "no-turing-scan": no_turing_scan,
    "oneway-suppression": oneway_suppression,
    "twoway-criteria": twoway_criteria,
    "twoway-simulate": twoway_simulate,
    "core-longtime": core_longtime,
    "schur-verify": schur_verify,
    "d-oracle-check": d_oracle_check,
    "weyl-check": weyl_scaling,
}


def run_scenario(cfg: ScenarioConfig, out: Path) -> ScenarioResult:
    out.mkdir(parents=True, exist_ok=True)
    res = RUNNERS[cfg.name](cfg, out)
    res.files.append(res.report.write_csv(out / "checks.csv"))
    return res
