"""Flat ``section.key = value`` scenario files.

Every key has a parser and a default, so a parsed config can be echoed back
in full and re-parsed to the same object.  Errors always carry the offending
key and (when it came from a file) its line number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .model import ModelParams
from .solver import BASE_FIELDS, FLUX_SCHEMES, VARIANTS, Grid, InitialRecipe, SolverConfig
from .spectral import SignalCoupling, SpatialDomain

SCENARIOS = (
    "no-turing-scan",
    "oneway-suppression",
    "twoway-criteria",
    "twoway-simulate",
    "core-longtime",
    "schur-verify",
    "d-oracle-check",
    "weyl-check",
)


# --------------------------------------------------------------------------
# value codecs
# --------------------------------------------------------------------------

def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int(text: str) -> int:
    return int(text)


def _opt_float(text: str):
    return None if text.lower() in ("auto", "none") else _float(text)


def _float_list(text: str) -> tuple[float, ...]:
    items = [s for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("expected a comma-separated list")
    return tuple(_float(s) for s in items)


def _int_list(text: str) -> tuple[int, ...]:
    items = [s for s in text.split(",") if s.strip()]
    if not items:
        raise ValueError("expected a comma-separated list")
    return tuple(int(s) for s in items)


def _opt_int_list(text: str):
    return None if text.lower() == "none" else _int_list(text)


def _init_value(text: str):
    return "eq" if text.strip().lower() == "eq" else _float(text)


def _mode_coeffs(text: str) -> tuple[tuple[tuple[int, ...], float], ...]:
    """``m:coef`` or ``m;n:coef`` entries, comma separated."""
    out = []
    for item in text.split(","):
        if not item.strip():
            continue
        idx, coef = item.split(":")
        out.append((tuple(int(i) for i in idx.split(";")), _float(coef)))
    if not out:
        raise ValueError("expected mode:coefficient entries")
    return tuple(out)


def _choice(options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text
    return parse


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(";".join(str(i) for i in idx) + ":" + repr(c) for idx, c in value)
        return ", ".join(_fmt(v) for v in value)
    return str(value)


# --------------------------------------------------------------------------
# schema
# --------------------------------------------------------------------------

_PARAM_DEFAULTS = ModelParams()
_COUPLING_DEFAULTS = SignalCoupling()

SCHEMA: dict[str, tuple] = {
    "scenario.name": (_choice(SCENARIOS), None),
    "scenario.seed": (_int, 0),
}
for _f in fields(ModelParams):
    SCHEMA[f"params.{_f.name}"] = (_float, getattr(_PARAM_DEFAULTS, _f.name))
for _f in fields(SignalCoupling):
    parser = _opt_float if _f.name == "Qprime_cstar" else _float
    SCHEMA[f"coupling.{_f.name}"] = (parser, getattr(_COUPLING_DEFAULTS, _f.name))
SCHEMA.update({
    "domain.lengths": (_float_list, (math.pi,)),
    "domain.cells": (_int_list, (256,)),
    "domain.modes": (_int, 40),
    "solver.t_end": (_float, 1.0),
    "solver.dt": (_opt_float, None),
    "solver.snapshot_every": (_opt_float, None),
    "solver.variant": (_choice(VARIANTS), "core"),
    "solver.flux": (_choice(FLUX_SCHEMES), "central"),
    "solver.safety": (_float, 0.4),
    "scan.lambda_min": (_float, 1e-4),
    "scan.lambda_max": (_float, 1e6),
    "scan.points": (_int, 400),
    "scan.pairs": (_int, 10),
    "scan.d_min": (_float, 1e-3),
    "scan.d_max": (_float, 10.0),
    "scan.samples": (_int, 100),
    "scan.mu_samples": (_int, 20),
    "scan.mu_radius": (_float, 10.0),
    "scan.lambda": (_float, 4.0),
    "scan.mu": (_float, 1.0),
    "scan.eps": (_float_list, (1e-1, 1e-2, 1e-3, 1e-4)),
    "analysis.kind": (_choice(("growth", "dominant")), "growth"),
    "analysis.field": (_choice(("S", "R")), "S"),
    "analysis.mode": (_int, 2),
    "analysis.max_mode": (_int, 40),
    "analysis.t_min": (_opt_float, None),
    "analysis.t_max": (_opt_float, None),
    "analysis.transient": (_float, 2.0),
    "oracle.modes": (_mode_coeffs, (((0,), 2.0), ((1,), 0.5), ((3,), 0.25))),
    "oracle.t": (_float, 0.5),
    "oracle.refine": (_int, 2),
    "checks.pa_drift": (_float, 1e-12),
    "checks.d_max_slack": (_float, 1e-12),
    "checks.d_decay_factor": (_float, 1e-6),
    "checks.negativity": (_float, 1e-9),
    "checks.equilibrium_distance": (_float, 1e-3),
    "checks.residual_final": (_float, 1e-4),
    "checks.residual_drop": (_float, 1e2),
    "checks.residual_compare_t": (_float, 40.0),
    "checks.det_rel": (_float, 1e-10),
    "checks.union_tol": (_float, 1e-10),
    "checks.schur_rel": (_float, 1e-10),
    "checks.eps_order": (_float, 0.9),
    "checks.growth_rel": (_float, 0.1),
    "checks.oracle_gap": (_float, 1e-4),
    "checks.refine_ratio": (_float, 3.5),
    "checks.weyl_band": (_float, 4.0),
    "checks.decay_floor": (_float, 1e-8),
    "output.snapshots": (_choice(("none", "final", "all")), "final"),
})
for _name in BASE_FIELDS + ("c",):
    SCHEMA[f"init.{_name}_value"] = (_init_value, 0.0)
    SCHEMA[f"init.{_name}_mode"] = (_opt_int_list, None)
    SCHEMA[f"init.{_name}_amplitude"] = (_float, 0.0)
    SCHEMA[f"init.{_name}_noise"] = (_float, 0.0)

REQUIRED = {
    "twoway-criteria": ("coupling.g_S", "coupling.g_R"),
    "twoway-simulate": ("solver.t_end", "solver.variant"),
    "core-longtime": ("solver.t_end",),
    "oneway-suppression": ("solver.t_end",),
    "schur-verify": ("coupling.q",),
}
_VARIANT_FOR = {
    "core-longtime": ("core",),
    "oneway-suppression": ("oneway",),
    "twoway-simulate": ("twoway_reduced", "twoway_full"),
}


# --------------------------------------------------------------------------
# resolved config
# --------------------------------------------------------------------------

@dataclass
class ScenarioConfig:
    name: str
    seed: int
    params: ModelParams
    coupling: SignalCoupling
    domain: SpatialDomain
    cells: tuple[int, ...]
    solver: SolverConfig
    values: dict = field(repr=False, default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def grid(self) -> Grid:
        return Grid(self.domain, self.cells)

    def checks(self) -> dict[str, float]:
        return {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith("checks.")}

    def echo(self) -> str:
        return "\n".join(f"{k} = {_fmt(self.values[k])}" for k in SCHEMA) + "\n"

    def with_seed(self, seed: int) -> "ScenarioConfig":
        values = dict(self.values)
        values["scenario.seed"] = int(seed)
        return build_config(values, {})

    def __eq__(self, other) -> bool:
        return isinstance(other, ScenarioConfig) and self.values == other.values


def parse_text(text: str) -> ScenarioConfig:
    values: dict = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'section.key = value'", line=lineno)
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in SCHEMA:
            raise ConfigError("unknown key", key=key, line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {lines[key]})", key=key, line=lineno)
        parser, _ = SCHEMA[key]
        try:
            values[key] = parser(value)
        except (ValueError, TypeError) as err:
            raise ConfigError(f"bad value {value!r}: {err}", key=key, line=lineno) from None
        lines[key] = lineno
    if "scenario.name" not in values:
        raise ConfigError("missing required key", key="scenario.name")
    for key in REQUIRED.get(values["scenario.name"], ()):
        if key not in values:
            raise ConfigError(f"missing required key for scenario {values['scenario.name']}", key=key)
    full = {k: values.get(k, default) for k, (_, default) in SCHEMA.items()}
    return build_config(full, lines)


def parse_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    return parse_text(text)


def _section(values: dict, prefix: str) -> dict:
    n = len(prefix) + 1
    return {k[n:]: v for k, v in values.items() if k.startswith(prefix + ".")}


def _blame(section: str, cls, err: Exception) -> str | None:
    """Config key named at the start of a constructor's error message."""
    first = str(err).split(" ", 1)[0]
    names = {f.name for f in fields(cls)}
    if first in names:
        return f"{section}.{first}"
    # SignalCoupling reports the two sensitivities together
    return f"{section}.chi_S" if "sensitivities" in str(err) else None


def build_config(values: dict, lines: dict[str, int]) -> ScenarioConfig:
    name = values["scenario.name"]

    def fail(msg: str, key: str):
        raise ConfigError(msg, key=key, line=lines.get(key))

    try:
        params = ModelParams(**_section(values, "params"))
    except ValueError as err:
        key = _blame("params", ModelParams, err)
        fail(str(err), key)
    if params.alpha + params.xi <= 0:
        fail("alpha + xi must be > 0", "params.alpha")

    try:
        coupling = SignalCoupling(**_section(values, "coupling"))
    except ValueError as err:
        key = _blame("coupling", SignalCoupling, err)
        fail(str(err), key)
    if name in ("twoway-criteria", "twoway-simulate", "schur-verify") and not coupling.q < 0:
        fail(f"two-way cue damping requires q<0 (linear damping of the cue), got q={coupling.q!r}", "coupling.q")
    if name == "oneway-suppression" and not coupling.rho > 0 and coupling.Qprime_cstar is None:
        fail("one-way damping requires rho>0", "coupling.rho")

    try:
        domain = SpatialDomain(values["domain.lengths"])
    except ValueError as err:
        fail(str(err), "domain.lengths")
    cells = values["domain.cells"]
    if len(cells) == 1 and domain.dim == 2:
        cells = cells * 2
    if len(cells) != domain.dim or any(n < 8 for n in cells):
        fail("need one cell count >= 8 per domain axis", "domain.cells")
    if values["domain.modes"] < 1:
        fail("must be >= 1", "domain.modes")

    allowed = _VARIANT_FOR.get(name)
    if allowed and values["solver.variant"] not in allowed:
        fail(f"scenario {name} needs variant in {allowed}", "solver.variant")

    initial = {}
    for f in BASE_FIELDS + ("c",):
        mode = values[f"init.{f}_mode"]
        if mode is not None and len(mode) != domain.dim:
            fail(f"mode needs {domain.dim} indices", f"init.{f}_mode")
        if values[f"init.{f}_value"] == "eq" and f == "P":
            fail("P has no equilibrium value; give a number", "init.P_value")
        initial[f] = InitialRecipe(values[f"init.{f}_value"], mode,
                                   values[f"init.{f}_amplitude"], values[f"init.{f}_noise"])
    try:
        solver = SolverConfig(
            t_end=values["solver.t_end"], dt=values["solver.dt"],
            snapshot_every=values["solver.snapshot_every"], variant=values["solver.variant"],
            flux=values["solver.flux"], safety=values["solver.safety"], initial=initial,
            seed=values["scenario.seed"])
    except ValueError as err:
        key = next((f"solver.{k}" for k in ("t_end", "dt", "snapshot_every", "safety") if k in str(err)), None)
        fail(str(err), key)

    for key in ("scan.points", "scan.pairs", "scan.samples", "scan.mu_samples", "oracle.refine"):
        if values[key] < 1:
            fail("must be >= 1", key)
    if not 0 < values["scan.lambda_min"] < values["scan.lambda_max"]:
        fail("need 0 < lambda_min < lambda_max", "scan.lambda_min")
    if not 0 < values["scan.d_min"] < values["scan.d_max"]:
        fail("need 0 < d_min < d_max", "scan.d_min")
    eps = values["scan.eps"]
    if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        fail("eps list must be positive and strictly decreasing", "scan.eps")
    for m, _ in values["oracle.modes"] if name == "d-oracle-check" else ():
        if len(m) != domain.dim or any(i < 0 for i in m):
            fail(f"mode indices must be {domain.dim} nonnegative integers", "oracle.modes")
    return ScenarioConfig(name, values["scenario.seed"], params, coupling, domain, cells, solver, dict(values))
