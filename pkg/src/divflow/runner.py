"""Configuration-driven experiment harness.

One experiment per invocation: a config selects zoo objects, parameters and
tolerances; ``run`` produces a deterministic report document given
(config, seed), independent of the worker count.  Exit-status policy is the
caller's job (the CLI maps check failure to 1 and config errors to 2).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import __version__
from .geometry import (
    UnitTangentState,
    divergence,
    pairing_rate_form,
)
from .integrals import (
    ChartBox,
    RadialShell,
    base_integral,
    fiber_integral,
    fiber_rule,
    fubini_consistency,
    ladder_integral,
    omega,
    quadratic_form_fiber_fn,
    sample_box_points,
    sample_liouville,
    sample_states,
)
from .flow import first_return, path_integral_identity_residual
from .diagnostics import (
    cutoff_estimate,
    hopf_probe,
    karp_sequence,
    rate_integrability_ladder,
    recurrence_fraction,
    x_decay_at_infinity,
)
from .parallel import parallel_map
from .potential import (
    laplace_beltrami,
    monotone_form,
    phi_laplacian,
    shipped_profiles,
    scalar_test_functions,
)
from . import zoo


class ConfigError(ValueError):
    """Malformed configuration or unresolvable ids."""


KINDS = (
    "fiber-lemma", "path-integral", "fubini",
    "volume", "divergence-integral",
    "karp", "cutoff", "fx-ladder", "decay", "recurrence", "hopf",
    "potential-monotone", "potential-laplacian",
)

# experiments that sample the base region of an unbounded manifold record
# the cap they used
_DEFALT_RADIUS_CAP = {"hyperbolic": 2.0, "warp:ex2": 3.0, "warp:ex3": 3.0,
                      "warp:ex4": 3.0, "revolution:1/(1+x^2)": 4.0}


@dataclass
class ExperimentConfig:
    kind: str
    manifold: Optional[str] = None
    fields: tuple[str, ...] = ()
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {"kind", "manifold", "field", "fields", "params",
                            "tolerances", "seed"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kind = d.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {kind!r}")
        fields_ = d.get("fields")
        if fields_ is None:
            fields_ = [d["field"]] if d.get("field") else []
        cfg = cls(kind=kind, manifold=d.get("manifold"),
                  fields=tuple(fields_), params=dict(d.get("params", {})),
                  tolerances=dict(d.get("tolerances", {})),
                  seed=int(d.get("seed", 0)))
        cfg.validate()
        return cfg

    def validate(self):
        if self.manifold is not None and self.manifold not in zoo.MANIFOLD_IDS:
            raise ConfigError(f"unknown manifold id {self.manifold!r}")
        for fid in self.fields:
            if fid not in zoo.FIELD_IDS:
                raise ConfigError(f"unknown field id {fid!r}")
        for name, value in self.tolerances.items():
            if not (isinstance(value, (int, float)) and value > 0):
                raise ConfigError(f"tolerance {name!r} must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")

    def canonical(self) -> dict:
        return {
            "kind": self.kind,
            "manifold": self.manifold,
            "fields": list(self.fields),
            "params": _jsonable(self.params),
            "tolerances": _jsonable(self.tolerances),
            "seed": self.seed,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if obj is None or isinstance(obj, (str, bool)):
        return obj
    raise ConfigError(f"value {obj!r} is not JSON-serializable")


def _check(name: str, value, threshold, comparator: str) -> dict:
    ops = {"<=": lambda a, b: a <= b, ">=": lambda a, b: a >= b,
           "==": lambda a, b: a == b}
    passed = bool(ops[comparator](value, threshold)) if value is not None else False
    return {"name": name, "value": _jsonable(value),
            "threshold": _jsonable(threshold), "comparator": comparator,
            "passed": passed}


def _resolve_pair(cfg: ExperimentConfig):
    if cfg.manifold is None:
        raise ConfigError(f"kind {cfg.kind!r} needs a manifold id")
    m = zoo.manifold(cfg.manifold)
    if not cfg.fields:
        raise ConfigError(f"kind {cfg.kind!r} needs a field id")
    f = zoo.vector_field(cfg.fields[0])
    if zoo.field_manifold_id(cfg.fields[0]) != cfg.manifold:
        raise ConfigError(
            f"field {cfg.fields[0]!r} lives on {zoo.field_manifold_id(cfg.fields[0])!r}, "
            f"not on {cfg.manifold!r}")
    return m, f


def _states(m, n, seed):
    return sample_states(m, n, np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# experiment kinds


def _run_fiber_lemma(cfg, workers):
    m, f = _resolve_pair(cfg)
    n_points = int(cfg.params.get("n_points", 200))
    tol = float(cfg.tolerances.get("residual", 1e-8 if m.dim == 2 else 1e-6))
    rule = fiber_rule(m.dim)
    w = omega(m.dim) / m.dim
    pts = sample_box_points(m, n_points, np.random.default_rng(cfg.seed))

    def residual(x):
        Q = pairing_rate_form(f, m, x)
        fib = fiber_integral(m, quadratic_form_fiber_fn(Q), x, rule=rule,
                             batched=True)
        return abs(fib - w * divergence(f, m, x))

    res = parallel_map(residual, list(pts), workers=workers)
    worst = max(res)
    return {"results": {"max_residual": worst, "n_points": n_points},
            "checks": [_check("fiber_average_matches_divergence", worst, tol, "<=")]}


def _run_path_integral(cfg, workers):
    m, f = _resolve_pair(cfg)
    n_orbits = int(cfg.params.get("n_orbits", 20))
    T = float(cfg.params.get("T", 10.0))
    tol = float(cfg.tolerances.get("residual", 1e-6 * (1.0 + T)))
    states = _states(m, n_orbits, cfg.seed)

    def residual(st):
        return path_integral_identity_residual(f, m, st, T)

    res = parallel_map(residual, states, workers=workers)
    worst = max(res)
    return {"results": {"max_residual": worst, "n_orbits": n_orbits, "T": T},
            "checks": [_check("path_integral_identity", worst, tol, "<=")]}


def _run_fubini(cfg, workers):
    m, f = _resolve_pair(cfg)
    n_mc = int(cfg.params.get("n_mc", 20000))
    box = cfg.params.get("box")
    region = ChartBox(tuple(tuple(b) for b in box)) if box else ChartBox(m.sample_box)

    def F(x, v):
        Q = pairing_rate_form(f, m, x)
        return float(v @ Q @ v)

    out = fubini_consistency(m, F, region, n_mc=n_mc, seed=cfg.seed)
    return {"results": out,
            "checks": [_check("iterated_matches_direct", out["discrepancy"],
                              max(out["bound"], 1e-12), "<=")]}


def _region_and_integral(cfg, m, h, order):
    params = cfg.params
    if m.shell is not None:
        r0 = float(params.get("r0", 1.0))
        rungs = int(params.get("rungs", 5))
        return ladder_integral(m, h, r0=r0, rungs=rungs, order=order)
    box = params.get("box")
    region = ChartBox(tuple(tuple(b) for b in box)) if box else ChartBox(m.sample_box)
    return base_integral(m, h, region, order=order)


def _run_volume(cfg, workers):
    if cfg.manifold is None:
        raise ConfigError("volume needs a manifold id")
    m = zoo.manifold(cfg.manifold)
    order = int(cfg.params.get("order", 16))
    est = _region_and_integral(cfg, m, lambda x: 1.0, order)
    results = {"volume": est.to_json()}
    checks = []
    if "expected" in cfg.params:
        expected = float(cfg.params["expected"])
        rtol = float(cfg.tolerances.get("rel_error", 1e-3))
        rel = abs(est.value - expected) / abs(expected)
        results["expected"] = expected
        checks.append(_check("volume_matches_expected", rel, rtol, "<="))
    return {"results": results, "checks": checks}


def _run_divergence_integral(cfg, workers):
    m, f = _resolve_pair(cfg)
    order = int(cfg.params.get("order", 16))
    est = _region_and_integral(cfg, m, lambda x: divergence(f, m, x), order)
    results = {"divergence_integral": est.to_json()}
    checks = []
    if "expected" in cfg.params:
        expected = float(cfg.params["expected"])
        rtol = float(cfg.tolerances.get("rel_error", 5e-3))
        rel = abs(est.value - expected) / max(abs(expected), 1e-30)
        results["expected"] = expected
        checks.append(_check("divergence_integral_matches_expected", rel, rtol, "<="))
    return {"results": results, "checks": checks}


def _run_karp(cfg, workers):
    m, f = _resolve_pair(cfg)
    radii = [float(r) for r in cfg.params.get("radii", [5.0, 10.0, 20.0])]
    reports = karp_sequence(m, f, radii, order=int(cfg.params.get("order", 16)),
                            seed=cfg.seed)
    results = {"annuli": [r.to_json() for r in reports]}
    checks = []
    expect = cfg.params.get("expect")
    values = [r.normalized for r in reports]
    errs = [r.stderr for r in reports]
    if expect == "decay":
        thr = float(cfg.tolerances.get("final_normalized", 0.1))
        checks.append(_check("normalized_sequence_decreasing",
                             float(max(np.diff(values))), 0.0, "<="))
        checks.append(_check("final_normalized_small", values[-1], thr, "<="))
    elif expect == "bounded-below":
        thr = float(cfg.tolerances.get("lower_bound", 1.0))
        checks.append(_check("normalized_bounded_below", min(values), thr, ">="))
        slack = min(values[i + 1] - values[i] + 3.0 * (errs[i + 1] + errs[i])
                    for i in range(len(values) - 1)) if len(values) > 1 else 0.0
        checks.append(_check("normalized_nondecreasing_within_error",
                             float(slack), 0.0, ">="))
    elif expect is not None:
        raise ConfigError(f"unknown karp expectation {expect!r}")
    return {"results": results, "checks": checks}


def _run_cutoff(cfg, workers):
    m, f = _resolve_pair(cfg)
    radii = [float(r) for r in cfg.params.get("radii", [2.0, 5.0, 10.0])]
    sigma = float(cfg.params.get("sigma", 3.0))
    reports = [cutoff_estimate(m, f, r, order=int(cfg.params.get("order", 12)))
               for r in radii]
    checks = [_check(f"cutoff_bound_r_{rep.r:g}",
                     rep.lhs, rep.rhs + sigma * (rep.lhs_stderr + rep.rhs_stderr),
                     "<=") for rep in reports]
    return {"results": {"reports": [rep.to_json() for rep in reports]},
            "checks": checks}


def _run_fx_ladder(cfg, workers):
    m, f = _resolve_pair(cfg)
    est = rate_integrability_ladder(
        m, f, r0=float(cfg.params.get("r0", 1.0)),
        rungs=int(cfg.params.get("rungs", 5)),
        order=int(cfg.params.get("order", 10)),
        rel_tol=float(cfg.tolerances.get("ladder_rel_tol", 5e-3)))
    results = {"ladder": est.to_json()}
    checks = []
    expect = cfg.params.get("expect")
    if expect == "converge":
        checks.append(_check("ladder_converged", est.converged, True, "=="))
    elif expect == "diverge":
        checks.append(_check("ladder_diverged", est.converged, False, "=="))
    elif expect is not None:
        raise ConfigError(f"unknown ladder expectation {expect!r}")
    return {"results": results, "checks": checks}


def _run_decay(cfg, workers):
    m, f = _resolve_pair(cfg)
    radii = [float(r) for r in cfg.params.get("radii", [2.0, 5.0, 10.0, 20.0])]
    sups = x_decay_at_infinity(m, f, radii,
                               n_samples=int(cfg.params.get("n_samples", 400)),
                               seed=cfg.seed)
    values = [s["sup"] for s in sups]
    checks = []
    expect = cfg.params.get("expect")
    if expect == "to-zero":
        checks.append(_check("annulus_sup_decreasing",
                             float(max(np.diff(values))), 0.0, "<="))
        thr = float(cfg.tolerances.get("final_sup", 0.2))
        checks.append(_check("final_sup_small", values[-1], thr, "<="))
    elif expect == "grow":
        checks.append(_check("annulus_sup_growing", values[-1],
                             values[0], ">="))
    elif expect is not None:
        raise ConfigError(f"unknown decay expectation {expect!r}")
    return {"results": {"suprema": sups}, "checks": checks}


def _run_recurrence(cfg, workers):
    if cfg.manifold is None:
        raise ConfigError("recurrence needs a manifold id")
    m = zoo.manifold(cfg.manifold)
    p = cfg.params
    cap = p.get("radius_cap", _DEFALT_RADIUS_CAP.get(cfg.manifold))
    stats = recurrence_fraction(
        m, int(p.get("n", 100)), eps=float(p.get("eps", 0.05)),
        t_min=float(p.get("t_min", 1.0)), t_max=float(p.get("t_max", 1000.0)),
        seed=cfg.seed, radius_cap=cap, workers=workers)
    results = {"stats": stats.to_json()}
    checks = []
    if "min_fraction" in p:
        checks.append(_check("fraction_at_least", stats.fraction,
                             float(p["min_fraction"]), ">="))
    if "max_fraction" in p:
        checks.append(_check("fraction_at_most", stats.fraction,
                             float(p["max_fraction"]), "<="))
    return {"results": results, "checks": checks}


def _run_hopf(cfg, workers):
    if cfg.manifold is None:
        raise ConfigError("hopf needs a manifold id")
    m = zoo.manifold(cfg.manifold)
    p = cfg.params
    n = int(p.get("n", 20))
    cap = p.get("radius_cap", _DEFALT_RADIUS_CAP.get(cfg.manifold))
    if cap is not None:
        cap = float(cap)
    horizons = p.get("horizons")
    rng = np.random.default_rng(cfg.seed)
    if cap is not None and m.shell is not None:
        states = sample_liouville(m, n, rng, radius_cap=cap)
    else:
        states = sample_liouville(m, n, rng, box=m.sample_box)

    def probe(st):
        return hopf_probe(m, st, horizons=horizons)

    probes = parallel_map(probe, states, workers=workers)
    counts = {}
    for pr in probes:
        counts[pr.label] = counts.get(pr.label, 0) + 1
    results = {"label_counts": counts, "radius_cap": cap,
               "probes": [pr.to_json() for pr in probes[:5]]}
    checks = []
    if "expect_label" in p:
        frac = counts.get(p["expect_label"], 0) / n
        checks.append(_check(f"fraction_{p['expect_label']}", frac,
                             float(p.get("min_label_fraction", 0.95)), ">="))
    return {"results": results, "checks": checks}


def _run_potential_monotone(cfg, workers):
    p = cfg.params
    profiles = shipped_profiles()
    pid = p.get("profile", "p:2")
    if pid not in profiles:
        raise ConfigError(f"unknown profile {pid!r}; have {sorted(profiles)}")
    prof = profiles[pid]
    n = int(p.get("n_pairs", 100000))
    d = int(p.get("dim", 3))
    rng = np.random.default_rng(cfg.seed)
    xi = rng.normal(size=(n, d)) * rng.uniform(0.1, 3.0, size=(n, 1))
    eta = rng.normal(size=(n, d)) * rng.uniform(0.1, 3.0, size=(n, 1))
    vals = monotone_form(xi, eta, prof)
    floor = float(cfg.tolerances.get("negativity_floor", 1e-12))
    near_tol = float(cfg.tolerances.get("near_zero", 1e-10))
    small = np.asarray(vals) < near_tol
    seps = np.linalg.norm(xi - eta, axis=1)
    worst_sep = float(seps[small].max()) if small.any() else 0.0
    return {"results": {"min_value": float(np.min(vals)), "n_pairs": n,
                        "profile": pid,
                        "max_separation_among_near_zero": worst_sep},
            "checks": [
                _check("monotone_form_nonnegative", float(np.min(vals)),
                       -floor, ">="),
                _check("near_zero_only_near_diagonal", worst_sep, 1e-6, "<="),
            ]}


def _run_potential_laplacian(cfg, workers):
    if cfg.manifold is None:
        raise ConfigError("potential-laplacian needs a manifold id")
    m = zoo.manifold(cfg.manifold)
    p = cfg.params
    registry = scalar_test_functions(cfg.manifold)
    uid = p.get("u", next(iter(registry)))
    if uid not in registry:
        raise ConfigError(f"unknown test function {uid!r}; have {sorted(registry)}")
    u, closed = registry[uid]
    prof = shipped_profiles()["p:2"]
    n_points = int(p.get("n_points", 25))
    tol = float(cfg.tolerances.get("residual", 1e-6))
    pts = sample_box_points(m, n_points, np.random.default_rng(cfg.seed))
    worst = 0.0
    worst_closed = 0.0
    for x in pts:
        lb = laplace_beltrami(u, m, x)
        worst = max(worst, abs(phi_laplacian(u, prof, m, x) - lb))
        if closed is not None:
            worst_closed = max(worst_closed, abs(lb - closed(x)))
    results = {"max_diff_vs_beltrami": worst, "u": uid, "n_points": n_points}
    checks = [_check("flux_divergence_matches_beltrami", worst, tol, "<=")]
    if closed is not None:
        results["max_diff_vs_closed_form"] = worst_closed
        checks.append(_check("beltrami_matches_closed_form", worst_closed,
                             max(tol, 1e-6), "<="))
    return {"results": results, "checks": checks}


_RUNNERS: dict[str, Callable] = {
    "fiber-lemma": _run_fiber_lemma,
    "path-integral": _run_path_integral,
    "fubini": _run_fubini,
    "volume": _run_volume,
    "divergence-integral": _run_divergence_integral,
    "karp": _run_karp,
    "cutoff": _run_cutoff,
    "fx-ladder": _run_fx_ladder,
    "decay": _run_decay,
    "recurrence": _run_recurrence,
    "hopf": _run_hopf,
    "potential-monotone": _run_potential_monotone,
    "potential-laplacian": _run_potential_laplacian,
}


def list_zoo() -> dict:
    return zoo.list_zoo()


def run(cfg: ExperimentConfig, workers: int = 1) -> dict:
    """Execute one experiment; the report is deterministic given
    (config, seed) and identical at any worker count."""
    cfg.validate()
    canonical = cfg.canonical()
    blob = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
    out = _RUNNERS[cfg.kind](cfg, workers)
    checks = out.get("checks", [])
    report = {
        "tool": {"name": "divflow", "version": __version__},
        "experiment": cfg.kind,
        "config": canonical,
        "config_sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "seed": cfg.seed,
        "tolerances": canonical["tolerances"],
        "results": _jsonable(out.get("results", {})),
        "checks": checks,
        "passed": all(c["passed"] for c in checks) if checks else True,
    }
    return report


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def report_to_csv(report: dict) -> str:
    """Flat CSV: the karp kind emits its fixed (r, mass, normalized, stderr)
    table, everything else the checks table."""
    lines = []
    if report["experiment"] == "karp":
        lines.append("r,mass,normalized,stderr")
        for a in report["results"]["annuli"]:
            lines.append(f"{a['radius']!r},{a['mass']!r},{a['normalized']!r},{a['stderr']!r}")
    else:
        lines.append("check,value,threshold,comparator,passed")
        for c in report["checks"]:
            lines.append(f"{c['name']},{c['value']!r},{c['threshold']!r},"
                         f"{c['comparator']},{c['passed']}")
    return "\n".join(lines) + "\n"
