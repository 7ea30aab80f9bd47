"""Quadrature and Monte Carlo over manifolds, unit-sphere fibers, and the
unit tangent bundle.

Regions are either coordinate boxes in the working chart or radial shells
{r_lo <= r(p) <= r_hi} delegated to the manifold's shell parametrization.
Unbounded domains are handled by truncation ladders with recorded traces.
All reductions run in a fixed index order (compensated sums for the final
accumulations), so results do not depend on evaluation parallelism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .geometry import (
    ChartedManifold,
    UnitTangentState,
    metric_at,
    orthonormal_frame,
    volume_density,
)

__all__ = [
    "ChartBox",
    "RadialShell",
    "ShellPatch",
    "IntegralEstimate",
    "FiberRule",
    "omega",
    "fiber_rule",
    "fiber_integral",
    "base_integral",
    "sm_integral",
    "fubini_consistency",
    "ladder_integral",
    "sm_ladder",
    "sample_box_points",
    "sample_states",
    "sample_liouville",
]


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class ChartBox:
    """Axis-aligned box in working-chart coordinates."""

    bounds: tuple[tuple[float, float], ...]
    chart: int = 0


@dataclass(frozen=True)
class RadialShell:
    """Region {r_lo <= radius(p) <= r_hi} in the manifold's radius surrogate."""

    r_lo: float
    r_hi: float

    def __post_init__(self):
        if not (0.0 <= self.r_lo < self.r_hi):
            raise ValueError(f"bad shell radii ({self.r_lo}, {self.r_hi})")


@dataclass(frozen=True, eq=False)
class ShellPatch:
    """One parametrized piece of a region.

    ``to_chart`` maps patch coordinates u to working-chart coordinates and
    ``density(u)`` is the full volume density in patch coordinates (metric
    density times the parametrization Jacobian).  ``breakpoints`` lists, per
    axis, loci where the integrand is only finitely differentiable; panels
    never straddle them.
    """

    bounds: tuple[tuple[float, float], ...]
    to_chart: Callable[[np.ndarray], np.ndarray]
    density: Callable[[np.ndarray], float]
    name: str = ""
    breakpoints: tuple[tuple[float, ...], ...] = ()


def _box_patch(m: ChartedManifold, box: ChartBox) -> ShellPatch:
    return ShellPatch(
        bounds=tuple((float(a), float(b)) for a, b in box.bounds),
        to_chart=lambda u: u,
        density=lambda u: volume_density(m, u, chart=box.chart),
        name="chart-box",
    )


def resolve_patches(m: ChartedManifold, region) -> tuple[ShellPatch, ...]:
    if isinstance(region, ChartBox):
        return (_box_patch(m, region),)
    if isinstance(region, RadialShell):
        if m.shell is None:
            raise ValueError(f"{m.name} has no radial shell parametrization")
        return tuple(m.shell(region.r_lo, region.r_hi))
    if isinstance(region, ShellPatch):
        return (region,)
    if isinstance(region, (tuple, list)) and all(isinstance(p, ShellPatch) for p in region):
        return tuple(region)
    raise TypeError(f"unsupported region {region!r}")


# ---------------------------------------------------------------------------
# estimates


@dataclass
class IntegralEstimate:
    """Value with an error estimate and provenance counters.

    ``stderr`` is a deterministic quadrature residual or a Monte Carlo
    standard error depending on the method that produced the estimate.
    """

    value: float
    stderr: float
    nodes: int
    truncation_radius: Optional[float] = None
    truncation_trace: Optional[list[tuple[float, float]]] = None
    converged: Optional[bool] = None

    def to_json(self) -> dict:
        return {
            "value": float(self.value),
            "stderr": float(self.stderr),
            "nodes": int(self.nodes),
            "truncation_radius": None if self.truncation_radius is None
            else float(self.truncation_radius),
            "truncation_trace": None if self.truncation_trace is None
            else [[float(r), float(v)] for r, v in self.truncation_trace],
            "converged": self.converged,
        }


# ---------------------------------------------------------------------------
# sphere measure and fiber rules


def omega(n: int) -> float:
    """Surface measure of the unit (n-1)-sphere in R^n."""
    if n < 2:
        raise ValueError("need n >= 2")
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass(frozen=True, eq=False)
class FiberRule:
    """Quadrature rule on the unit sphere S^{n-1} (or its upper hemisphere)."""

    dim: int
    nodes: np.ndarray            # (k, dim) unit direction coefficients
    weights: np.ndarray          # (k,), sum = omega(dim) (half for hemisphere)
    hemisphere: bool = False


def _gl(order: int, lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
    t, w = leggauss(order)
    half = 0.5 * (hi - lo)
    return lo + half * (t + 1.0), half * w


@lru_cache(maxsize=32)
def fiber_rule(n: int, angular_order: int = 64, polar_order: int = 32,
               hemisphere: bool = False) -> FiberRule:
    """Standard fiber rules: angular Gauss-Legendre for n=2, a
    (cos phi, theta) product Gauss rule for n=3.

    Hemisphere rules integrate over {last coordinate > 0} and are used for
    the half-sphere moment identities.
    """
    if n == 2:
        hi = math.pi if hemisphere else 2.0 * math.pi
        th, w = _gl(angular_order, 0.0, hi)
        nodes = np.column_stack([np.cos(th), np.sin(th)])
        return FiberRule(dim=2, nodes=nodes, weights=w, hemisphere=hemisphere)
    if n == 3:
        lo_u = 0.0 if hemisphere else -1.0
        u, wu = _gl(polar_order, lo_u, 1.0)
        th, wt = _gl(angular_order, 0.0, 2.0 * math.pi)
        s = np.sqrt(np.maximum(0.0, 1.0 - u ** 2))
        nodes = np.empty((polar_order * angular_order, 3))
        weights = np.empty(polar_order * angular_order)
        k = 0
        for i in range(polar_order):
            for j in range(angular_order):
                nodes[k] = (s[i] * np.cos(th[j]), s[i] * np.sin(th[j]), u[i])
                weights[k] = wu[i] * wt[j]
                k += 1
        return FiberRule(dim=3, nodes=nodes, weights=weights, hemisphere=hemisphere)
    raise NotImplementedError(f"no fiber rule shipped for dimension {n}")


def fiber_integral(m: ChartedManifold, h: Callable[[np.ndarray], float], x,
                   rule: Optional[FiberRule] = None, chart: int = 0,
                   batched: bool = False) -> float:
    """Integral of h over the unit sphere of the tangent space at x.

    Directions are built from a g-orthonormal frame (Gram-Schmidt on the
    chart basis), so the rule's round measure matches the fiber measure of
    the unit tangent bundle.  With ``batched=True``, h receives the whole
    (k, n) direction array at once and must return a (k,) array.
    """
    x = np.asarray(x, dtype=float)
    if rule is None:
        rule = fiber_rule(m.dim)
    E = orthonormal_frame(m, x, chart=chart)   # raises on non-SPD metric
    dirs = rule.nodes @ E.T
    if batched:
        vals = np.asarray(h(dirs), dtype=float)
    else:
        vals = [float(h(dirs[i])) for i in range(dirs.shape[0])]
    return math.fsum(w * val for w, val in zip(rule.weights, vals))


def quadratic_form_fiber_fn(Q: np.ndarray):
    """Batched fiber integrand v -> v Q v for a fixed quadratic form."""
    def h(V):
        V = np.atleast_2d(V)
        return np.einsum("ki,ij,kj->k", V, Q, V)
    return h


# ---------------------------------------------------------------------------
# quadrature over patches


def _panel_edges(lo: float, hi: float, max_width: float = 8.0,
                 breaks: tuple[float, ...] = ()) -> list[tuple[float, float]]:
    """Split [lo, hi] at declared breakpoints, then dyadically toward each
    segment's lower end when wide.

    Radial integrands concentrate their variation near the inner edge, so
    panels double in width away from it.
    """
    cuts = [lo] + [b for b in sorted(breaks) if lo < b < hi] + [hi]
    out = []
    for seg_lo, seg_hi in zip(cuts[:-1], cuts[1:]):
        width = seg_hi - seg_lo
        if width <= max_width:
            out.append((seg_lo, seg_hi))
            continue
        edges = [seg_hi]
        w = width / 2.0
        while w > max_width:
            edges.append(seg_lo + w)
            w /= 2.0
        edges.append(seg_lo)
        edges.reverse()
        out.extend((edges[i], edges[i + 1]) for i in range(len(edges) - 1))
    return out


def _axis_nodes(lo: float, hi: float, order: int,
                breaks: tuple[float, ...] = ()) -> tuple[np.ndarray, np.ndarray]:
    xs, ws = [], []
    for a, b in _panel_edges(lo, hi, breaks=breaks):
        t, w = _gl(order, a, b)
        xs.append(t)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def _tensor_pass(fn, bounds, order: int, breaks=()) -> tuple[float, int]:
    if not breaks:
        breaks = ((),) * len(bounds)
    axes = [_axis_nodes(lo, hi, order, breaks=brk)
            for (lo, hi), brk in zip(bounds, breaks)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wts = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1)
    vals = [fn(pts[i]) for i in range(pts.shape[0])]
    return math.fsum(w * v for w, v in zip(wts, vals)), pts.shape[0]


def _quad_patch(fn, bounds, order: int, breaks=()) -> tuple[float, float, int]:
    lo_order = max(2, order // 2)
    coarse, _ = _tensor_pass(fn, bounds, lo_order, breaks)
    value, nodes = _tensor_pass(fn, bounds, order, breaks)
    return value, abs(value - coarse), nodes


def _mc_patch(fn, bounds, n: int, rng) -> tuple[float, float, int]:
    dims = len(bounds)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    vol = float(np.prod(hi - lo))
    u = rng.uniform(size=(n, dims)) * (hi - lo) + lo
    vals = np.array([fn(u[i]) for i in range(n)])
    mean = float(np.sum(vals)) / n
    var = float(np.sum((vals - mean) ** 2)) / max(1, n - 1)
    return vol * mean, vol * math.sqrt(var / n), n


def base_integral(m: ChartedManifold, h: Callable[[np.ndarray], float], region,
                  method: str = "quadrature", order: int = 16,
                  n_mc: int = 20000, seed: int = 0) -> IntegralEstimate:
    """Integral of h against the volume measure over a bounded region.

    ``h`` takes working-chart coordinates.  ``region`` is a ChartBox, a
    RadialShell, or explicit shell patches.
    """
    patches = resolve_patches(m, region)
    values, errs, nodes = [], [], 0
    rng = np.random.default_rng(seed)
    for patch in patches:
        def fn(u, _p=patch):
            return float(h(_p.to_chart(u))) * float(_p.density(u))
        if method == "quadrature":
            v, e, k = _quad_patch(fn, patch.bounds, order, patch.breakpoints)
        elif method == "montecarlo":
            v, e, k = _mc_patch(fn, patch.bounds, n_mc, rng)
        else:
            raise ValueError(f"unknown method {method!r}")
        values.append(v)
        errs.append(e)
        nodes += k
    if method == "quadrature":
        err = math.fsum(errs)
    else:
        err = math.sqrt(math.fsum(e * e for e in errs))
    return IntegralEstimate(value=math.fsum(values), stderr=err, nodes=nodes)


def sm_integral(m: ChartedManifold, F, region, rule: Optional[FiberRule] = None,
                method: str = "quadrature", order: int = 12,
                n_mc: int = 4000, seed: int = 0,
                point_factory=None, batched: bool = False) -> IntegralEstimate:
    """Integral of F(p, v) over the unit tangent bundle above a base region.

    Computed as the iterated integral of the fiber integral: the projection
    onto the base is a Riemannian submersion, so the bundle measure is the
    base measure times the round fiber measure.  ``point_factory(x)`` may
    supply a specialized per-point callable v -> F(x, v); with
    ``batched=True`` its output must accept (k, n) direction arrays.
    """
    if rule is None:
        rule = fiber_rule(m.dim)
    if point_factory is None:
        def point_factory(x):
            return lambda v: F(x, v)

    def hbar(x):
        return fiber_integral(m, point_factory(x), x, rule=rule, batched=batched)

    return base_integral(m, hbar, region, method=method, order=order,
                         n_mc=n_mc, seed=seed)


def fubini_consistency(m: ChartedManifold, F, region,
                       rule: Optional[FiberRule] = None,
                       n_mc: int = 20000, seed: int = 0,
                       order: int = 12) -> dict:
    """Compare the iterated bundle integral with a direct Monte Carlo
    estimate over (point, direction) pairs.

    Returns the discrepancy together with the combined error bar; agreement
    within errors is the consistency check for the submersion structure.
    """
    if rule is None:
        rule = fiber_rule(m.dim)
    iterated = sm_integral(m, F, region, rule=rule, method="quadrature", order=order)

    patches = resolve_patches(m, region)
    rng = np.random.default_rng(seed)
    w_total = omega(m.dim)
    values, variances, nodes = [], [], 0
    for patch in patches:
        lo = np.array([b[0] for b in patch.bounds])
        hi = np.array([b[1] for b in patch.bounds])
        vol = float(np.prod(hi - lo))
        u = rng.uniform(size=(n_mc, len(patch.bounds))) * (hi - lo) + lo
        g = rng.normal(size=(n_mc, m.dim))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        vals = np.empty(n_mc)
        for i in range(n_mc):
            x = patch.to_chart(u[i])
            E = orthonormal_frame(m, x)
            v = E @ g[i]
            vals[i] = patch.density(u[i]) * float(F(x, v))
        mean = float(np.sum(vals)) / n_mc
        var = float(np.sum((vals - mean) ** 2)) / max(1, n_mc - 1)
        values.append(vol * w_total * mean)
        variances.append((vol * w_total) ** 2 * var / n_mc)
        nodes += n_mc
    direct = math.fsum(values)
    direct_err = math.sqrt(math.fsum(variances))
    discrepancy = abs(direct - iterated.value)
    bound = 3.0 * (direct_err + iterated.stderr)
    return {
        "iterated": iterated.value,
        "direct": direct,
        "discrepancy": discrepancy,
        "direct_stderr": direct_err,
        "iterated_stderr": iterated.stderr,
        "bound": bound,
        "consistent": bool(discrepancy <= max(bound, 1e-12)),
        "nodes": nodes + iterated.nodes,
    }


# ---------------------------------------------------------------------------
# truncation ladders


def _ladder(increment, r0: float, rungs: int, rel_tol: float,
            abs_tol: float) -> IntegralEstimate:
    radii = [r0 * 2.0 ** k for k in range(rungs)]
    trace, values, errs, nodes = [], [], [], 0
    lo = 0.0
    total = 0.0
    for R in radii:
        est = increment(lo, R)
        total += est.value
        errs.append(est.stderr)
        nodes += est.nodes
        trace.append((R, total))
        values.append(total)
        lo = R
    converged = False
    if len(values) >= 3:
        inc1 = abs(values[-2] - values[-3])
        inc2 = abs(values[-1] - values[-2])
        scale = max(abs_tol, rel_tol * abs(values[-1]))
        if inc2 <= scale:
            converged = True
        elif inc1 > 0 and inc2 < 0.9 * inc1:
            # geometric tail extrapolation of the remaining mass
            rho = inc2 / inc1
            converged = inc2 * rho / (1.0 - rho) <= scale
    return IntegralEstimate(
        value=values[-1], stderr=math.fsum(errs), nodes=nodes,
        truncation_radius=radii[-1], truncation_trace=trace, converged=converged)


def ladder_integral(m: ChartedManifold, h, r0: float = 1.0, rungs: int = 8,
                    method: str = "quadrature", order: int = 16,
                    n_mc: int = 20000, seed: int = 0,
                    rel_tol: float = 1e-3, abs_tol: float = 1e-10) -> IntegralEstimate:
    """Integral of h over radius balls r <= R_k on the ladder R_k = r0 * 2^k.

    The trace of partial values is recorded; a non-convergent trace is the
    deliberate signal for a non-integrable integrand.
    """
    def increment(lo, hi):
        return base_integral(m, h, RadialShell(lo, hi) if lo > 0 else RadialShell(0.0, hi),
                             method=method, order=order, n_mc=n_mc, seed=seed)
    return _ladder(increment, r0, rungs, rel_tol, abs_tol)


def sm_ladder(m: ChartedManifold, F, r0: float = 1.0, rungs: int = 8,
              rule: Optional[FiberRule] = None, order: int = 12,
              rel_tol: float = 1e-3, abs_tol: float = 1e-10,
              point_factory=None, batched: bool = False) -> IntegralEstimate:
    """Truncation ladder for a unit-tangent-bundle integrand."""
    def increment(lo, hi):
        return sm_integral(m, F, RadialShell(lo, hi) if lo > 0 else RadialShell(0.0, hi),
                           rule=rule, method="quadrature", order=order,
                           point_factory=point_factory, batched=batched)
    return _ladder(increment, r0, rungs, rel_tol, abs_tol)


# ---------------------------------------------------------------------------
# sampling


def sample_box_points(m: ChartedManifold, n: int, rng,
                      box: Optional[tuple[tuple[float, float], ...]] = None) -> np.ndarray:
    """Uniform chart-coordinate samples in a box (defaults to sample_box)."""
    if box is None:
        box = m.sample_box
    if box is None:
        raise ValueError(f"{m.name} has no default sample box")
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return rng.uniform(size=(n, m.dim)) * (hi - lo) + lo


def sample_states(m: ChartedManifold, n: int, rng,
                  box: Optional[tuple[tuple[float, float], ...]] = None) -> list[UnitTangentState]:
    """Uniform-in-chart points with isotropic unit velocities.

    Suitable for property sweeps; use ``sample_liouville`` when the base
    distribution must match the volume measure.
    """
    pts = sample_box_points(m, n, rng, box=box)
    out = []
    for i in range(n):
        E = orthonormal_frame(m, pts[i])
        c = rng.normal(size=m.dim)
        c /= np.linalg.norm(c)
        out.append(UnitTangentState(x=pts[i], v=E @ c))
    return out


def sample_liouville(m: ChartedManifold, n: int, rng,
                     radius_cap: Optional[float] = None,
                     box: Optional[tuple[tuple[float, float], ...]] = None,
                     ) -> list[UnitTangentState]:
    """Samples from the flow-invariant bundle measure, restricted to a
    bounded base region.

    Base points follow the volume measure (rejection against the patch
    density); directions are isotropic in the fiber.  For non-compact
    manifolds pass ``radius_cap``; the cap must be recorded by callers since
    the full measure may be infinite.
    """
    if n <= 0:
        raise ValueError("need a positive sample count")
    if radius_cap is not None:
        if m.shell is None:
            raise ValueError(f"{m.name} has no shell parametrization for the radius cap")
        patches = list(m.shell(0.0, radius_cap))
    else:
        if box is None:
            box = m.sample_box
        if box is None:
            raise ValueError("need radius_cap or a coordinate box")
        patches = [_box_patch(m, ChartBox(tuple(box)))]

    sups, masses = [], []
    for patch in patches:
        lo = np.array([b[0] for b in patch.bounds])
        hi = np.array([b[1] for b in patch.bounds])
        grid = [np.linspace(a, b, 7) for a, b in patch.bounds]
        mesh = np.meshgrid(*grid, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=-1)
        dens = np.array([patch.density(p) for p in pts])
        sups.append(1.5 * float(dens.max()) + 1e-300)
        masses.append(float(dens.mean()) * float(np.prod(hi - lo)))
    total = math.fsum(masses)
    probs = np.array([max(w, 1e-300) for w in masses]) / max(total, 1e-300)
    cdf = np.cumsum(probs)

    out = []
    while len(out) < n:
        j = int(np.searchsorted(cdf, rng.uniform()))
        j = min(j, len(patches) - 1)
        patch = patches[j]
        lo = np.array([b[0] for b in patch.bounds])
        hi = np.array([b[1] for b in patch.bounds])
        u = rng.uniform(size=len(patch.bounds)) * (hi - lo) + lo
        d = patch.density(u)
        if d > sups[j]:
            raise RuntimeError("density exceeded its rejection envelope; "
                               "refine the probe grid")
        if rng.uniform() * sups[j] > d:
            continue
        x = patch.to_chart(u)
        E = orthonormal_frame(m, x)
        c = rng.normal(size=m.dim)
        c /= np.linalg.norm(c)
        out.append(UnitTangentState(x=np.asarray(x, dtype=float), v=E @ c))
    return out
