"""Chart-based Riemannian primitives: metric, connection, divergence.

Everything here is a pure function of explicit chart data.  A manifold is a
bundle of chart evaluators plus optional closed forms (Christoffel symbols,
a distance-from-basepoint surrogate, an analytic geodesic) that downstream
modules use as oracles or fast paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Chart",
    "ChartedManifold",
    "VectorFieldDef",
    "UnitTangentState",
    "DomainError",
    "MetricError",
    "metric_at",
    "inverse_metric_at",
    "volume_density",
    "christoffel",
    "orthonormal_frame",
    "covariant_derivative",
    "divergence",
    "pairing",
    "pairing_rate",
    "pairing_rate_form",
    "field_norm",
    "unit_state",
]

# Central-difference step for first derivatives of smooth chart data:
# h ~ cbrt(machine eps) balances truncation against rounding.
FD_STEP = float(np.cbrt(np.finfo(float).eps))

METRIC_SYMMETRY_TOL = 1e-12
UNIT_SPEED_TOL = 1e-10


class DomainError(ValueError):
    """Point (or a finite-difference stencil around it) left the chart domain."""


class MetricError(ValueError):
    """Metric evaluation produced a non-symmetric or non-SPD matrix."""


def _always(_x) -> bool:
    return True


@dataclass(frozen=True)
class Chart:
    """One coordinate chart: a domain predicate plus a metric evaluator.

    ``periods[i]`` is the period of coordinate i, or None for a
    non-periodic coordinate.
    """

    dim: int
    metric: Callable[[np.ndarray], np.ndarray]
    domain: Callable[[np.ndarray], bool] = _always
    periods: tuple[Optional[float], ...] = ()

    def __post_init__(self):
        if not self.periods:
            object.__setattr__(self, "periods", (None,) * self.dim)
        if len(self.periods) != self.dim:
            raise ValueError("periods length must equal chart dimension")


@dataclass(frozen=True)
class ChartedManifold:
    """A manifold given by charts, with optional closed-form extras.

    Experiments work in a single almost-everywhere chart (``charts[0]``);
    additional charts are carried as data but no transition maps are
    implemented.

    Optional fields:
      christoffel      closed-form symbols, x -> (n, n, n) array G[k, i, j]
      radius           distance-from-basepoint surrogate r(x) >= 0
      pair_distance    true distance between two chart points, when known
      geodesic         analytic flow oracle (x0, v0, t) -> (x, v)
      shell            (r_lo, r_hi) -> tuple of integration patches for the
                       region {r_lo <= radius <= r_hi} (see integrals module)
      sample_box       default bounded coordinate box for random sampling
      radius_escape_certificate
                       True only if (a) pair_distance is the true distance
                       and (b) t -> radius(geodesic(t)) is convex along every
                       geodesic; lets orbit probes certify non-return early.
    """

    name: str
    dim: int
    charts: tuple[Chart, ...]
    christoffel: Optional[Callable[[np.ndarray], np.ndarray]] = None
    basepoint: Optional[np.ndarray] = None
    radius: Optional[Callable[[np.ndarray], float]] = None
    pair_distance: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    geodesic: Optional[Callable[[np.ndarray, np.ndarray, float], tuple]] = None
    shell: Optional[Callable[[float, float], tuple]] = None
    sample_box: Optional[tuple[tuple[float, float], ...]] = None
    radius_escape_certificate: bool = False
    description: str = ""

    @property
    def chart(self) -> Chart:
        return self.charts[0]


@dataclass(frozen=True)
class VectorFieldDef:
    """A C1 vector field on the working chart of one manifold.

    ``components(x)`` returns the chart components X^k(x).  ``jacobian``,
    when supplied, returns analytic partials J[k, i] = dX^k/dx^i; otherwise
    central differences are used.  ``divergence``/``fx`` are optional closed
    forms used by oracle tests, never by the computing paths.
    """

    name: str
    components: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    divergence: Optional[Callable[[np.ndarray], float]] = None
    fx: Optional[Callable[[np.ndarray, np.ndarray], float]] = None
    chart: int = 0

    @property
    def has_analytic_partials(self) -> bool:
        return self.jacobian is not None


@dataclass(frozen=True, eq=False)
class UnitTangentState:
    """A point of the unit tangent bundle: chart id, position, velocity."""

    x: np.ndarray
    v: np.ndarray
    chart: int = 0


def unit_state(m: ChartedManifold, x, v, chart: int = 0,
               normalize: bool = False) -> UnitTangentState:
    """Build a unit tangent state, enforcing g(v, v) = 1 within 1e-10.

    With ``normalize=True`` the velocity is rescaled to unit g-norm first.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    g = metric_at(m, x, chart=chart)
    speed2 = float(v @ g @ v)
    if normalize:
        if speed2 <= 0:
            raise ValueError("cannot normalize a null velocity")
        v = v / math.sqrt(speed2)
        speed2 = 1.0
    if abs(speed2 - 1.0) > UNIT_SPEED_TOL:
        raise ValueError(
            f"velocity is not unit: g(v,v) = {speed2!r} (tol {UNIT_SPEED_TOL})")
    return UnitTangentState(x=x, v=v, chart=chart)


# ---------------------------------------------------------------------------
# metric


def metric_at(m: ChartedManifold, x, chart: int = 0, validate: bool = True) -> np.ndarray:
    """Metric matrix g_ij(x); validates symmetry and positive definiteness.

    Positive definiteness is enforced by an attempted Cholesky factorization;
    failure is a hard error rather than a silent clamp.  Hot loops may pass
    ``validate=False`` once the evaluator has been swept by the invariant
    checks; the domain predicate is always applied.
    """
    x = np.asarray(x, dtype=float)
    ch = m.charts[chart]
    if not ch.domain(x):
        raise DomainError(f"{m.name}: point {x!r} outside chart domain")
    g = np.asarray(ch.metric(x), dtype=float)
    if not validate:
        return g
    if g.shape != (m.dim, m.dim):
        raise MetricError(f"{m.name}: metric shape {g.shape} != ({m.dim}, {m.dim})")
    if not np.all(np.abs(g - g.T) <= METRIC_SYMMETRY_TOL * max(1.0, float(np.abs(g).max()))):
        raise MetricError(f"{m.name}: metric not symmetric at {x!r}")
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise MetricError(f"{m.name}: metric not positive definite at {x!r}") from exc
    return g


def inverse_metric_at(m: ChartedManifold, x, chart: int = 0) -> np.ndarray:
    return np.linalg.inv(metric_at(m, x, chart=chart))


def volume_density(m: ChartedManifold, x, chart: int = 0) -> float:
    """sqrt(det g) at x; strictly positive on the chart domain."""
    g = metric_at(m, x, chart=chart)
    L = np.linalg.cholesky(g)
    return float(np.prod(np.diag(L)))


def orthonormal_frame(m: ChartedManifold, x, chart: int = 0) -> np.ndarray:
    """Columns form a g-orthonormal basis of the tangent space at x.

    Equivalent to Gram-Schmidt on the chart basis: with g = L L^T the frame
    is E = L^{-T}, so E^T g E = I.
    """
    g = metric_at(m, x, chart=chart)
    L = np.linalg.cholesky(g)
    return np.linalg.inv(L).T


# ---------------------------------------------------------------------------
# connection


def _fd_steps(x: np.ndarray) -> np.ndarray:
    return FD_STEP * np.maximum(1.0, np.abs(x))


def _metric_partials(m: ChartedManifold, x: np.ndarray, chart: int) -> np.ndarray:
    """dg[a, i, j] = d g_ij / d x^a by central differences."""
    ch = m.charts[chart]
    n = m.dim
    h = _fd_steps(x)
    dg = np.empty((n, n, n))
    for a in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[a] += h[a]
        xm[a] -= h[a]
        if not (ch.domain(xp) and ch.domain(xm)):
            raise DomainError(
                f"{m.name}: finite-difference stencil at {x!r} leaves the chart domain")
        gp = np.asarray(ch.metric(xp), dtype=float)
        gm = np.asarray(ch.metric(xm), dtype=float)
        dg[a] = (gp - gm) / (2.0 * h[a])
    # exact index symmetry of the symbols below needs dg[a] symmetric
    return 0.5 * (dg + np.swapaxes(dg, 1, 2))


def christoffel(m: ChartedManifold, x, chart: int = 0,
                method: str = "auto") -> np.ndarray:
    """Christoffel symbols G[k, i, j] = Gamma^k_ij at x.

    ``method``: "auto" uses the manifold's closed form when present,
    "closed" requires it, "fd" forces the finite-difference path.
    """
    x = np.asarray(x, dtype=float)
    if method not in ("auto", "closed", "fd"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "closed") and m.christoffel is not None:
        return np.asarray(m.christoffel(x), dtype=float)
    if method == "closed":
        raise ValueError(f"{m.name} has no closed-form Christoffel symbols")
    ginv = inverse_metric_at(m, x, chart=chart)
    dg = _metric_partials(m, x, chart)
    # Gamma_{l ij} = (d_i g_jl + d_j g_il - d_l g_ij) / 2
    first = 0.5 * (np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg)
    return np.einsum("kl,lij->kij", ginv, first)


def _field_jacobian(field: VectorFieldDef, m: ChartedManifold,
                    x: np.ndarray) -> np.ndarray:
    """J[k, i] = dX^k/dx^i, analytic when supplied else central differences."""
    if field.jacobian is not None:
        return np.asarray(field.jacobian(x), dtype=float)
    ch = m.charts[field.chart]
    n = m.dim
    h = _fd_steps(x)
    J = np.empty((n, n))
    for i in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        if not (ch.domain(xp) and ch.domain(xm)):
            raise DomainError(
                f"{m.name}: finite-difference stencil at {x!r} leaves the chart domain")
        J[:, i] = (np.asarray(field.components(xp), dtype=float)
                   - np.asarray(field.components(xm), dtype=float)) / (2.0 * h[i])
    return J


def _derivative_matrix(field: VectorFieldDef, m: ChartedManifold,
                       x: np.ndarray) -> np.ndarray:
    """A[k, i] with (nabla_v X)^k = A[k, i] v^i."""
    J = _field_jacobian(field, m, x)
    G = christoffel(m, x, chart=field.chart)
    X = np.asarray(field.components(x), dtype=float)
    return J + np.einsum("kij,j->ki", G, X)


def covariant_derivative(field: VectorFieldDef, m: ChartedManifold,
                         state: UnitTangentState) -> np.ndarray:
    """(nabla_v X)^k = v^i d_i X^k + Gamma^k_ij v^i X^j at the state's point."""
    A = _derivative_matrix(field, m, state.x)
    return A @ state.v


def divergence(field: VectorFieldDef, m: ChartedManifold, x,
               method: str = "trace") -> float:
    """Divergence of the field at x.

    "trace" takes the trace of v -> nabla_v X.  "coordinate" evaluates the
    independent route (1/sqrt G) d_i (sqrt G X^i).  "closed" uses the field's
    supplied closed form.
    """
    x = np.asarray(x, dtype=float)
    if method == "trace":
        return float(np.trace(_derivative_matrix(field, m, x)))
    if method == "coordinate":
        ch = m.charts[field.chart]
        n = m.dim
        h = _fd_steps(x)
        total = 0.0
        for i in range(n):
            xp = x.copy()
            xm = x.copy()
            xp[i] += h[i]
            xm[i] -= h[i]
            if not (ch.domain(xp) and ch.domain(xm)):
                raise DomainError(
                    f"{m.name}: finite-difference stencil at {x!r} leaves the chart domain")
            wp = volume_density(m, xp, chart=field.chart) * float(field.components(xp)[i])
            wm = volume_density(m, xm, chart=field.chart) * float(field.components(xm)[i])
            total += (wp - wm) / (2.0 * h[i])
        return total / volume_density(m, x, chart=field.chart)
    if method == "closed":
        if field.divergence is None:
            raise ValueError(f"field {field.name} has no closed-form divergence")
        return float(field.divergence(x))
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# the unit-tangent-bundle observable


def pairing(field: VectorFieldDef, m: ChartedManifold,
            state: UnitTangentState) -> float:
    """g(X, v): the field's component along the state's velocity."""
    g = metric_at(m, state.x, chart=state.chart)
    X = np.asarray(field.components(state.x), dtype=float)
    return float(state.v @ g @ X)


def pairing_rate_form(field: VectorFieldDef, m: ChartedManifold, x,
                      chart: int = 0, validate: bool = True) -> np.ndarray:
    """Matrix Q with pairing rate = v @ Q @ v for unit v at x.

    The rate of g(X, gamma') along the geodesic through (x, v) is the
    quadratic form g(nabla_v X, v); factoring Q out once makes fiber sweeps
    over many directions cheap.
    """
    x = np.asarray(x, dtype=float)
    g = metric_at(m, x, chart=chart, validate=validate)
    A = _derivative_matrix(field, m, x)
    Q = g @ A
    return 0.5 * (Q + Q.T)


def pairing_rate(field: VectorFieldDef, m: ChartedManifold,
                 state: UnitTangentState) -> float:
    """g(nabla_v X, v): the derivative of the pairing along the geodesic flow.

    Vanishes identically for Killing fields; equals the conformal factor on
    unit vectors for conformal fields.  Its fiber average over unit
    directions is (omega_{n-1} / n) * div X.
    """
    Q = pairing_rate_form(field, m, state.x, chart=state.chart)
    return float(state.v @ Q @ state.v)


def field_norm(field: VectorFieldDef, m: ChartedManifold, x) -> float:
    """g-norm |X| at x."""
    x = np.asarray(x, dtype=float)
    g = metric_at(m, x, chart=field.chart)
    X = np.asarray(field.components(x), dtype=float)
    return float(math.sqrt(max(0.0, X @ g @ X)))
