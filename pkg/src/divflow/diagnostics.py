"""Computable probes of the divergence-identity hypotheses.

None of these produce verdicts about measure-theoretic properties; they
report finite evidence (annulus masses, truncation traces, sampled suprema,
return statistics) against the conditions the identities need:

  karp_sequence      annulus-decay quantity (1/r) * mass of |X| on B(2r)\\B(r)
  cutoff_estimate    both sides of the cutoff bound for |integral of
                     phi_r div X| via an explicit ramp with |grad phi| <= C/r
  rate_integrability_ladder
                     truncation ladder of |pairing rate| over the bundle
  x_decay_at_infinity
                     sampled annulus suprema of |X|
  recurrence_fraction
                     fraction of flow samples with a finite-horizon return
  hopf_probe         growth classification of t -> integral of a positive
                     observable along one orbit
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import (
    ChartedManifold,
    UnitTangentState,
    VectorFieldDef,
    divergence,
    field_norm,
    pairing_rate_form,
)
from .flow import FirstReturnResult, birkhoff_integral, first_return, integrate_geodesic
from .integrals import (
    IntegralEstimate,
    RadialShell,
    base_integral,
    resolve_patches,
    sample_liouville,
    sm_ladder,
)
from .parallel import parallel_map

__all__ = [
    "AnnulusReport",
    "CutoffReport",
    "RecurrenceStats",
    "HopfProbe",
    "karp_sequence",
    "karp_to_csv",
    "cutoff_estimate",
    "rate_integrability_ladder",
    "x_decay_at_infinity",
    "recurrence_fraction",
    "hopf_probe",
    "default_observable",
    "CUTOFF_GRAD_CONSTANT",
]

# quintic smoothstep ramp: |d phi/ds| <= 15/8, surrogates are 1-Lipschitz,
# rounded up to an even 2
CUTOFF_GRAD_CONSTANT = 2.0


@dataclass(frozen=True)
class AnnulusReport:
    """Mass of |X| over one annulus of the radius surrogate."""

    radius: float
    mass: float
    normalized: float          # mass / radius
    stderr: float
    surrogate: str

    def to_json(self) -> dict:
        return {"radius": self.radius, "mass": self.mass,
                "normalized": self.normalized, "stderr": self.stderr,
                "surrogate": self.surrogate}


def karp_sequence(m: ChartedManifold, field: VectorFieldDef,
                  radii: Sequence[float], method: str = "quadrature",
                  order: int = 16, n_mc: int = 20000,
                  seed: int = 0) -> list[AnnulusReport]:
    """Annulus-decay reports (1/r) * integral of |X| over B(2r) \\ B(r).

    A sequence sinking to zero is the annulus-decay sufficient condition for
    divergence identities; values bounded away from zero mean the condition
    fails (which by itself decides nothing).
    """
    if m.radius is None or m.shell is None:
        raise ValueError(f"{m.name} has no radius surrogate / shell parametrization")
    out = []
    for r in radii:
        est = base_integral(m, lambda x: field_norm(field, m, x),
                            RadialShell(float(r), 2.0 * float(r)),
                            method=method, order=order, n_mc=n_mc, seed=seed)
        out.append(AnnulusReport(radius=float(r), mass=est.value,
                                 normalized=est.value / float(r),
                                 stderr=est.stderr / float(r),
                                 surrogate=f"{m.name} radius surrogate"))
    return out


def karp_to_csv(reports: Sequence[AnnulusReport], path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "mass", "normalized", "stderr"])
        for rep in reports:
            w.writerow([repr(rep.radius), repr(rep.mass),
                        repr(rep.normalized), repr(rep.stderr)])


# ---------------------------------------------------------------------------
# cutoff estimate


def _smoothstep(u: float) -> float:
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))


def cutoff_bump(m: ChartedManifold, r: float) -> Callable[[np.ndarray], float]:
    """C2 radial bump: 1 on the r-ball, 0 outside the 2r-ball, with
    |grad| <= CUTOFF_GRAD_CONSTANT / r."""
    if m.radius is None:
        raise ValueError(f"{m.name} has no radius surrogate")

    def phi(x):
        return _smoothstep(2.0 - m.radius(x) / r)

    return phi


@dataclass(frozen=True)
class CutoffReport:
    r: float
    lhs: float                 # |integral of phi_r div X|
    rhs: float                 # (C/r) * annulus mass of |X|
    lhs_stderr: float
    rhs_stderr: float
    constant: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def holds(self, sigma: float = 3.0) -> bool:
        return self.lhs <= self.rhs + sigma * (self.lhs_stderr + self.rhs_stderr)

    def to_json(self) -> dict:
        return {"r": self.r, "lhs": self.lhs, "rhs": self.rhs,
                "lhs_stderr": self.lhs_stderr, "rhs_stderr": self.rhs_stderr,
                "constant": self.constant, "slack": self.slack}


def cutoff_estimate(m: ChartedManifold, field: VectorFieldDef, r: float,
                    order: int = 16) -> CutoffReport:
    """Both sides of |integral of phi_r div X| <= (C/r) * annulus mass.

    The bound holds because the cutoff integral equals minus the integral of
    g(grad phi_r, X), supported on the annulus where |grad phi_r| <= C/r.
    Both sides are computed independently by quadrature.
    """
    phi = cutoff_bump(m, r)
    lhs_est = base_integral(
        m, lambda x: phi(x) * divergence(field, m, x), RadialShell(0.0, 2.0 * r),
        order=order)
    rhs_est = base_integral(
        m, lambda x: field_norm(field, m, x), RadialShell(r, 2.0 * r), order=order)
    c = CUTOFF_GRAD_CONSTANT
    return CutoffReport(r=float(r), lhs=abs(lhs_est.value),
                        rhs=(c / r) * rhs_est.value,
                        lhs_stderr=lhs_est.stderr,
                        rhs_stderr=(c / r) * rhs_est.stderr,
                        constant=c)


# ---------------------------------------------------------------------------
# integrability ladder for the pairing rate


def rate_integrability_ladder(m: ChartedManifold, field: VectorFieldDef,
                              r0: float = 1.0, rungs: int = 8,
                              order: int = 12, rel_tol: float = 1e-3,
                              ) -> IntegralEstimate:
    """Truncation ladder of |pairing rate| over the unit tangent bundle,
    restricted to base radius <= R on the doubling ladder.

    A converging trace is evidence of integrability; a diverging trace is
    flagged through ``converged=False`` and the recorded trace.
    """

    def point_factory(x):
        Q = pairing_rate_form(field, m, x)

        def h(V):
            V = np.atleast_2d(V)
            return np.abs(np.einsum("ki,ij,kj->k", V, Q, V))
        return h

    return sm_ladder(m, lambda x, v: 0.0, r0=r0, rungs=rungs, order=order,
                     rel_tol=rel_tol, point_factory=point_factory, batched=True)


# ---------------------------------------------------------------------------
# decay at infinity


def x_decay_at_infinity(m: ChartedManifold, field: VectorFieldDef,
                        radii: Sequence[float], n_samples: int = 400,
                        seed: int = 0) -> list[dict]:
    """Sampled suprema of |X| over annuli [r, 2r] of the radius surrogate.

    A decreasing-to-zero trace is evidence for uniform decay at infinity; a
    true supremum is not numerically verifiable, so sample counts are
    reported with the values.
    """
    rng = np.random.default_rng(seed)
    out = []
    for r in radii:
        sup = 0.0
        for patch in resolve_patches(m, RadialShell(float(r), 2.0 * float(r))):
            lo = np.array([b[0] for b in patch.bounds])
            hi = np.array([b[1] for b in patch.bounds])
            u = rng.uniform(size=(n_samples, len(patch.bounds))) * (hi - lo) + lo
            # always probe the radial endpoints as well
            u[0, 0], u[1, 0] = lo[0], hi[0]
            for k in range(n_samples):
                sup = max(sup, field_norm(field, m, patch.to_chart(u[k])))
        out.append({"radius": float(r), "sup": float(sup), "n_samples": n_samples})
    return out


# ---------------------------------------------------------------------------
# recurrence statistics


@dataclass(frozen=True)
class RecurrenceStats:
    n_samples: int
    n_returned: int
    n_no_return: int
    n_inconclusive: int
    fraction: Optional[float]    # returned / (samples - inconclusive)
    eps: float
    t_min: float
    t_max: float
    radius_cap: Optional[float]
    seed: int

    def to_json(self) -> dict:
        return {"n_samples": self.n_samples, "n_returned": self.n_returned,
                "n_no_return": self.n_no_return,
                "n_inconclusive": self.n_inconclusive,
                "fraction": self.fraction, "eps": self.eps,
                "t_min": self.t_min, "t_max": self.t_max,
                "radius_cap": self.radius_cap, "seed": self.seed}


def recurrence_fraction(m: ChartedManifold, n: int, eps: float = 0.05,
                        t_min: float = 1.0, t_max: float = 1000.0,
                        seed: int = 0, radius_cap: Optional[float] = None,
                        box=None, workers: int = 1,
                        grid_step: Optional[float] = None) -> RecurrenceStats:
    """Fraction of flow-measure samples with a detected return.

    Initial states follow the invariant bundle measure restricted to a
    bounded base region (the cap is recorded: the full measure may be
    infinite).  Orbits truncated before the horizon without a certificate
    are excluded from the fraction and counted separately.  This is
    finite-horizon evidence only, never a recurrence verdict.
    """
    if n <= 0:
        raise ValueError("need a positive sample count")
    rng = np.random.default_rng(seed)
    states = sample_liouville(m, n, rng, radius_cap=radius_cap, box=box)

    def probe(state) -> FirstReturnResult:
        return first_return(m, state, eps=eps, t_min=t_min, t_max=t_max,
                            grid_step=grid_step)

    results = parallel_map(probe, states, workers=workers)
    returned = sum(1 for r in results if r.event is not None)
    inconclusive = sum(1 for r in results if r.event is None and not r.conclusive)
    no_return = n - returned - inconclusive
    valid = n - inconclusive
    return RecurrenceStats(
        n_samples=n, n_returned=returned, n_no_return=no_return,
        n_inconclusive=inconclusive,
        fraction=(returned / valid) if valid > 0 else None,
        eps=eps, t_min=t_min, t_max=t_max, radius_cap=radius_cap, seed=seed)


# ---------------------------------------------------------------------------
# orbit-growth (Hopf-type) probes


def default_observable(m: ChartedManifold, rate: float = 3.0) -> Callable:
    """Strictly positive base observable exp(-rate * r), integrable against
    the bundle measure for every shipped manifold (volume growth is at most
    e^r here); constant 1 on manifolds without a radius surrogate."""
    if m.radius is None:
        return lambda x: 1.0
    radius = m.radius
    return lambda x: math.exp(-rate * radius(x))


@dataclass(frozen=True)
class HopfProbe:
    horizons: tuple[float, ...]
    values: tuple[float, ...]        # I(T) per horizon
    slope: Optional[float]           # log-log fit over the last decade
    r_squared: Optional[float]
    label: str                       # convergent-like | divergent-like | inconclusive
    truncated: bool

    def to_json(self) -> dict:
        return {"horizons": list(self.horizons), "values": list(self.values),
                "slope": self.slope, "r_squared": self.r_squared,
                "label": self.label, "truncated": self.truncated}


def _loglog_fit(T: np.ndarray, I: np.ndarray, flat_tol: float) -> tuple[float, float]:
    x = np.log(T)
    y = np.log(np.maximum(I, 1e-300))
    if float(np.std(y)) < flat_tol:
        # flat at resolution: a plateau, which no line fit can grade fairly
        A = np.vstack([x, np.ones_like(x)]).T
        slope = float(np.linalg.lstsq(A, y, rcond=None)[0][0])
        return slope, 1.0
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


def hopf_probe(m: ChartedManifold, state: UnitTangentState,
               f0: Optional[Callable] = None,
               horizons: Optional[Sequence[float]] = None,
               slope_delta: float = 0.1, r2_min: float = 0.99,
               flat_tol: float = 0.08) -> HopfProbe:
    """Growth trace of I(T) = integral over [0, T] of a positive observable
    along one orbit, with a heuristic growth label.

    A plateauing trace marks orbits on which the observable's full-line
    integral looks finite (transient behavior); linear growth marks orbits
    that keep revisiting regions where the observable is large.  Labels are
    configuration-thresholded evidence, not classifications.
    """
    if horizons is None:
        horizons = np.geomspace(1.0, 12.0, 9)
    horizons = np.asarray(sorted(float(t) for t in horizons))
    if f0 is None:
        f0 = default_observable(m)
    if f0(state.x) <= 0.0:
        raise ValueError("observable must be strictly positive")

    t_max = float(horizons[-1])
    traj = integrate_geodesic(m, state, t_max)
    reached = min(traj.t_end, t_max)
    truncated = traj.truncated

    from scipy.integrate import quad

    def integrand(t):
        return f0(traj.sol(t)[:m.dim])

    values = []
    total = 0.0
    prev = 0.0
    for T in horizons:
        if T > reached + 1e-12:
            break
        seg, _ = quad(integrand, prev, float(T), epsabs=1e-11, epsrel=1e-9, limit=200)
        total += seg
        values.append(total)
        prev = float(T)
    used = horizons[:len(values)]

    if len(values) < 4 or truncated:
        return HopfProbe(horizons=tuple(used), values=tuple(values),
                         slope=None, r_squared=None, label="inconclusive",
                         truncated=truncated)

    window = used >= used[-1] / 10.0
    slope, r2 = _loglog_fit(used[window], np.asarray(values)[window], flat_tol)
    if r2 < r2_min:
        label = "inconclusive"
    elif slope <= slope_delta:
        label = "convergent-like"
    elif slope >= 1.0 - slope_delta:
        label = "divergent-like"
    else:
        label = "inconclusive"
    return HopfProbe(horizons=tuple(float(t) for t in used),
                     values=tuple(float(v) for v in values),
                     slope=slope, r_squared=r2, label=label, truncated=truncated)
