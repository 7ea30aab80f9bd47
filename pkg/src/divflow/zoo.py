"""Closed-form constructions of the test manifolds and vector fields.

The zoo ships:
  torus                    flat square torus (trivially recurrent testbed)
  revolution:1/(1+x^2)     finite-area surface of revolution carrying a
                           divergence-free field W with non-integrable norm
  hyperbolic               hyperbolic plane in the hyperboloid graph chart,
                           with a conformal field and a Killing rotation
  warp:ex2                 finite-volume warped product (hyperbolic plane
                           x circle) with a Killing horizontal lift whose
                           norm grows like sinh r
  warp:ex3                 infinite-volume warped product with a Killing
                           vertical lift whose norm decays to zero
  warp:ex4                 finite-volume warped product carrying the
                           horizontal lift of a conformal field, with
                           div Z = 2/sqrt(1+x^2+y^2) and integral 4 pi^2

Every manifold exposes the working chart, closed-form Christoffel symbols,
a radius surrogate with matching shell parametrization, and a bounded
default sampling box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .geometry import Chart, ChartedManifold, VectorFieldDef
from .integrals import ShellPatch

__all__ = [
    "RevolutionProfile",
    "WarpProfile",
    "AmbientEmbedding",
    "WarpedProduct",
    "LiftedField",
    "LiftError",
    "make_flat_torus",
    "make_surface_of_revolution",
    "make_hyperbolic_plane",
    "make_warped_product",
    "lift",
    "warp_profile_finite_volume",
    "warp_profile_infinite_volume",
    "manifold",
    "vector_field",
    "field_pairs",
    "zoo_fields",
    "list_zoo",
    "MANIFOLD_IDS",
    "FIELD_IDS",
]

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class RevolutionProfile:
    """Positive profile f with two derivatives, rotated about the x axis."""

    name: str
    f: Callable[[float], float]
    df: Callable[[float], float]
    d2f: Callable[[float], float]


def default_revolution_profile() -> RevolutionProfile:
    return RevolutionProfile(
        name="1/(1+x^2)",
        f=lambda x: 1.0 / (1.0 + x * x),
        df=lambda x: -2.0 * x / (1.0 + x * x) ** 2,
        d2f=lambda x: (6.0 * x * x - 2.0) / (1.0 + x * x) ** 3,
    )


def cylinder_profile() -> RevolutionProfile:
    return RevolutionProfile("cylinder", lambda x: 1.0, lambda x: 0.0, lambda x: 0.0)


class _HermiteBlend:
    """Polynomial blend matching the listed derivatives at both ends.

    With k derivative values per end the polynomial has degree 2k - 1; the
    default (value through 4th derivative) makes the joined profile C4, so
    an order-5 orbit integrator sees enough smoothness across the seams.
    """

    def __init__(self, r0, r1, left, right):
        k = len(left)
        deg = 2 * k - 1
        rows, rhs = [], []
        for r, vals in ((r0, left), (r1, right)):
            for d in range(k):
                row = [0.0] * (deg + 1)
                for p in range(d, deg + 1):
                    row[p] = math.perm(p, d) * r ** (p - d)
                rows.append(row)
            rhs.extend(vals)
        coeffs = np.linalg.solve(np.array(rows), np.array(rhs))
        self.poly = np.polynomial.Polynomial(coeffs)
        self.dpoly = self.poly.deriv()

    def __call__(self, r):
        return float(self.poly(r))

    def deriv(self, r):
        return float(self.dpoly(r))


@dataclass(frozen=True, eq=False)
class WarpProfile:
    """Radial warp b(r): a plateau on |r| < 1, a C2 blend on [1, 2], then an
    explicit tail.

    tail == "finite-volume": b = a (sinh 2 / sinh r)^2 for r >= 2, so
    sinh(r)^2 b(r) is constant and the volume integrand b sinh is integrable.
    tail == "infinite-volume": b = 2a / (1 + r), so b -> 0 while
    sinh(r) b(r)^p grows without bound for every p.
    """

    name: str
    plateau: float
    tail: str
    b: Callable[[float], float]
    db: Callable[[float], float]


def _profile_from_tail(name, a, tail_tag, tail_derivs) -> WarpProfile:
    tail = tail_derivs[0]
    dtail = tail_derivs[1]
    blend = _HermiteBlend(1.0, 2.0, (a, 0.0, 0.0, 0.0, 0.0),
                          tuple(d(2.0) for d in tail_derivs))

    def b(r: float) -> float:
        r = abs(r)
        if r < 1.0:
            return a
        if r < 2.0:
            return blend(r)
        return tail(r)

    def db(r: float) -> float:
        s = 1.0 if r >= 0 else -1.0
        r = abs(r)
        if r < 1.0:
            return 0.0
        if r < 2.0:
            return s * blend.deriv(r)
        return s * dtail(r)

    return WarpProfile(name=name, plateau=a, tail=tail_tag, b=b, db=db)


def warp_profile_finite_volume(a: float = 1.0) -> WarpProfile:
    c = a * math.sinh(2.0) ** 2

    def d0(r):
        return c / math.sinh(r) ** 2

    def d1(r):
        return -2.0 * c * math.cosh(r) / math.sinh(r) ** 3

    def d2(r):
        return 2.0 * c * (math.cosh(2.0 * r) + 2.0) / math.sinh(r) ** 4

    def d3(r):
        sh = math.sinh(r)
        return -8.0 * c * (sh * sh + 3.0) * math.cosh(r) / sh ** 5

    def d4(r):
        s2 = math.sinh(r) ** 2
        return 8.0 * c * (2.0 * s2 * s2 + 15.0 * s2 + 15.0) / s2 ** 3

    return _profile_from_tail("finite-volume", a, "finite-volume",
                              (d0, d1, d2, d3, d4))


def warp_profile_infinite_volume(a: float = 1.0) -> WarpProfile:
    derivs = tuple(
        (lambda r, k=k: 2.0 * a * (-1.0) ** k * math.factorial(k) / (1.0 + r) ** (k + 1))
        for k in range(5))
    return _profile_from_tail("infinite-volume", a, "infinite-volume", derivs)


# ---------------------------------------------------------------------------
# flat torus


def make_flat_torus(side: float = 1.0) -> ChartedManifold:
    if side <= 0:
        raise ValueError("side must be positive")
    L = float(side)
    eye = np.eye(2)
    chart = Chart(dim=2, metric=lambda x: eye, periods=(L, L))

    def pair_distance(p, q):
        d = np.asarray(p) - np.asarray(q)
        d -= L * np.round(d / L)
        return float(np.linalg.norm(d))

    return ChartedManifold(
        name=f"torus(L={L:g})",
        dim=2,
        charts=(chart,),
        christoffel=lambda x: np.zeros((2, 2, 2)),
        basepoint=np.zeros(2),
        pair_distance=pair_distance,
        sample_box=((0.0, L), (0.0, L)),
        description=f"flat square torus of side {L:g}; geodesics are straight lines mod {L:g}",
    )


# ---------------------------------------------------------------------------
# surface of revolution


@dataclass(frozen=True, eq=False)
class AmbientEmbedding:
    """Map into Euclidean 3-space with its Jacobian (columns per chart axis)."""

    map: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]


class _MeridianArclength:
    """Arclength along the profile curve from x = 0, tabulated once.

    r(x) = integral of sqrt(1 + f'(s)^2); monotone, so both directions are
    served by interpolation on a dense grid.
    """

    def __init__(self, profile: RevolutionProfile, x_max: float = 4200.0, n: int = 400001):
        xs = np.linspace(0.0, x_max, n)
        slopes = np.sqrt(1.0 + np.array([profile.df(x) for x in xs]) ** 2)
        mids = 0.5 * (slopes[1:] + slopes[:-1])
        rs = np.concatenate([[0.0], np.cumsum(mids * np.diff(xs))])
        self.xs, self.rs = xs, rs
        self.x_max = x_max

    def r_of_x(self, x: float) -> float:
        ax = abs(float(x))
        if ax > self.x_max:
            raise ValueError(f"arclength table ends at |x| = {self.x_max}")
        return float(np.interp(ax, self.xs, self.rs))

    def x_of_r(self, r: float) -> float:
        if r > self.rs[-1]:
            raise ValueError(f"arclength table ends at r = {self.rs[-1]:.1f}")
        return float(np.interp(float(r), self.rs, self.xs))


def make_surface_of_revolution(profile: Optional[RevolutionProfile] = None,
                               ) -> tuple[ChartedManifold, AmbientEmbedding]:
    """Rotate the graph of a positive profile about the x axis.

    Chart (x, t) with metric diag(1 + f'(x)^2, f(x)^2), t periodic; the
    radius surrogate is meridian arclength from x = 0.
    """
    if profile is None:
        profile = default_revolution_profile()
    f, df, d2f = profile.f, profile.df, profile.d2f

    def metric(x):
        fp = df(x[0])
        return np.array([[1.0 + fp * fp, 0.0], [0.0, f(x[0]) ** 2]])

    def christoffel(x):
        fx, fp, fpp = f(x[0]), df(x[0]), d2f(x[0])
        d = 1.0 + fp * fp
        G = np.zeros((2, 2, 2))
        G[0, 0, 0] = fp * fpp / d
        G[0, 1, 1] = -fx * fp / d
        G[1, 0, 1] = G[1, 1, 0] = fp / fx
        return G

    arc = _MeridianArclength(profile)

    def shell(r_lo: float, r_hi: float):
        def to_chart_pos(u):
            return np.array([arc.x_of_r(u[0]), u[1]])

        def to_chart_neg(u):
            return np.array([-arc.x_of_r(u[0]), u[1]])

        def density(u):
            # meridian is unit-speed in s, so the area density reduces to f
            return f(arc.x_of_r(u[0]))

        bounds = ((float(r_lo), float(r_hi)), (0.0, TWO_PI))
        return (ShellPatch(bounds, to_chart_pos, density, "meridian+"),
                ShellPatch(bounds, to_chart_neg, density, "meridian-"))

    def embed(x):
        return np.array([x[0], f(x[0]) * math.cos(x[1]), f(x[0]) * math.sin(x[1])])

    def embed_jac(x):
        fx, fp = f(x[0]), df(x[0])
        c, s = math.cos(x[1]), math.sin(x[1])
        return np.array([[1.0, 0.0], [fp * c, -fx * s], [fp * s, fx * c]])

    m = ChartedManifold(
        name=f"revolution:{profile.name}",
        dim=2,
        charts=(Chart(dim=2, metric=metric, periods=(None, TWO_PI)),),
        christoffel=christoffel,
        basepoint=np.zeros(2),
        radius=lambda x: arc.r_of_x(x[0]),
        shell=shell,
        sample_box=((-8.0, 8.0), (0.0, TWO_PI)),
        description=f"surface of revolution of f(x) = {profile.name} about the x axis",
    )
    return m, AmbientEmbedding(map=embed, jacobian=embed_jac)


# ---------------------------------------------------------------------------
# hyperbolic plane (hyperboloid graph chart)


def _lorentz(a, b):
    return a[0] * b[0] + a[1] * b[1] - a[2] * b[2]


def _h2_lift(x):
    z = math.sqrt(1.0 + x[0] * x[0] + x[1] * x[1])
    return np.array([x[0], x[1], z])


def _h2_lift_velocity(x, v):
    P = _h2_lift(x)
    return np.array([v[0], v[1], (x[0] * v[0] + x[1] * v[1]) / P[2]])


def _h2_metric(x):
    z2 = 1.0 + x[0] * x[0] + x[1] * x[1]
    w = np.array([x[0], x[1]])
    return np.eye(2) - np.outer(w, w) / z2


def _h2_christoffel(x):
    g = _h2_metric(x)
    G = np.empty((2, 2, 2))
    G[0] = -x[0] * g
    G[1] = -x[1] * g
    return G


def make_hyperbolic_plane() -> ChartedManifold:
    """Hyperbolic plane as the graph chart (x, y) -> (x, y, sqrt(1+x^2+y^2))
    of the upper hyperboloid sheet, metric pulled back from the Lorentz form.

    Carries the analytic geodesic gamma(t) = cosh(t) P + sinh(t) V and the
    exact distance arccosh(-<P, Q>), which doubles as the radius surrogate.
    """

    def geodesic(x0, v0, t):
        P = _h2_lift(x0)
        V = _h2_lift_velocity(x0, v0)
        ct, st = math.cosh(t), math.sinh(t)
        G = ct * P + st * V
        Gdot = st * P + ct * V
        return G[:2].copy(), Gdot[:2].copy()

    def pair_distance(p, q):
        val = -_lorentz(_h2_lift(p), _h2_lift(q))
        return float(np.arccosh(max(1.0, val)))

    def radius(x):
        return float(np.arccosh(max(1.0, _h2_lift(x)[2])))

    def shell(r_lo, r_hi):
        def to_chart(u):
            s = math.sinh(u[0])
            return np.array([s * math.cos(u[1]), s * math.sin(u[1])])

        return (ShellPatch(((float(r_lo), float(r_hi)), (0.0, TWO_PI)),
                           to_chart, lambda u: math.sinh(u[0]), "polar"),)

    return ChartedManifold(
        name="hyperbolic",
        dim=2,
        charts=(Chart(dim=2, metric=_h2_metric),),
        christoffel=_h2_christoffel,
        basepoint=np.zeros(2),
        radius=radius,
        pair_distance=pair_distance,
        geodesic=geodesic,
        shell=shell,
        sample_box=((-3.0, 3.0), (-3.0, 3.0)),
        radius_escape_certificate=True,
        description="hyperbolic plane (curvature -1), hyperboloid graph chart",
    )


def _hyperbolic_polar() -> ChartedManifold:
    """Hyperbolic plane in geodesic polar coordinates (r, theta), r > 0.

    Base factor for the radial warped products; the chart is singular at the
    pole, so the domain excludes r <= 0.
    """

    def metric(x):
        return np.array([[1.0, 0.0], [0.0, math.sinh(x[0]) ** 2]])

    def christoffel(x):
        r = x[0]
        G = np.zeros((2, 2, 2))
        G[0, 1, 1] = -math.sinh(r) * math.cosh(r)
        G[1, 0, 1] = G[1, 1, 0] = 1.0 / math.tanh(r)
        return G

    return ChartedManifold(
        name="hyperbolic-polar",
        dim=2,
        charts=(Chart(dim=2, metric=metric, domain=lambda x: x[0] > 0.0,
                      periods=(None, TWO_PI)),),
        christoffel=christoffel,
        basepoint=None,
        radius=lambda x: float(x[0]),
        sample_box=((0.3, 5.0), (0.0, TWO_PI)),
        description="hyperbolic plane, geodesic polar chart about a pole",
    )


def _circle() -> ChartedManifold:
    one = np.array([[1.0]])
    return ChartedManifold(
        name="circle",
        dim=1,
        charts=(Chart(dim=1, metric=lambda x: one, periods=(TWO_PI,)),),
        christoffel=lambda x: np.zeros((1, 1, 1)),
        sample_box=((0.0, TWO_PI),),
        description="unit circle",
    )


# ---------------------------------------------------------------------------
# warped products


class LiftError(ValueError):
    """Lift kind does not match the factor the field lives on."""


@dataclass(frozen=True, eq=False)
class WarpedProduct:
    """Base x_h Fiber with metric g_B + h^2 g_F and bookkeeping for lifts."""

    manifold: ChartedManifold
    base: ChartedManifold
    fiber: ChartedManifold
    warp: Callable[[np.ndarray], float]
    warp_grad: Callable[[np.ndarray], np.ndarray]


def make_warped_product(base: ChartedManifold, fiber: ChartedManifold,
                        warp: Callable[[np.ndarray], float],
                        warp_grad: Callable[[np.ndarray], np.ndarray],
                        name: Optional[str] = None) -> WarpedProduct:
    """Product manifold with block metric [[g_B, 0], [0, h^2 g_F]].

    ``warp`` and ``warp_grad`` take base coordinates; h must be positive.
    Closed-form Christoffel symbols are assembled from the factors' symbols
    plus the standard warped mixing terms (radial-log-derivative couplings).
    """
    nB, nF = base.dim, fiber.dim
    n = nB + nF
    bch, fch = base.chart, fiber.chart

    def metric(x):
        xB, xF = x[:nB], x[nB:]
        h = warp(xB)
        g = np.zeros((n, n))
        g[:nB, :nB] = bch.metric(xB)
        g[nB:, nB:] = (h * h) * fch.metric(xF)
        return g

    christoffel = None
    if base.christoffel is not None and fiber.christoffel is not None:
        def christoffel(x):
            xB, xF = x[:nB], x[nB:]
            h = warp(xB)
            dh = np.asarray(warp_grad(xB), dtype=float)
            gB = bch.metric(xB)
            gF = fch.metric(xF)
            grad_h = np.linalg.solve(gB, dh)
            G = np.zeros((n, n, n))
            G[:nB, :nB, :nB] = base.christoffel(xB)
            G[nB:, nB:, nB:] = fiber.christoffel(xF)
            # Gamma^a_ij = -h h^{,a} gF_ij ; Gamma^i_aj = (d_a h / h) delta^i_j
            for a in range(nB):
                G[a, nB:, nB:] = -h * grad_h[a] * gF
            for a in range(nB):
                c = dh[a] / h
                for i in range(nF):
                    G[nB + i, a, nB + i] = c
                    G[nB + i, nB + i, a] = c
            return G

    def domain(x):
        return bch.domain(x[:nB]) and fch.domain(x[nB:])

    m = ChartedManifold(
        name=name or f"{base.name}x{fiber.name}",
        dim=n,
        charts=(Chart(dim=n, metric=metric, domain=domain,
                      periods=bch.periods + fch.periods),),
        christoffel=christoffel,
        description=f"warped product of {base.name} and {fiber.name}",
    )
    return WarpedProduct(manifold=m, base=base, fiber=fiber,
                         warp=warp, warp_grad=warp_grad)


@dataclass(frozen=True, eq=False)
class LiftedField:
    """A factor field transported to the product, with its lift kind."""

    kind: str                    # "horizontal" | "vertical"
    base_field: VectorFieldDef
    field: VectorFieldDef


def _probe_point(m: ChartedManifold) -> np.ndarray:
    box = m.sample_box
    if box is None:
        return np.zeros(m.dim)
    return np.array([0.5 * (a + b) for a, b in box])


def lift(product: WarpedProduct, field: VectorFieldDef, kind: str) -> LiftedField:
    """Horizontal or vertical lift of a factor field to the product.

    The horizontal lift of a base field X has product components (X, 0), so
    it projects to X on the base and to zero on the fiber; symmetrically for
    vertical lifts.  A field whose components do not match the declared
    factor's dimension raises ``LiftError``.
    """
    if kind not in ("horizontal", "vertical"):
        raise LiftError(f"unknown lift kind {kind!r}")
    factor = product.base if kind == "horizontal" else product.fiber
    probe = _probe_point(factor)
    try:
        comps = np.asarray(field.components(probe), dtype=float)
        shape = comps.shape
    except (IndexError, ValueError, TypeError) as exc:
        raise LiftError(
            f"{kind} lift needs a field on the {factor.dim}-dimensional factor; "
            f"components rejected a probe point: {exc}") from exc
    if shape != (factor.dim,):
        raise LiftError(
            f"{kind} lift needs a field on the {factor.dim}-dimensional factor, "
            f"got components of shape {shape}")
    nB, nF = product.base.dim, product.fiber.dim
    n = nB + nF

    if kind == "horizontal":
        def components(x):
            out = np.zeros(n)
            out[:nB] = field.components(x[:nB])
            return out

        jac = None
        if field.jacobian is not None:
            def jac(x):
                J = np.zeros((n, n))
                J[:nB, :nB] = field.jacobian(x[:nB])
                return J
    else:
        def components(x):
            out = np.zeros(n)
            out[nB:] = field.components(x[nB:])
            return out

        jac = None
        if field.jacobian is not None:
            def jac(x):
                J = np.zeros((n, n))
                J[nB:, nB:] = field.jacobian(x[nB:])
                return J

    lifted = VectorFieldDef(name=f"{field.name}-{kind}-lift",
                            components=components, jacobian=jac)
    return LiftedField(kind=kind, base_field=field, field=lifted)


# ---------------------------------------------------------------------------
# the three warped examples


def _radial_warp_christoffel(prof: WarpProfile):
    """Direct symbols for diag(1, sinh^2 r, b(r)^2); the generic product
    assembly gives the same values but allocates much more per call."""

    def christoffel(x):
        r = x[0]
        sh, ch = math.sinh(r), math.cosh(r)
        b, bp = prof.b(r), prof.db(r)
        G = np.zeros((3, 3, 3))
        G[0, 1, 1] = -sh * ch
        G[0, 2, 2] = -b * bp
        G[1, 0, 1] = G[1, 1, 0] = ch / sh
        G[2, 0, 2] = G[2, 2, 0] = bp / b
        return G

    return christoffel


def make_example2(a: float = 1.0) -> WarpedProduct:
    """Finite-volume warped product: polar hyperbolic plane x circle with the
    finite-volume radial profile."""
    prof = warp_profile_finite_volume(a)
    wp = make_warped_product(
        _hyperbolic_polar(), _circle(),
        warp=lambda xB: prof.b(xB[0]),
        warp_grad=lambda xB: np.array([prof.db(xB[0]), 0.0]),
        name="warp:ex2",
    )
    m = _attach_radial_shell(
        replace(wp.manifold, christoffel=_radial_warp_christoffel(prof)), prof)
    return WarpedProduct(m, wp.base, wp.fiber, wp.warp, wp.warp_grad)


def make_example3(a: float = 1.0) -> WarpedProduct:
    """Infinite-volume warped product: same factors, decaying profile."""
    prof = warp_profile_infinite_volume(a)
    wp = make_warped_product(
        _hyperbolic_polar(), _circle(),
        warp=lambda xB: prof.b(xB[0]),
        warp_grad=lambda xB: np.array([prof.db(xB[0]), 0.0]),
        name="warp:ex3",
    )
    m = _attach_radial_shell(
        replace(wp.manifold, christoffel=_radial_warp_christoffel(prof)), prof)
    return WarpedProduct(m, wp.base, wp.fiber, wp.warp, wp.warp_grad)


def _attach_radial_shell(m: ChartedManifold, prof: WarpProfile) -> ChartedManifold:
    def shell(r_lo, r_hi):
        def density(u):
            return math.sinh(u[0]) * prof.b(u[0])

        bounds = ((float(r_lo), float(r_hi)), (0.0, TWO_PI), (0.0, TWO_PI))
        # the profile is C2 with seams at the plateau and tail junctions
        return (ShellPatch(bounds, lambda u: u, density, "radial",
                           breakpoints=((1.0, 2.0), (), ())),)

    return replace(
        m,
        radius=lambda x: float(x[0]),
        shell=shell,
        sample_box=((0.3, 5.0), (0.0, TWO_PI), (0.0, TWO_PI)),
        description=m.description + f" (profile {prof.name}, plateau {prof.plateau:g})",
    )


def make_example4() -> WarpedProduct:
    """Finite-volume warped product of the graph-chart hyperbolic plane and
    the circle, warp 1/z^2 with z the hyperboloid height."""
    h2 = make_hyperbolic_plane()

    def warp(xB):
        return 1.0 / (1.0 + xB[0] ** 2 + xB[1] ** 2)

    def warp_grad(xB):
        z4 = (1.0 + xB[0] ** 2 + xB[1] ** 2) ** 2
        return np.array([-2.0 * xB[0] / z4, -2.0 * xB[1] / z4])

    wp = make_warped_product(h2, _circle(), warp, warp_grad, name="warp:ex4")

    def christoffel(x):
        # base block -x_a g_bc plus the warp couplings of h = 1/z^2
        z2 = 1.0 + x[0] ** 2 + x[1] ** 2
        G = np.zeros((3, 3, 3))
        gB = _h2_metric(x[:2])
        G[0, :2, :2] = -x[0] * gB
        G[1, :2, :2] = -x[1] * gB
        G[0, 2, 2] = 2.0 * x[0] / z2 ** 2
        G[1, 2, 2] = 2.0 * x[1] / z2 ** 2
        G[2, 0, 2] = G[2, 2, 0] = -2.0 * x[0] / z2
        G[2, 1, 2] = G[2, 2, 1] = -2.0 * x[1] / z2
        return G

    def radius(x):
        return float(np.arccosh(max(1.0, math.sqrt(1.0 + x[0] ** 2 + x[1] ** 2))))

    def shell(r_lo, r_hi):
        def to_chart(u):
            s = math.sinh(u[0])
            return np.array([s * math.cos(u[1]), s * math.sin(u[1]), u[2]])

        def density(u):
            # base polar density sinh(d) times the warp 1/cosh(d)^2
            return math.sinh(u[0]) / math.cosh(u[0]) ** 2

        bounds = ((float(r_lo), float(r_hi)), (0.0, TWO_PI), (0.0, TWO_PI))
        return (ShellPatch(bounds, to_chart, density, "polar"),)

    m = replace(
        wp.manifold,
        christoffel=christoffel,
        basepoint=np.zeros(3),
        radius=radius,
        shell=shell,
        sample_box=((-3.0, 3.0), (-3.0, 3.0), (0.0, TWO_PI)),
        description="warped product of the hyperbolic plane and a circle, warp 1/z^2; "
                    "total volume 4 pi^2",
    )
    return WarpedProduct(m, wp.base, wp.fiber, wp.warp, wp.warp_grad)


# ---------------------------------------------------------------------------
# fields


def _revolution_W(profile: RevolutionProfile) -> VectorFieldDef:
    """Rotational field W = x (1 + x^2) d/dt on the revolution surface.

    Divergence-free (the density is t-independent), with |W| = |x|, which is
    not integrable over the surface.
    """
    f, df = profile.f, profile.df

    def components(x):
        return np.array([0.0, x[0] * (1.0 + x[0] * x[0])])

    def jacobian(x):
        return np.array([[0.0, 0.0], [1.0 + 3.0 * x[0] * x[0], 0.0]])

    def fx(x, v):
        # rate of the velocity pairing, written through the ambient picture
        fx_, fp = f(x[0]), df(x[0])
        c, s = math.cos(x[1]), math.sin(x[1])
        yz = np.array([fx_ * c, fx_ * s])
        a = v[0]
        bc = np.array([v[0] * fp * c - v[1] * fx_ * s,
                       v[0] * fp * s + v[1] * fx_ * c])
        return a * (1.0 + 3.0 * x[0] ** 2) * (-yz[1] * bc[0] + bc[1] * yz[0])

    return VectorFieldDef(name="W", components=components, jacobian=jacobian,
                          divergence=lambda x: 0.0, fx=fx)


def _h2_rotation() -> VectorFieldDef:
    """Killing rotation about the hyperboloid axis; vanishes at the apex."""
    return VectorFieldDef(
        name="rotation",
        components=lambda x: np.array([-x[1], x[0]]),
        jacobian=lambda x: np.array([[0.0, -1.0], [1.0, 0.0]]),
        divergence=lambda x: 0.0,
        fx=lambda x, v: 0.0,
    )


def _h2_conformal() -> VectorFieldDef:
    """Projection of the downward axis direction onto the hyperboloid.

    Conformal with factor z: the symmetrized covariant differential is
    2 z g, so the velocity-pairing rate on unit vectors equals z and the
    divergence is 2 z.
    """

    def components(x):
        z = math.sqrt(1.0 + x[0] ** 2 + x[1] ** 2)
        return np.array([x[0] * z, x[1] * z])

    def jacobian(x):
        z = math.sqrt(1.0 + x[0] ** 2 + x[1] ** 2)
        return np.array([[z + x[0] ** 2 / z, x[0] * x[1] / z],
                         [x[0] * x[1] / z, z + x[1] ** 2 / z]])

    def fx(x, v):
        # conformal factor on unit velocities
        return math.sqrt(1.0 + x[0] ** 2 + x[1] ** 2)

    return VectorFieldDef(
        name="conformal",
        components=components,
        jacobian=jacobian,
        divergence=lambda x: 2.0 * math.sqrt(1.0 + x[0] ** 2 + x[1] ** 2),
        fx=fx,
    )


def _polar_rotation() -> VectorFieldDef:
    """Angular field d/dtheta on the polar chart; norm sinh r."""
    return VectorFieldDef(
        name="polar-rotation",
        components=lambda x: np.array([0.0, 1.0]),
        jacobian=lambda x: np.zeros((2, 2)),
        divergence=lambda x: 0.0,
    )


def _circle_unit() -> VectorFieldDef:
    return VectorFieldDef(
        name="circle-unit",
        components=lambda x: np.array([1.0]),
        jacobian=lambda x: np.zeros((1, 1)),
        divergence=lambda x: 0.0,
    )


def _ex4_lifted_conformal(product: WarpedProduct) -> VectorFieldDef:
    lifted = lift(product, _h2_conformal(), "horizontal").field

    def divergence(x):
        return 2.0 / math.sqrt(1.0 + x[0] ** 2 + x[1] ** 2)

    def fx(x, v):
        # split a unit velocity into base and fiber parts:
        # rate = z |v_B|^2 + (X h / h) |v_F|^2
        z2 = 1.0 + x[0] ** 2 + x[1] ** 2
        z = math.sqrt(z2)
        gB = _h2_metric(x[:2])
        vB = np.asarray(v[:2])
        nB2 = float(vB @ gB @ vB)
        h = 1.0 / z2
        nF2 = (h * v[2]) ** 2
        xf_over_f = -2.0 * (x[0] ** 2 + x[1] ** 2) / z
        return z * nB2 + xf_over_f * nF2

    return VectorFieldDef(name="Z", components=lifted.components,
                          jacobian=lifted.jacobian, divergence=divergence, fx=fx)


def torus_wave_field(side: float = 1.0) -> VectorFieldDef:
    """Smooth periodic field on the torus with non-constant divergence."""
    k = TWO_PI / side

    def components(x):
        return np.array([math.sin(k * x[0]), math.sin(k * x[1])])

    def jacobian(x):
        return np.array([[k * math.cos(k * x[0]), 0.0],
                         [0.0, k * math.cos(k * x[1])]])

    return VectorFieldDef(
        name="wave",
        components=components,
        jacobian=jacobian,
        divergence=lambda x: k * (math.cos(k * x[0]) + math.cos(k * x[1])),
    )


# ---------------------------------------------------------------------------
# catalog


MANIFOLD_IDS = (
    "torus",
    "revolution:1/(1+x^2)",
    "hyperbolic",
    "warp:ex2",
    "warp:ex3",
    "warp:ex4",
)

FIELD_IDS = (
    "revolution:W",
    "hyperbolic:conformal",
    "hyperbolic:rotation",
    "warp:ex2:Zbar",
    "warp:ex3:Ubar",
    "warp:ex4:Z",
    "torus:wave",
)

# the six canonical (manifold, field) pairs exercised by the verification suite
PAIR_IDS = (
    ("revolution:1/(1+x^2)", "revolution:W"),
    ("hyperbolic", "hyperbolic:conformal"),
    ("hyperbolic", "hyperbolic:rotation"),
    ("warp:ex2", "warp:ex2:Zbar"),
    ("warp:ex3", "warp:ex3:Ubar"),
    ("warp:ex4", "warp:ex4:Z"),
)

_FIELD_DESCRIPTIONS = {
    "revolution:W": "divergence-free rotational field with |W| = |x| (non-integrable norm)",
    "hyperbolic:conformal": "conformal field with factor z; divergence 2z",
    "hyperbolic:rotation": "Killing rotation about the apex",
    "warp:ex2:Zbar": "horizontal lift of the polar rotation; Killing, norm sinh r",
    "warp:ex3:Ubar": "vertical lift of the unit circle field; Killing, norm b(r) -> 0",
    "warp:ex4:Z": "horizontal lift of the conformal field; div = 2/sqrt(1+x^2+y^2)",
    "torus:wave": "periodic wave field on the flat torus",
}


@lru_cache(maxsize=None)
def _revolution() -> tuple[ChartedManifold, AmbientEmbedding]:
    return make_surface_of_revolution()


@lru_cache(maxsize=None)
def _warp(which: str) -> WarpedProduct:
    if which == "ex2":
        return make_example2()
    if which == "ex3":
        return make_example3()
    return make_example4()


@lru_cache(maxsize=None)
def manifold(mid: str) -> ChartedManifold:
    """Resolve a zoo manifold by its string id."""
    if mid == "torus":
        return make_flat_torus(1.0)
    if mid == "revolution:1/(1+x^2)":
        return _revolution()[0]
    if mid == "hyperbolic":
        return make_hyperbolic_plane()
    if mid in ("warp:ex2", "warp:ex3", "warp:ex4"):
        return _warp(mid.split(":")[1]).manifold
    raise KeyError(f"unknown manifold id {mid!r}")


def revolution_embedding() -> AmbientEmbedding:
    return _revolution()[1]


@lru_cache(maxsize=None)
def vector_field(fid: str) -> VectorFieldDef:
    """Resolve a zoo field by its string id."""
    if fid == "revolution:W":
        return _revolution_W(default_revolution_profile())
    if fid == "hyperbolic:conformal":
        return _h2_conformal()
    if fid == "hyperbolic:rotation":
        return _h2_rotation()
    if fid == "warp:ex2:Zbar":
        return lift(_warp("ex2"), _polar_rotation(), "horizontal").field
    if fid == "warp:ex3:Ubar":
        return lift(_warp("ex3"), _circle_unit(), "vertical").field
    if fid == "warp:ex4:Z":
        return _ex4_lifted_conformal(_warp("ex4"))
    if fid == "torus:wave":
        return torus_wave_field(1.0)
    raise KeyError(f"unknown field id {fid!r}")


def field_manifold_id(fid: str) -> str:
    if fid == "torus:wave":
        return "torus"
    for mid, f in PAIR_IDS:
        if f == fid:
            return mid
    raise KeyError(f"unknown field id {fid!r}")


def field_pairs() -> list[tuple[ChartedManifold, VectorFieldDef]]:
    """The six canonical (manifold, field) pairs, in catalog order."""
    return [(manifold(mid), vector_field(fid)) for mid, fid in PAIR_IDS]


def zoo_fields() -> dict[str, tuple[str, VectorFieldDef]]:
    """Catalog of named fields: id -> (manifold id, field)."""
    return {fid: (field_manifold_id(fid), vector_field(fid)) for fid in FIELD_IDS}


def list_zoo() -> dict:
    """Stable-ordered listing of manifold and field ids with descriptions."""
    return {
        "manifolds": [
            {"id": mid, "dim": manifold(mid).dim, "description": manifold(mid).description}
            for mid in MANIFOLD_IDS
        ],
        "fields": [
            {"id": fid, "manifold": field_manifold_id(fid),
             "description": _FIELD_DESCRIPTIONS[fid]}
            for fid in FIELD_IDS
        ],
    }
