import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad

from divflow import zoo
from divflow.geometry import (
    UnitTangentState,
    christoffel,
    covariant_derivative,
    field_norm,
    metric_at,
    pairing_rate,
    unit_state,
    volume_density,
)
from divflow.integrals import ChartBox, RadialShell, base_integral, sample_states
from divflow.zoo import (
    LiftError,
    cylinder_profile,
    lift,
    make_example4,
    make_flat_torus,
    make_surface_of_revolution,
    make_warped_product,
    revolution_embedding,
    warp_profile_finite_volume,
    warp_profile_infinite_volume,
)

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# warp profiles


def _numeric_derivatives(fn, r, h=1e-5):
    d1 = (fn(r + h) - fn(r - h)) / (2 * h)
    d2 = (fn(r + h) - 2 * fn(r) + fn(r - h)) / (h * h)
    return d1, d2


@pytest.mark.parametrize("maker", [warp_profile_finite_volume,
                                   warp_profile_infinite_volume])
def test_profile_plateau_and_smooth_seams(maker):
    prof = maker(1.0)
    for r in (0.0, 0.3, 0.99):
        assert prof.b(r) == 1.0
        assert prof.db(r) == 0.0
    # C2 continuity at both seams, checked by small-step differences
    for seam in (1.0, 2.0):
        lo, hi = seam - 1e-6, seam + 1e-6
        assert prof.b(hi) - prof.b(lo) == pytest.approx(0.0, abs=1e-5)
        assert prof.db(hi) - prof.db(lo) == pytest.approx(0.0, abs=1e-4)
        d2_lo = _numeric_derivatives(prof.b, lo - 1e-4)[1]
        d2_hi = _numeric_derivatives(prof.b, hi + 1e-4)[1]
        assert abs(d2_hi - d2_lo) < 0.2 * (1.0 + abs(d2_lo))


@pytest.mark.parametrize("maker", [warp_profile_finite_volume,
                                   warp_profile_infinite_volume])
def test_profile_positive_and_derivative_consistent(maker):
    prof = maker(1.0)
    rs = np.linspace(0.01, 50.0, 2000)
    vals = np.array([prof.b(r) for r in rs])
    assert vals.min() > 0.0
    for r in np.linspace(0.5, 6.0, 40):
        d_num = _numeric_derivatives(prof.b, r)[0]
        assert prof.db(r) == pytest.approx(d_num, abs=1e-7 + 1e-6 * abs(d_num))


def test_finite_volume_profile_conditions():
    prof = warp_profile_finite_volume(1.0)
    # integrable against sinh on [0, 50]
    val, _ = quad(lambda r: prof.b(r) * math.sinh(r), 0.0, 50.0, limit=200)
    assert val < np.inf
    tail_vals = [math.sinh(r) ** 2 * prof.b(r) for r in np.linspace(2.0, 50.0, 200)]
    assert min(tail_vals) > 0.9 * math.sinh(2.0) ** 2
    # exact tail identity sinh(r)^2 b(r) = sinh(2)^2
    assert tail_vals[-1] == pytest.approx(math.sinh(2.0) ** 2, rel=1e-12)


def test_infinite_volume_profile_conditions():
    prof = warp_profile_infinite_volume(1.0)
    assert prof.b(50.0) < 0.05
    for p in (1, 2, 4):
        vals = [math.sinh(r) * prof.b(r) ** p for r in np.linspace(10.0, 50.0, 50)]
        assert all(np.diff(vals) > 0)
        assert vals[-1] > 1e6
    # volume integrand grows without bound on increasing truncations
    partials = [quad(lambda r: prof.b(r) * math.sinh(r), 0.0, R)[0]
                for R in (10.0, 20.0, 40.0)]
    assert partials[0] < partials[1] < partials[2]
    assert partials[2] > 1e14


# ---------------------------------------------------------------------------
# surface of revolution


def test_revolution_area_finite_and_stable():
    m, _ = make_surface_of_revolution()
    # oracle: direct profile quadrature of 2 pi f sqrt(1 + f'^2)
    area_oracle = 2 * math.pi * quad(
        lambda x: (1 / (1 + x * x)) * math.sqrt(1 + 4 * x * x / (1 + x * x) ** 4),
        -np.inf, np.inf)[0]
    assert area_oracle == pytest.approx(21.179068, abs=1e-5)
    # the area tail decays like 4 pi / R, so three stable digits need R ~ 1e3
    vals = []
    for R in (250.0, 500.0, 1000.0):
        est = base_integral(m, lambda x: 1.0, RadialShell(0.0, R))
        vals.append(est.value)
    assert vals[-1] == pytest.approx(area_oracle, rel=1e-3)
    # stable to three digits as the truncation grows
    assert abs(vals[-1] - vals[-2]) < 1e-3 * vals[-1]


def test_cylinder_profile_area():
    m, _ = make_surface_of_revolution(cylinder_profile())
    est = base_integral(m, lambda x: 1.0, ChartBox(((0.0, 1.0), (0.0, TWO_PI))))
    assert est.value == pytest.approx(TWO_PI, rel=1e-10)
    assert_allclose(metric_at(m, [0.3, 1.0]), np.eye(2), atol=1e-14)


def test_revolution_radius_surrogate_sandwich():
    m, _ = make_surface_of_revolution()
    # meridian arclength: |x| <= r(x) <= |x| + 1 (slope excess is integrable)
    for x in (0.5, 3.0, 50.0, 900.0):
        r = m.radius(np.array([x, 0.0]))
        assert x <= r <= x + 1.0


def test_W_tangency_to_embedded_surface(rng):
    m, emb = make_surface_of_revolution()
    W = zoo.vector_field("revolution:W")
    for st in sample_states(m, 50, rng):
        p = emb.map(st.x)
        # gradient of G(x,y,z) = y^2 + z^2 - 1/(1+x^2)^2 (ambient normal)
        grad = np.array([4 * p[0] / (1 + p[0] ** 2) ** 3, 2 * p[1], 2 * p[2]])
        W_amb = emb.jacobian(st.x) @ W.components(st.x)
        assert abs(W_amb @ grad) < 1e-10


# ---------------------------------------------------------------------------
# hyperbolic plane


def test_hyperboloid_constraint_along_oracle(hyperbolic, rng):
    for st in sample_states(hyperbolic, 10, rng):
        for t in (0.5, 2.0, 5.0):
            x, v = hyperbolic.geodesic(st.x, st.v, t)
            z = math.sqrt(1 + x[0] ** 2 + x[1] ** 2)
            # the lifted curve satisfies <gamma, gamma> = -1 by construction;
            # check unit speed in the chart metric instead
            g = metric_at(hyperbolic, x)
            assert float(v @ g @ v) == pytest.approx(1.0, abs=1e-9)
            assert z >= 1.0


def test_hyperbolic_distance_vs_shooting(hyperbolic):
    from divflow.flow import integrate_geodesic
    st = unit_state(hyperbolic, [0.0, 0.0], [1.0, 0.0])
    traj = integrate_geodesic(hyperbolic, st, 3.0)
    end = traj.state_at(3.0)
    # unit-speed orbit from the apex: distance equals elapsed time
    assert hyperbolic.radius(end.x) == pytest.approx(3.0, abs=1e-7)
    assert hyperbolic.pair_distance(st.x, end.x) == pytest.approx(3.0, abs=1e-7)


# ---------------------------------------------------------------------------
# warped products


def test_ex4_total_volume(ex4):
    est = base_integral(ex4, lambda x: 1.0, RadialShell(0.0, 14.0))
    assert est.value == pytest.approx(4 * math.pi ** 2, rel=1e-3)


def test_ex2_volume_matches_profile_quadrature(ex2):
    prof = warp_profile_finite_volume(1.0)
    oracle = 4 * math.pi ** 2 * quad(lambda r: math.sinh(r) * prof.b(r),
                                     0.0, 40.0, limit=200)[0]
    est = base_integral(ex2, lambda x: 1.0, RadialShell(0.0, 40.0))
    assert est.value == pytest.approx(oracle, rel=1e-6)


def test_unwarped_product_density_is_product():
    from divflow.zoo import _circle, _hyperbolic_polar
    wp = make_warped_product(_hyperbolic_polar(), _circle(),
                             lambda xB: 1.0, lambda xB: np.zeros(2))
    x = np.array([1.3, 0.7, 2.1])
    assert volume_density(wp.manifold, x) == pytest.approx(math.sinh(1.3), rel=1e-12)


def test_lift_norms(ex2, ex3, rng):
    Zbar = zoo.vector_field("warp:ex2:Zbar")
    Ubar = zoo.vector_field("warp:ex3:Ubar")
    for _ in range(20):
        r = rng.uniform(0.2, 6.0)
        x = np.array([r, rng.uniform(0, TWO_PI), rng.uniform(0, TWO_PI)])
        assert field_norm(Zbar, ex2, x) == pytest.approx(math.sinh(r), rel=1e-12)
        b = warp_profile_infinite_volume(1.0).b(r)
        assert field_norm(Ubar, ex3, x) == pytest.approx(b, rel=1e-12)


def test_lift_projections_and_zero():
    wp = make_example4()
    X = zoo.vector_field("hyperbolic:conformal")
    lifted = lift(wp, X, "horizontal")
    x = np.array([0.4, -1.2, 2.0])
    comps = lifted.field.components(x)
    assert_allclose(comps[:2], X.components(x[:2]), rtol=1e-14)
    assert comps[2] == 0.0
    zero = zoo.VectorFieldDef("zero", lambda xB: np.zeros(2)) if False else None
    from divflow.geometry import VectorFieldDef
    zf = VectorFieldDef("zero", lambda xB: np.zeros(2))
    assert_allclose(lift(wp, zf, "horizontal").field.components(x), 0.0)


def test_lift_kind_mismatch_raises():
    wp = make_example4()
    from divflow.geometry import VectorFieldDef
    circle_field = VectorFieldDef("u", lambda xF: np.array([1.0]))
    with pytest.raises(LiftError):
        lift(wp, circle_field, "horizontal")   # fiber field lifted as base
    with pytest.raises(LiftError):
        lift(wp, zoo.vector_field("hyperbolic:conformal"), "vertical")
    with pytest.raises(LiftError):
        lift(wp, circle_field, "sideways")


def test_prop_warped_connection_items(ex2, ex4, rng):
    # vertical direction against a horizontal lift picks up (X h / h);
    # for a radial-profile warp and the angular lift this vanishes
    Zbar = zoo.vector_field("warp:ex2:Zbar")
    for _ in range(10):
        x = np.array([rng.uniform(0.3, 5.0), rng.uniform(0, TWO_PI),
                      rng.uniform(0, TWO_PI)])
        g = metric_at(ex2, x)
        u = np.zeros(3)
        u[2] = 1.0 / math.sqrt(g[2, 2])
        got = covariant_derivative(Zbar, ex2, unit_state(ex2, x, u))
        assert_allclose(got, 0.0, atol=1e-6)
    # nonradial warp of the ex4 product: (X h / h) u with the closed form
    Z = zoo.vector_field("warp:ex4:Z")
    for _ in range(10):
        x = np.concatenate([rng.uniform(-2, 2, 2), [rng.uniform(0, TWO_PI)]])
        g = metric_at(ex4, x)
        u = np.zeros(3)
        u[2] = 1.0 / math.sqrt(g[2, 2])
        got = covariant_derivative(Z, ex4, unit_state(ex4, x, u))
        z = math.sqrt(1 + x[0] ** 2 + x[1] ** 2)
        expect = (-2.0 * (x[0] ** 2 + x[1] ** 2) / z) * u
        assert_allclose(got, expect, atol=1e-6)


def test_ex4_divergence_split_identity(rng):
    # div(lift) = base divergence + X h / h, with the stated closed forms
    for _ in range(20):
        x, y = rng.uniform(-3, 3, 2)
        z2 = 1 + x * x + y * y
        z = math.sqrt(z2)
        xf = -2 * z * (x * x + y * y) / z2 ** 2
        f = 1.0 / z2
        assert 2.0 / z == pytest.approx(2.0 * z + xf / f, rel=1e-12)


def test_rotation_field_fixed_point(hyperbolic):
    Z = zoo.vector_field("hyperbolic:rotation")
    assert_allclose(Z.components(np.zeros(2)), 0.0)


def test_killing_property_of_lifts(ex2, ex3, rng):
    for mid, fid in (("warp:ex2", "warp:ex2:Zbar"), ("warp:ex3", "warp:ex3:Ubar")):
        m, f = zoo.manifold(mid), zoo.vector_field(fid)
        for st in sample_states(m, 30, rng):
            assert abs(pairing_rate(f, m, st)) < 1e-8


def test_flat_torus_basics():
    m = make_flat_torus(2.0)
    assert base_integral(m, lambda x: 1.0,
                         ChartBox(((0.0, 2.0), (0.0, 2.0)))).value == pytest.approx(4.0)
    assert_allclose(christoffel(m, np.array([0.3, 0.4])), 0.0)
    with pytest.raises(ValueError):
        make_flat_torus(0.0)


def test_ex3_volume_integrand_not_integrable(ex3):
    # partial volumes grow monotonically past any fixed bound
    vals = [base_integral(ex3, lambda x: 1.0, RadialShell(0.0, R)).value
            for R in (5.0, 10.0, 20.0, 30.0)]
    assert all(np.diff(vals) > 0)
    assert vals[-1] > 1e9


def test_zoo_catalog_listing():
    listing = zoo.list_zoo()
    ids = [m["id"] for m in listing["manifolds"]]
    assert "revolution:1/(1+x^2)" in ids
    assert "warp:ex4" in ids
    assert "torus" in ids
    assert len(zoo.field_pairs()) == 6
    with pytest.raises(KeyError):
        zoo.manifold("nope")
    with pytest.raises(KeyError):
        zoo.vector_field("nope")
