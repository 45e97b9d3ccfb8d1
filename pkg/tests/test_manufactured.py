import numpy as np
import pytest

from mhdpot.manufactured import (AnalyticHarmonic, ManufacturedCase, annulus_case, exact_fields_annulus,
                                 exact_fields_lshape, lshape_case, phi_cutoff, polar_angle,
                                 sources_annulus, sources_lshape, upsilon_coefficients)

H = 1e-4


def upsilon_hermite(r):
    """Independent construction: 0.1 times one minus the C^3 smoothstep in s."""
    s = (np.asarray(r) - 0.1) / 0.3
    return 0.1 * (1 - (35 * s**4 - 84 * s**5 + 70 * s**6 - 20 * s**7))


def test_upsilon_conditions():
    Y = upsilon_coefficients()
    v0 = Y.derivatives(0.1, 3)
    v1 = Y.derivatives(0.4, 3)
    assert abs(v0[0] - 0.1) <= 1e-10
    for k in (1, 2, 3):
        assert abs(v0[k]) <= 1e-8 * np.abs(Y.coefs).max() / 0.3**k
    for k in range(4):
        assert abs(v1[k]) <= 1e-8 * np.abs(Y.coefs).max() / 0.3**k


def test_upsilon_matches_hermite_construction():
    Y = upsilon_coefficients()
    r = np.linspace(0.1, 0.4, 31)
    np.testing.assert_allclose(Y(r), upsilon_hermite(r), atol=1e-10)
    assert abs(Y(0.25) - upsilon_hermite(0.25)) <= 1e-10
    assert Y(0.25) == pytest.approx(0.05, abs=1e-12)  # symmetric smoothstep: half the plateau


def test_phi_branches():
    np.testing.assert_allclose(phi_cutoff(0.05), (0.1, 0.0, 0.0))
    np.testing.assert_allclose(phi_cutoff(0.5), (0.0, 0.0, 0.0))


@pytest.mark.parametrize("r0", [0.1, 0.4])
def test_phi_straddle(r0):
    lo, hi = phi_cutoff(r0 - 1e-7), phi_cutoff(r0 + 1e-7)
    for k in range(3):
        assert abs(lo[k] - hi[k]) <= 1e-9 * max(1.0, 10.0**k)
    assert abs(lo[0] - hi[0]) <= 1e-9


def test_phi_derivatives_match_hermite():
    # smoothstep written as a polynomial in r, differentiated exactly
    s = np.polynomial.Polynomial([-0.1 / 0.3, 1 / 0.3])
    Y = 0.1 * (1 - (35 * s**4 - 84 * s**5 + 70 * s**6 - 20 * s**7))
    r = np.array([0.13, 0.2, 0.31, 0.39])
    phi, d1, d2 = phi_cutoff(r)
    np.testing.assert_allclose(phi, Y(r), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(d1, Y.deriv(1)(r), rtol=1e-10, atol=1e-13)
    np.testing.assert_allclose(d2, Y.deriv(2)(r), rtol=1e-10, atol=1e-11)


def test_regression_value():
    u1 = exact_fields_lshape(0.05, 0.05, 1.0)["u"][0]
    direct = 0.1 * (0.05 * np.sqrt(2)) ** (2 / 3) * np.sin(2 * (np.pi / 4) / 3)
    assert u1 == pytest.approx(direct, abs=1e-15)
    assert u1 == pytest.approx(0.008549879733383486, abs=1e-15)


def test_time_zero_and_support(rng):
    x, y = rng.uniform(-0.5, 0.5, (2, 100))
    keep = ~((x > 0) & (y < 0))
    x, y = x[keep], y[keep]
    f0, s0 = exact_fields_lshape(x, y, 0.0), sources_lshape(x, y, 0.0)
    for v in (f0["A"], *f0["u"], *f0["H"], s0["g"], s0["J"], *s0["f"]):
        assert np.all(v == 0)
    far = np.hypot(x, y) > 0.4
    f1, s1 = exact_fields_lshape(x[far], y[far], 0.7), sources_lshape(x[far], y[far], 0.7)
    for v in (f1["A"], *f1["u"], *f1["H"], s1["g"], s1["J"], *s1["f"]):
        assert np.all(v == 0)


def test_origin_limit():
    f = exact_fields_lshape(np.array([0.0]), np.array([0.0]), 1.0)
    assert f["A"][0] == 0.0 and np.isfinite(f["H"][0]).all()


def test_angle_branch():
    assert polar_angle(-1.0, -1e-12) == pytest.approx(np.pi, abs=1e-9)
    assert polar_angle(1e-12, -1.0) == pytest.approx(-np.pi / 2, abs=1e-9)
    assert polar_angle(-1e-12, -1.0) == pytest.approx(1.5 * np.pi, abs=1e-9)
    th = polar_angle(np.array([0.3, 0.0, -0.3, -0.3]), np.array([0.0, 0.3, 0.0, -0.3]))
    np.testing.assert_allclose(th, [0, np.pi / 2, np.pi, 1.25 * np.pi])


def test_continuity_across_negative_x_axis():
    x = np.linspace(-0.45, -0.01, 50)
    for eps in (1e-9, 1e-7):
        up = exact_fields_lshape(x, eps + 0 * x, 1.0)
        dn = exact_fields_lshape(x, -eps + 0 * x, 1.0)
        # the fields are smooth across the axis: jumps are O(eps), not O(1)
        np.testing.assert_allclose(up["A"], dn["A"], rtol=0, atol=10 * eps)
        np.testing.assert_allclose(up["H"][0], dn["H"][0], rtol=0, atol=1e4 * eps)


def test_annulus_continuity_near_hole(rng):
    """Dense sample hugging the hole boundary: no jump anywhere on the domain."""
    harm = AnalyticHarmonic()
    t = np.linspace(0.0, 1.0, 400)
    eps = 1e-7
    paths = [(-eps + 0 * t, -0.5 * t), (0.5 * t, 0 * t + eps), (0.5 + eps + 0 * t, -0.5 * t), (0.5 * t, -0.5 - eps + 0 * t)]
    for x, y in paths:
        a = exact_fields_annulus(x, y, 1.0, harm)["A"]
        assert np.all(np.abs(np.diff(a)) < 5e-3)


def test_boundary_conditions():
    s = np.linspace(-0.5, 0.5, 101)
    pts = [(s, 0 * s + 0.5), (s, 0 * s - 0.5), (0 * s + 0.5, s), (0 * s - 0.5, s)]
    half = np.linspace(0, 0.5, 51)
    pts += [(half, 0 * half), (0 * half, -half)]
    for x, y in pts:
        f = exact_fields_lshape(x, y, 1.0)
        assert np.abs(f["u"][0]).max() <= 1e-10 and np.abs(f["u"][1]).max() <= 1e-10
        nx = np.where(np.isclose(np.abs(x), 0.5) | (np.isclose(x, 0) & (y < 0)), 1.0, 0.0)
        ny = 1.0 - nx
        assert np.abs(f["H"][0] * nx + f["H"][1] * ny).max() <= 1e-10


def test_g_is_divergence(rng):
    case = lshape_case()
    for _ in range(50):
        x, y = rng.uniform(-0.4, 0.4, 2)
        if x > 0 and y < 0:
            continue
        r = np.hypot(x, y)
        if r < 0.02 or min(abs(r - 0.1), abs(r - 0.4)) < 1e-3:
            continue
        t = 0.8
        div = (_d(lambda a: case.u(a, y, t)[0], x) + _d(lambda b: case.u(x, b, t)[1], y))
        assert abs(div - case.g(x, y, t)) <= 1e-6 * max(abs(div), 1e-3)


def _d(f, x, h=H):
    """Fourth-order central first derivative."""
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def _d2(f, x, h=H):
    """Fourth-order central second derivative."""
    return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) / (12 * h * h)


def _residuals(case: ManufacturedCase, x, y, t):
    """Residuals of the three equations with every operator taken by finite differences
    of the primitive fields A, u, p and the harmonic function only."""
    mu, sigma, nu = case.mu, case.sigma, case.nu

    def A(a, b, s=t):
        return float(case.A(a, b, s))

    def psi(a, b, s=t):  # full stream function, curl psi = H
        extra = case.beta * case.harmonic.value(a, b) if case.harmonic is not None else 0.0
        return A(a, b, s) + float(extra)

    def Hf(a, b):
        return np.array([_d(lambda yy: psi(a, yy), b), -_d(lambda xx: psi(xx, b), a)])

    def u(a, b, s=t):
        return np.array(case.u(a, b, s), dtype=float)

    Hv = Hf(x, y)
    uv = u(x, y)
    lapA = _d2(lambda xx: A(xx, y), x) + _d2(lambda yy: A(x, yy), y)
    curlH = -(_d2(lambda xx: psi(xx, y), x) + _d2(lambda yy: psi(x, yy), y))
    uxH = uv[0] * Hv[1] - uv[1] * Hv[0]
    A_t = _d(lambda s: A(x, y, s), t)
    J = float(case.J(x, y, t))
    terms1 = [mu * A_t, -lapA / sigma, -mu * uxH, -J / sigma]

    u_t = _d(lambda s: u(x, y, s), t)
    ux = _d(lambda xx: u(xx, y), x)
    uy = _d(lambda yy: u(x, yy), y)
    lapu = _d2(lambda xx: u(xx, y), x) + _d2(lambda yy: u(x, yy), y)
    gradp = np.array([_d(lambda xx: float(case.p(xx, y, t)), x), _d(lambda yy: float(case.p(x, yy, t)), y)])
    Hxc = np.array([Hv[1] * curlH, -Hv[0] * curlH])
    f = np.array(case.f(x, y, t), dtype=float)
    terms2 = [u_t, uv[0] * ux + uv[1] * uy, -nu * lapu, gradp, mu * Hxc, -f]

    div = ux[0] + uy[1]
    terms3 = [div, -float(case.g(x, y, t))]

    # the scale floor keeps finite-difference roundoff (~1e-8) from counting as a
    # relative error where every term vanishes, e.g. outside the support
    out = []
    for terms in (terms1, terms2, terms3):
        total = np.sum(terms, axis=0)
        scale = np.sum(np.abs(terms), axis=0)
        out.append(np.max(np.abs(total) / np.maximum(scale, 1e-2)))
    return out


def _samples(rng, n, inside, lo, hi):
    pts = []
    while len(pts) < n:
        x, y = rng.uniform(lo, hi, 2)
        r = np.hypot(x, y)
        if not inside(x, y) or r < 0.02 or r > 0.45:
            continue
        if min(abs(r - 0.1), abs(r - 0.4)) < 1e-3:
            continue
        if abs(x) < 1e-3 and y < 0:  # the angle cut
            continue
        pts.append((x, y, rng.uniform(0.05, 1.0)))
    return pts


def _in_lshape(x, y):
    return -0.5 < x < 0.5 and -0.5 < y < 0.5 and not (x > -1e-3 and y < 1e-3)


def _in_annulus(x, y):
    return -0.5 < x < 1.0 and -1.0 < y < 0.5 and not (-1e-3 < x < 0.501 and -0.501 < y < 1e-3)


@pytest.mark.parametrize("params", [(1.0, 1.0, 1.0), (0.7, 2.5, 0.3)])
def test_pde_residual_lshape(rng, params):
    case = lshape_case(*params)
    worst = max(max(_residuals(case, x, y, t)) for x, y, t in _samples(rng, 100, _in_lshape, -0.45, 0.45))
    assert worst <= 1e-5


def test_pde_residual_annulus(rng):
    case = annulus_case(AnalyticHarmonic())
    worst = max(max(_residuals(case, x, y, t)) for x, y, t in _samples(rng, 100, _in_annulus, -0.45, 0.45))
    assert worst <= 1e-5


def test_annulus_harmonic_part():
    harm = AnalyticHarmonic()
    x, y = np.array([0.8]), np.array([0.3])
    f = exact_fields_annulus(x, y, 1.0, harm)
    gx, gy = harm.grad(x, y)
    np.testing.assert_allclose(f["H"], (gy, -gx))
    assert np.hypot(*f["H"]) > 0
    with_h = annulus_case(harm)
    without = lshape_case()
    pts = np.array([[-0.2, 0.1], [0.3, 0.2], [-0.1, -0.3]])
    np.testing.assert_array_equal(with_h.curl_H(pts[:, 0], pts[:, 1], 0.6), without.curl_H(pts[:, 0], pts[:, 1], 0.6))
    s = sources_annulus(pts[:, 0], pts[:, 1], 0.6, harm)
    assert set(s) == {"f", "g", "J"}


def test_missing_provider():
    with pytest.raises(ValueError):
        exact_fields_annulus(0.1, 0.1, 1.0, None)
    with pytest.raises(ValueError):
        ManufacturedCase("annulus")
    with pytest.raises(ValueError):
        ManufacturedCase("disk")
