"""Manufactured solutions for the L-shape and square-with-hole test cases.

Both cases share the velocity ``u = (u1, u1)`` with

    u1 = t^2 * Phi(r) * r^(2/3) * sin(2 theta / 3),   p = 0,

where ``Phi`` is a C^3 cut-off equal to 0.1 for ``r < 0.1`` and 0 for
``r > 0.4``.  The magnetic potential is ``A = u1`` and ``H = curl A``; the
square-with-hole case adds the harmonic field ``curl phi`` (``beta = 1``).

The angle is measured counterclockwise with the branch cut along the ray
``x = 0, y < 0``, i.e. ``theta in (-pi/2, 3pi/2]``.  On both domains this
ray lies on the boundary (L-shape) or inside the hole, so every field is
single valued on the closure of the domain and ``sin(2 theta / 3)`` vanishes
on both edges meeting at the reentrant corner.

Sources follow from substituting the exact fields into

    mu dA/dt - Laplace(A)/sigma - mu u x H = J / sigma
    du/dt + u . grad u - nu Laplace(u) + grad p = f - mu H x curl(H)
    div u = g

which reduces to the unit-coefficient test problem for ``mu = sigma = nu = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import solve_small_dense

R_INNER = 0.1
R_OUTER = 0.4
PLATEAU = 0.1


@dataclass(frozen=True)
class CutoffPolynomial:
    """Degree-7 polynomial in ``s = (r - r0) / (r1 - r0)`` stored by coefficients."""

    coefs: np.ndarray  # ascending powers of s
    r0: float = R_INNER
    r1: float = R_OUTER

    def derivatives(self, r, order: int = 3) -> list[np.ndarray]:
        """``[Y(r), Y'(r), ..., Y^(order)(r)]`` with respect to ``r``."""
        L = self.r1 - self.r0
        s = (np.asarray(r, dtype=float) - self.r0) / L
        c = np.polynomial.Polynomial(self.coefs)
        out = []
        for k in range(order + 1):
            out.append(c(s) / L**k)
            c = c.deriv()
        return out

    def __call__(self, r):
        return self.derivatives(r, 0)[0]


def upsilon_coefficients(r0: float = R_INNER, r1: float = R_OUTER, plateau: float = PLATEAU) -> CutoffPolynomial:
    """Solve the 8 interpolation conditions for the matching polynomial.

    Value ``plateau`` and vanishing first three derivatives at ``r0``;
    vanishing value and first three derivatives at ``r1``.
    """
    L = r1 - r0
    rows, rhs = [], []
    for s_end, value in ((0.0, plateau), (1.0, 0.0)):
        for k in range(4):
            row = np.zeros(8)
            for n in range(k, 8):
                # d^k/dr^k of s^n = n!/(n-k)! s^(n-k) / L^k
                fall = np.prod(np.arange(n - k + 1, n + 1)) if k else 1.0
                row[n] = fall * s_end ** (n - k) / L**k
            rows.append(row)
            rhs.append(value if k == 0 else 0.0)
    return CutoffPolynomial(solve_small_dense(np.array(rows), np.array(rhs)), r0, r1)


_UPSILON = upsilon_coefficients()


def phi_cutoff(r):
    """``(Phi, Phi', Phi'')`` of the cut-off at radius ``r``."""
    r = np.asarray(r, dtype=float)
    y0, y1, y2 = _UPSILON.derivatives(r, 2)
    mid = (r >= R_INNER) & (r <= R_OUTER)
    phi = np.where(r < R_INNER, PLATEAU, np.where(mid, y0, 0.0))
    return phi, np.where(mid, y1, 0.0), np.where(mid, y2, 0.0)


def polar_angle(x, y):
    """Angle in ``(-pi/2, 3pi/2]`` with the cut along ``x = 0, y < 0``."""
    th = np.arctan2(y, x)
    return np.where(th <= -0.5 * np.pi, th + 2 * np.pi, th)


def _profile(x, y):
    """``q = Phi(r) r^(2/3) sin(2 theta/3)`` with gradient and Laplacian.

    At the origin the value is 0 by continuity and the singular gradient
    and Laplacian are reported as 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = np.hypot(x, y)
    origin = r == 0.0
    rs = np.where(origin, 1.0, r)
    th = polar_angle(x, y)
    P, dP, d2P = phi_cutoff(r)
    s = rs ** (2 / 3) * np.sin(2 * th / 3)
    # grad of the harmonic factor r^(2/3) sin(2 theta/3)
    gs = (2 / 3) * rs ** (-1 / 3)
    sx, sy = -gs * np.sin(th / 3), gs * np.cos(th / 3)
    cx, cy = x / rs, y / rs
    q = P * s
    qx = dP * s * cx + P * sx
    qy = dP * s * cy + P * sy
    lap = s * (d2P + (7 / 3) * dP / rs)
    z = np.zeros_like(q)
    return (np.where(origin, z, q), np.where(origin, z, qx), np.where(origin, z, qy),
            np.where(origin, z, lap))


class AnalyticHarmonic:
    """Closed-form harmonic provider ``phi = a (x^2 - y^2) + b x y + c x + d y``."""

    def __init__(self, a=0.3, b=0.2, c=0.5, d=-0.1):
        self.a, self.b, self.c, self.d = a, b, c, d

    def value(self, x, y):
        return self.a * (x * x - y * y) + self.b * x * y + self.c * x + self.d * y

    def grad(self, x, y):
        return 2 * self.a * x + self.b * y + self.c, -2 * self.a * y + self.b * x + self.d


@dataclass
class ManufacturedCase:
    """Exact fields and consistent sources; every callable takes ``(x, y, t)``."""

    name: str
    mu: float = 1.0
    sigma: float = 1.0
    nu: float = 1.0
    harmonic: object | None = None
    beta: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in ("lshape", "annulus"):
            raise ValueError(f"unknown case {self.name!r}")
        if self.name == "annulus" and self.harmonic is None:
            raise ValueError("the annulus case needs a harmonic provider")
        if min(self.mu, self.sigma, self.nu) <= 0:
            raise ValueError("mu, sigma and nu must be positive")

    @property
    def n_holes(self) -> int:
        return 1 if self.name == "annulus" else 0

    def _harmonic_curl(self, x, y):
        if self.harmonic is None:
            z = np.zeros(np.broadcast(x, y).shape)
            return z, z
        gx, gy = self.harmonic.grad(x, y)
        return self.beta * np.asarray(gy), -self.beta * np.asarray(gx)

    def A(self, x, y, t):
        return t**2 * _profile(x, y)[0]

    def u(self, x, y, t):
        v = t**2 * _profile(x, y)[0]
        return v, v.copy()

    def p(self, x, y, t):
        return np.zeros(np.broadcast(x, y).shape)

    def curl_A(self, x, y, t):
        _, qx, qy, _ = _profile(x, y)
        return t**2 * qy, -(t**2) * qx

    def H(self, x, y, t):
        h1, h2 = self.curl_A(x, y, t)
        c1, c2 = self._harmonic_curl(x, y)
        return h1 + c1, h2 + c2

    def curl_H(self, x, y, t):
        """Scalar curl of ``H``; the harmonic part contributes nothing."""
        return -(t**2) * _profile(x, y)[3]

    def f(self, x, y, t):
        q, qx, qy, lap = _profile(x, y)
        h1, h2 = self.H(x, y, t)
        c = -(t**2) * lap
        common = 2 * t * q + t**4 * q * (qx + qy) - self.nu * t**2 * lap
        return common + self.mu * h2 * c, common - self.mu * h1 * c

    def g(self, x, y, t):
        _, qx, qy, _ = _profile(x, y)
        return t**2 * (qx + qy)

    def J(self, x, y, t):
        q, _, _, lap = _profile(x, y)
        h1, h2 = self.H(x, y, t)
        u_cross_H = t**2 * q * (h2 - h1)
        return self.sigma * self.mu * (2 * t * q - u_cross_H) - t**2 * lap

    def H0(self, x, y):
        return self.H(x, y, 0.0)

    def u0(self, x, y):
        return self.u(x, y, 0.0)


def lshape_case(mu=1.0, sigma=1.0, nu=1.0) -> ManufacturedCase:
    return ManufacturedCase("lshape", mu, sigma, nu)


def annulus_case(harmonic, mu=1.0, sigma=1.0, nu=1.0) -> ManufacturedCase:
    return ManufacturedCase("annulus", mu, sigma, nu, harmonic=harmonic)


def exact_fields_lshape(x, y, t, case: ManufacturedCase | None = None) -> dict:
    case = case or lshape_case()
    return {"A": case.A(x, y, t), "u": case.u(x, y, t), "H": case.H(x, y, t), "p": case.p(x, y, t)}


def sources_lshape(x, y, t, case: ManufacturedCase | None = None) -> dict:
    case = case or lshape_case()
    return {"f": case.f(x, y, t), "g": case.g(x, y, t), "J": case.J(x, y, t)}


def exact_fields_annulus(x, y, t, harmonic) -> dict:
    if harmonic is None:
        raise ValueError("the annulus case needs a harmonic provider")
    case = annulus_case(harmonic)
    return {"A": case.A(x, y, t), "u": case.u(x, y, t), "H": case.H(x, y, t), "p": case.p(x, y, t)}


def sources_annulus(x, y, t, harmonic) -> dict:
    if harmonic is None:
        raise ValueError("the annulus case needs a harmonic provider")
    case = annulus_case(harmonic)
    return {"f": case.f(x, y, t), "g": case.g(x, y, t), "J": case.J(x, y, t)}
