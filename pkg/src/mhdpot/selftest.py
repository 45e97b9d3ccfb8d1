"""Fast invariant checks behind the ``selftest`` CLI verb."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import baseline, stepper
from .assembly import convection_matrix, lorentz_coupling_matrices
from .fem import FESpace, quadrature_rule
from .manufactured import lshape_case
from .mesh import build_lshape_mesh, build_square_with_hole_mesh


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def random_potential_state(disc: stepper.Discretization, rng, tau: float) -> stepper.MhdState:
    """Random interior coefficients for ``A`` and ``u`` (zero on the boundary)."""
    free = disc.V.free_dofs
    vecs = []
    for _ in range(3):
        v = np.zeros(disc.nV)
        v[free] = rng.standard_normal(free.size)
        vecs.append(v)
    A, u1, u2 = vecs
    beta = rng.standard_normal(disc.basis.m)
    return stepper.MhdState(0.0, A, stepper.discrete_laplacian(disc, A), u1, u2,
                            np.zeros(disc.nQ), beta, tau, disc)


def random_h1_state(disc: baseline.BaselineDiscretization, rng, tau: float) -> baseline.H1State:
    n = disc.n
    H1, H2 = rng.standard_normal(n), rng.standard_normal(n)
    H1[disc.constraint.h1] = 0.0
    H2[disc.constraint.h2] = 0.0
    free = disc.V.free_dofs
    u1, u2 = np.zeros(n), np.zeros(n)
    u1[free] = rng.standard_normal(free.size)
    u2[free] = rng.standard_normal(free.size)
    return baseline.H1State(0.0, H1, H2, u1, u2, np.zeros(disc.nQ), tau, disc)


def check_quadrature() -> Check:
    worst = 0.0
    for deg in range(1, 11):
        rule = quadrature_rule(deg)
        l1, l2 = rule.points[:, 1], rule.points[:, 2]
        for a in range(deg + 1):
            for b in range(deg + 1 - a):
                # integral over the unit simplex (area 1/2) of l1^a l2^b = a! b! / (a + b + 2)!
                exact = math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
                approx = 0.5 * float(rule.weights @ (l1**a * l2**b))
                worst = max(worst, abs(approx - exact))
    return Check("quadrature exactness", worst <= 1e-13, f"max error {worst:.2e}")


def check_operators(M: int = 8, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    mesh = build_lshape_mesh(M)
    V = FESpace(mesh, 2, "none")
    w = (rng.standard_normal(V.dof_count), rng.standard_normal(V.dof_count))
    C = convection_matrix(V, w)
    skew = abs(C + C.T).max() / abs(C).max()
    tab = V.tabulate(8)
    Bq = rng.standard_normal(tab["x"].shape)
    C_uw, C_wv = lorentz_coupling_matrices(Bq, V, V)
    u = rng.standard_normal(2 * V.dof_count)
    a = rng.standard_normal(V.dof_count)
    lhs, rhs = a @ (C_uw @ u), u @ (C_wv @ a)
    adj = abs(lhs - rhs) / max(abs(lhs), 1.0)
    return [Check("convection skew-symmetry", skew <= 1e-13, f"|C + C^T| / |C| = {skew:.2e}"),
            Check("Lorentz adjoint identity", adj <= 1e-11, f"relative gap {adj:.2e}")]


def check_energy(M: int = 8, steps: int = 4, seed: int = 1) -> list[Check]:
    rng = np.random.default_rng(seed)
    out = []
    mesh = build_square_with_hole_mesh(M)
    disc = stepper.Discretization(mesh)
    s0 = random_potential_state(disc, rng, 1.0 / M)
    final, report, traj = stepper.run(s0, None, steps / M, keep_trajectory=True)
    v = stepper.energy_check(report)
    out.append(Check("potential energy decay", v.passed, v.detail))
    div = max(float(np.abs(stepper.divergence_H(s)).max()) for s in traj)
    out.append(Check("discrete div H", div <= 1e-11, f"max |div H| = {div:.2e}"))
    bdisc = baseline.BaselineDiscretization(mesh)
    b0 = random_h1_state(bdisc, rng, 1.0 / M)
    _, breport, _ = baseline.run(b0, None, steps / M)
    bv = stepper.energy_check(breport)
    out.append(Check("direct-h1 energy decay", bv.passed, bv.detail))
    return out


def check_manufactured(samples: int = 20, seed: int = 2) -> Check:
    """Divergence of ``u`` against ``g`` by central differences."""
    rng = np.random.default_rng(seed)
    case = lshape_case()
    h = 1e-5
    worst = 0.0
    for _ in range(samples):
        x, y = rng.uniform(0.05, 0.35, 2)
        t = rng.uniform(0.1, 1.0)
        du = (case.u(x + h, y, t)[0] - case.u(x - h, y, t)[0]) / (2 * h)
        dv = (case.u(x, y + h, t)[1] - case.u(x, y - h, t)[1]) / (2 * h)
        g = case.g(x, y, t)
        worst = max(worst, abs(du + dv - g) / max(abs(g), 1e-3))
    return Check("manufactured div u = g", worst <= 1e-5, f"max relative gap {worst:.2e}")


def run_all() -> list[Check]:
    checks = [check_quadrature()]
    checks += check_operators()
    checks += check_energy()
    checks.append(check_manufactured())
    return checks
