"""Harmonic basis of a multiply connected domain and discrete initial data.

For every hole ``j`` the discrete harmonic function ``phi_j`` equals 1 on
that hole's boundary and 0 on all other boundary loops.  The topology
coefficients ``beta`` solve the Gram system

    sum_j beta_j (curl phi_j, curl phi_i) = (H0, curl phi_i),

and the initial potential solves ``(grad A0, grad a) = (H0, curl a)`` for
all zero-trace test functions ``a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import apply_dirichlet, load_vector, mass_matrix, sample_field, stiffness_matrix
from .fem import DEFAULT_QUAD_DEGREE, FESpace, curl, evaluate, evaluate_gradient
from .linalg import solve_small_dense, solve_sparse
from .mesh import Mesh


@dataclass(frozen=True)
class PhysicalParams:
    mu: float = 1.0     # magnetic permeability coefficient
    sigma: float = 1.0  # magnetic Reynolds number
    nu: float = 1.0     # viscosity

    def __post_init__(self):
        for name in ("mu", "sigma", "nu"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v}")


@dataclass
class HarmonicBasis:
    space: FESpace
    phis: list[np.ndarray] = field(default_factory=list)
    gram: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def m(self) -> int:
        return len(self.phis)

    def combination(self, beta) -> np.ndarray:
        out = np.zeros(self.space.dof_count)
        for b, phi in zip(beta, self.phis):
            out += b * phi
        return out


def solve_harmonic_basis(mesh: Mesh, space: FESpace | None = None, tol: float = 1e-10) -> HarmonicBasis:
    """Discrete harmonic functions with unit trace on one hole and zero elsewhere."""
    space = space or FESpace(mesh, 2, "none")
    m = mesh.n_holes
    if m == 0:
        return HarmonicBasis(space)
    K = stiffness_matrix(space)
    bdofs = space.boundary_dofs
    zero = np.zeros(space.dof_count)
    phis = []
    for j in range(1, m + 1):
        vals = np.zeros(space.dof_count)
        vals[space.boundary_dofs_by_tag[j]] = 1.0
        cs = apply_dirichlet((K, zero), bdofs, vals[bdofs])
        phis.append(cs.expand(solve_sparse(cs.matrix, cs.rhs, tol)))
    space._tab.clear()
    P = np.column_stack(phis)
    gram = P.T @ (K @ P)
    gram = 0.5 * (gram + gram.T)
    return HarmonicBasis(space, phis, gram)


def curl_inner_products(space: FESpace, coefs_list, field_, quad=DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """``(F, curl psi)`` for each FE function ``psi`` in ``coefs_list``."""
    tab = space.tabulate(quad)
    F = sample_field(field_, tab)
    out = []
    for c in coefs_list:
        cq = curl(space.gradients_at_quadrature(c, tab))
        out.append(float(np.sum(tab["jw"] * np.einsum("tqd,tqd->tq", F, cq))))
    return np.array(out)


def compute_beta(basis: HarmonicBasis, H0, quad=DEFAULT_QUAD_DEGREE) -> np.ndarray:
    if basis.m == 0:
        return np.zeros(0)
    rhs = curl_inner_products(basis.space, basis.phis, H0, quad)
    return solve_small_dense(basis.gram, rhs)


def curl_test_vector(space: FESpace, F, quad=DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """``(F, curl phi_i)`` for every basis function of ``space``."""
    tab = space.tabulate(quad)
    Fq = sample_field(F, tab)
    # curl phi = (d phi/dy, -d phi/dx)
    local = np.einsum("tq,tql->tl", tab["jw"] * Fq[..., 0], tab["grad"][..., 1]) - np.einsum(
        "tq,tql->tl", tab["jw"] * Fq[..., 1], tab["grad"][..., 0]
    )
    return np.bincount(space.dofmap.ravel(), weights=local.ravel(), minlength=space.dof_count)


def initial_potential(space: FESpace, H0, quad=DEFAULT_QUAD_DEGREE, tol: float = 1e-10,
                      stiffness=None) -> np.ndarray:
    """Zero-trace ``A0`` with ``(grad A0, grad a) = (H0, curl a)``."""
    K = stiffness if stiffness is not None else stiffness_matrix(space)
    b = curl_test_vector(space, H0, quad)
    bd = space.boundary_dofs
    cs = apply_dirichlet((K, b), bd, 0.0)
    return cs.expand(solve_sparse(cs.matrix, cs.rhs, tol))


def l2_projection(space: FESpace, f, quad=DEFAULT_QUAD_DEGREE, tol: float = 1e-10,
                  mass=None, fixed=None) -> np.ndarray:
    """L2 projection of a scalar field onto the space with ``fixed`` DOFs set to zero.

    ``fixed`` defaults to the boundary DOFs (projection onto the zero-trace space).
    """
    M = mass if mass is not None else mass_matrix(space)
    b = load_vector(space, f, quad=quad)
    fixed = space.boundary_dofs if fixed is None else np.asarray(fixed, dtype=np.int64)
    cs = apply_dirichlet((M, b), fixed, 0.0)
    return cs.expand(solve_sparse(cs.matrix, cs.rhs, tol))


def initial_velocity(space: FESpace, u0, quad=DEFAULT_QUAD_DEGREE, tol: float = 1e-10, mass=None):
    """Componentwise L2 projection of ``u0(x, y) -> (u1, u2)`` onto the zero-trace space."""
    M = mass if mass is not None else mass_matrix(space)
    return tuple(
        l2_projection(space, lambda x, y, k=k: u0(x, y)[k], quad, tol, M) for k in range(2)
    )


class HarmonicProvider:
    """Harmonic function of a fine auxiliary mesh, evaluable at arbitrary points.

    Stands in for the exact ``phi`` of the square-with-hole case.  The most
    recent query is memoized because the same quadrature points are visited
    at every time step.
    """

    def __init__(self, basis: HarmonicBasis, index: int = 0):
        if basis.m <= index:
            raise ValueError("harmonic basis has no function with that index")
        self.basis = basis
        self.space = basis.space
        self.coefs = basis.phis[index]
        self._cache: dict[str, tuple] = {}

    @classmethod
    def on_mesh(cls, mesh: Mesh, index: int = 0) -> "HarmonicProvider":
        return cls(solve_harmonic_basis(mesh), index)

    def _query(self, kind: str, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        x, y = np.broadcast_arrays(x, y)
        key = (x.shape, hash(x.tobytes()), hash(y.tobytes()))
        hit = self._cache.get(kind)
        if hit is not None and hit[0] == key:
            return hit[1]
        pts = np.column_stack([x.ravel(), y.ravel()])
        if kind == "value":
            out = evaluate(self.space, self.coefs, pts).reshape(x.shape)
        else:
            g = evaluate_gradient(self.space, self.coefs, pts)
            out = (g[:, 0].reshape(x.shape), g[:, 1].reshape(x.shape))
        self._cache[kind] = (key, out)
        return out

    def value(self, x, y):
        return self._query("value", x, y)

    def grad(self, x, y):
        return self._query("grad", x, y)
