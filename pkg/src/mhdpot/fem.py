"""Scalar Lagrange P1/P2 spaces, quadrature, evaluation and L2 errors.

Quadrature weights are normalized to sum to one on the reference triangle,
so ``integral over K of f ~= |K| * sum_q w_q f(x_q)``.

Local DOF order on a triangle ``(v0, v1, v2)`` is the three vertices, then
for P2 the midpoints of edges ``(v0, v1)``, ``(v1, v2)``, ``(v2, v0)``.
Global P2 numbering puts all vertices first, then edges in lexicographic
order of their sorted endpoint pairs.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from math import ceil

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .mesh import Mesh, PointLocator

DEFAULT_QUAD_DEGREE = 8
CONSTRAINTS = ("none", "zero-trace", "zero-mean")

_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray   # (nq, 3) barycentric
    weights: np.ndarray  # (nq,), sum to 1
    degree: int


@lru_cache(maxsize=None)
def quadrature_rule(degree: int = DEFAULT_QUAD_DEGREE) -> QuadratureRule:
    """Collapsed Gauss rule exact for polynomials of total degree ``degree``.

    Gauss-Legendre in one direction and Gauss-Jacobi(1, 0) in the collapsed
    one; all weights are positive and all points interior.
    """
    if int(degree) != degree or not 0 <= degree <= 30:
        raise ValueError(f"unsupported quadrature degree {degree}")
    n = max(1, ceil((int(degree) + 1) / 2))
    a, wa = roots_legendre(n)
    b, wb = roots_jacobi(n, 1.0, 0.0)
    A, B = np.meshgrid(a, b, indexing="ij")
    x = (1 + A) * (1 - B) / 4
    y = (1 + B) / 2
    w = np.outer(wa, wb).ravel()
    w = w / w.sum()
    pts = np.column_stack([1 - x.ravel() - y.ravel(), x.ravel(), y.ravel()])
    return QuadratureRule(pts, w, int(degree))


@lru_cache(maxsize=None)
def composite_rule(degree: int, refine: int) -> QuadratureRule:
    """Apply ``quadrature_rule(degree)`` on each of the ``refine**2`` congruent sub-triangles."""
    base = quadrature_rule(degree)
    if refine == 1:
        return base
    k = int(refine)
    subs = []
    for i in range(k):
        for j in range(k - i):
            # upward sub-triangle with lower-left corner at lattice point (i, j)
            subs.append([(i, j), (i + 1, j), (i, j + 1)])
            if i + j < k - 1:
                subs.append([(i + 1, j), (i + 1, j + 1), (i, j + 1)])
    pts, wts = [], []
    for tri in subs:
        c = np.array(tri, dtype=float) / k  # (3, 2) in (x, y) reference coords
        xy = base.points @ c
        pts.append(np.column_stack([1 - xy.sum(axis=1), xy]))
        wts.append(base.weights / k**2)
    return QuadratureRule(np.concatenate(pts), np.concatenate(wts), base.degree)


def basis_values(degree: int, lam: np.ndarray) -> np.ndarray:
    """Basis values at barycentric points ``lam`` (n, 3) -> (n, nloc)."""
    l0, l1, l2 = lam[:, 0], lam[:, 1], lam[:, 2]
    if degree == 1:
        return lam.copy()
    if degree == 2:
        return np.column_stack(
            [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0]
        )
    raise ValueError(f"unsupported degree {degree}")


def basis_lambda_derivatives(degree: int, lam: np.ndarray) -> np.ndarray:
    """Derivatives with respect to the barycentric coordinates, (n, nloc, 3)."""
    n = len(lam)
    if degree == 1:
        return np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    if degree == 2:
        d = np.zeros((n, 6, 3))
        for i in range(3):
            d[:, i, i] = 4 * lam[:, i] - 1
        for e, (a, b) in enumerate(_LOCAL_EDGES):
            d[:, 3 + e, a] = 4 * lam[:, b]
            d[:, 3 + e, b] = 4 * lam[:, a]
        return d
    raise ValueError(f"unsupported degree {degree}")


def basis_lambda_hessians(degree: int) -> np.ndarray:
    """Constant second barycentric derivatives, (nloc, 3, 3)."""
    if degree == 1:
        return np.zeros((3, 3, 3))
    h = np.zeros((6, 3, 3))
    for i in range(3):
        h[i, i, i] = 4.0
    for e, (a, b) in enumerate(_LOCAL_EDGES):
        h[3 + e, a, b] = h[3 + e, b, a] = 4.0
    return h


class FESpace:
    """Continuous Lagrange space of degree 1 or 2 on a triangle mesh."""

    def __init__(self, mesh: Mesh, degree: int, constraint: str = "none"):
        if degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {degree}")
        if constraint not in CONSTRAINTS:
            raise ValueError(f"constraint must be one of {CONSTRAINTS}, got {constraint!r}")
        self.mesh = mesh
        self.degree = degree
        self.constraint = constraint
        nv = mesh.n_vertices
        tris = mesh.triangles
        if degree == 1:
            self.dofmap = tris.copy()
            self.dof_coords = mesh.vertices.copy()
            self.n_edges = 0
            bedge_dofs = np.zeros((len(mesh.boundary_edges), 0), dtype=np.int64)
        else:
            loc = np.stack([np.sort(tris[:, list(e)], axis=1) for e in _LOCAL_EDGES], axis=1)
            edges, inv = np.unique(loc.reshape(-1, 2), axis=0, return_inverse=True)
            self.edges = edges
            self.n_edges = len(edges)
            self.dofmap = np.concatenate([tris, nv + inv.reshape(-1, 3)], axis=1)
            mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
            self.dof_coords = np.concatenate([mesh.vertices, mids])
            be = np.sort(mesh.boundary_edges, axis=1)
            pos = np.searchsorted(edges[:, 0] * (nv + 1) + edges[:, 1], be[:, 0] * (nv + 1) + be[:, 1])
            bedge_dofs = (nv + pos)[:, None]
        self.dof_count = len(self.dof_coords)
        # DOFs carried by each boundary edge: its two vertices (+ its midpoint)
        self.boundary_edge_dofs = np.concatenate([mesh.boundary_edges, bedge_dofs], axis=1)
        self.boundary_dofs_by_tag = {
            int(t): np.unique(self.boundary_edge_dofs[mesh.boundary_tags == t])
            for t in np.unique(mesh.boundary_tags)
        }
        self.boundary_dofs = np.unique(self.boundary_edge_dofs)
        self._tab: dict[int, dict] = {}

    @property
    def nloc(self) -> int:
        return 3 if self.degree == 1 else 6

    @cached_property
    def constrained_dofs(self) -> np.ndarray:
        if self.constraint == "zero-trace":
            return self.boundary_dofs
        return np.zeros(0, dtype=np.int64)

    @cached_property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.dof_count, dtype=bool)
        mask[self.constrained_dofs] = False
        return np.flatnonzero(mask)

    @cached_property
    def areas(self) -> np.ndarray:
        return self.mesh.signed_areas()

    @cached_property
    def lambda_gradients(self) -> np.ndarray:
        """Gradients of the barycentric coordinates per triangle, (nt, 3, 2)."""
        p = self.mesh.vertices[self.mesh.triangles]
        x, y = p[..., 0], p[..., 1]
        twice = 2.0 * self.areas
        g = np.empty((len(p), 3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            g[:, i, 0] = (y[:, j] - y[:, k]) / twice
            g[:, i, 1] = (x[:, k] - x[:, j]) / twice
        return g

    @cached_property
    def locator(self) -> PointLocator:
        return PointLocator(self.mesh)

    def tabulate(self, quad: QuadratureRule | int = DEFAULT_QUAD_DEGREE, refine: int = 1) -> dict:
        """Basis values, gradients, physical points and weights on every triangle."""
        if not isinstance(quad, QuadratureRule):
            quad = composite_rule(int(quad), refine)
        key = id(quad)
        if key in self._tab and self._tab[key]["quad"] is quad:
            return self._tab[key]
        lam = quad.points
        phi = basis_values(self.degree, lam)
        dphi = basis_lambda_derivatives(self.degree, lam)
        grads = np.einsum("qlk,tkd->tqld", dphi, self.lambda_gradients, optimize=True)
        v = self.mesh.vertices[self.mesh.triangles]
        xq = np.einsum("qk,tkd->tqd", lam, v)
        jw = self.areas[:, None] * quad.weights[None, :]
        tab = {"quad": quad, "phi": phi, "grad": grads, "x": xq, "jw": jw}
        self._tab[key] = tab
        return tab

    def values_at_quadrature(self, coefs, tab: dict) -> np.ndarray:
        c = np.asarray(coefs)[self.dofmap]
        return c @ tab["phi"].T

    def gradients_at_quadrature(self, coefs, tab: dict) -> np.ndarray:
        c = np.asarray(coefs)[self.dofmap]
        return np.einsum("tl,tqld->tqd", c, tab["grad"], optimize=True)

    def hessians(self, coefs) -> np.ndarray:
        """Elementwise constant Hessian of a P2 (or P1) function, (nt, 2, 2)."""
        c = np.asarray(coefs)[self.dofmap]
        hl = basis_lambda_hessians(self.degree)
        g = self.lambda_gradients
        hlam = np.einsum("tl,lab->tab", c, hl)
        return np.einsum("tab,tad,tbe->tde", hlam, g, g)


def build_space(mesh: Mesh, degree: int, constraint: str = "none") -> FESpace:
    return FESpace(mesh, degree, constraint)


def _call_field(f, x: np.ndarray, y: np.ndarray):
    out = f(x, y)
    if isinstance(out, tuple):
        out = tuple(np.broadcast_to(np.asarray(o, dtype=float), x.shape) for o in out)
        if any(not np.all(np.isfinite(o)) for o in out):
            raise ValueError("field returned non-finite values")
        return out
    out = np.broadcast_to(np.asarray(out, dtype=float), x.shape)
    if not np.all(np.isfinite(out)):
        raise ValueError("field returned non-finite values")
    return out


def interpolate(space: FESpace, f) -> np.ndarray:
    """Nodal interpolant of a scalar field ``f(x, y)`` evaluated on arrays."""
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    return np.array(_call_field(f, x, y), dtype=float)


def _locate(space: FESpace, points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tri, lam = space.locator.locate(pts)
    return pts, tri, lam


def evaluate(space: FESpace, coefs, points) -> np.ndarray:
    """Values of the FE function at arbitrary points, shape ``(n,)``."""
    pts, tri, lam = _locate(space, points)
    phi = basis_values(space.degree, lam)
    return np.einsum("nl,nl->n", np.asarray(coefs)[space.dofmap[tri]], phi)


def evaluate_gradient(space: FESpace, coefs, points) -> np.ndarray:
    """Gradients of the FE function at arbitrary points, shape ``(n, 2)``."""
    pts, tri, lam = _locate(space, points)
    dphi = basis_lambda_derivatives(space.degree, lam)
    g = np.einsum("nlk,nkd->nld", dphi, space.lambda_gradients[tri])
    return np.einsum("nl,nld->nd", np.asarray(coefs)[space.dofmap[tri]], g)


def curl(grad: np.ndarray) -> np.ndarray:
    """Scalar-to-vector 2D curl from a gradient: ``(d/dy, -d/dx)``."""
    g = np.asarray(grad)
    return np.stack([g[..., 1], -g[..., 0]], axis=-1)


def evaluate_curl(space: FESpace, coefs, points) -> np.ndarray:
    return curl(evaluate_gradient(space, coefs, points))


def integrate(space: FESpace, values: np.ndarray, tab: dict) -> float:
    return float(np.sum(tab["jw"] * values))


def l2_error_scalar(space: FESpace, coefs, exact, quad=DEFAULT_QUAD_DEGREE, refine: int = 1) -> float:
    tab = space.tabulate(quad, refine)
    uh = space.values_at_quadrature(coefs, tab)
    ue = _call_field(exact, tab["x"][..., 0], tab["x"][..., 1])
    return float(np.sqrt(max(integrate(space, (uh - ue) ** 2, tab), 0.0)))


def l2_error_vector(spaces, coefs, exact, quad=DEFAULT_QUAD_DEGREE, refine: int = 1) -> float:
    """L2 error of a two-component field; ``exact(x, y)`` returns a pair."""
    s1, s2 = spaces
    c1, c2 = coefs
    tab1 = s1.tabulate(quad, refine)
    tab2 = s2.tabulate(tab1["quad"]) if s2 is not s1 else tab1
    e1, e2 = _call_field(exact, tab1["x"][..., 0], tab1["x"][..., 1])
    d = (s1.values_at_quadrature(c1, tab1) - e1) ** 2 + (s2.values_at_quadrature(c2, tab2) - e2) ** 2
    return float(np.sqrt(max(integrate(s1, d, tab1), 0.0)))


def l2_error_field(space: FESpace, values: np.ndarray, exact, tab: dict) -> float:
    """L2 error of a vector field already sampled at the quadrature points of ``tab``."""
    e1, e2 = _call_field(exact, tab["x"][..., 0], tab["x"][..., 1])
    d = (values[..., 0] - e1) ** 2 + (values[..., 1] - e2) ** 2
    return float(np.sqrt(max(integrate(space, d, tab), 0.0)))
