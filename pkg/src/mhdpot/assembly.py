"""Finite element assembly of the bilinear forms and load vectors.

All forms go through one element-loop engine: integrands are evaluated on
every triangle at once from tabulated basis data, reduced to local matrices
with ``einsum``, and scattered as triplets into a CSR matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import DEFAULT_QUAD_DEGREE, FESpace, _call_field
from .linalg import BlockSystem, coo_to_csr


class AssemblyError(ValueError):
    pass


@dataclass
class FieldView:
    """A finite element function: space plus coefficient vector."""

    space: FESpace
    coefs: np.ndarray
    role: str = "scalar"

    def __post_init__(self):
        self.coefs = np.asarray(self.coefs, dtype=float)
        if self.coefs.shape != (self.space.dof_count,):
            raise AssemblyError(
                f"coefficient vector of length {self.coefs.size} on a space with "
                f"{self.space.dof_count} DOFs"
            )


def _same_mesh(*spaces: FESpace) -> None:
    m = spaces[0].mesh
    if any(s.mesh is not m for s in spaces[1:]):
        raise AssemblyError("spaces live on different meshes")


def _tabs(test: FESpace, trial: FESpace, quad):
    _same_mesh(test, trial)
    tt = test.tabulate(quad)
    tr = tt if trial is test else trial.tabulate(tt["quad"])
    return tt, tr


def _shape(tab: dict, kind) -> np.ndarray:
    """``'v'`` -> basis values broadcast to (nt, nq, nloc); ``0``/``1`` -> partial derivative."""
    if kind == "v":
        return np.broadcast_to(tab["phi"][None], tab["grad"].shape[:3])
    return tab["grad"][..., kind]


def assemble_form(test: FESpace, trial: FESpace, test_kind="v", trial_kind="v",
                  weight=None, quad=DEFAULT_QUAD_DEGREE) -> sp.csr_matrix:
    """Matrix of ``integral weight * D_trial(phi_j) * D_test(phi_i)``.

    ``weight`` is ``None`` or an array of shape (nt, nq) sampled at the
    quadrature points of ``quad``.
    """
    tt, tr = _tabs(test, trial, quad)
    jw = tt["jw"] if weight is None else tt["jw"] * weight
    local = np.einsum("tq,tqi,tqj->tij", jw, _shape(tt, test_kind), _shape(tr, trial_kind), optimize=True)
    return scatter(test, trial, local)


def scatter(test: FESpace, trial: FESpace, local: np.ndarray) -> sp.csr_matrix:
    nt, ni, nj = local.shape
    rows = np.broadcast_to(test.dofmap[:, :, None], (nt, ni, nj))
    cols = np.broadcast_to(trial.dofmap[:, None, :], (nt, ni, nj))
    return coo_to_csr((rows, cols, local), (test.dof_count, trial.dof_count))


def mass_matrix(space: FESpace, trial: FESpace | None = None, weight=None,
                quad=None) -> sp.csr_matrix:
    """``(phi_j, phi_i)``; unweighted forms default to the exact rule."""
    trial = trial or space
    if quad is None:
        quad = space.degree + trial.degree if weight is None else DEFAULT_QUAD_DEGREE
    return assemble_form(space, trial, "v", "v", weight, quad)


def stiffness_matrix(space: FESpace, quad=None) -> sp.csr_matrix:
    """``(grad phi_j, grad phi_i)``; defaults to the exact rule for affine elements."""
    if quad is None:
        quad = 2 * (space.degree - 1)
    return assemble_form(space, space, 0, 0, None, quad) + assemble_form(space, space, 1, 1, None, quad)


def convection_matrix(space: FESpace, w: tuple, target: FESpace | None = None,
                      quad=DEFAULT_QUAD_DEGREE) -> sp.csr_matrix:
    """Skew form ``1/2 (w . grad u, v) - 1/2 (w . grad v, u)`` for one velocity component.

    ``w`` is a pair of :class:`FieldView` (or coefficient vectors on ``space``)
    for the advecting velocity.  The same matrix acts on both components.
    """
    target = target or space
    _same_mesh(space, target)
    tab = space.tabulate(quad)
    wq = []
    for comp in w:
        if isinstance(comp, FieldView):
            _same_mesh(space, comp.space)
            wq.append(comp.space.values_at_quadrature(comp.coefs, comp.space.tabulate(tab["quad"])))
        else:
            wq.append(space.values_at_quadrature(comp, tab))
    adv = np.einsum("tqld,tqd->tql", tab["grad"], np.stack(wq, axis=-1))  # w . grad phi_l
    phi = np.broadcast_to(tab["phi"][None], adv.shape)
    half = 0.5 * np.einsum("tq,tqj,tqi->tij", tab["jw"], adv, phi, optimize=True)
    return scatter(target, space, half - np.transpose(half, (0, 2, 1)))


def divergence_matrix(velocity: FESpace, pressure: FESpace, quad=DEFAULT_QUAD_DEGREE) -> sp.csr_matrix:
    """``B[i, (c, j)] = (d_c phi_j, q_i)``, columns ordered (u1 DOFs, u2 DOFs)."""
    bx = assemble_form(pressure, velocity, "v", 0, None, quad)
    by = assemble_form(pressure, velocity, "v", 1, None, quad)
    return sp.hstack([bx, by], format="csr")


def sample_field(field, tab: dict, t=None):
    """Evaluate a vector field on the quadrature points of ``tab`` -> (nt, nq, 2)."""
    if isinstance(field, np.ndarray):
        return field
    x, y = tab["x"][..., 0], tab["x"][..., 1]
    out = _call_field(field, x, y) if t is None else _call_field(lambda a, b: field(a, b, t), x, y)
    return np.stack(out, axis=-1)


def lorentz_coupling_matrices(B_field, potential: FESpace, velocity: FESpace,
                              quad=DEFAULT_QUAD_DEGREE):
    """Coupling matrices of the magnetic field ``B`` between potential and velocity.

    ``C_uw`` (n_pot x 2 n_vel) represents ``(u x B, a) = (u1 B2 - u2 B1, a)``
    and ``C_wv`` (2 n_vel x n_pot) represents ``(B x w, v) = (B2 w, v1) - (B1 w, v2)``.
    Pointwise ``(u x B) w = (B x w) . u``, hence ``C_wv = C_uw^T`` exactly.
    ``B_field`` is a callable ``(x, y) -> (B1, B2)`` or an array sampled at
    the quadrature points.
    """
    tab = potential.tabulate(quad)
    B = sample_field(B_field, tab)
    w1 = assemble_form(potential, velocity, "v", "v", B[..., 1], tab["quad"])
    w2 = assemble_form(potential, velocity, "v", "v", -B[..., 0], tab["quad"])
    C_uw = sp.hstack([w1, w2], format="csr")
    C_wv = sp.vstack([w1.T, w2.T], format="csr")
    return C_uw, C_wv


def _load(space: FESpace, values: np.ndarray, tab: dict, kind="v") -> np.ndarray:
    local = np.einsum("tq,tq,tql->tl", tab["jw"], values, _shape(tab, kind), optimize=True)
    return np.bincount(space.dofmap.ravel(), weights=local.ravel(), minlength=space.dof_count)


def load_vector(space: FESpace, f, t=None, quad=DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """``(f, phi_i)`` for a scalar field ``f(x, y)`` or ``f(x, y, t)``."""
    tab = space.tabulate(quad)
    x, y = tab["x"][..., 0], tab["x"][..., 1]
    if isinstance(f, np.ndarray):
        vals = f
    elif t is None:
        vals = _call_field(f, x, y)
    else:
        vals = _call_field(lambda a, b: f(a, b, t), x, y)
    return _load(space, vals, tab)


def load_vector_2d(spaces, f, t=None, quad=DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """``((f, phi_i e_1), (f, phi_i e_2))`` stacked as one vector."""
    s1, s2 = spaces
    _same_mesh(s1, s2)
    tab1 = s1.tabulate(quad)
    tab2 = s2.tabulate(tab1["quad"])
    F = sample_field(f, tab1, t)
    return np.concatenate([_load(s1, F[..., 0], tab1), _load(s2, F[..., 1], tab2)])


def curl_load_vector(space: FESpace, f, t=None, quad=DEFAULT_QUAD_DEGREE) -> np.ndarray:
    """``(f, curl a)`` for vector test functions ``a = phi_i e_c``, stacked (c = 1, 2).

    With the scalar curl ``curl a = d a2/dx - d a1/dy``.
    """
    tab = space.tabulate(quad)
    x, y = tab["x"][..., 0], tab["x"][..., 1]
    if isinstance(f, np.ndarray):
        vals = f
    elif t is None:
        vals = _call_field(f, x, y)
    else:
        vals = _call_field(lambda a, b: f(a, b, t), x, y)
    return np.concatenate([-_load(space, vals, tab, 1), _load(space, vals, tab, 0)])


@dataclass
class ConstrainedSystem:
    """Linear system after eliminating prescribed unknowns.

    ``matrix`` and ``rhs`` act on the free unknowns only; :meth:`expand`
    maps a reduced solution back to the full unknown vector.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    values: np.ndarray
    size: int

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        x = np.zeros(self.size)
        x[self.free] = x_free
        x[self.fixed] = self.values
        return x


def apply_dirichlet(system, dofs, values=0.0) -> ConstrainedSystem:
    """Eliminate rows and columns of prescribed unknowns.

    ``system`` is a :class:`BlockSystem` or a ``(matrix, rhs)`` pair; ``dofs``
    are global unknown indices.  Column contributions of the fixed values are
    moved to the right-hand side of the retained rows, so a symmetric matrix
    stays symmetric.
    """
    if isinstance(system, BlockSystem):
        A, b = system.matrix(), system.vector()
    else:
        A, b = system
        A = sp.csr_matrix(A)
        b = np.asarray(b, dtype=float)
    n = A.shape[0]
    dofs = np.asarray(dofs, dtype=np.int64).ravel()
    if dofs.size and (dofs.min() < 0 or dofs.max() >= n):
        raise AssemblyError("constrained DOF index out of range")
    order = np.argsort(dofs, kind="stable")
    dofs = dofs[order]
    vals = np.broadcast_to(np.asarray(values, dtype=float), order.shape)[order] if dofs.size else np.zeros(0)
    if dofs.size and np.any(np.diff(dofs) == 0):
        raise AssemblyError("a DOF is constrained twice")
    mask = np.ones(n, dtype=bool)
    mask[dofs] = False
    free = np.flatnonzero(mask)
    Af = A[free]
    rhs = b[free] - (Af[:, dofs] @ vals if dofs.size else 0.0)
    return ConstrainedSystem(Af[:, free].tocsr(), rhs, free, dofs, np.array(vals, dtype=float), n)
