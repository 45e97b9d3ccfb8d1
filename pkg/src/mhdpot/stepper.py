"""Linearized time stepping of the potential formulation.

Each step solves one coupled sparse system for the potential ``A``, its
discrete Laplacian ``w``, the velocity ``(u1, u2)``, the pressure ``p`` and
the zero-mean multiplier ``lam``.  The magnetic field of the previous step,
``B = curl A_prev + sum_j beta_j curl phi_j``, is frozen in both coupling
terms, so the two Lorentz blocks are exact transposes of each other and
cancel in the energy balance.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .assembly import (apply_dirichlet, convection_matrix, divergence_matrix, load_vector,
                       load_vector_2d, lorentz_coupling_matrices, mass_matrix, stiffness_matrix)
from .fem import DEFAULT_QUAD_DEGREE, FESpace, curl, evaluate_gradient
from .linalg import BlockSystem, solve_sparse
from .mesh import Mesh
from .potential import (HarmonicBasis, PhysicalParams, compute_beta, initial_potential,
                        initial_velocity, solve_harmonic_basis)

BLOCKS = ("A", "w", "u1", "u2", "p", "lam")


def _zero_scalar(x, y, t):
    return np.zeros(np.broadcast(x, y).shape)


def _zero_vector(x, y, t):
    z = np.zeros(np.broadcast(x, y).shape)
    return z, z


@dataclass(frozen=True)
class StepSources:
    """Right-hand sides as callables of ``(x, y, t)``; all default to zero."""

    J: Callable = _zero_scalar
    f: Callable = _zero_vector
    g: Callable = _zero_scalar

    @property
    def homogeneous(self) -> bool:
        return self.J is _zero_scalar and self.f is _zero_vector and self.g is _zero_scalar


class Discretization:
    """Spaces and time-independent matrices shared by every step on one mesh."""

    def __init__(self, mesh: Mesh, params: PhysicalParams | None = None,
                 quad: int = DEFAULT_QUAD_DEGREE, basis: HarmonicBasis | None = None):
        self.mesh = mesh
        self.params = params or PhysicalParams()
        self.quad = quad
        self.V = FESpace(mesh, 2, "zero-trace")
        self.Q = FESpace(mesh, 1, "zero-mean")
        self.basis = basis if basis is not None else solve_harmonic_basis(mesh)
        if self.basis.space.mesh is not mesh:
            raise ValueError("harmonic basis lives on a different mesh")
        self.M = mass_matrix(self.V)
        self.K = stiffness_matrix(self.V)
        self.B = divergence_matrix(self.V, self.Q, quad)
        self.mean = load_vector(self.Q, lambda x, y: np.ones_like(x), quad=quad)
        self.tab = self.V.tabulate(quad)
        # curl of the harmonic basis at the quadrature points, one per hole
        self._harmonic_curls = [
            curl(self.basis.space.gradients_at_quadrature(phi, self.basis.space.tabulate(self.tab["quad"])))
            for phi in self.basis.phis
        ]

    @property
    def nV(self) -> int:
        return self.V.dof_count

    @property
    def nQ(self) -> int:
        return self.Q.dof_count

    def sizes(self) -> list[int]:
        return [self.nV, self.nV, self.nV, self.nV, self.nQ, 1]

    def dirichlet_dofs(self) -> np.ndarray:
        """Global indices of the boundary DOFs of ``A``, ``w``, ``u1``, ``u2``."""
        bd = self.V.boundary_dofs
        return np.concatenate([bd + k * self.nV for k in range(4)])

    def field_B(self, A: np.ndarray, beta) -> np.ndarray:
        """``curl A + sum beta_j curl phi_j`` at the quadrature points, (nt, nq, 2)."""
        Bq = curl(self.V.gradients_at_quadrature(A, self.tab))
        for b, c in zip(beta, self._harmonic_curls):
            Bq = Bq + b * c
        return Bq


@dataclass(frozen=True)
class MhdState:
    t: float
    A: np.ndarray
    w: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    p: np.ndarray
    beta: np.ndarray
    tau: float
    disc: Discretization = field(repr=False, compare=False)
    res_norm: float = 0.0

    def __post_init__(self):
        nV, nQ = self.disc.nV, self.disc.nQ
        for name, n in (("A", nV), ("w", nV), ("u1", nV), ("u2", nV), ("p", nQ)):
            if np.shape(getattr(self, name)) != (n,):
                raise ValueError(f"{name} has length {np.size(getattr(self, name))}, expected {n}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def params(self) -> PhysicalParams:
        return self.disc.params

    @property
    def basis(self) -> HarmonicBasis:
        return self.disc.basis


def initial_state(disc: Discretization, H0=None, u0=None, tau: float = 1.0) -> MhdState:
    """Discrete initial data: ``beta`` from the Gram system, ``A0`` by the curl
    projection and ``u0`` by L2 projection.  Missing data are taken as zero."""
    nV = disc.nV
    if H0 is None:
        beta = np.zeros(disc.basis.m)
        A0 = np.zeros(nV)
    else:
        beta = compute_beta(disc.basis, H0, disc.quad)
        A0 = initial_potential(disc.V, H0, disc.quad, stiffness=disc.K)
    if u0 is None:
        u1 = u2 = np.zeros(nV)
    else:
        u1, u2 = initial_velocity(disc.V, u0, disc.quad, mass=disc.M)
    w0 = discrete_laplacian(disc, A0)
    return MhdState(0.0, A0, w0, u1, u2, np.zeros(disc.nQ), beta, tau, disc)


def discrete_laplacian(disc: Discretization, A: np.ndarray) -> np.ndarray:
    """Zero-trace ``w`` with ``(w, a) = -(grad A, grad a)``."""
    bd = disc.V.boundary_dofs
    cs = apply_dirichlet((disc.M, -(disc.K @ A)), bd, 0.0)
    return cs.expand(solve_sparse(cs.matrix, cs.rhs))


def assemble_step_system(prev: MhdState, sources: StepSources, t_n: float | None = None,
                         couple: bool = True) -> BlockSystem:
    """Block system of the step from ``prev`` to ``t_n`` (default ``prev.t + tau``).

    The continuity row is multiplied by -1 so that the velocity/pressure
    blocks are symmetric.  ``couple=False`` drops both Lorentz blocks and
    exists only as a regression probe.
    """
    disc = prev.disc
    mu, sigma, nu = prev.params.mu, prev.params.sigma, prev.params.nu
    tau = prev.tau
    t_n = prev.t + tau if t_n is None else t_n
    M, K, V, q = disc.M, disc.K, disc.V, disc.quad
    nV = disc.nV

    sysm = BlockSystem(disc.sizes(), list(BLOCKS))
    # potential row
    sysm.add("A", "A", M, mu / tau)
    sysm.add("A", "A", K, 1.0 / sigma)
    sysm.add_rhs("A", M @ prev.A, mu / tau)
    sysm.add_rhs("A", load_vector(V, sources.J, t_n, q), 1.0 / sigma)
    # duality row: (w, a) + (grad A, grad a) = 0
    sysm.add("w", "w", M)
    sysm.add("w", "A", K)
    # momentum rows
    N = convection_matrix(V, (prev.u1, prev.u2), quad=q)
    Luu = M / tau + N + nu * K
    sysm.add("u1", "u1", Luu)
    sysm.add("u2", "u2", Luu)
    Bt = disc.B.T.tocsr()
    sysm.add("u1", "p", -Bt[:nV])
    sysm.add("u2", "p", -Bt[nV:])
    fl = load_vector_2d((V, V), sources.f, t_n, q)
    sysm.add_rhs("u1", M @ prev.u1 / tau + fl[:nV])
    sysm.add_rhs("u2", M @ prev.u2 / tau + fl[nV:])
    if couple:
        C_uw, C_wv = lorentz_coupling_matrices(disc.field_B(prev.A, prev.beta), V, V, q)
        sysm.add("A", "u1", C_uw[:, :nV], -mu)
        sysm.add("A", "u2", C_uw[:, nV:], -mu)
        sysm.add("u1", "w", C_wv[:nV], -mu)
        sysm.add("u2", "w", C_wv[nV:], -mu)
    # continuity (negated) with the mean multiplier, and the mean-zero row
    sysm.add("p", "u1", disc.B[:, :nV], -1.0)
    sysm.add("p", "u2", disc.B[:, nV:], -1.0)
    sysm.add("p", "lam", sp.csr_matrix(disc.mean[:, None]))
    sysm.add("lam", "p", sp.csr_matrix(disc.mean[None, :]))
    sysm.add_rhs("p", load_vector(disc.Q, sources.g, t_n, q), -1.0)
    return sysm


def step(prev: MhdState, sources: StepSources | None = None, tol: float = 1e-10,
         couple: bool = True) -> MhdState:
    sources = sources or StepSources()
    t_n = prev.t + prev.tau
    sysm = assemble_step_system(prev, sources, t_n, couple)
    cs = apply_dirichlet(sysm, prev.disc.dirichlet_dofs(), 0.0)
    x_free, res = solve_sparse(cs.matrix, cs.rhs, tol, return_residual=True)
    parts = sysm.split(cs.expand(x_free))
    return MhdState(t_n, parts["A"], parts["w"], parts["u1"], parts["u2"], parts["p"],
                    prev.beta, prev.tau, prev.disc, float(res))


def potential_coefficients(state: MhdState) -> np.ndarray:
    """P2 coefficients of ``A + sum beta_j phi_j`` (same DOF numbering as ``A``)."""
    return state.A + state.basis.combination(state.beta)


def reconstruct_H(state: MhdState) -> Callable:
    """Evaluator ``points (n, 2) -> H (n, 2)`` for ``H = curl(A + sum beta_j phi_j)``."""
    psi = potential_coefficients(state)
    space = state.basis.space

    def H(points):
        return curl(evaluate_gradient(space, psi, points))

    return H


def H_at_quadrature(state: MhdState, tab: dict | None = None) -> np.ndarray:
    disc = state.disc
    tab = tab or disc.tab
    return curl(disc.V.gradients_at_quadrature(potential_coefficients(state), tab))


def divergence_H(state: MhdState) -> np.ndarray:
    """Elementwise ``div H`` from the constant P2 Hessian, one value per triangle."""
    Hs = state.disc.V.hessians(potential_coefficients(state))
    # div curl psi = psi_yx - psi_xy
    return Hs[:, 1, 0] - Hs[:, 0, 1]


@dataclass
class EnergyRecord:
    n: int
    t: float
    energy_A: float  # mu |grad A|^2
    energy_u: float  # |u|^2
    dissip_A: float  # tau / sigma |Laplace_h A|^2
    dissip_u: float  # tau nu |grad u|^2
    data_J: float = 0.0  # |J^n|^2
    data_f: float = 0.0  # |f^n|^2
    res_norm: float = 0.0


@dataclass
class EnergyReport:
    records: list[EnergyRecord] = field(default_factory=list)
    scheme: str = "potential"

    def energies(self) -> np.ndarray:
        return np.array([r.energy_A + r.energy_u for r in self.records])

    def write_csv(self, path) -> None:
        cols = ["n", "t", "energy_A", "energy_u", "dissip_A", "dissip_u", "res_norm"]
        with open(path, "w", newline="") as fh:
            fh.write(f"# scheme={self.scheme}\n")
            wr = csv.writer(fh)
            wr.writerow(cols)
            for r in self.records:
                wr.writerow([r.n] + [f"{getattr(r, c):.16e}" for c in cols[1:]])


def _data_norms(disc_space: FESpace, tab: dict, sources: StepSources, t: float):
    x, y = tab["x"][..., 0], tab["x"][..., 1]
    J = np.asarray(sources.J(x, y, t), dtype=float)
    f1, f2 = sources.f(x, y, t)
    nJ = float(np.sum(tab["jw"] * J**2))
    nf = float(np.sum(tab["jw"] * (np.asarray(f1) ** 2 + np.asarray(f2) ** 2)))
    return nJ, nf


def energy_record(state: MhdState, n: int, sources: StepSources | None = None) -> EnergyRecord:
    disc = state.disc
    mu, sigma, nu = state.params.mu, state.params.sigma, state.params.nu
    M, K = disc.M, disc.K
    rec = EnergyRecord(
        n, state.t,
        mu * float(state.A @ (K @ state.A)),
        float(state.u1 @ (M @ state.u1) + state.u2 @ (M @ state.u2)),
        state.tau / sigma * float(state.w @ (M @ state.w)),
        state.tau * nu * float(state.u1 @ (K @ state.u1) + state.u2 @ (K @ state.u2)),
        res_norm=state.res_norm,
    )
    if sources is not None and not sources.homogeneous and n > 0:
        rec.data_J, rec.data_f = _data_norms(disc.V, disc.tab, sources, state.t)
    return rec


def run(initial: MhdState, sources: StepSources | None = None, T: float = 1.0,
        keep_trajectory: bool = False, on_step: Callable | None = None):
    """March ``N = T / tau`` steps.  Returns ``(final, report, trajectory)``."""
    sources = sources or StepSources()
    N = num_steps(T, initial.tau)
    report = EnergyReport([energy_record(initial, 0)])
    traj = [initial] if keep_trajectory else None
    state = initial
    for n in range(1, N + 1):
        state = step(state, sources)
        report.records.append(energy_record(state, n, sources))
        if traj is not None:
            traj.append(state)
        if on_step is not None:
            on_step(state, n)
    return state, report, traj


def num_steps(T: float, tau: float) -> int:
    if not tau > 0:
        raise ValueError("tau must be positive")
    ratio = T / tau
    N = int(round(ratio))
    if N < 0 or abs(ratio - N) > 1e-12 * max(1.0, abs(ratio)):
        raise ValueError(f"T / tau = {ratio} is not a nonnegative integer")
    return N


@dataclass
class EnergyVerdict:
    passed: bool
    homogeneous: bool
    worst_excess: float = 0.0
    failing_steps: list[int] = field(default_factory=list)
    constant: float | None = None
    detail: str = ""


def energy_check(report: EnergyReport, homogeneous: bool = True, rel_slack: float = 1e-10) -> EnergyVerdict:
    """Per-step energy inequality for zero data; recorded bound constant otherwise.

    For zero data every step must satisfy
    ``E_n + dissip_A_n + dissip_u_n <= E_{n-1} (1 + rel_slack)``.
    For forced runs ``max_n E_n / (E_0 + tau sum_n (|J^n|^2 + |f^n|^2))``
    is recorded, not asserted.
    """
    recs = report.records
    if not recs:
        return EnergyVerdict(False, homogeneous, detail="empty report")
    for r in recs:
        vals = (r.energy_A, r.energy_u, r.dissip_A, r.dissip_u, r.data_J, r.data_f)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            return EnergyVerdict(False, homogeneous, detail=f"invalid entry at step {r.n}")
    if homogeneous:
        worst, bad = 0.0, []
        for prev, cur in zip(recs, recs[1:]):
            lhs = cur.energy_A + cur.energy_u + cur.dissip_A + cur.dissip_u
            e_prev = prev.energy_A + prev.energy_u
            excess = lhs - e_prev * (1 + rel_slack)
            scale = max(e_prev, 1e-300)
            worst = max(worst, (lhs - e_prev) / scale)
            if excess > 0 and lhs > 1e-280:
                bad.append(cur.n)
        return EnergyVerdict(not bad, True, worst, bad,
                             detail="energy non-increasing" if not bad else f"increase at steps {bad}")
    tau = recs[1].t - recs[0].t if len(recs) > 1 else 0.0
    E = np.array([r.energy_A + r.energy_u for r in recs])
    data = E[0] + tau * sum(r.data_J + r.data_f for r in recs[1:])
    C = float(E.max() / data) if data > 0 else float("inf") if E.max() > 0 else 0.0
    return EnergyVerdict(True, False, constant=C, detail=f"max energy / (initial + data) = {C:.4e}")


def with_tau(state: MhdState, tau: float) -> MhdState:
    return replace(state, tau=tau)
