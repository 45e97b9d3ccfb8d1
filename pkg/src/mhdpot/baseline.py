"""Direct H1-conforming comparator: the magnetic field is a P2 vector unknown.

``H = (H1, H2)`` lives in the full P2 space with ``H . n = 0`` imposed at
boundary DOFs, which on axis-aligned polygons means zeroing one component
per edge (both at corners).  Time discretization and linearization mirror
the potential scheme: the previous field ``G = H_prev`` is frozen in the
two coupling terms, which are exact negative transposes of each other.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import (apply_dirichlet, assemble_form, convection_matrix, curl_load_vector,
                       divergence_matrix, load_vector, load_vector_2d, mass_matrix, stiffness_matrix)
from .fem import DEFAULT_QUAD_DEGREE, FESpace
from .linalg import BlockSystem, solve_sparse
from .mesh import Mesh, MeshError
from .potential import PhysicalParams, l2_projection
from .stepper import EnergyRecord, EnergyReport, StepSources, _data_norms, num_steps

BLOCKS = ("H1", "H2", "u1", "u2", "p", "lam")


class UnsupportedGeometryError(MeshError):
    pass


@dataclass(frozen=True)
class NormalTraceConstraint:
    """DOFs at which ``H1`` (resp. ``H2``) is fixed to zero."""

    h1: np.ndarray
    h2: np.ndarray

    @property
    def corners(self) -> np.ndarray:
        return np.intersect1d(self.h1, self.h2)


def enforce_normal_trace(mesh: Mesh, space: FESpace, tol: float = 1e-12) -> NormalTraceConstraint:
    """Constraint map for ``H . n = 0`` on a polygon with axis-parallel edges.

    A horizontal edge fixes ``H2`` on its DOFs, a vertical one fixes ``H1``;
    vertices shared by a horizontal and a vertical edge get both.
    """
    if space.mesh is not mesh:
        raise ValueError("space lives on a different mesh")
    v = mesh.vertices
    d = v[mesh.boundary_edges[:, 1]] - v[mesh.boundary_edges[:, 0]]
    scale = np.abs(d).max(axis=1)
    horiz = np.abs(d[:, 1]) <= tol * scale
    vert = np.abs(d[:, 0]) <= tol * scale
    bad = ~(horiz | vert)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise UnsupportedGeometryError(
            f"boundary edge {tuple(mesh.boundary_edges[k])} is not axis-aligned"
        )
    dofs = space.boundary_edge_dofs
    return NormalTraceConstraint(np.unique(dofs[vert]), np.unique(dofs[horiz]))


class BaselineDiscretization:
    def __init__(self, mesh: Mesh, params: PhysicalParams | None = None, quad: int = DEFAULT_QUAD_DEGREE):
        self.mesh = mesh
        self.params = params or PhysicalParams()
        self.quad = quad
        self.W = FESpace(mesh, 2, "none")        # magnetic field components
        self.V = FESpace(mesh, 2, "zero-trace")  # velocity components
        self.Q = FESpace(mesh, 1, "zero-mean")
        self.constraint = enforce_normal_trace(mesh, self.W)
        self.M = mass_matrix(self.V)
        self.K = stiffness_matrix(self.V)
        D = [[assemble_form(self.W, self.W, i, j, None, 2) for j in range(2)] for i in range(2)]
        # (curl H, curl a) with curl H = dH2/dx - dH1/dy, blocks [[a1 H1, a1 H2], [a2 H1, a2 H2]]
        self.curlcurl = ((D[1][1], -D[1][0]), (-D[0][1], D[0][0]))
        self.B = divergence_matrix(self.V, self.Q, quad)
        self.mean = load_vector(self.Q, lambda x, y: np.ones_like(x), quad=quad)
        self.tab = self.W.tabulate(quad)

    @property
    def n(self) -> int:
        return self.W.dof_count

    @property
    def nQ(self) -> int:
        return self.Q.dof_count

    def sizes(self) -> list[int]:
        return [self.n, self.n, self.n, self.n, self.nQ, 1]

    def fixed_dofs(self) -> np.ndarray:
        n, bd = self.n, self.V.boundary_dofs
        c = self.constraint
        return np.concatenate([c.h1, c.h2 + n, bd + 2 * n, bd + 3 * n])


@dataclass(frozen=True)
class H1State:
    t: float
    H1: np.ndarray
    H2: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    p: np.ndarray
    tau: float
    disc: BaselineDiscretization = field(repr=False, compare=False)
    res_norm: float = 0.0

    def __post_init__(self):
        n, nQ = self.disc.n, self.disc.nQ
        for name, m in (("H1", n), ("H2", n), ("u1", n), ("u2", n), ("p", nQ)):
            if np.shape(getattr(self, name)) != (m,):
                raise ValueError(f"{name} has length {np.size(getattr(self, name))}, expected {m}")
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def params(self) -> PhysicalParams:
        return self.disc.params

    def H_at_quadrature(self, tab: dict | None = None) -> np.ndarray:
        W = self.disc.W
        tab = tab or self.disc.tab
        return np.stack([W.values_at_quadrature(self.H1, tab), W.values_at_quadrature(self.H2, tab)], axis=-1)


def initial_state_h1(disc: BaselineDiscretization, H0=None, u0=None, tau: float = 1.0) -> H1State:
    """``H0`` by componentwise L2 projection onto the constrained space, ``u0`` likewise."""
    n, c = disc.n, disc.constraint
    Mw = disc.M  # same numbering and entries on the unconstrained space
    if H0 is None:
        H1 = H2 = np.zeros(n)
    else:
        H1 = l2_projection(disc.W, lambda x, y: H0(x, y)[0], disc.quad, mass=Mw, fixed=c.h1)
        H2 = l2_projection(disc.W, lambda x, y: H0(x, y)[1], disc.quad, mass=Mw, fixed=c.h2)
    if u0 is None:
        u1 = u2 = np.zeros(n)
    else:
        u1 = l2_projection(disc.V, lambda x, y: u0(x, y)[0], disc.quad, mass=disc.M)
        u2 = l2_projection(disc.V, lambda x, y: u0(x, y)[1], disc.quad, mass=disc.M)
    return H1State(0.0, H1, H2, u1, u2, np.zeros(disc.nQ), tau, disc)


def assemble_h1_system(prev: H1State, sources: StepSources, t_n: float | None = None) -> BlockSystem:
    disc = prev.disc
    mu, sigma, nu = prev.params.mu, prev.params.sigma, prev.params.nu
    tau = prev.tau
    t_n = prev.t + tau if t_n is None else t_n
    W, V, q, n = disc.W, disc.V, disc.quad, disc.n
    M, K = disc.M, disc.K

    sysm = BlockSystem(disc.sizes(), list(BLOCKS))
    names = ("H1", "H2")
    for i in range(2):
        sysm.add(names[i], names[i], M, mu / tau)
        for j in range(2):
            sysm.add(names[i], names[j], disc.curlcurl[i][j], 1.0 / sigma)
    sysm.add_rhs("H1", M @ prev.H1, mu / tau)
    sysm.add_rhs("H2", M @ prev.H2, mu / tau)
    jl = curl_load_vector(W, sources.J, t_n, q)
    sysm.add_rhs("H1", jl[:n], 1.0 / sigma)
    sysm.add_rhs("H2", jl[n:], 1.0 / sigma)

    # frozen field G = H_prev at the quadrature points
    G = prev.H_at_quadrature()
    G1, G2 = G[..., 0], G[..., 1]

    def E(k, c):  # integral c * phi_j(u) * d_k phi_i(a)
        return assemble_form(W, V, k, "v", c, q)

    E1G2, E1G1, E0G2, E0G1 = E(1, G2), E(1, G1), E(0, G2), E(0, G1)
    # -mu (u x G, curl a), u x G = u1 G2 - u2 G1
    sysm.add("H1", "u1", E1G2, mu)
    sysm.add("H1", "u2", E1G1, -mu)
    sysm.add("H2", "u1", E0G2, -mu)
    sysm.add("H2", "u2", E0G1, mu)
    # +mu (G x curl H, v), G x psi = (G2 psi, -G1 psi): the negative transpose
    sysm.add("u1", "H1", E1G2.T, -mu)
    sysm.add("u2", "H1", E1G1.T, mu)
    sysm.add("u1", "H2", E0G2.T, mu)
    sysm.add("u2", "H2", E0G1.T, -mu)

    N = convection_matrix(V, (prev.u1, prev.u2), quad=q)
    Luu = M / tau + N + nu * K
    sysm.add("u1", "u1", Luu)
    sysm.add("u2", "u2", Luu)
    Bt = disc.B.T.tocsr()
    sysm.add("u1", "p", -Bt[:n])
    sysm.add("u2", "p", -Bt[n:])
    fl = load_vector_2d((V, V), sources.f, t_n, q)
    sysm.add_rhs("u1", M @ prev.u1 / tau + fl[:n])
    sysm.add_rhs("u2", M @ prev.u2 / tau + fl[n:])

    sysm.add("p", "u1", disc.B[:, :n], -1.0)
    sysm.add("p", "u2", disc.B[:, n:], -1.0)
    sysm.add("p", "lam", sp.csr_matrix(disc.mean[:, None]))
    sysm.add("lam", "p", sp.csr_matrix(disc.mean[None, :]))
    sysm.add_rhs("p", load_vector(disc.Q, sources.g, t_n, q), -1.0)
    return sysm


def step_h1(prev: H1State, sources: StepSources | None = None, tol: float = 1e-10) -> H1State:
    sources = sources or StepSources()
    t_n = prev.t + prev.tau
    sysm = assemble_h1_system(prev, sources, t_n)
    cs = apply_dirichlet(sysm, prev.disc.fixed_dofs(), 0.0)
    x_free, res = solve_sparse(cs.matrix, cs.rhs, tol, return_residual=True)
    parts = sysm.split(cs.expand(x_free))
    return H1State(t_n, parts["H1"], parts["H2"], parts["u1"], parts["u2"], parts["p"],
                   prev.tau, prev.disc, float(res))


def energy_record_h1(state: H1State, n: int, sources: StepSources | None = None) -> EnergyRecord:
    """Same columns as the potential scheme; ``energy_A`` holds ``mu |H|^2``
    and ``dissip_A`` holds ``tau / sigma |curl H|^2``."""
    disc = state.disc
    mu, sigma, nu = state.params.mu, state.params.sigma, state.params.nu
    M, K = disc.M, disc.K
    H = (state.H1, state.H2)
    cc = sum(float(H[i] @ (disc.curlcurl[i][j] @ H[j])) for i in range(2) for j in range(2))
    rec = EnergyRecord(
        n, state.t,
        mu * float(H[0] @ (M @ H[0]) + H[1] @ (M @ H[1])),
        float(state.u1 @ (M @ state.u1) + state.u2 @ (M @ state.u2)),
        state.tau / sigma * max(cc, 0.0),
        state.tau * nu * float(state.u1 @ (K @ state.u1) + state.u2 @ (K @ state.u2)),
        res_norm=state.res_norm,
    )
    if sources is not None and not sources.homogeneous and n > 0:
        rec.data_J, rec.data_f = _data_norms(disc.W, disc.tab, sources, state.t)
    return rec


def run(initial: H1State, sources: StepSources | None = None, T: float = 1.0,
        keep_trajectory: bool = False, on_step=None):
    sources = sources or StepSources()
    N = num_steps(T, initial.tau)
    report = EnergyReport([energy_record_h1(initial, 0)], scheme="direct-h1")
    traj = [initial] if keep_trajectory else None
    state = initial
    for n in range(1, N + 1):
        state = step_h1(state, sources)
        report.records.append(energy_record_h1(state, n, sources))
        if traj is not None:
            traj.append(state)
        if on_step is not None:
            on_step(state, n)
    return state, report, traj
