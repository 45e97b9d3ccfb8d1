"""Single runs and convergence studies for the manufactured test cases."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import baseline, stepper
from .fem import l2_error_field, l2_error_scalar, l2_error_vector
from .manufactured import ManufacturedCase, annulus_case, lshape_case
from .mesh import build_lshape_mesh, build_square_with_hole_mesh
from .potential import HarmonicProvider, PhysicalParams

CASES = ("lshape", "annulus", "zero")
SCHEMES = ("potential", "direct-h1")


@dataclass
class StudyConfig:
    case: str = "lshape"
    scheme: str = "potential"
    levels: list[int] = field(default_factory=lambda: [16, 32, 64])
    T: float = 1.0
    tau: float | None = None  # None: tau = h = 1/M on every level
    mu: float = 1.0
    sigma: float = 1.0
    nu: float = 1.0
    quad_degree: int = 8
    provider_factor: int = 4  # fine-mesh factor of the reference harmonic function
    out: str | None = None

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}, got {self.case!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        self.levels = [int(m) for m in self.levels]
        if not self.levels:
            raise ValueError("at least one level is required")
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly ascending")
        if any(m < 2 or m % 2 for m in self.levels):
            raise ValueError("every level must be an even integer >= 2")
        if self.provider_factor < 1:
            raise ValueError("provider_factor must be >= 1")
        PhysicalParams(self.mu, self.sigma, self.nu)
        for m in self.levels:
            stepper.num_steps(self.T, self.tau_for(m))

    @property
    def params(self) -> PhysicalParams:
        return PhysicalParams(self.mu, self.sigma, self.nu)

    def tau_for(self, M: int) -> float:
        return self.tau if self.tau is not None else 1.0 / M


def _coerce(name: str, text: str):
    kinds = {f.name: f.type for f in fields(StudyConfig)}
    if name not in kinds:
        raise ValueError(f"unknown configuration key {name!r}")
    text = text.strip()
    if name == "levels":
        return [int(v) for v in text.replace(",", " ").split()]
    if name in ("quad_degree", "provider_factor"):
        return int(text)
    if name in ("T", "mu", "sigma", "nu"):
        return float(text)
    if name == "tau":
        return None if text.lower() in ("", "h", "none") else float(text)
    return text


def read_config(path) -> dict:
    """Parse a ``key = value`` file; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        try:
            out[key] = _coerce(key, value)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


@dataclass
class RunResult:
    case: str
    scheme: str
    M: int
    h: float
    tau: float
    steps: int
    err_H: float
    err_u: float
    err_A: float | None
    beta: list[float]
    max_div_H: float | None
    energy: stepper.EnergyVerdict
    report: stepper.EnergyReport = field(repr=False)
    seconds: float = 0.0


def build_mesh(case: str, M: int):
    return build_square_with_hole_mesh(M) if case == "annulus" else build_lshape_mesh(M)


def make_case(config: StudyConfig, M: int) -> ManufacturedCase | None:
    p = config.params
    if config.case == "lshape":
        return lshape_case(p.mu, p.sigma, p.nu)
    if config.case == "annulus":
        provider = HarmonicProvider.on_mesh(build_square_with_hole_mesh(config.provider_factor * M))
        return annulus_case(provider, p.mu, p.sigma, p.nu)
    return None


def _zero2(x, y):
    z = np.zeros(np.broadcast(x, y).shape)
    return z, z


def run_single(config: StudyConfig, M: int | None = None) -> RunResult:
    """Run one level to ``T`` and measure the final-time L2 errors."""
    M = config.levels[0] if M is None else int(M)
    t0 = time.perf_counter()
    tau = config.tau_for(M)
    mesh = build_mesh(config.case, M)
    case = make_case(config, M)
    if case is None:
        sources = stepper.StepSources()
        H0 = u0 = None
        H_T, u_T, A_T = _zero2, _zero2, (lambda x, y: np.zeros(np.broadcast(x, y).shape))
    else:
        sources = stepper.StepSources(case.J, case.f, case.g)
        H0, u0 = case.H0, case.u0
        T = config.T
        H_T = lambda x, y: case.H(x, y, T)  # noqa: E731
        u_T = lambda x, y: case.u(x, y, T)  # noqa: E731
        A_T = lambda x, y: case.A(x, y, T)  # noqa: E731
    q = config.quad_degree

    if config.scheme == "potential":
        disc = stepper.Discretization(mesh, config.params, q)
        s0 = stepper.initial_state(disc, H0, u0, tau)
        div = [float(np.abs(stepper.divergence_H(s0)).max(initial=0.0))]

        def track(state, n):
            div.append(float(np.abs(stepper.divergence_H(state)).max(initial=0.0)))

        final, report, _ = stepper.run(s0, sources, config.T, on_step=track)
        err_H = l2_error_field(disc.V, stepper.H_at_quadrature(final), H_T, disc.tab)
        err_A = l2_error_scalar(disc.V, final.A, A_T, q)
        beta = [float(b) for b in final.beta]
        max_div = max(div)
        V = disc.V
    else:
        disc = baseline.BaselineDiscretization(mesh, config.params, q)
        s0 = baseline.initial_state_h1(disc, H0, u0, tau)
        final, report, _ = baseline.run(s0, sources, config.T)
        err_H = l2_error_field(disc.W, final.H_at_quadrature(), H_T, disc.tab)
        err_A, beta, max_div = None, [], None
        V = disc.V
    err_u = l2_error_vector((V, V), (final.u1, final.u2), u_T, q)
    verdict = stepper.energy_check(report, homogeneous=case is None)
    return RunResult(config.case, config.scheme, M, 1.0 / M, tau, len(report.records) - 1,
                     err_H, err_u, err_A, beta, max_div, verdict, report,
                     time.perf_counter() - t0)


def pairwise_rates(h, err) -> list[float]:
    h, err = np.asarray(h, float), np.asarray(err, float)
    with np.errstate(divide="ignore", invalid="ignore"):  # zero errors give nan rates
        return [float(np.log(err[k] / err[k + 1]) / np.log(h[k] / h[k + 1])) for k in range(len(h) - 1)]


def lsq_rate(h, err) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        x, y = np.log(np.asarray(h, float)), np.log(np.asarray(err, float))
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


@dataclass
class ConvergenceTable:
    h: list[float]
    err_H: list[float]
    err_u: list[float]
    err_A: list[float] | None = None
    label: str = ""

    def __post_init__(self):
        n = len(self.h)
        if len(self.err_H) != n or len(self.err_u) != n or (self.err_A is not None and len(self.err_A) != n):
            raise ValueError("all table columns must have the same length")

    def __len__(self) -> int:
        return len(self.h)

    def _column(self, name: str):
        return {"H": self.err_H, "u": self.err_u, "A": self.err_A}[name]

    def rate(self, name: str) -> float | None:
        """Rate between the two finest levels, the convention of the reference tables."""
        if len(self) < 2:
            return None
        return pairwise_rates(self.h, self._column(name))[-1]

    def fitted_rate(self, name: str) -> float | None:
        return lsq_rate(self.h, self._column(name)) if len(self) >= 2 else None

    def pairwise(self, name: str) -> list[float]:
        return pairwise_rates(self.h, self._column(name)) if len(self) >= 2 else []


def run_convergence(config: StudyConfig, progress=None) -> tuple[ConvergenceTable, list[RunResult]]:
    if len(config.levels) < 2:
        raise ValueError("a convergence study needs at least two levels")
    results = []
    for M in config.levels:
        r = run_single(config, M)
        results.append(r)
        if progress is not None:
            progress(r)
    errA = [r.err_A for r in results] if config.scheme == "potential" else None
    table = ConvergenceTable([r.h for r in results], [r.err_H for r in results],
                             [r.err_u for r in results], errA, f"{config.case}/{config.scheme}")
    return table, results


def fmt(v: float) -> str:
    """Four significant digits with an ``E`` exponent, e.g. ``4.295E-03``."""
    return f"{v:.3E}"


def _fmt_rate(v: float | None) -> str:
    return "nan" if v is None else f"{v:.4f}"


def table_csv(table: ConvergenceTable) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    head = ["h", "err_H_L2", "err_u_L2"] + (["err_A_L2"] if table.err_A is not None else [])
    wr.writerow(head)
    for k in range(len(table)):
        row = [fmt(table.h[k]), fmt(table.err_H[k]), fmt(table.err_u[k])]
        if table.err_A is not None:
            row.append(fmt(table.err_A[k]))
        wr.writerow(row)
    line = f"# rate_H={_fmt_rate(table.rate('H'))} rate_u={_fmt_rate(table.rate('u'))}"
    if len(table) >= 2:
        line += f" lsq_rate_H={_fmt_rate(table.fitted_rate('H'))} lsq_rate_u={_fmt_rate(table.fitted_rate('u'))}"
    return buf.getvalue() + line + "\n"


def _h_label(h: float) -> str:
    inv = 1.0 / h
    return f"1/{int(round(inv))}" if abs(inv - round(inv)) < 1e-9 else fmt(h)


def table_markdown(table: ConvergenceTable) -> str:
    cols = ["τ = h", "‖H_h^N − H(t_N)‖", "‖u_h^N − u(t_N)‖"]
    names = ["H", "u"]
    if table.err_A is not None:
        cols.append("‖A_h^N − A(t_N)‖")
        names.append("A")
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for k in range(len(table)):
        vals = [fmt(table._column(n)[k]) for n in names]
        lines.append("| " + " | ".join([_h_label(table.h[k])] + vals) + " |")
    if len(table) >= 2:
        rates = [f"O(h^{{{table.rate(n):.2f}}})" for n in names]
        lines.append("| convergence rate | " + " | ".join(rates) + " |")
    return "\n".join(lines) + "\n"


def emit_table(table: ConvergenceTable, format: str = "csv", path=None) -> str:
    if format == "csv":
        text = table_csv(table)
    elif format in ("markdown", "md"):
        text = table_markdown(table)
    else:
        raise ValueError(f"unknown table format {format!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_table_csv(text: str) -> ConvergenceTable:
    rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    rd = list(csv.reader(rows))
    head, body = rd[0], rd[1:]
    col = {name: [float(r[i]) for r in body] for i, name in enumerate(head)}
    return ConvergenceTable(col["h"], col["err_H_L2"], col["err_u_L2"], col.get("err_A_L2"))


def result_summary(r: RunResult) -> dict:
    out = {k: v for k, v in asdict(r).items() if k not in ("report", "energy")}
    out["energy"] = r.energy.detail
    return out


def with_overrides(config: StudyConfig, **kw) -> StudyConfig:
    return replace(config, **{k: v for k, v in kw.items() if v is not None})


def isclose_factor(value: float, reference: float, factor: float) -> bool:
    return math.isfinite(value) and reference / factor <= value <= reference * factor
