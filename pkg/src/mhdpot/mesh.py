"""Structured triangulations of rectilinear polygonal domains with holes.

Every domain handled here is a union of axis-aligned squares of side ``1/M``.
Each square is split along its lower-left to upper-right diagonal, so meshes
for ``M`` and ``2M`` are nested and quasi-uniform with the fixed ratio
``max h_K / min rho_K = 2 (1 + sqrt 2)``.

Boundary edges are oriented with the domain on their left: the outer loop
(tag 0) runs counterclockwise and every hole loop (tag ``j >= 1``) clockwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Invalid mesh parameters or geometry."""


class MeshFormatError(MeshError):
    """Malformed mesh file."""


class PointLocationError(LookupError):
    """A query point lies outside the triangulated domain."""


@dataclass(frozen=True)
class DomainSpec:
    """Outer polygon and hole polygons, each a list of ``(x, y)`` vertices."""

    outer: list[tuple[float, float]]
    holes: list[list[tuple[float, float]]] = field(default_factory=list)


LSHAPE = DomainSpec(
    outer=[(0.5, 0.0), (0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.0, -0.5), (0.0, 0.0)]
)

SQUARE_WITH_HOLE = DomainSpec(
    outer=[(-0.5, 0.5), (-0.5, -1.0), (1.0, -1.0), (1.0, 0.5)],
    holes=[[(0.0, 0.0), (0.0, -0.5), (0.5, -0.5), (0.5, 0.0)]],
)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray        # (nv, 2)
    triangles: np.ndarray       # (nt, 3), counterclockwise
    boundary_edges: np.ndarray  # (nbe, 2), domain on the left
    boundary_tags: np.ndarray   # (nbe,), 0 = outer loop, j >= 1 = hole j
    spacing: float | None = None  # nominal h = 1/M for structured meshes

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_loops(self) -> int:
        return len(np.unique(self.boundary_tags))

    @property
    def n_holes(self) -> int:
        return self.n_loops - 1

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def area(self) -> float:
        return float(self.signed_areas().sum())

    def boundary_vertices(self, tag: int | None = None) -> np.ndarray:
        edges = self.boundary_edges if tag is None else self.boundary_edges[self.boundary_tags == tag]
        return np.unique(edges)

    def loops(self) -> dict[int, np.ndarray]:
        """Ordered vertex cycle of every boundary loop, keyed by tag."""
        out = {}
        for tag in np.unique(self.boundary_tags):
            edges = self.boundary_edges[self.boundary_tags == tag]
            out[int(tag)] = _chain(edges)[0]
        return out


def _chain(edges: np.ndarray) -> list[np.ndarray]:
    """Split directed edges into closed vertex cycles."""
    nxt: dict[int, int] = {}
    for a, b in edges:
        a, b = int(a), int(b)
        if a in nxt:
            raise MeshError(f"boundary vertex {a} starts two edges")
        nxt[a] = b
    cycles = []
    seen: set[int] = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        cyc = [start]
        seen.add(start)
        v = nxt[start]
        while v != start:
            if v not in nxt:
                raise MeshError(f"boundary edges do not close a loop at vertex {v}")
            if v in seen:
                raise MeshError(f"boundary loop revisits vertex {v}")
            cyc.append(v)
            seen.add(v)
            v = nxt[v]
        cycles.append(np.array(cyc, dtype=np.int64))
    return cycles


def _polygon_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _boundary_from_triangles(vertices: np.ndarray, triangles: np.ndarray):
    """Edges used by exactly one triangle, oriented and tagged per loop."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(e, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if counts.max() > 2:
        raise MeshError("an edge is shared by more than two triangles")
    bnd = e[counts[inv] == 1]
    cycles = _chain(bnd)
    areas = [_polygon_area(vertices[c]) for c in cycles]
    outer = int(np.argmax(areas))
    if areas[outer] <= 0:
        raise MeshError("no counterclockwise outer boundary loop")
    holes = [k for k in range(len(cycles)) if k != outer]
    if any(areas[k] >= 0 for k in holes):
        raise MeshError("more than one counterclockwise boundary loop")
    holes.sort(key=lambda k: tuple(vertices[cycles[k]].min(axis=0)))
    edges, tags = [], []
    for tag, k in enumerate([outer] + holes):
        c = cycles[k]
        edges.append(np.column_stack([c, np.roll(c, -1)]))
        tags.append(np.full(len(c), tag, dtype=np.int64))
    return np.concatenate(edges), np.concatenate(tags)


def _inside_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd rule; points exactly on an edge are not expected."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    xj, yj = poly[-1]
    for xi, yi in poly:
        crosses = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (xj - xi) * (y - yi) / (yj - yi) + xi
        inside ^= crosses & (x < xint)
        xj, yj = xi, yi
    return inside


def _grid_polygon(poly, M: int) -> np.ndarray:
    p = np.asarray(poly, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) < 3:
        raise MeshError("a polygon needs at least three 2D vertices")
    q = p * M
    if np.abs(q - np.round(q)).max() > 1e-9:
        raise MeshError(f"polygon vertices are not aligned to the 1/{M} grid")
    d = np.roll(p, -1, axis=0) - p
    if np.any((np.abs(d[:, 0]) > 1e-14) & (np.abs(d[:, 1]) > 1e-14)):
        raise MeshError("structured meshing needs axis-aligned polygon edges")
    return p


def build_rectilinear_mesh(domain: DomainSpec, M: int) -> Mesh:
    """Triangulate an axis-aligned polygonal domain with ``M`` cells per unit length."""
    if int(M) != M or M < 1:
        raise MeshError(f"M must be a positive integer, got {M}")
    M = int(M)
    outer = _grid_polygon(domain.outer, M)
    holes = [_grid_polygon(h, M) for h in domain.holes]
    lo = np.round(outer.min(axis=0) * M).astype(int)
    hi = np.round(outer.max(axis=0) * M).astype(int)
    I, J = np.meshgrid(np.arange(lo[0], hi[0]), np.arange(lo[1], hi[1]))
    I, J = I.ravel(), J.ravel()
    centers = np.column_stack([(I + 0.5) / M, (J + 0.5) / M])
    keep = _inside_polygon(centers, outer)
    for h in holes:
        keep &= ~_inside_polygon(centers, h)
    I, J = I[keep], J[keep]
    if len(I) == 0:
        raise MeshError("domain contains no grid cells")

    nx = hi[0] - lo[0] + 1
    corner = lambda di, dj: (J - lo[1] + dj) * nx + (I - lo[0] + di)  # noqa: E731
    c00, c10, c11, c01 = corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)
    grid_ids = np.unique(np.concatenate([c00, c10, c11, c01]))
    remap = np.full(nx * (hi[1] - lo[1] + 1), -1, dtype=np.int64)
    remap[grid_ids] = np.arange(len(grid_ids))
    gx = grid_ids % nx + lo[0]
    gy = grid_ids // nx + lo[1]
    vertices = np.column_stack([gx / M, gy / M]).astype(float)

    lower = np.column_stack([remap[c00], remap[c10], remap[c11]])
    upper = np.column_stack([remap[c00], remap[c11], remap[c01]])
    triangles = np.empty((2 * len(I), 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    bedges, btags = _boundary_from_triangles(vertices, triangles)
    mesh = Mesh(vertices, triangles, bedges, btags, spacing=1.0 / M)
    if mesh.n_holes != len(domain.holes):
        raise MeshError(
            f"expected {len(domain.holes)} hole loops, found {mesh.n_holes}; "
            f"is M={M} fine enough to resolve the domain?"
        )
    return mesh


def build_lshape_mesh(M: int) -> Mesh:
    """L-shaped domain with reentrant corner at the origin.

    Closed-form sizes: ``3 M^2 / 2`` triangles and ``(M + 1)^2 - M^2 / 4``
    vertices.
    """
    if int(M) != M or M < 2 or M % 2:
        raise MeshError(f"L-shape mesh needs an even M >= 2, got {M}")
    return build_rectilinear_mesh(LSHAPE, int(M))


def build_square_with_hole_mesh(M: int) -> Mesh:
    """Square ``[-0.5, 1] x [-1, 0.5]`` minus the hole ``[0, 0.5] x [-0.5, 0]``.

    Closed-form sizes: ``4 M^2`` triangles and
    ``(3M/2 + 1)^2 - (M/2 - 1)^2`` vertices.
    """
    if int(M) != M or M < 2 or M % 2:
        raise MeshError(f"square-with-hole mesh needs an even M >= 2, got {M}")
    return build_rectilinear_mesh(SQUARE_WITH_HOLE, int(M))


def mesh_statistics(mesh: Mesh) -> dict:
    p = mesh.vertices[mesh.triangles]
    lens = np.stack(
        [
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
        ],
        axis=1,
    )
    diam = lens.max(axis=1)
    rho = 2.0 * np.abs(mesh.signed_areas()) / lens.sum(axis=1)
    h = float(diam.max())
    return {
        "h": h,
        "min_rho": float(rho.min()),
        "quasi_uniformity_ratio": h / float(rho.min()),
        "n_vertices": mesh.n_vertices,
        "n_triangles": mesh.n_triangles,
        "n_loops": mesh.n_loops,
    }


def validate_mesh(mesh: Mesh) -> None:
    """Raise :class:`MeshError` unless the mesh satisfies every structural invariant."""
    nv = mesh.n_vertices
    if mesh.triangles.size and (mesh.triangles.min() < 0 or mesh.triangles.max() >= nv):
        raise MeshError("triangle references a missing vertex")
    areas = mesh.signed_areas()
    if np.any(areas <= 0):
        k = int(np.argmin(areas))
        raise MeshError(f"triangle {k} has non-positive signed area {areas[k]:.3e}")
    e = np.concatenate([mesh.triangles[:, [0, 1]], mesh.triangles[:, [1, 2]], mesh.triangles[:, [2, 0]]])
    key = np.sort(e, axis=1)
    uniq, counts = np.unique(key, axis=0, return_counts=True)
    if counts.max() > 2:
        raise MeshError("an edge is shared by more than two triangles")
    once = {tuple(r) for r in uniq[counts == 1]}
    given = {tuple(sorted(map(int, r))) for r in mesh.boundary_edges}
    if once != given:
        raise MeshError("boundary edges do not match the free edges of the triangulation")
    for tag in np.unique(mesh.boundary_tags):
        cycles = _chain(mesh.boundary_edges[mesh.boundary_tags == tag])
        if len(cycles) != 1:
            raise MeshError(f"boundary tag {tag} has {len(cycles)} loops")
        area = _polygon_area(mesh.vertices[cycles[0]])
        if (tag == 0) != (area > 0):
            raise MeshError(f"boundary loop {tag} has the wrong orientation")
    tags = np.unique(mesh.boundary_tags)
    if tags[0] != 0 or np.any(np.diff(tags) != 1):
        raise MeshError("boundary tags must be 0..m without gaps")


def save_mesh(mesh: Mesh, path) -> None:
    """Write ``nv nt nbe`` then vertices, triangles and tagged boundary edges."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            fh.write(f"{i} {j} {tag}\n")


def load_mesh(path, validate: bool = True) -> Mesh:
    path = Path(path)
    rows: list[tuple[int, list[str]]] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append((lineno, line.split()))
    if not rows:
        raise MeshFormatError(f"{path}: empty mesh file")

    def ints(lineno, toks, n):
        if len(toks) != n:
            raise MeshFormatError(f"{path}:{lineno}: expected {n} fields, got {len(toks)}")
        try:
            return [int(t) for t in toks]
        except ValueError as exc:
            raise MeshFormatError(f"{path}:{lineno}: {exc}") from exc

    lineno, head = rows[0]
    nv, nt, nbe = ints(lineno, head, 3)
    if len(rows) != 1 + nv + nt + nbe:
        last = rows[-1][0]
        raise MeshFormatError(
            f"{path}:{last}: expected {1 + nv + nt + nbe} data lines, found {len(rows)}"
        )
    verts = np.empty((nv, 2))
    for k, (lineno, toks) in enumerate(rows[1:1 + nv]):
        if len(toks) != 2:
            raise MeshFormatError(f"{path}:{lineno}: expected 2 coordinates")
        try:
            verts[k] = [float(t) for t in toks]
        except ValueError as exc:
            raise MeshFormatError(f"{path}:{lineno}: {exc}") from exc
    tris = np.array([ints(n, t, 3) for n, t in rows[1 + nv:1 + nv + nt]], dtype=np.int64).reshape(-1, 3)
    be = np.array([ints(n, t, 3) for n, t in rows[1 + nv + nt:]], dtype=np.int64).reshape(-1, 3)
    mesh = Mesh(verts, tris, be[:, :2].copy(), be[:, 2].copy())
    if validate:
        validate_mesh(mesh)
    return mesh


class PointLocator:
    """Bucket-grid point location for triangle meshes."""

    def __init__(self, mesh: Mesh, tol: float = 1e-12):
        self.mesh = mesh
        self.tol = tol
        p = mesh.vertices[mesh.triangles]
        self._p0 = p[:, 0]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        # inverse affine map, rows give (lambda1, lambda2) gradients
        self._inv = np.stack(
            [np.stack([e2[:, 1], -e2[:, 0]], axis=1), np.stack([-e1[:, 1], e1[:, 0]], axis=1)],
            axis=1,
        ) / det[:, None, None]
        lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        nb = max(1, int(np.sqrt(mesh.n_triangles / 2.0)))
        self._lo = lo
        self._cell = np.maximum((hi - lo) / nb, 1e-300)
        self._nb = np.array([nb, nb])
        tmin = np.floor((p.min(axis=1) - lo) / self._cell - 1e-9).astype(int).clip(0, nb - 1)
        tmax = np.floor((p.max(axis=1) - lo) / self._cell + 1e-9).astype(int).clip(0, nb - 1)
        span = (tmax - tmin).max(axis=0)
        buckets, owners = [], []
        tid = np.arange(mesh.n_triangles)
        for dx in range(span[0] + 1):
            for dy in range(span[1] + 1):
                bx = tmin[:, 0] + dx
                by = tmin[:, 1] + dy
                ok = (bx <= tmax[:, 0]) & (by <= tmax[:, 1])
                buckets.append(by[ok] * nb + bx[ok])
                owners.append(tid[ok])
        buckets = np.concatenate(buckets)
        owners = np.concatenate(owners)
        order = np.lexsort((owners, buckets))
        self._owners = owners[order]
        self._start = np.searchsorted(buckets[order], np.arange(nb * nb + 1))

    def _bary(self, pts: np.ndarray, tri: np.ndarray) -> np.ndarray:
        d = pts - self._p0[tri]
        l12 = np.einsum("nij,nj->ni", self._inv[tri], d)
        return np.column_stack([1.0 - l12.sum(axis=1), l12])

    def locate(self, points, strict: bool = True):
        """Return ``(triangle_index, barycentric_coords)`` for every point.

        Unlocated points get index ``-1`` unless ``strict`` is set, in which
        case :class:`PointLocationError` is raised.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(pts)
        b = np.floor((pts - self._lo) / self._cell).astype(int)
        b = np.clip(b, 0, self._nb - 1)
        bucket = b[:, 1] * self._nb[0] + b[:, 0]
        first = self._start[bucket]
        count = self._start[bucket + 1] - first
        tri = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        todo = np.arange(n)
        for k in range(int(count.max()) if n else 0):
            todo = todo[count[todo] > k]
            if not len(todo):
                break
            cand = self._owners[first[todo] + k]
            lam = self._bary(pts[todo], cand)
            hit = lam.min(axis=1) >= -self.tol
            tri[todo[hit]] = cand[hit]
            bary[todo[hit]] = lam[hit]
            todo = todo[~hit]
        if strict and np.any(tri < 0):
            bad = pts[np.flatnonzero(tri < 0)[0]]
            raise PointLocationError(f"point ({bad[0]:.6g}, {bad[1]:.6g}) is outside the mesh")
        return tri, bary
