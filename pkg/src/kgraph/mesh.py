"""Cartesian grids over chart domains with cut-cell boundary stencils.

Every unknown node carries eight arms (two per line along x, y and the two
diagonals).  An arm ends either at a neighbouring unknown or at a Dirichlet
point, which is a grid node lying on the boundary or the intersection of the
arm with the boundary at fraction ``theta`` of the grid step.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .boundary import Boundary, PolygonBoundary
from .errors import CutLocusError, DomainError, InputError, ResolutionError
from .fmm import fast_march
from .geometry import DIM, AmbientTermCache, GeometryChart, tangential_Y_acceleration

OUTSIDE, INTERIOR, ADJACENT, ON_BOUNDARY = 0, 1, 2, 3
MIN_RESOLUTION = 17
SNAP = 1e-6
BAND_CELLS = 2.0
CUT_LOCUS_ARCS = 5.0
POLISH_CELLS = 4.0
GOLDEN_ITERS = 64

# arms 2k and 2k+1 are the forward and backward ends of line k
DIRECTIONS = np.array([(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)])
NEIGHBOURS = np.array([(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)])
CSV_COLUMNS = ["i", "j", "x1", "x2", "mask", "d", "nearest_s"]


@dataclass
class DistanceField:
    """Signed distance to the boundary (positive inside) with nearest points."""

    distance: np.ndarray
    distance_fmm: np.ndarray
    foot: np.ndarray
    foot_loop: np.ndarray
    foot_s: np.ndarray
    unique: np.ndarray
    regular: np.ndarray
    reach: float
    method: str


@dataclass
class DiscreteDomain:
    chart: GeometryChart
    boundary: Boundary
    x1: np.ndarray
    x2: np.ndarray
    mask: np.ndarray
    index: np.ndarray
    nodes: np.ndarray
    points: np.ndarray
    arm_theta: np.ndarray
    arm_kind: np.ndarray
    arm_target: np.ndarray
    dirichlet_points: np.ndarray
    dirichlet_node: np.ndarray
    dirichlet_loop: np.ndarray
    dirichlet_s: np.ndarray
    dist: DistanceField
    cache: AmbientTermCache = field(repr=False)

    @property
    def shape(self):
        return self.mask.shape

    @property
    def spacing(self):
        return np.array([self.x1[1] - self.x1[0], self.x2[1] - self.x2[0]])

    @property
    def h(self) -> float:
        return float(self.spacing.max())

    @property
    def n_unknowns(self) -> int:
        return len(self.nodes)

    @property
    def grid_points(self) -> np.ndarray:
        X1, X2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        return np.stack([X1, X2], axis=-1)

    @property
    def row_weight(self) -> np.ndarray:
        return np.minimum(1.0, self.arm_theta.min(axis=1))

    @property
    def near_boundary(self) -> np.ndarray:
        """Unknowns with at least one arm ending at a Dirichlet point."""
        return np.any(self.arm_kind == 1, axis=1)

    @property
    def full_stencil(self) -> np.ndarray:
        return np.all(self.arm_theta == 1.0, axis=1)

    @property
    def unknown_distance(self) -> np.ndarray:
        return self.dist.distance[self.nodes[:, 0], self.nodes[:, 1]]

    @property
    def unknown_regular(self) -> np.ndarray:
        return self.dist.regular[self.nodes[:, 0], self.nodes[:, 1]]

    @property
    def reach(self) -> float:
        return self.dist.reach

    @cached_property
    def stencil(self) -> np.ndarray:
        """Weights ``(n, 5, 9)`` mapping stencil values to ``(u_1, u_2, u_11, u_12, u_22)``.

        Stencil slot 0 is the node itself, slot ``1 + a`` the end of arm ``a``.
        Each line uses the three-point formulas on its (possibly shortened)
        arms; the mixed derivative is the half-difference of the two diagonal
        second derivatives.
        """
        hx, hy = self.spacing
        n = self.n_unknowns
        out = np.zeros((n, 5, 9))
        second = []
        for line in range(4):
            right = self.arm_theta[:, 2 * line]
            left = self.arm_theta[:, 2 * line + 1]
            span = left + right
            first = (-right / (left * span), (right - left) / (left * right), left / (right * span))
            sec = (2.0 / (left * span), -2.0 / (left * right), 2.0 / (right * span))
            slots = (2 + 2 * line, 0, 1 + 2 * line)
            second.append((slots, sec))
            if line == 0:
                for slot, c in zip(slots, first):
                    out[:, 0, slot] += c / hx
                for slot, c in zip(slots, sec):
                    out[:, 2, slot] += c / hx**2
            elif line == 1:
                for slot, c in zip(slots, first):
                    out[:, 1, slot] += c / hy
                for slot, c in zip(slots, sec):
                    out[:, 4, slot] += c / hy**2
        for (slots, sec), sign in zip(second[2:], (1.0, -1.0)):
            for slot, c in zip(slots, sec):
                out[:, 3, slot] += sign * c / (4.0 * hx * hy)
        return out

    def stencil_values(self, interior, trace) -> np.ndarray:
        """``(n, 9)`` values at each node and its eight arm ends."""
        vals = np.empty((self.n_unknowns, 9))
        vals[:, 0] = interior
        from_trace = self.arm_kind == 1
        vals[:, 1:] = np.where(from_trace, np.asarray(trace)[np.where(from_trace, self.arm_target, 0)],
                               np.asarray(interior)[np.where(from_trace, 0, self.arm_target)])
        return vals

    def area(self) -> float:
        """Chart area estimate: cells centred on unknown and boundary nodes."""
        cell = float(np.prod(self.spacing))
        return cell * (np.count_nonzero((self.mask == INTERIOR) | (self.mask == ADJACENT))
                       + 0.5 * np.count_nonzero(self.mask == ON_BOUNDARY))


@dataclass
class DiscreteField:
    """Values on the unknown nodes together with the Dirichlet trace."""

    domain: DiscreteDomain
    interior: np.ndarray
    trace: np.ndarray

    @classmethod
    def from_function(cls, domain: DiscreteDomain, fn) -> "DiscreteField":
        return cls(domain, np.asarray(fn(domain.points), dtype=float).copy(),
                   np.asarray(fn(domain.dirichlet_points), dtype=float).copy())

    def grid(self) -> np.ndarray:
        out = np.full(self.domain.shape, np.nan)
        nodes = self.domain.nodes
        out[nodes[:, 0], nodes[:, 1]] = self.interior
        on_grid = self.domain.dirichlet_node >= 0
        flat = out.reshape(-1)
        flat[self.domain.dirichlet_node[on_grid]] = self.trace[on_grid]
        return out

    def copy(self) -> "DiscreteField":
        return DiscreteField(self.domain, self.interior.copy(), self.trace.copy())


def _grid_box(boundary: Boundary, resolution: int, pad: int, box):
    if box is not None:
        lo = np.array([box[0], box[2]], dtype=float)
        hi = np.array([box[1], box[3]], dtype=float)
        return np.linspace(lo[0], hi[0], resolution), np.linspace(lo[1], hi[1], resolution)
    lo, hi = boundary.bbox()
    extent = hi - lo
    cells = resolution - 1 - 2 * pad
    h = extent / cells
    lo = lo - pad * h
    hi = hi + pad * h
    return np.linspace(lo[0], hi[0], resolution), np.linspace(lo[1], hi[1], resolution)


def build_domain(boundary, resolution: int, chart: GeometryChart, *, pad: int = 0, box=None) -> DiscreteDomain:
    """Classify grid nodes and attach cut-cell arms and the distance field.

    Parameters
    ----------
    boundary : Boundary or array_like
        A boundary object or the vertices of a closed polyline.
    resolution : int
        Nodes per axis, at least 17.
    pad : int
        Empty cells added around the bounding box of the boundary.
    box : (x1_min, x1_max, x2_min, x2_max), optional
        Explicit grid box; overrides ``pad``.
    """
    if not isinstance(boundary, Boundary):
        boundary = PolygonBoundary(boundary)
    if int(resolution) < MIN_RESOLUTION:
        raise ResolutionError(f"resolution must be at least {MIN_RESOLUTION} nodes per axis")
    resolution = int(resolution)
    x1, x2 = _grid_box(boundary, resolution, pad, box)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    grid = np.stack([X1, X2], axis=-1)
    try:
        chart.check(grid)
    except DomainError as exc:
        raise DomainError(f"grid box leaves the chart: {exc}") from None
    spacing = np.array([x1[1] - x1[0], x2[1] - x2[0]])
    h = float(spacing.max())

    inside = boundary.contains(grid)
    _, _, _, euclid = boundary.project(grid)
    on_curve = euclid <= SNAP * h
    mask = np.where(on_curve, ON_BOUNDARY, np.where(inside, INTERIOR, OUTSIDE)).astype(np.int8)
    unknown = mask == INTERIOR
    nodes = np.argwhere(unknown)
    if len(nodes) == 0:
        raise ResolutionError("no grid node lies inside the domain")
    index = np.full(mask.shape, -1, dtype=np.int64)
    index[unknown] = np.arange(len(nodes))
    points = grid[nodes[:, 0], nodes[:, 1]]

    dirichlet_node = list(np.flatnonzero(mask.ravel() == ON_BOUNDARY))
    dirichlet_points = [grid.reshape(-1, 2)[dirichlet_node]] if dirichlet_node else [np.zeros((0, 2))]
    dir_index = np.full(mask.size, -1, dtype=np.int64)
    dir_index[dirichlet_node] = np.arange(len(dirichlet_node))
    n_dir = len(dirichlet_node)

    n_unk = len(nodes)
    theta = np.ones((n_unk, 8))
    kind = np.zeros((n_unk, 8), dtype=np.int8)
    target = np.zeros((n_unk, 8), dtype=np.int64)
    crossings = []
    for a, (di, dj) in enumerate(DIRECTIONS):
        ni = nodes[:, 0] + di
        nj = nodes[:, 1] + dj
        nmask = mask[ni, nj]
        is_unknown = nmask == INTERIOR
        is_curve = nmask == ON_BOUNDARY
        is_out = nmask == OUTSIDE
        target[is_unknown, a] = index[ni[is_unknown], nj[is_unknown]]
        kind[is_curve, a] = 1
        target[is_curve, a] = dir_index[ni[is_curve] * mask.shape[1] + nj[is_curve]]
        if np.any(is_out):
            start = points[is_out]
            step = np.array([di, dj]) * spacing
            t = boundary.first_crossing(start, start + step)
            t = np.where(np.isfinite(t), t, 1.0)
            rows = np.flatnonzero(is_out)
            theta[rows, a] = t
            kind[rows, a] = 1
            target[rows, a] = n_dir + np.arange(len(rows))
            n_dir += len(rows)
            crossings.append(start + t[:, None] * step)
    if crossings:
        dirichlet_points.append(np.concatenate(crossings))
    dirichlet_points = np.concatenate(dirichlet_points)
    dirichlet_node = np.concatenate([np.array(dirichlet_node, dtype=np.int64),
                                     np.full(len(dirichlet_points) - len(dirichlet_node), -1, dtype=np.int64)])
    _, d_loop, d_s, _ = boundary.project(dirichlet_points)

    cut = np.any(theta < 1.0, axis=1)
    mask[nodes[cut, 0], nodes[cut, 1]] = ADJACENT

    dist = distance_field(chart, boundary, x1, x2, mask)
    inside_d = dist.distance[(mask == INTERIOR) | (mask == ADJACENT)]
    if 2.0 * float(inside_d.max()) < 3.0 * h:
        raise ResolutionError("domain is thinner than three grid cells")

    return DiscreteDomain(
        chart=chart,
        boundary=boundary,
        x1=x1,
        x2=x2,
        mask=mask,
        index=index,
        nodes=nodes,
        points=points,
        arm_theta=theta,
        arm_kind=kind,
        arm_target=target,
        dirichlet_points=dirichlet_points,
        dirichlet_node=dirichlet_node,
        dirichlet_loop=d_loop,
        dirichlet_s=d_s,
        dist=dist,
        cache=AmbientTermCache.build(chart, points),
    )


def _frozen_metric_distance(chart: GeometryChart):
    def dist(x, y):
        delta = y - x
        g = chart.g(0.5 * (x + y))
        return np.sqrt(np.einsum("...i,...ij,...j->...", delta, g, delta))
    return dist


def _polish(metric_dist, boundary, pts, loop, s0, width):
    """Golden-section refinement of the nearest boundary parameter near ``s0``."""
    ratio = (np.sqrt(5.0) - 1.0) / 2.0
    lo = s0 - width
    hi = s0 + width
    c = hi - ratio * (hi - lo)
    d = lo + ratio * (hi - lo)
    fc = metric_dist(pts, boundary.point(loop, c))
    fd = metric_dist(pts, boundary.point(loop, d))
    for _ in range(GOLDEN_ITERS):
        left = fc < fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        new_c = hi - ratio * (hi - lo)
        new_d = lo + ratio * (hi - lo)
        f_new_c = metric_dist(pts, boundary.point(loop, new_c))
        f_new_d = metric_dist(pts, boundary.point(loop, new_d))
        fc, fd = np.where(left, f_new_c, fd), np.where(left, fc, f_new_d)
        c, d = np.where(left, new_c, d), np.where(left, c, new_d)
    s = 0.5 * (lo + hi)
    val = metric_dist(pts, boundary.point(loop, s))
    base = metric_dist(pts, boundary.point(loop, s0))
    better = val <= base
    return np.where(better, s, s0), np.where(better, val, base)


def distance_field(chart: GeometryChart, boundary: Boundary, x1, x2, mask=None) -> DistanceField:
    """Signed distance, nearest boundary points and the regular band.

    Nodes within two cells of the boundary are initialised exactly; the rest
    of the box is reached by first-order fast marching.  Nearest points are
    carried along the marching order, each node inheriting the closest foot
    among its already accepted neighbours.  When the chart provides a closed
    form point distance, distances and feet are then refined by a local 1D
    minimisation along the boundary.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    grid = np.stack([X1, X2], axis=-1)
    shape = X1.shape
    spacing = np.array([x1[1] - x1[0], x2[1] - x2[0]])
    h = float(spacing.max())
    exact = chart.point_distance is not None
    metric_dist = chart.point_distance if exact else _frozen_metric_distance(chart)

    _, loop0, s0, euclid = boundary.project(grid)
    band = euclid <= BAND_CELLS * h
    foot_s = s0.copy()
    foot_loop = loop0.copy()
    bs, bd = _polish(metric_dist, boundary, grid[band], loop0[band], s0[band], (BAND_CELLS + 1.0) * h)
    foot_s[band] = bs
    initial = np.zeros(shape)
    initial[band] = bd

    metric = chart.g(grid)
    times, rank = fast_march(initial, band, metric, spacing)

    # carry feet along the marching order, one slab of arrival times at a time;
    # a slab is thinner than any upwind step so its parents are already final
    n1, n2 = shape
    edge = np.minimum(spacing[0] * np.sqrt(metric[..., 0, 0]), spacing[1] * np.sqrt(metric[..., 1, 1]))
    slab = 0.25 * float(edge.min())
    flat_t = np.where(band, -1.0, times).ravel()
    flat_s = foot_s.ravel()
    flat_loop = foot_loop.ravel()
    flat_pts = grid.reshape(-1, 2)
    todo = np.flatnonzero(~band.ravel())
    todo = todo[np.argsort(flat_t[todo], kind="stable")]
    edges = np.searchsorted(flat_t[todo], np.arange(0.0, flat_t.max() + 2 * slab, slab))
    padded_t = np.pad(np.where(band, -1.0, times), 1, constant_values=np.inf).ravel()
    stride = n2 + 2
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        ks = todo[lo:hi]
        start = flat_t[ks[0]]
        i, j = np.divmod(ks, n2)
        best_d = np.full(len(ks), np.inf)
        best_k = ks.copy()
        for di, dj in NEIGHBOURS:
            kk = (i + di) * n2 + (j + dj)
            ok = padded_t[(i + 1 + di) * stride + (j + 1 + dj)] < start
            if not np.any(ok):
                continue
            kk = np.where(ok, kk, 0)
            dist = metric_dist(flat_pts[ks], boundary.point(flat_loop[kk], flat_s[kk]))
            dist = np.where(ok, dist, np.inf)
            take = dist < best_d
            best_d = np.where(take, dist, best_d)
            best_k = np.where(take, kk, best_k)
        flat_s[ks] = flat_s[best_k]
        flat_loop[ks] = flat_loop[best_k]
    foot_s = flat_s.reshape(shape)
    foot_loop = flat_loop.reshape(shape)

    if exact:
        rest = ~band
        ps, pd = _polish(metric_dist, boundary, grid[rest], foot_loop[rest], foot_s[rest], POLISH_CELLS * h)
        foot_s[rest] = ps
        unsigned = initial.copy()
        unsigned[rest] = pd
        method = "fast-marching+closed-form"
    else:
        unsigned = np.where(band, initial, times)
        method = "fast-marching"
    if mask is None:
        inside = boundary.contains(grid)
        on_curve = euclid <= SNAP * h
    else:
        inside = (mask == INTERIOR) | (mask == ADJACENT)
        on_curve = mask == ON_BOUNDARY
    sign = np.where(inside, 1.0, -1.0)
    distance = np.where(on_curve, 0.0, sign * unsigned)
    fmm_signed = np.where(on_curve, 0.0, sign * np.where(band, initial, times))
    foot = boundary.point(foot_loop, foot_s)

    unique = np.ones(shape, dtype=bool)
    for di, dj in NEIGHBOURS:
        a = (slice(max(0, -di), n1 - max(0, di)), slice(max(0, -dj), n2 - max(0, dj)))
        b = (slice(max(0, di), n1 - max(0, -di)), slice(max(0, dj), n2 - max(0, -dj)))
        gap = boundary.arc_gap(foot_loop[a], foot_s[a], foot_loop[b], foot_s[b])
        unique[a] &= gap <= CUT_LOCUS_ARCS * h
    regular = unique.copy()
    regular[0, :] = regular[-1, :] = regular[:, 0] = regular[:, -1] = False
    for di, dj in NEIGHBOURS:
        a = (slice(max(0, -di), n1 - max(0, di)), slice(max(0, -dj), n2 - max(0, dj)))
        b = (slice(max(0, di), n1 - max(0, -di)), slice(max(0, dj), n2 - max(0, -dj)))
        regular[a] &= unique[b]
    irregular_inside = inside & ~regular
    if np.any(irregular_inside):
        reach = float(distance[irregular_inside].min())
    else:
        reach = float(distance[inside].max()) if np.any(inside) else 0.0
    return DistanceField(
        distance=distance,
        distance_fmm=fmm_signed,
        foot=foot,
        foot_loop=foot_loop,
        foot_s=foot_s,
        unique=unique,
        regular=regular,
        reach=reach,
        method=method,
    )


def reach_estimate(domain: DiscreteDomain) -> float:
    return domain.dist.reach


def nearest(domain: DiscreteDomain, i: int, j: int):
    """Nearest boundary point of a grid node; raises on the cut locus."""
    if not domain.dist.unique[i, j]:
        raise CutLocusError(f"node ({i}, {j}) has no unique nearest boundary point")
    return domain.dist.foot[i, j]


def distance_derivatives(domain: DiscreteDomain):
    """Central-difference gradient and chart Hessian of the signed distance.

    Returns arrays over the whole grid; edge rows are NaN.
    """
    d = domain.dist.distance
    hx, hy = domain.spacing
    grad = np.full(d.shape + (DIM,), np.nan)
    hess = np.full(d.shape + (DIM, DIM), np.nan)
    c = (slice(1, -1), slice(1, -1))
    grad[c + (0,)] = (d[2:, 1:-1] - d[:-2, 1:-1]) / (2 * hx)
    grad[c + (1,)] = (d[1:-1, 2:] - d[1:-1, :-2]) / (2 * hy)
    hess[c + (0, 0)] = (d[2:, 1:-1] - 2 * d[1:-1, 1:-1] + d[:-2, 1:-1]) / hx**2
    hess[c + (1, 1)] = (d[1:-1, 2:] - 2 * d[1:-1, 1:-1] + d[1:-1, :-2]) / hy**2
    mixed = (d[2:, 2:] - d[2:, :-2] - d[:-2, 2:] + d[:-2, :-2]) / (4 * hx * hy)
    hess[c + (0, 1)] = mixed
    hess[c + (1, 0)] = mixed
    return grad, hess


def parallel_curvature_field(domain: DiscreteDomain) -> np.ndarray:
    """Cylinder mean curvature over the level sets of ``d`` on regular nodes, NaN elsewhere."""
    chart = domain.chart
    regular = domain.dist.regular
    out = np.full(domain.shape, np.nan)
    if not np.any(regular):
        return out
    pts = domain.grid_points[regular]
    grad, hess = distance_derivatives(domain)
    dd = grad[regular]
    gamma = chart.christoffel(pts)
    ginv = chart.g_inv(pts)
    cov_hess = hess[regular] - np.einsum("nkij,nk->nij", gamma, dd)
    laplacian = np.einsum("nij,nij->n", ginv, cov_hess)
    accel = tangential_Y_acceleration(chart, pts)
    rho = chart.warp(pts)
    out[regular] = (-laplacian + np.einsum("ni,ni->n", accel, dd) / rho**2) / DIM
    return out


def parallel_hypersurface_curvature(domain: DiscreteDomain, i: int, j: int) -> float:
    if not domain.dist.regular[i, j]:
        raise CutLocusError(f"node ({i}, {j}) lies outside the regular band")
    return float(parallel_curvature_field(domain)[i, j])


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_grid_csv(domain: DiscreteDomain, path, extra: dict | None = None) -> Path:
    """Row per grid node in ``(i, j)`` order with the standard columns and extras."""
    path = Path(path)
    extra = extra or {}
    columns = CSV_COLUMNS + list(extra)
    grid = domain.grid_points
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        n1, n2 = domain.shape
        for i in range(n1):
            for j in range(n2):
                row = [i, j, grid[i, j, 0], grid[i, j, 1], int(domain.mask[i, j]),
                       domain.dist.distance[i, j], domain.dist.foot_s[i, j]]
                row += [values[i, j] for values in extra.values()]
                writer.writerow([_fmt(v) for v in row])
    return path


def read_polyline_csv(path):
    """Read closed polylines from CSV columns ``x1, x2`` and optional ``loop`` and ``phi``."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"x1", "x2"} <= set(rows[0]):
        raise InputError("polyline CSV needs columns x1 and x2")
    loops: dict[int, list] = {}
    values: dict[int, list] = {}
    for row in rows:
        k = int(row.get("loop") or 0)
        loops.setdefault(k, []).append((float(row["x1"]), float(row["x2"])))
        if row.get("phi") not in (None, ""):
            values.setdefault(k, []).append(float(row["phi"]))
    keys = sorted(loops)
    vertices = [np.array(loops[k]) for k in keys]
    trace = [np.array(values[k]) for k in keys] if values else None
    return vertices, trace
