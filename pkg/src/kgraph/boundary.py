"""Closed boundary curves in chart coordinates.

Two representations are provided: an exact circle and a polygon with one or
more loops.  Both are parametrised by chart arclength ``s`` per loop and
oriented so that the interior lies to the left of the tangent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, InputError

CHUNK = 4096
CORNER_TURN = np.pi / 6
VERTEX_SNAP = 1e-12


@dataclass
class BoundarySamples:
    """Geometric sample points with first and second chart derivatives.

    ``corner`` is +1 at convex corners, -1 at reflex corners and 0 elsewhere;
    corners have no finite curvature.
    """

    points: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    loop: np.ndarray
    s: np.ndarray
    corner: np.ndarray | None = None


class Boundary:
    lengths: np.ndarray

    def contains(self, pts) -> np.ndarray:
        raise NotImplementedError

    def project(self, pts):
        """Chart-Euclidean nearest point: ``(foot, loop, s, distance)``."""
        raise NotImplementedError

    def first_crossing(self, start, end) -> np.ndarray:
        """Smallest ``t`` in ``(0, 1]`` with ``start + t (end - start)`` on the curve, else ``inf``."""
        raise NotImplementedError

    def point(self, loop, s) -> np.ndarray:
        raise NotImplementedError

    def samples(self, spacing: float) -> BoundarySamples:
        raise NotImplementedError

    def samples_at(self, loop, s) -> BoundarySamples:
        raise NotImplementedError

    def bbox(self):
        raise NotImplementedError

    def area(self) -> float:
        raise NotImplementedError

    def arc_gap(self, loop_a, s_a, loop_b, s_b) -> np.ndarray:
        """Arclength separation of two parameters, infinite across loops."""
        loop_a = np.asarray(loop_a)
        loop_b = np.asarray(loop_b)
        length = self.lengths[np.clip(loop_a, 0, len(self.lengths) - 1)]
        gap = np.abs(np.asarray(s_a) - np.asarray(s_b)) % length
        gap = np.minimum(gap, length - gap)
        return np.where(loop_a == loop_b, gap, np.inf)


class CircleBoundary(Boundary):
    def __init__(self, center, radius: float):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if not self.radius > 0:
            raise InputError("circle radius must be positive")
        self.lengths = np.array([2.0 * np.pi * self.radius])

    def contains(self, pts):
        pts = np.asarray(pts, dtype=float)
        return np.sum((pts - self.center) ** 2, axis=-1) < self.radius**2

    def project(self, pts):
        pts = np.asarray(pts, dtype=float)
        rel = pts - self.center
        angle = np.arctan2(rel[..., 1], rel[..., 0]) % (2.0 * np.pi)
        s = self.radius * angle
        foot = self.point(np.zeros(s.shape, dtype=int), s)
        dist = np.abs(np.linalg.norm(rel, axis=-1) - self.radius)
        return foot, np.zeros(s.shape, dtype=int), s, dist

    def first_crossing(self, start, end):
        start = np.asarray(start, dtype=float)
        step = np.asarray(end, dtype=float) - start
        rel = start - self.center
        a = np.sum(step**2, axis=-1)
        b = 2.0 * np.sum(rel * step, axis=-1)
        c = np.sum(rel**2, axis=-1) - self.radius**2
        disc = b * b - 4.0 * a * c
        out = np.full(a.shape, np.inf)
        ok = disc >= 0
        root = np.sqrt(np.where(ok, disc, 0.0))
        # numerically stable pair of roots
        q = -0.5 * (b + np.copysign(root, b))
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(q != 0, c / q, np.inf)
            t2 = q / a
        for t in (t1, t2):
            hit = ok & (t > 0) & (t <= 1.0)
            out = np.where(hit & (t < out), t, out)
        return out

    def point(self, loop, s):
        angle = np.asarray(s, dtype=float) / self.radius
        return self.center + self.radius * np.stack([np.cos(angle), np.sin(angle)], axis=-1)

    def samples(self, spacing: float):
        count = max(64, int(np.ceil(self.lengths[0] / spacing)))
        s = np.arange(count) * (self.lengths[0] / count)
        angle = s / self.radius
        unit = np.stack([np.cos(angle), np.sin(angle)], axis=-1)
        velocity = np.stack([-unit[:, 1], unit[:, 0]], axis=-1)
        return BoundarySamples(
            points=self.center + self.radius * unit,
            velocity=velocity,
            acceleration=-unit / self.radius,
            loop=np.zeros(count, dtype=int),
            s=s,
        )

    def samples_at(self, loop, s) -> BoundarySamples:
        s = np.asarray(s, dtype=float)
        angle = s / self.radius
        unit = np.stack([np.cos(angle), np.sin(angle)], axis=-1)
        velocity = np.stack([-unit[..., 1], unit[..., 0]], axis=-1)
        return BoundarySamples(self.center + self.radius * unit, velocity, -unit / self.radius,
                               np.zeros(s.shape, dtype=int), s)

    def bbox(self):
        return self.center - self.radius, self.center + self.radius

    def area(self):
        return float(np.pi * self.radius**2)


def _signed_area(vertices):
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p, r, q, s_vec):
    """Proper or touching intersection test of segments p+t r and q+u s."""
    cross = r[:, None, 0] * s_vec[None, :, 1] - r[:, None, 1] * s_vec[None, :, 0]
    qp = q[None, :, :] - p[:, None, :]
    t_num = qp[..., 0] * s_vec[None, :, 1] - qp[..., 1] * s_vec[None, :, 0]
    u_num = qp[..., 0] * r[:, None, 1] - qp[..., 1] * r[:, None, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num / cross
        u = u_num / cross
    hit = (cross != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    colinear = (cross == 0) & (t_num == 0)
    return hit | colinear


class PolygonBoundary(Boundary):
    """Piecewise-linear boundary with one or more closed loops.

    The loop with the largest area is taken as the outer boundary and oriented
    counter-clockwise; the remaining loops are holes, oriented clockwise.
    """

    def __init__(self, loops):
        if isinstance(loops, np.ndarray) and loops.ndim == 2:
            loops = [loops]
        cleaned, self.closed_input = [], []
        for loop in loops:
            v = np.asarray(loop, dtype=float)
            if v.ndim != 2 or v.shape[1] != 2:
                raise InputError("polyline vertices must have shape (M, 2)")
            closed = len(v) > 1 and np.allclose(v[0], v[-1])
            self.closed_input.append(closed)
            if closed:
                v = v[:-1]
            if len(v) < 3:
                raise InputError("a closed polyline needs at least three vertices")
            cleaned.append(v)
        areas = [abs(_signed_area(v)) for v in cleaned]
        outer = int(np.argmax(areas))
        oriented, self.reversed = [], []
        for k, v in enumerate(cleaned):
            flip = (_signed_area(v) > 0) != (k == outer)
            oriented.append(v[::-1].copy() if flip else v)
            self.reversed.append(flip)
        self.loops = oriented
        self._build()
        self._validate()

    def _build(self):
        starts, vecs, owners, cum, lengths = [], [], [], [], []
        for k, v in enumerate(self.loops):
            nxt = np.roll(v, -1, axis=0)
            seg = nxt - v
            seg_len = np.linalg.norm(seg, axis=1)
            if np.any(seg_len <= 0):
                raise GeometryError("polyline has a zero-length edge")
            starts.append(v)
            vecs.append(seg)
            owners.append(np.full(len(v), k))
            cum.append(np.concatenate([[0.0], np.cumsum(seg_len)[:-1]]))
            lengths.append(seg_len.sum())
        self.seg_start = np.concatenate(starts)
        self.seg_vec = np.concatenate(vecs)
        self.seg_len = np.linalg.norm(self.seg_vec, axis=1)
        self.seg_loop = np.concatenate(owners)
        self.seg_s0 = np.concatenate(cum)
        self.lengths = np.array(lengths)
        self.loop_first = np.concatenate([[0], np.cumsum([len(v) for v in self.loops])])

    def _validate(self):
        count = len(self.seg_start)
        idx = np.arange(count)
        for lo in range(0, count, 512):
            hi = min(count, lo + 512)
            hit = _segments_cross(self.seg_start[lo:hi], self.seg_vec[lo:hi], self.seg_start, self.seg_vec)
            rows = idx[lo:hi, None]
            same_loop = self.seg_loop[rows] == self.seg_loop[None, :]
            first = self.loop_first[self.seg_loop[rows]]
            size = self.loop_first[self.seg_loop[rows] + 1] - first
            local_a = rows - first
            local_b = idx[None, :] - first
            gap = np.abs(local_a - local_b)
            adjacent = same_loop & ((gap <= 1) | (gap == size - 1))
            if np.any(hit & ~adjacent):
                raise InputError("boundary polyline is self-intersecting")

    def align_vertex_values(self, values):
        """Reorder per-vertex values given in input order to match the stored loops."""
        out = []
        for k, vals in enumerate(values):
            vals = np.asarray(vals, dtype=float)
            if self.closed_input[k]:
                vals = vals[:-1]
            if len(vals) != len(self.loops[k]):
                raise InputError(f"loop {k}: {len(vals)} values for {len(self.loops[k])} vertices")
            out.append(vals[::-1].copy() if self.reversed[k] else vals)
        return out

    def contains(self, pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        inside = np.zeros(len(flat), dtype=bool)
        a = self.seg_start
        b = self.seg_start + self.seg_vec
        for lo in range(0, len(flat), CHUNK):
            p = flat[lo:lo + CHUNK]
            py = p[:, None, 1]
            straddle = (a[None, :, 1] > py) != (b[None, :, 1] > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xcross = a[None, :, 0] + (py - a[None, :, 1]) * (self.seg_vec[None, :, 0] / self.seg_vec[None, :, 1])
            crossings = np.sum(straddle & (p[:, None, 0] < xcross), axis=1)
            inside[lo:lo + CHUNK] = crossings % 2 == 1
        _, _, _, dist = self.project(flat)
        inside &= dist > 0
        return inside.reshape(pts.shape[:-1])

    def project(self, pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        best_d = np.full(len(flat), np.inf)
        best_seg = np.zeros(len(flat), dtype=int)
        best_t = np.zeros(len(flat))
        step = max(1, CHUNK * 64 // max(1, len(self.seg_start)))
        for lo in range(0, len(flat), step):
            p = flat[lo:lo + step]
            rel = p[:, None, :] - self.seg_start[None, :, :]
            t = np.clip(np.sum(rel * self.seg_vec[None], axis=-1) / self.seg_len**2, 0.0, 1.0)
            diff = rel - t[..., None] * self.seg_vec[None]
            dist = np.sqrt(np.sum(diff**2, axis=-1))
            k = np.argmin(dist, axis=1)
            rows = np.arange(len(p))
            best_d[lo:lo + step] = dist[rows, k]
            best_seg[lo:lo + step] = k
            best_t[lo:lo + step] = t[rows, k]
        foot = self.seg_start[best_seg] + best_t[:, None] * self.seg_vec[best_seg]
        loop = self.seg_loop[best_seg]
        s = self.seg_s0[best_seg] + best_t * self.seg_len[best_seg]
        shape = pts.shape[:-1]
        return foot.reshape(shape + (2,)), loop.reshape(shape), s.reshape(shape), best_d.reshape(shape)

    def first_crossing(self, start, end):
        start = np.asarray(start, dtype=float)
        flat_a = start.reshape(-1, 2)
        flat_r = (np.asarray(end, dtype=float) - start).reshape(-1, 2)
        out = np.full(len(flat_a), np.inf)
        q = self.seg_start
        sv = self.seg_vec
        step = max(1, CHUNK * 64 // max(1, len(q)))
        for lo in range(0, len(flat_a), step):
            p = flat_a[lo:lo + step]
            r = flat_r[lo:lo + step]
            cross = r[:, None, 0] * sv[None, :, 1] - r[:, None, 1] * sv[None, :, 0]
            qp = q[None] - p[:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (qp[..., 0] * sv[None, :, 1] - qp[..., 1] * sv[None, :, 0]) / cross
                u = (qp[..., 0] * r[:, None, 1] - qp[..., 1] * r[:, None, 0]) / cross
            hit = (cross != 0) & (t > 0) & (t <= 1) & (u >= 0) & (u <= 1)
            out[lo:lo + step] = np.min(np.where(hit, t, np.inf), axis=1)
        return out.reshape(start.shape[:-1])

    def _locate(self, loop, s):
        loop = np.asarray(loop, dtype=int)
        s = np.asarray(s, dtype=float) % self.lengths[loop]
        first = self.loop_first[loop]
        last = self.loop_first[loop + 1] - 1
        seg = np.empty(s.shape, dtype=int)
        # segments of one loop are contiguous with increasing seg_s0
        for k in np.unique(loop):
            sel = loop == k
            lo, hi = self.loop_first[k], self.loop_first[k + 1]
            seg[sel] = lo + np.searchsorted(self.seg_s0[lo:hi], s[sel], side="right") - 1
        seg = np.clip(seg, first, last)
        return seg, s - self.seg_s0[seg]

    def point(self, loop, s):
        seg, local = self._locate(loop, s)
        frac = local / self.seg_len[seg]
        return self.seg_start[seg] + frac[..., None] * self.seg_vec[seg]

    def _vertex_data(self):
        """Per-vertex bisector tangent, curvature and corner flag, all loops concatenated."""
        tangents, curvatures, corners = [], [], []
        for v in self.loops:
            prev = v - np.roll(v, 1, axis=0)
            nxt = np.roll(v, -1, axis=0) - v
            len_prev = np.linalg.norm(prev, axis=1)
            len_next = np.linalg.norm(nxt, axis=1)
            t_prev = prev / len_prev[:, None]
            t_next = nxt / len_next[:, None]
            bis = t_prev + t_next
            bis_len = np.linalg.norm(bis, axis=1)
            if np.any(bis_len < 1e-12):
                raise GeometryError("degenerate boundary tangent (cusp in polyline)")
            turn = np.arctan2(
                t_prev[:, 0] * t_next[:, 1] - t_prev[:, 1] * t_next[:, 0],
                np.sum(t_prev * t_next, axis=1),
            )
            corner = np.where(np.abs(turn) > CORNER_TURN, np.sign(turn), 0.0).astype(int)
            tangents.append(bis / bis_len[:, None])
            curvatures.append(np.where(corner == 0, turn / (0.5 * (len_prev + len_next)), 0.0))
            corners.append(corner)
        return np.concatenate(tangents), np.concatenate(curvatures), np.concatenate(corners)

    def samples(self, spacing: float):
        """Vertices plus edge points at most ``spacing`` apart.

        Smooth vertices carry the turning angle over the mean adjacent edge
        length as curvature; vertices turning by more than ``CORNER_TURN``
        are corners.
        """
        loops, s = [], []
        for k in range(len(self.loops)):
            first, last = self.loop_first[k], self.loop_first[k + 1]
            for seg in range(first, last):
                count = 1 if spacing <= 0 else max(1, int(np.ceil(self.seg_len[seg] / spacing)))
                s.append(self.seg_s0[seg] + self.seg_len[seg] * np.arange(count) / count)
                loops.append(np.full(count, k))
        return self.samples_at(np.concatenate(loops), np.concatenate(s))

    def samples_at(self, loop, s) -> BoundarySamples:
        """Vertex data blended linearly along each edge; corners contribute a straight edge."""
        tangent, curvature, corner = self._vertex_data()
        loop = np.asarray(loop)
        s = np.asarray(s, dtype=float)
        seg, local = self._locate(loop, s)
        frac = local / self.seg_len[seg]
        owner = self.seg_loop[seg]
        nxt = np.where(seg + 1 < self.loop_first[owner + 1], seg + 1, self.loop_first[owner])
        edge = self.seg_vec[seg] / self.seg_len[seg][:, None]
        t0 = np.where((corner[seg] != 0)[:, None], edge, tangent[seg])
        t1 = np.where((corner[nxt] != 0)[:, None], edge, tangent[nxt])
        vel = (1 - frac)[:, None] * t0 + frac[:, None] * t1
        vel /= np.linalg.norm(vel, axis=-1, keepdims=True)
        kappa = (1 - frac) * curvature[seg] + frac * curvature[nxt]
        flag = np.zeros(len(s), dtype=int)
        at_start = frac <= VERTEX_SNAP
        at_end = frac >= 1 - VERTEX_SNAP
        flag[at_start] = corner[seg][at_start]
        flag[at_end] = corner[nxt][at_end]
        vel[at_start] = np.where((flag[at_start] != 0)[:, None], vel[at_start], tangent[seg][at_start])
        vel[at_end] = np.where((flag[at_end] != 0)[:, None], vel[at_end], tangent[nxt][at_end])
        left = np.stack([-vel[:, 1], vel[:, 0]], axis=1)
        return BoundarySamples(self.point(loop, s), vel, kappa[:, None] * left, loop, s, flag)

    def bbox(self):
        all_v = np.concatenate(self.loops)
        return all_v.min(axis=0), all_v.max(axis=0)

    def area(self):
        return float(sum(_signed_area(v) for v in self.loops))


def rectangle(lower, upper, spacing: float | None = None) -> PolygonBoundary:
    """Axis-aligned rectangle; edges are subdivided so curvature samples cover them."""
    (x0, y0), (x1, y1) = lower, upper
    if spacing is None:
        corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
        return PolygonBoundary(corners)
    pieces = []
    for a, b in (((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        count = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing)))
        t = np.arange(count) / count
        pieces.append(a + t[:, None] * (b - a))
    return PolygonBoundary(np.concatenate(pieces))


def geodesic_curvature(chart, samples: BoundarySamples):
    """Geodesic curvature in ``(M, g)`` and the unit inner normal at each sample.

    For a curve with chart velocity ``c'`` and acceleration ``c''`` the
    curvature is ``g(c'' + Gamma(c', c'), N) / g(c', c')``.
    """
    x = samples.points
    vel = samples.velocity
    g = chart.g(x)
    ginv = np.linalg.inv(g)
    conormal = np.stack([-vel[:, 1], vel[:, 0]], axis=1)
    normal = np.einsum("nij,nj->ni", ginv, conormal)
    normal /= np.sqrt(np.einsum("ni,ni->n", conormal, normal))[:, None]
    gamma = chart.christoffel(x)
    cov_acc = samples.acceleration + np.einsum("nkij,ni,nj->nk", gamma, vel, vel)
    speed2 = np.einsum("ni,nij,nj->n", vel, g, vel)
    curvature = np.einsum("ni,nij,nj->n", cov_acc, g, normal) / speed2
    if samples.corner is not None:
        curvature = np.where(samples.corner > 0, np.inf, np.where(samples.corner < 0, -np.inf, curvature))
    return curvature, normal
