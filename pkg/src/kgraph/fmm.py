"""First-order fast marching for the eikonal equation ``|grad T|_g = 1``."""
from __future__ import annotations

import heapq
import math

import numpy as np

FAR, TRIAL, ACCEPTED = 0, 1, 2


def fast_march(initial: np.ndarray, frozen: np.ndarray, metric: np.ndarray, spacing):
    """March arrival times outward from a frozen band.

    Parameters
    ----------
    initial : (N1, N2) array
        Arrival times of the frozen nodes (ignored elsewhere).
    frozen : (N1, N2) bool array
        Initial accepted set.
    metric : (N1, N2, 2, 2) array
        Metric tensor at every node.
    spacing : (hx, hy)

    Returns
    -------
    times : (N1, N2) array
    rank : (N1, N2) int array
        Acceptance order; frozen nodes share rank 0.
    """
    n1, n2 = frozen.shape
    hx, hy = float(spacing[0]), float(spacing[1])
    inv = np.linalg.inv(metric)
    G11 = inv[..., 0, 0].ravel().tolist()
    G12 = inv[..., 0, 1].ravel().tolist()
    G22 = inv[..., 1, 1].ravel().tolist()
    edge_x = (hx * np.sqrt(metric[..., 0, 0])).ravel().tolist()
    edge_y = (hy * np.sqrt(metric[..., 1, 1])).ravel().tolist()

    T = np.where(frozen, initial, np.inf).ravel().tolist()
    state = np.where(frozen, ACCEPTED, FAR).ravel().tolist()
    rank = [0 if f else -1 for f in frozen.ravel().tolist()]
    inf = math.inf

    def solve(k, i, j):
        best = inf
        tx = inf
        sx = 0.0
        if i > 0 and state[k - n2] == ACCEPTED:
            tx, sx = T[k - n2], 1.0
        if i < n1 - 1 and state[k + n2] == ACCEPTED and T[k + n2] < tx:
            tx, sx = T[k + n2], -1.0
        ty = inf
        sy = 0.0
        if j > 0 and state[k - 1] == ACCEPTED:
            ty, sy = T[k - 1], 1.0
        if j < n2 - 1 and state[k + 1] == ACCEPTED and T[k + 1] < ty:
            ty, sy = T[k + 1], -1.0
        if tx < inf:
            best = tx + edge_x[k]
        if ty < inf:
            best = min(best, ty + edge_y[k])
        if tx < inf and ty < inf:
            a1 = sx / hx
            a2 = sy / hy
            c11 = G11[k] * a1 * a1
            c12 = G12[k] * a1 * a2
            c22 = G22[k] * a2 * a2
            qa = c11 + 2.0 * c12 + c22
            qb = -2.0 * (c11 * tx + c12 * (tx + ty) + c22 * ty)
            qc = c11 * tx * tx + 2.0 * c12 * tx * ty + c22 * ty * ty - 1.0
            disc = qb * qb - 4.0 * qa * qc
            if qa > 0 and disc >= 0:
                t = (-qb + math.sqrt(disc)) / (2.0 * qa)
                if t >= tx and t >= ty:
                    gx = a1 * (t - tx)
                    gy = a2 * (t - ty)
                    vx = G11[k] * gx + G12[k] * gy
                    vy = G12[k] * gx + G22[k] * gy
                    if sx * vx >= 0 and sy * vy >= 0 and t < best:
                        best = t
        return best

    heap = []
    frozen_idx = np.flatnonzero(frozen.ravel())
    for k in frozen_idx.tolist():
        i, j = divmod(k, n2)
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ii, jj = i + di, j + dj
            if 0 <= ii < n1 and 0 <= jj < n2:
                kk = ii * n2 + jj
                if state[kk] != ACCEPTED:
                    t = solve(kk, ii, jj)
                    if t < T[kk]:
                        T[kk] = t
                        state[kk] = TRIAL
                        heapq.heappush(heap, (t, kk))
    order = 1
    while heap:
        t, k = heapq.heappop(heap)
        if state[k] == ACCEPTED or t > T[k]:
            continue
        state[k] = ACCEPTED
        rank[k] = order
        order += 1
        i, j = divmod(k, n2)
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            ii, jj = i + di, j + dj
            if 0 <= ii < n1 and 0 <= jj < n2:
                kk = ii * n2 + jj
                if state[kk] != ACCEPTED:
                    t_new = solve(kk, ii, jj)
                    if t_new < T[kk]:
                        T[kk] = t_new
                        state[kk] = TRIAL
                        heapq.heappush(heap, (t_new, kk))
    return np.array(T).reshape(n1, n2), np.array(rank).reshape(n1, n2)
