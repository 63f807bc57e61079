"""Scanpath comparison: MultiMatch (shape, direction, length, position),
scanpath NSS, and congruency.

MultiMatch here works on normalized coordinates, so the screen diagonal is
sqrt(2). Saccade vectors are the successive point differences. The two
saccade sequences are aligned on the lattice (0,0)..(n_a-1, n_b-1) by the
cheapest monotone path, where stepping onto node (i, j) costs the vector
difference ||u_i - v_j|| (the start node is free: it is part of every
path). Allowed steps are (1,1), (1,0), (0,1); exact cost ties prefer them
in that order. Scores are 1 - mean(difference)/normalizer over the aligned
pairs, clamped to [0, 1]:

    shape      ||u - v||              / (2 sqrt(2))
    length     | |u| - |v| |          / sqrt(2)
    direction  angle difference       / pi
    position   ||end_u - end_v||      / sqrt(2)

There is no scanpath simplification pre-pass. Zero-length saccades are
legal inside a path (their angle is taken as 0); a path whose points are
all identical has no usable geometry and raises ContractError.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .types import SaliencyMap, Scanpath, norm_to_pixel

DIAG = float(np.sqrt(2.0))

_STEPS = ((1, 1), (1, 0), (0, 1))  # preference order on ties


@dataclass(frozen=True)
class SaccadeVector:
    """One saccade: start point and displacement, normalized units."""

    start: tuple[float, float]
    delta: tuple[float, float]

    @property
    def end(self) -> tuple[float, float]:
        return (self.start[0] + self.delta[0], self.start[1] + self.delta[1])

    @property
    def amplitude(self) -> float:
        return float(np.hypot(self.delta[0], self.delta[1]))

    @property
    def angle(self) -> float:
        """atan2 angle in (-pi, pi]; the zero vector maps to 0."""
        return float(np.arctan2(self.delta[1], self.delta[0]))


@dataclass(frozen=True)
class MultiMatchScores:
    shape: float
    direction: float
    length: float
    position: float

    @property
    def mean(self) -> float:
        return (self.shape + self.direction + self.length + self.position) / 4.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.shape, self.direction, self.length, self.position)


def _points(path) -> np.ndarray:
    if isinstance(path, Scanpath):
        return path.points.astype(np.float64)
    pts = np.asarray(path, dtype=np.float64).reshape(-1, 2)
    return pts


def to_saccades(path) -> list[SaccadeVector]:
    """Successive differences of the fixation sequence. A path of N points
    yields N-1 saccades; fewer than 2 points raise ContractError."""
    pts = _points(path)
    if pts.shape[0] < 2:
        raise ContractError(
            f"to_saccades: need at least 2 points, got {pts.shape[0]}"
        )
    out = []
    for i in range(pts.shape[0] - 1):
        d = pts[i + 1] - pts[i]
        out.append(SaccadeVector(start=(float(pts[i][0]), float(pts[i][1])),
                                 delta=(float(d[0]), float(d[1]))))
    return out


def _vector_array(saccades: list[SaccadeVector]) -> np.ndarray:
    return np.array([s.delta for s in saccades], dtype=np.float64).reshape(-1, 2)


def align(a: list[SaccadeVector], b: list[SaccadeVector]) -> list[tuple[int, int]]:
    """Cheapest monotone lattice path from (0, 0) to (len(a)-1, len(b)-1).

    Returns the visited (i, j) pairs including both endpoints. Implemented
    as a backward DP on best remaining cost plus a greedy forward walk that
    prefers (1,1) then (1,0) then (0,1) on exact ties.
    """
    if not a or not b:
        raise ContractError("align: empty saccade sequence")
    ua = _vector_array(a)
    vb = _vector_array(b)
    na, nb = len(a), len(b)
    cost = np.linalg.norm(ua[:, None, :] - vb[None, :, :], axis=2)

    best = np.full((na, nb), np.inf)
    best[na - 1, nb - 1] = 0.0
    for i in range(na - 1, -1, -1):
        for j in range(nb - 1, -1, -1):
            if i == na - 1 and j == nb - 1:
                continue
            b_ij = np.inf
            for di, dj in _STEPS:
                ni, nj = i + di, j + dj
                if ni < na and nj < nb:
                    c = cost[ni, nj] + best[ni, nj]
                    if c < b_ij:
                        b_ij = c
            best[i, j] = b_ij

    path = [(0, 0)]
    i = j = 0
    while (i, j) != (na - 1, nb - 1):
        pick = None
        pick_cost = np.inf
        for di, dj in _STEPS:
            ni, nj = i + di, j + dj
            if ni < na and nj < nb:
                c = cost[ni, nj] + best[ni, nj]
                if c < pick_cost:
                    pick_cost = c
                    pick = (ni, nj)
        i, j = pick
        path.append((i, j))
    return path


def multimatch(pred, gt) -> MultiMatchScores:
    """First four MultiMatch criteria over the aligned saccade pairs.

    A path whose points all coincide has no usable geometry and raises
    ContractError."""
    for name, p in (("pred", pred), ("gt", gt)):
        pts = _points(p)
        if pts.shape[0] >= 2 and np.allclose(pts, pts[0], atol=0.0):
            raise ContractError(
                f"multimatch: {name} path has all points identical, no extent"
            )
    sa = to_saccades(pred)
    sb = to_saccades(gt)
    pairs = align(sa, sb)

    vec_d = []
    len_d = []
    ang_d = []
    pos_d = []
    for i, j in pairs:
        u, v = sa[i], sb[j]
        du = np.subtract(u.delta, v.delta)
        vec_d.append(float(np.hypot(du[0], du[1])))
        len_d.append(abs(u.amplitude - v.amplitude))
        diff = abs(u.angle - v.angle) % (2.0 * np.pi)
        ang_d.append(diff if diff <= np.pi else 2.0 * np.pi - diff)
        pos_d.append(float(np.hypot(u.end[0] - v.end[0], u.end[1] - v.end[1])))

    def score(diffs, norm):
        return float(np.clip(1.0 - np.mean(diffs) / norm, 0.0, 1.0))

    return MultiMatchScores(
        shape=score(vec_d, 2.0 * DIAG),
        direction=score(ang_d, np.pi),
        length=score(len_d, DIAG),
        position=score(pos_d, DIAG),
    )


def nss_scanpath(pred, gt_map) -> float:
    """Mean z-scored GT saliency at the predicted fixation pixels.

    Points denormalize by round(x*(W-1)), round(y*(H-1)) with clamping;
    repeated pixels count with multiplicity. Zero-variance map raises."""
    gm = gt_map.values if isinstance(gt_map, SaliencyMap) else np.asarray(gt_map)
    gm = gm.astype(np.float64)
    if gm.ndim != 2:
        raise ContractError(f"nss_scanpath: gt_map must be [H, W], got rank {gm.ndim}")
    pts = _points(pred)
    if pts.shape[0] == 0:
        raise ContractError("nss_scanpath: empty scanpath")
    std = gm.std()
    if std == 0.0:
        raise ContractError("nss_scanpath: ground-truth map has zero variance")
    h, w = gm.shape
    rc = norm_to_pixel(pts, w, h)
    z = (gm - gm.mean()) / std
    return float(z[rc[:, 0], rc[:, 1]].mean())


def congruency(pred, gt_map, percentile: float = 80.0) -> float:
    """Fraction of predicted fixations landing on the thresholded GT
    region: pixels >= the given percentile of all map values."""
    gm = gt_map.values if isinstance(gt_map, SaliencyMap) else np.asarray(gt_map)
    gm = gm.astype(np.float64)
    if gm.ndim != 2:
        raise ContractError(f"congruency: gt_map must be [H, W], got rank {gm.ndim}")
    if not 0.0 < percentile < 100.0:
        raise ContractError(
            f"congruency: percentile must be in (0, 100), got {percentile}"
        )
    pts = _points(pred)
    if pts.shape[0] == 0:
        raise ContractError("congruency: empty scanpath")
    thr = np.percentile(gm, percentile)
    keep = gm >= thr
    h, w = gm.shape
    rc = norm_to_pixel(pts, w, h)
    return float(keep[rc[:, 0], rc[:, 1]].mean())
