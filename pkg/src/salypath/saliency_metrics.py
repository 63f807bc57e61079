"""Saliency evaluation battery: AUC-Judd, AUC-Borji, NSS, CC, SIM, KLD.

All metrics run in float64. Degenerate inputs that would make a score
meaningless (no fixations, zero-variance maps where variance is required,
all-zero maps where a distribution is required) raise ContractError:
evaluation never silently masks a broken input, unlike the training
losses which must stay robust.

When prediction and ground truth resolutions differ, callers are expected
to resample the prediction to the GT grid first (data.resample_map); the
CLI does this automatically.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError
from .types import FixationSet, SaliencyMap

__all__ = [
    "auc_judd", "auc_borji", "nss", "cc", "sim", "kld",
]


def _as_map(x) -> np.ndarray:
    if isinstance(x, SaliencyMap):
        v = x.values
    else:
        v = np.asarray(x)
    if v.ndim != 2:
        raise DimensionError(f"expected a [H, W] map, got rank {v.ndim}")
    return v.astype(np.float64)


def _fix_points(fixations, shape: tuple[int, int]) -> np.ndarray:
    if isinstance(fixations, FixationSet):
        if fixations.shape != shape:
            raise DimensionError(
                f"fixations on grid {fixations.shape}, map is {shape}"
            )
        pts = fixations.points
    else:
        pts = np.asarray(fixations, dtype=np.int64).reshape(-1, 2)
        fs = FixationSet(pts, shape)  # bounds check
        pts = fs.points
    if pts.shape[0] == 0:
        raise ContractError("empty fixation set")
    return pts


def _roc_area(pos_vals: np.ndarray, neg_vals: np.ndarray) -> float:
    """Judd-style ROC sweep: thresholds are the unique positive values in
    descending order, >= counts as detected, trapezoidal area through the
    appended endpoints (0,0) and (1,1)."""
    thresholds = np.unique(pos_vals)[::-1]
    tp = [0.0]
    fp = [0.0]
    for t in thresholds:
        tp.append(float((pos_vals >= t).mean()))
        fp.append(float((neg_vals >= t).mean()))
    tp.append(1.0)
    fp.append(1.0)
    return float(np.trapezoid(tp, fp))


def auc_judd(pred, fixations) -> float:
    """ROC area with fixated pixels as positives and every non-fixated
    pixel as a negative. A constant map scores exactly 0.5."""
    m = _as_map(pred)
    pts = _fix_points(fixations, m.shape)
    pos = m[pts[:, 0], pts[:, 1]]
    fixated = np.zeros(m.shape, dtype=bool)
    fixated[pts[:, 0], pts[:, 1]] = True
    neg = m[~fixated]
    if neg.size == 0:
        raise ContractError("auc_judd: every pixel is fixated, no negatives")
    return _roc_area(pos, neg)


def auc_borji(pred, fixations, n_splits: int = 100, rng_seed: int | None = None) -> float:
    """Borji variant: negatives are sampled (with replacement) uniformly
    from non-fixated pixels, one set per split, Judd-style sweep per split,
    mean area over splits. The seed is required; there is no implicit
    global randomness."""
    if rng_seed is None:
        raise ContractError("auc_borji: rng_seed is required")
    if n_splits < 1:
        raise ContractError(f"auc_borji: n_splits must be >= 1, got {n_splits}")
    m = _as_map(pred)
    pts = _fix_points(fixations, m.shape)
    pos = m[pts[:, 0], pts[:, 1]]
    fixated = np.zeros(m.shape, dtype=bool)
    fixated[pts[:, 0], pts[:, 1]] = True
    neg_pool = m[~fixated]
    if neg_pool.size == 0:
        raise ContractError("auc_borji: every pixel is fixated, no negatives")
    rng = np.random.default_rng(rng_seed)
    n = pos.size
    areas = np.empty(n_splits, dtype=np.float64)
    for s in range(n_splits):
        neg = rng.choice(neg_pool, size=n, replace=True)
        areas[s] = _roc_area(pos, neg)
    return float(areas.mean())


def nss(pred, fixations) -> float:
    """Mean standardized (z-scored, population std) saliency at the
    fixation points. Duplicated fixations count with multiplicity.
    Zero-variance prediction raises ContractError."""
    m = _as_map(pred)
    pts = _fix_points(fixations, m.shape)
    std = m.std()
    if std == 0.0:
        raise ContractError("nss: prediction has zero variance")
    z = (m - m.mean()) / std
    return float(z[pts[:, 0], pts[:, 1]].mean())


def cc(pred, gt_map) -> float:
    """Pearson correlation between the two maps as flat vectors."""
    p = _as_map(pred)
    g = _as_map(gt_map)
    if p.shape != g.shape:
        raise DimensionError(f"cc: pred {p.shape} vs gt {g.shape} shape mismatch")
    ps = p.std()
    gs = g.std()
    if ps == 0.0 or gs == 0.0:
        raise ContractError("cc: zero-variance map")
    pz = (p - p.mean()) / ps
    gz = (g - g.mean()) / gs
    return float((pz * gz).mean())


def sim(pred, gt_map) -> float:
    """Histogram intersection of the two maps normalized to sum 1."""
    p = _as_map(pred)
    g = _as_map(gt_map)
    if p.shape != g.shape:
        raise DimensionError(f"sim: pred {p.shape} vs gt {g.shape} shape mismatch")
    psum = p.sum()
    gsum = g.sum()
    if psum <= 0.0 or gsum <= 0.0:
        raise ContractError("sim: map sums to zero, cannot normalize")
    return float(np.minimum(p / psum, g / gsum).sum())


def kld(pred, gt_map, eps: float = 1e-8) -> float:
    """KL divergence of GT from prediction; the same definition as the
    training loss (normalize by sum+eps, eps inside the log ratio), run in
    float64 for evaluation-grade precision."""
    p = _as_map(pred)
    g = _as_map(gt_map)
    if p.shape != g.shape:
        raise DimensionError(f"kld: pred {p.shape} vs gt {g.shape} shape mismatch")
    pn = p / (p.sum() + eps)
    gn = g / (g.sum() + eps)
    return float((gn * np.log((gn + eps) / (pn + eps))).sum())
