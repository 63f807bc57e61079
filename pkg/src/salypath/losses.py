"""Training objectives.

Saliency loss: 0.6 * KL + 0.3 * MSE - 0.1 * NSS over predicted vs ground
truth maps, the NSS term evaluated at ground-truth fixation points when
they are supplied and otherwise at the pixels at or above the 90th
percentile of the GT map. A zero-variance prediction makes the NSS term 0
with a RuntimeWarning (training must not crash on a flat early map; the
evaluation metric in saliency_metrics raises instead).

Scanpath loss: mean squared distance over corresponding points,
sum_i ||p_i - q_i||^2 / N by default (``divisor="coords"`` divides by 2N).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DimensionError
from .tensor import Tensor
from .types import FixationSet, SaliencyMap, Scanpath, norm_to_pixel

KL_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    kl_w: float = 0.6
    mse_w: float = 0.3
    nss_w: float = 0.1

    def __post_init__(self):
        for nm in ("kl_w", "mse_w", "nss_w"):
            if getattr(self, nm) < 0:
                raise ConfigError(f"LossWeights: {nm} must be >= 0")


def _as_map_tensor(x) -> Tensor:
    if isinstance(x, SaliencyMap):
        return Tensor(x.values)
    if isinstance(x, Tensor):
        t = x
    else:
        t = Tensor(np.asarray(x, dtype=np.float32))
    if t.ndim != 2:
        raise DimensionError(f"expected a [H, W] map, got rank {t.ndim}")
    return t


def kldiv(pred, gt, eps: float = KL_EPS) -> Tensor:
    """KL divergence of the GT distribution from the prediction.

    Both maps are normalized by (sum + eps); eps guards the log ratio on
    both sides. Identical maps give exactly 0.
    """
    p_t = _as_map_tensor(pred)
    g_t = _as_map_tensor(gt)
    if p_t.shape != g_t.shape:
        raise DimensionError(
            f"kldiv: pred {p_t.shape} vs gt {g_t.shape} shape mismatch"
        )
    p = p_t / (p_t.sum() + eps)
    g = g_t.data / (g_t.data.sum() + np.float32(eps))  # constant side
    g_c = Tensor(g)
    return (g_c * (((g_c + eps) / (p + eps)).log())).sum()


def mse_map(pred, gt) -> Tensor:
    """Mean squared error per pixel."""
    p = _as_map_tensor(pred)
    g = _as_map_tensor(gt)
    if p.shape != g.shape:
        raise DimensionError(
            f"mse_map: pred {p.shape} vs gt {g.shape} shape mismatch"
        )
    d = p - g
    return (d * d).mean()


def _fixation_weights(fixations, shape: tuple[int, int]) -> np.ndarray:
    """Accepts FixationSet, Scanpath, or a same-shape indicator array.
    Returns a float [H, W] weight grid counting multiplicity."""
    h, w = shape
    if isinstance(fixations, Scanpath):
        fixations = FixationSet(norm_to_pixel(fixations.points, w, h), (h, w))
    if isinstance(fixations, FixationSet):
        if fixations.shape != (h, w):
            raise DimensionError(
                f"fixations on grid {fixations.shape}, map is {(h, w)}"
            )
        return fixations.weights()
    arr = np.asarray(fixations)
    if arr.shape != (h, w):
        raise DimensionError(
            f"fixation indicator shape {arr.shape}, map is {(h, w)}"
        )
    return (arr > 0).astype(np.float64)


def nss_term(pred, fixations) -> Tensor:
    """Differentiable NSS: mean standardized saliency at fixation points.

    Standardization uses the population std of the prediction. If the
    prediction has zero variance the term is 0.0 and a RuntimeWarning is
    emitted; an empty fixation set raises ContractError.
    """
    t = _as_map_tensor(pred)
    wgrid = _fixation_weights(fixations, t.shape)
    total = wgrid.sum()
    if total <= 0:
        raise ContractError("nss_term: empty fixation set")
    mu = t.mean()
    var = ((t - mu) * (t - mu)).mean()
    if float(var.data) == 0.0:
        warnings.warn(
            "nss_term: zero-variance prediction, NSS term defined as 0",
            RuntimeWarning,
            stacklevel=2,
        )
        return Tensor(np.float32(0.0))
    z = (t - mu) / var.sqrt()
    w_t = Tensor(wgrid.astype(np.float32))
    return (z * w_t).sum() / np.float32(total)


def saliency_loss(pred, gt_map, gt_fixations=None,
                  weights: LossWeights = LossWeights()) -> Tensor:
    """Weighted KL + MSE - NSS objective for the map branch."""
    p = _as_map_tensor(pred)
    g = _as_map_tensor(gt_map)
    if gt_fixations is None:
        vals = g.data
        thr = np.percentile(vals, 90.0)
        gt_fixations = (vals >= thr).astype(np.float64)
    loss = weights.kl_w * kldiv(p, g) + weights.mse_w * mse_map(p, g)
    return loss - weights.nss_w * nss_term(p, gt_fixations)


def _as_points_tensor(x) -> Tensor:
    if isinstance(x, Scanpath):
        return Tensor(x.points)
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))
    if t.ndim != 2 or t.shape[1] != 2:
        raise DimensionError(f"expected [N, 2] points, got {t.shape}")
    return t


def scanpath_loss(pred, gt, divisor: str = "points") -> Tensor:
    """Mean squared pointwise distance between two equal-length paths.

    divisor="points" averages over N points (a single-point path (0,0) vs
    (1,1) scores 2.0); divisor="coords" averages over all 2N coordinates.
    """
    p = _as_points_tensor(pred)
    g = _as_points_tensor(gt)
    if p.shape[0] != g.shape[0]:
        raise ContractError(
            f"scanpath_loss: length mismatch, pred has {p.shape[0]} points, "
            f"gt has {g.shape[0]}"
        )
    if divisor not in ("points", "coords"):
        raise ConfigError(f"scanpath_loss: unknown divisor {divisor!r}")
    n = p.shape[0] if divisor == "points" else 2 * p.shape[0]
    d = p - g
    return (d * d).sum() / np.float32(n)
