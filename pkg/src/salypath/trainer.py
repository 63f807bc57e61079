"""Two-phase training.

Phase 1 fits encoder + attention + decoder under the composite saliency
loss; the scanpath head is untouched. Phase 2 fits the scanpath head under
the pointwise MSE loss, with the trunk frozen by default (``freeze_encoder_phase2``)
so bottleneck features stay put. An alternating joint mode exists behind
``joint_alternating`` for ablation.

Bookkeeping rules: lr for epoch e is exactly base * decay**e; shuffling
comes from one seeded Generator per phase, so a rerun with the same seed
reproduces the loss curves bit for bit; a non-finite loss or gradient
aborts with TrainingDiverged naming the offending tensor (when a
checkpoint path is given, the file from the last finished epoch is left in
place).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetManifest, resample_map, resample_stimulus
from .errors import ConfigError, ContractError, NumericError, TrainingDiverged
from .losses import LossWeights, saliency_loss, scanpath_loss
from .model import SalypathModel, soft_argmax
from .tensor import Tensor, no_grad
from .types import FixationSet

__all__ = [
    "TrainConfig", "TrainReport", "SGD", "Adam", "lr_schedule",
    "sgd_step", "adam_step", "train_phase1", "train_phase2", "train",
]


def lr_schedule(epoch: int, base_lr: float, decay: float) -> float:
    """Exponential step schedule: base * decay**epoch."""
    return float(base_lr) * float(decay) ** int(epoch)


@dataclass(frozen=True)
class TrainConfig:
    phase1_epochs: int = 20
    phase2_epochs: int = 20
    phase1_lr: float = 1e-4
    phase2_lr: float = 1e-3
    lr_decay: float = 0.9
    batch_size: int = 16
    optimizer: str = "adam"
    seed: int = 0
    freeze_encoder_phase2: bool = True
    divisor: str = "points"
    loss_weights: LossWeights = field(default_factory=LossWeights)
    joint_alternating: bool = False

    def __post_init__(self):
        if self.phase1_epochs < 0 or self.phase2_epochs < 0:
            raise ConfigError("TrainConfig: epochs must be >= 0")
        if self.phase1_lr <= 0 or self.phase2_lr <= 0:
            raise ConfigError("TrainConfig: learning rates must be > 0")
        if not (0.0 < self.lr_decay <= 1.0):
            raise ConfigError(
                f"TrainConfig: lr_decay must be in (0, 1], got {self.lr_decay}"
            )
        if self.batch_size < 1:
            raise ConfigError("TrainConfig: batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(
                f"TrainConfig: optimizer must be adam or sgd, got {self.optimizer!r}"
            )
        if self.divisor not in ("points", "coords"):
            raise ConfigError(f"TrainConfig: unknown divisor {self.divisor!r}")

    @classmethod
    def full_scale(cls, **overrides) -> "TrainConfig":
        """The published schedule: tiny lrs, meant for dataset-scale runs."""
        args = dict(phase1_lr=1e-7, phase2_lr=1e-5)
        args.update(overrides)
        return cls(**args)

    def to_dict(self) -> dict:
        return {
            "phase1_epochs": self.phase1_epochs,
            "phase2_epochs": self.phase2_epochs,
            "phase1_lr": self.phase1_lr,
            "phase2_lr": self.phase2_lr,
            "lr_decay": self.lr_decay,
            "batch_size": self.batch_size,
            "optimizer": self.optimizer,
            "seed": self.seed,
            "freeze_encoder_phase2": self.freeze_encoder_phase2,
            "divisor": self.divisor,
            "loss_weights": {"kl_w": self.loss_weights.kl_w,
                             "mse_w": self.loss_weights.mse_w,
                             "nss_w": self.loss_weights.nss_w},
            "joint_alternating": self.joint_alternating,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        lw = d.pop("loss_weights", None)
        if lw is not None:
            d["loss_weights"] = LossWeights(**lw)
        return cls(**d)


@dataclass
class TrainReport:
    phase: int
    epoch_losses: list[float]
    lrs: list[float]
    wall_time_s: float
    n_samples: int

    def to_dict(self) -> dict:
        return {
            "phase": self.phase,
            "epoch_losses": self.epoch_losses,
            "lrs": self.lrs,
            "wall_time_s": self.wall_time_s,
            "n_samples": self.n_samples,
        }


# -- optimizers ------------------------------------------------------------


def _check_grad(name: str, p: Tensor) -> np.ndarray:
    if p.grad is None:
        raise ContractError(f"optimizer step: {name} has no gradient")
    if not np.isfinite(p.grad).all():
        raise NumericError(f"optimizer step: non-finite gradient in {name}")
    return p.grad


class SGD:
    """Plain gradient descent: w -= lr * g."""

    def step(self, params: dict[str, Tensor], lr: float) -> None:
        for name, p in params.items():
            g = _check_grad(name, p)
            p.data = p.data - np.float32(lr) * g


class Adam:
    """Adam with bias correction; defaults beta1=0.9, beta2=0.999, eps=1e-8.
    With those, the very first step moves each weight by about lr."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = _check_grad(name, p)
            m = self._m.get(name)
            v = self._v.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * (g * g)
            self._m[name] = m
            self._v[name] = v
            mhat = m / np.float32(c1)
            vhat = v / np.float32(c2)
            p.data = p.data - np.float32(lr) * mhat / (np.sqrt(vhat) + np.float32(self.eps))


def sgd_step(params: dict[str, Tensor], lr: float) -> None:
    """One plain gradient-descent update over named parameters."""
    SGD().step(params, lr)


def adam_step(params: dict[str, Tensor], state: Adam, lr: float) -> None:
    """One Adam update; ``state`` carries the moment estimates between calls."""
    state.step(params, lr)


def _make_optimizer(config: TrainConfig):
    return Adam() if config.optimizer == "adam" else SGD()


# -- data staging ------------------------------------------------------------


@dataclass
class _Sample:
    image: np.ndarray            # [3, H, W] float32 at model input size
    gt_map: np.ndarray           # [H, W] float32 at model input size
    fixations: np.ndarray | None  # [H, W] float64 multiplicity grid, or None
    paths: np.ndarray            # [S, L, 2] float32 normalized, L = head length


def prepare_samples(model: SalypathModel, manifest: DatasetManifest) -> list[_Sample]:
    """Load, resample to the model's input size, and pool fixations."""
    h, w = model.config.input_size
    head_len = model.config.head_channels[-1]
    resized = (manifest.height, manifest.width) != (h, w)
    if resized:
        warnings.warn(
            f"dataset is {manifest.width}x{manifest.height}, resampling to "
            f"model input {w}x{h}",
            RuntimeWarning,
        )
    samples = []
    for i in range(len(manifest)):
        img = manifest.load_stimulus(i)
        gt = manifest.load_map(i).values
        if resized:
            img = resample_stimulus(img, w, h)
            gt = resample_map(gt, w, h)
        paths = manifest.load_scanpaths(i)
        fix = None
        if paths:
            fix = FixationSet.from_scanpaths(paths, w, h).weights()
        keep = [p.points for p in paths if len(p) == head_len]
        pts = (np.stack(keep).astype(np.float32) if keep
               else np.zeros((0, head_len, 2), dtype=np.float32))
        samples.append(_Sample(image=img, gt_map=gt, fixations=fix, paths=pts))
    return samples


# -- the loops ----------------------------------------------------------------


def _phase1_batch_loss(model: SalypathModel, batch: list[_Sample],
                       config: TrainConfig) -> Tensor:
    x = Tensor(np.stack([s.image for s in batch]))
    bott = model.attend(model.encode(x))
    maps = model.decode(bott)
    total = None
    for i, s in enumerate(batch):
        li = saliency_loss(maps[i, 0], s.gt_map, s.fixations,
                           weights=config.loss_weights)
        total = li if total is None else total + li
    return total / np.float32(len(batch))


def _phase2_batch_loss(model: SalypathModel, batch: list[_Sample],
                       config: TrainConfig) -> Tensor:
    x = Tensor(np.stack([s.image for s in batch]))
    if config.freeze_encoder_phase2:
        with no_grad():
            bott = model.attend(model.encode(x))
        bott = bott.detach()
    else:
        bott = model.attend(model.encode(x))
    feats = model.scanpath_features(bott)
    points = soft_argmax(feats, model.config.beta)
    total = None
    for i, s in enumerate(batch):
        per_gt = None
        for gt_path in s.paths:
            lg = scanpath_loss(points[i], gt_path, divisor=config.divisor)
            per_gt = lg if per_gt is None else per_gt + lg
        li = per_gt / np.float32(len(s.paths))
        total = li if total is None else total + li
    return total / np.float32(len(batch))


def _run_phase(model: SalypathModel, samples: list[_Sample], config: TrainConfig,
               phase: int, checkpoint_path=None) -> TrainReport:
    if phase == 1:
        params = model.trunk_parameters()
        base_lr, epochs, loss_fn = config.phase1_lr, config.phase1_epochs, _phase1_batch_loss
    else:
        if config.freeze_encoder_phase2:
            params = model.head_parameters()
        else:
            # the scanpath graph runs encoder -> attention -> head; the
            # decoder never sees gradients in this phase
            params = {k: v for k, v in model.parameters().items()
                      if not k.startswith("dec.")}
        base_lr, epochs, loss_fn = config.phase2_lr, config.phase2_epochs, _phase2_batch_loss
        samples = [s for s in samples if s.paths.shape[0] > 0]
        if not samples:
            raise ContractError(
                f"phase 2: no scanpaths of length {model.config.head_channels[-1]} "
                "in the dataset"
            )
    if not samples:
        raise ContractError("training: empty dataset")

    optimizer = _make_optimizer(config)
    rng = np.random.default_rng((config.seed, phase))
    losses: list[float] = []
    lrs: list[float] = []
    start = time.perf_counter()
    report = TrainReport(phase=phase, epoch_losses=losses, lrs=lrs,
                         wall_time_s=0.0, n_samples=len(samples))
    bs = config.batch_size
    for epoch in range(epochs):
        lr = lr_schedule(epoch, base_lr, config.lr_decay)
        lrs.append(lr)
        order = rng.permutation(len(samples))
        epoch_loss = 0.0
        for lo in range(0, len(samples), bs):
            batch = [samples[k] for k in order[lo:lo + bs]]
            for p in params.values():
                p.grad = None
            try:
                loss = loss_fn(model, batch, config)
            except NumericError as e:
                # non-finite activations surface here before the loss does
                report.wall_time_s = time.perf_counter() - start
                raise TrainingDiverged(
                    f"phase {phase} epoch {epoch}: {e}", report=report
                ) from e
            val = loss.item()
            if not np.isfinite(val):
                report.wall_time_s = time.perf_counter() - start
                raise TrainingDiverged(
                    f"phase {phase} epoch {epoch}: loss went non-finite ({val})",
                    report=report,
                )
            loss.backward()
            try:
                optimizer.step(params, lr)
            except NumericError as e:
                report.wall_time_s = time.perf_counter() - start
                raise TrainingDiverged(
                    f"phase {phase} epoch {epoch}: {e}", report=report
                ) from e
            epoch_loss += val * len(batch)
        losses.append(epoch_loss / len(samples))
        if checkpoint_path is not None:
            model.save(checkpoint_path)
    report.wall_time_s = time.perf_counter() - start
    return report


def train_phase1(model: SalypathModel, manifest: DatasetManifest,
                 config: TrainConfig, checkpoint_path=None) -> TrainReport:
    """Fit the saliency branch; returns the per-epoch loss curve."""
    samples = prepare_samples(model, manifest)
    return _run_phase(model, samples, config, phase=1, checkpoint_path=checkpoint_path)


def train_phase2(model: SalypathModel, manifest: DatasetManifest,
                 config: TrainConfig, checkpoint_path=None) -> TrainReport:
    """Fit the scanpath head; by default the trunk is frozen."""
    samples = prepare_samples(model, manifest)
    return _run_phase(model, samples, config, phase=2, checkpoint_path=checkpoint_path)


def train(model: SalypathModel, manifest: DatasetManifest, config: TrainConfig,
          checkpoint_path=None) -> tuple[TrainReport, TrainReport]:
    """Full schedule. Sequential phases by default; ``joint_alternating``
    interleaves one epoch of each objective instead (ablation mode)."""
    samples = prepare_samples(model, manifest)
    if not config.joint_alternating:
        r1 = _run_phase(model, samples, config, 1, checkpoint_path)
        r2 = _run_phase(model, samples, config, 2, checkpoint_path)
        return r1, r2

    # alternating: one epoch of each objective per outer round
    import dataclasses
    r1_losses: list[float] = []
    r2_losses: list[float] = []
    r1_lrs: list[float] = []
    r2_lrs: list[float] = []
    start = time.perf_counter()
    rounds = max(config.phase1_epochs, config.phase2_epochs)
    for e in range(rounds):
        if e < config.phase1_epochs:
            c1 = dataclasses.replace(config, phase1_epochs=1,
                                     phase1_lr=lr_schedule(e, config.phase1_lr, config.lr_decay))
            rep = _run_phase(model, samples, c1, 1, checkpoint_path)
            r1_losses += rep.epoch_losses
            r1_lrs += rep.lrs
        if e < config.phase2_epochs:
            c2 = dataclasses.replace(config, phase2_epochs=1, freeze_encoder_phase2=False,
                                     phase2_lr=lr_schedule(e, config.phase2_lr, config.lr_decay))
            rep = _run_phase(model, samples, c2, 2, checkpoint_path)
            r2_losses += rep.epoch_losses
            r2_lrs += rep.lrs
    wall = time.perf_counter() - start
    return (
        TrainReport(1, r1_losses, r1_lrs, wall, len(samples)),
        TrainReport(2, r2_losses, r2_lrs, wall, len(samples)),
    )
