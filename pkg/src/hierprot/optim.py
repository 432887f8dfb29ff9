"""Optimizers, gradient clipping, and learning-rate schedules."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class MissingGrad(RuntimeError):
    """A parameter reached the optimizer without a populated gradient."""


class AdamW:
    """Adam with decoupled weight decay (decay applied directly to weights).

    Moments are bias-corrected; the decay term never passes through the
    moment estimates, so a zero-gradient step shrinks parameters by exactly
    (1 - lr * weight_decay).
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 1e-4):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self.m = {k: np.zeros_like(p.values) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.values) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            if p.grad is None:
                raise MissingGrad(f"parameter {name!r} has no gradient")
            g = p.grad
            if self.weight_decay:
                p.values *= 1.0 - self.lr * self.weight_decay
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.values -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class Adam(AdamW):
    """Plain Adam: AdamW with the decoupled decay switched off."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr=lr, betas=betas, eps=eps, weight_decay=0.0)


def clip_grad_norm(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for name, p in params.items():
        if p.grad is None:
            raise MissingGrad(f"parameter {name!r} has no gradient")
        total += float((p.grad**2).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            p.grad *= scale
    return float(norm)


class WarmupPlateauSchedule:
    """Linear warmup from start_frac*base_lr to base_lr, then plateau decay.

    ``step(epoch, val_metric)`` is called once at the start of each epoch with
    the previous epoch's validation metric (None while no metric exists) and
    returns the learning rate to use for that epoch.  Warmup covers epochs
    0..warmup_epochs-1; metrics produced during warmup do not feed the plateau
    tracker.  After warmup, ``patience`` consecutive non-improving metrics
    multiply the rate by ``factor`` and reset the counter.  Improvement means
    a change larger than ``threshold`` in the direction given by ``mode``.
    """

    def __init__(self, base_lr: float, warmup_epochs: int = 3, start_frac: float = 0.01,
                 factor: float = 0.6, patience: int = 5, threshold: float = 1e-6,
                 mode: str = "max"):
        if mode not in ("max", "min"):
            raise ValueError(f"mode must be 'max' or 'min', got {mode!r}")
        self.base_lr = float(base_lr)
        self.warmup_epochs = int(warmup_epochs)
        self.start_frac = float(start_frac)
        self.factor = float(factor)
        self.patience = int(patience)
        self.threshold = float(threshold)
        self.mode = mode
        self.lr = self.base_lr * self.start_frac
        self.best: float | None = None
        self.stagnant = 0

    def _improved(self, metric: float) -> bool:
        if self.best is None:
            return True
        if self.mode == "max":
            return metric > self.best + self.threshold
        return metric < self.best - self.threshold

    def step(self, epoch: int, val_metric: float | None = None) -> float:
        if epoch < self.warmup_epochs:
            frac = self.start_frac + (1.0 - self.start_frac) * epoch / self.warmup_epochs
            self.lr = self.base_lr * frac
            return self.lr
        if epoch == self.warmup_epochs:
            self.lr = self.base_lr
            return self.lr
        # Post-warmup: val_metric is the first post-warmup epoch's metric or later.
        if val_metric is not None:
            if self._improved(val_metric):
                self.best = val_metric
                self.stagnant = 0
            else:
                self.stagnant += 1
                if self.stagnant >= self.patience:
                    self.lr *= self.factor
                    self.stagnant = 0
        return self.lr


class CosineSchedule:
    """Cosine annealing from base_lr toward zero over total_epochs."""

    def __init__(self, base_lr: float, total_epochs: int):
        self.base_lr = float(base_lr)
        self.total_epochs = max(int(total_epochs), 1)
        self.lr = self.base_lr

    def step(self, epoch: int, val_metric: float | None = None) -> float:
        self.lr = 0.5 * self.base_lr * (1.0 + np.cos(np.pi * epoch / self.total_epochs))
        return self.lr
