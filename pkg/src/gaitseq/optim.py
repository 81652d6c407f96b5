"""Optimization pieces: global-norm clipping, step LR decay, AdamW-AMSGrad."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams


def global_grad_norm(grads: ModelParams) -> float:
    """L2 norm over every gradient scalar, accumulated in float64."""
    total = 0.0
    for _, arr, _ in grads.named_arrays():
        a = arr.astype(np.float64, copy=False)
        total += float(np.dot(a.ravel(), a.ravel()))
    return float(np.sqrt(total))


def clip_gradients(grads: ModelParams, threshold: float = 0.5) -> ModelParams:
    """Scale all gradients by threshold/norm when the global norm exceeds it.

    Mutates `grads` in place and returns it; gradients at or under the
    threshold (including all-zero) pass through untouched.
    """
    if threshold <= 0:
        raise ValueError(f"clip threshold must be positive, got {threshold}")
    norm = global_grad_norm(grads)
    if norm > threshold:
        scale = threshold / norm
        for _, arr, _ in grads.named_arrays():
            arr *= scale
    return grads


def scheduled_lr(base_lr: float, epoch: int, halve_every: int = 50) -> float:
    """Learning rate halved every `halve_every` epochs: base / 2^(epoch // n)."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    if halve_every < 1:
        raise ValueError(f"halve_every must be >= 1, got {halve_every}")
    return base_lr / (2.0 ** (epoch // halve_every))


@dataclass
class _SlotState:
    m: np.ndarray
    v: np.ndarray
    v_max: np.ndarray


@dataclass
class AdamWAmsgrad:
    """AdamW with decoupled weight decay and the AMSGrad maximum rule.

    Per parameter slot the state holds the first moment, second moment, and
    the running elementwise maximum of the second moment; the update divides
    by the bias-corrected maximum, which makes the effective step size
    non-increasing in the second-moment history.  Weight decay is applied to
    weight matrices only, never to biases.
    """

    params: ModelParams
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    _slots: dict[str, _SlotState] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._slots = {
            name: _SlotState(np.zeros_like(a), np.zeros_like(a), np.zeros_like(a))
            for name, a, _ in self.params.named_arrays()
        }

    def step(self, grads: ModelParams, lr: float) -> None:
        """Apply one update in place to the bound parameters."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for (name, theta, is_bias), (_, g, _) in zip(
            self.params.named_arrays(), grads.named_arrays()
        ):
            slot = self._slots[name]
            slot.m *= self.beta1
            slot.m += (1.0 - self.beta1) * g
            slot.v *= self.beta2
            slot.v += (1.0 - self.beta2) * g * g
            np.maximum(slot.v_max, slot.v, out=slot.v_max)
            update = (slot.m / bc1) / (np.sqrt(slot.v_max / bc2) + self.eps)
            if self.weight_decay and not is_bias:
                # Decoupled decay, computed from the incoming value.
                theta -= lr * self.weight_decay * theta
            theta -= lr * update
