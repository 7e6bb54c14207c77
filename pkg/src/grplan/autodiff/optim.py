"""Adam with epoch-indexed learning-rate schedules."""

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class HalvingSchedule:
    """``lr0 * (1/2) ** floor(epoch / period)``."""

    lr0: float = 1e-3
    period: int = 5

    def __call__(self, epoch):
        return self.lr0 * 0.5 ** (epoch // self.period)


@dataclass(frozen=True)
class ExponentialSchedule:
    """``lr0 * rate ** epoch``."""

    lr0: float = 1e-3
    rate: float = 0.95

    def __call__(self, epoch):
        return self.lr0 * self.rate ** epoch


def make_schedule(kind, lr0=1e-3, period=5, rate=0.95):
    if kind == "halving":
        return HalvingSchedule(lr0, period)
    if kind == "exponential":
        return ExponentialSchedule(lr0, rate)
    raise ValueError(f"unknown schedule {kind!r}")


@dataclass
class AdamState:
    lr_schedule: object = field(default_factory=HalvingSchedule)
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state, epoch, clip_norm=10.0):
    """Apply one Adam update in place and return ``(params, state)``.

    ``params`` and ``grads`` are matching lists of arrays. Gradients are
    clipped to a global L2 norm of ``clip_norm`` (None disables clipping).
    Raises FloatingPointError if any gradient is non-finite.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(params) != len(state.m) or any(p.shape != m.shape for p, m in zip(params, state.m)):
        raise ValueError("parameter shapes do not match the optimizer accumulators")
    if len(grads) != len(params):
        raise ValueError(f"{len(grads)} gradients for {len(params)} parameters")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter #{i}; aborting update")
    if clip_norm is not None:
        norm = np.sqrt(sum(float((g * g).sum()) for g in grads))
        if norm > clip_norm:
            grads = [g * (clip_norm / norm) for g in grads]
    state.step += 1
    lr = state.lr_schedule(epoch)
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


class Adam:
    """Thin wrapper binding :func:`adam_step` to a list of Tensors."""

    def __init__(self, tensors, schedule=None, beta1=0.9, beta2=0.999, epsilon=1e-8, clip_norm=10.0):
        self.tensors = list(tensors)
        self.clip_norm = clip_norm
        self.state = AdamState(schedule or HalvingSchedule(), beta1, beta2, epsilon)

    def zero_grad(self):
        for t in self.tensors:
            t.grad = None

    def step(self, epoch):
        grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in self.tensors]
        adam_step([t.data for t in self.tensors], grads, self.state, epoch, self.clip_norm)
