"""Central finite-difference gradient checking."""

from dataclasses import dataclass

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    n_checked: int
    max_abs_error_small: float = 0.0
    atol: float = 1e-7

    @property
    def passed(self):
        return self.max_rel_error < self.tol and self.max_abs_error_small <= self.atol


def finite_diff_check(forward, inputs, h=1e-5, tol=1e-4, max_entries=None, rng=None, atol=1e-7):
    """Compare analytic gradients of a scalar ``forward()`` with central differences.

    ``inputs`` are Tensors with ``requires_grad=True``; ``forward`` takes no
    arguments and must rebuild the graph from their current data. With
    ``max_entries`` only a random subset of coordinates per input is probed.
    Entries with ``max(|a|, |n|) >= atol`` are scored by the relative error
    ``|a - n| / max(|a|, |n|)``; smaller ones are at the rounding-noise level
    of the difference quotient and must agree to within ``atol``.
    """
    for t in inputs:
        t.grad = None
    out = forward()
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    rng = rng or np.random.default_rng(0)
    worst, worst_small, count = 0.0, 0.0, 0
    for t, grad in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            fp = float(forward().data)
            flat[i] = old - h
            fm = float(forward().data)
            flat[i] = old
            num = (fp - fm) / (2 * h)
            a = grad.reshape(-1)[i]
            size = max(abs(a), abs(num))
            if size >= atol:
                worst = max(worst, abs(a - num) / size)
            else:
                worst_small = max(worst_small, abs(a - num))
            count += 1
    return GradCheckReport(worst, tol, count, worst_small, atol)
