"""Adam optimizer (fixed or Noam-scheduled learning rate) and gradient checking."""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .autodiff import Parameter, Tensor, no_grad
from .errors import ConfigError, NumericsError

OPTIMIZER_MODES = ("adam-fixed", "adam-noam")


def noam_lr(base: float, warmup: int, step: int) -> float:
    """Warmup-then-decay schedule: base * min(step^-0.5, step * warmup^-1.5).

    Peaks at step == warmup. Steps are 1-based.
    """
    if step <= 0:
        raise ValueError(f"noam schedule undefined at step {step}")
    if warmup <= 0:
        raise ConfigError(f"warmup must be positive, got {warmup}")
    return base * min(step**-0.5, step * warmup**-1.5)


class Adam:
    """Standard Adam over a fixed set of parameters.

    ``mode`` selects the learning-rate schedule: "adam-fixed" keeps ``lr``
    constant, "adam-noam" applies the Noam warmup/decay with ``lr`` as the
    base rate.
    """

    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-3,
        mode: str = "adam-fixed",
        warmup: int = 1000,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        if mode not in OPTIMIZER_MODES:
            raise ConfigError(f"unknown optimizer mode {mode!r}; expected one of {OPTIMIZER_MODES}")
        if weight_decay < 0:
            raise ConfigError(f"weight_decay must be nonnegative, got {weight_decay}")
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.mode = mode
        self.warmup = warmup
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def current_lr(self, step: int | None = None) -> float:
        step = self.step_count if step is None else step
        if self.mode == "adam-noam":
            return noam_lr(self.lr, self.warmup, step)
        return self.lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        lr = self.current_lr()
        b1, b2 = self.beta1, self.beta2
        t = self.step_count
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / (1.0 - b1**t)
            v_hat = v / (1.0 - b2**t)
            update = m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                # decoupled decay: applied to the weights, not the moments
                update = update + self.weight_decay * p.data
            p.data = p.data - lr * update


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Parameter],
    eps: float = 1e-5,
) -> float:
    """Compare analytic gradients of a scalar function against central differences.

    ``f`` rebuilds the forward pass from the current parameter values on every
    call. Returns max over all parameter entries of
    |analytic - numeric| / max(1, |analytic|). Run at 64-bit precision.
    """
    for p in params:
        p.zero_grad()
    out = f()
    if out.size != 1:
        raise ValueError("grad_check requires a scalar-valued function")
    if not np.isfinite(out.data).all():
        raise NumericsError("grad_check: function value is non-finite")
    out.backward()
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            for idx in range(flat.size):
                original = flat[idx]
                flat[idx] = original + eps
                f_plus = f().data.item()
                flat[idx] = original - eps
                f_minus = f().data.item()
                flat[idx] = original
                if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                    raise NumericsError("grad_check: perturbed value is non-finite")
                numeric = (f_plus - f_minus) / (2.0 * eps)
                a_val = a.reshape(-1)[idx]
                err = abs(a_val - numeric) / max(1.0, abs(a_val))
                worst = max(worst, err)
    return worst
