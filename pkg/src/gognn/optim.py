import numpy as np

from .errors import NonFiniteError


class Adam:
    """Adaptive-moment optimizer with bias correction.

    ``params`` is a list of ``(name, Tensor)``; names only serve error reports.
    With ``warmup`` > 0 the step size ramps linearly from lr/warmup up to lr
    over the first ``warmup`` steps.
    """

    def __init__(self, params, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8, warmup=0):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if warmup < 0:
            raise ValueError(f"warmup must be >= 0, got {warmup}")
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.warmup = int(warmup)
        self.m = [np.zeros_like(p.data) for _, p in self.params]
        self.v = [np.zeros_like(p.data) for _, p in self.params]
        self.t = 0

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()

    def step(self):
        # validate every gradient before touching any parameter
        for name, p in self.params:
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise NonFiniteError(f"non-finite gradient in parameter {name!r}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        lr = self.lr * min(1.0, self.t / self.warmup) if self.warmup else self.lr
        for k, (_, p) in enumerate(self.params):
            g = p.grad if p.grad is not None else 0.0
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            p.data -= (lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)).astype(
                p.data.dtype, copy=False)


def adam_step(params, grads, state, lr):
    """Functional form: update ``params`` (arrays) in place from ``grads``.

    ``state`` is a dict, filled on first use with moments and the step count.
    """
    for k, g in enumerate(grads):
        if not np.isfinite(g).all():
            raise NonFiniteError(f"non-finite gradient for parameter {k}")
    if not state:
        state.update(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params],
                     t=0)
    state["t"] += 1
    t = state["t"]
    for k, (p, g) in enumerate(zip(params, grads)):
        state["m"][k] = 0.9 * state["m"][k] + 0.1 * g
        state["v"][k] = 0.999 * state["v"][k] + 0.001 * g * g
        p -= lr * (state["m"][k] / (1 - 0.9 ** t)) / (np.sqrt(state["v"][k] / (1 - 0.999 ** t)) + 1e-8)
