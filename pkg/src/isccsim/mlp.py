"""Small dense network with hand-written backprop, plus Adam and a central
finite-difference gradient checker. Everything runs in float64 so the
finite-difference oracle stays tight."""

from __future__ import annotations

import numpy as np


class Mlp:
    """Fully connected net: tanh hidden layers, linear output."""

    def __init__(self, sizes: tuple[int, ...], rng: np.random.Generator,
                 zero_output: bool = False):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
            last = i == len(sizes) - 2
            if last and zero_output:
                w = np.zeros((n_in, n_out))
            else:
                w = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out))
            self.weights.append(w)
            self.biases.append(np.zeros(n_out))

    @property
    def num_params(self) -> int:
        return sum((n_in + 1) * n_out for n_in, n_out in zip(self.sizes, self.sizes[1:]))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Returns (output, activations cache for backward)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            h = z if i == last else np.tanh(z)
            acts.append(h)
        return h, acts

    def backward(
        self, acts: list[np.ndarray], grad_out: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Parameter gradients for a scalar loss with d(loss)/d(output) given."""
        grads_w = [np.empty(0)] * len(self.weights)
        grads_b = [np.empty(0)] * len(self.biases)
        delta = np.asarray(grad_out, dtype=np.float64)
        for i in range(len(self.weights) - 1, -1, -1):
            a_prev = acts[i]
            grads_w[i] = a_prev.T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - acts[i] ** 2)
        return grads_w, grads_b

    # -- flat parameter view (serialization, finite differences) ----------

    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.reshape(-1))
            parts.append(b)
        return np.concatenate(parts)

    def set_flat(self, flat: np.ndarray) -> None:
        if flat.size != self.num_params:
            raise ValueError(f"expected {self.num_params} params, got {flat.size}")
        k = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[k : k + w.size].reshape(w.shape).copy()
            k += w.size
            self.biases[i] = flat[k : k + b.size].copy()
            k += b.size

    def flatten_grads(self, grads: tuple[list[np.ndarray], list[np.ndarray]]) -> np.ndarray:
        grads_w, grads_b = grads
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.reshape(-1))
            parts.append(gb)
        return np.concatenate(parts)

    def clone(self) -> "Mlp":
        twin = Mlp.__new__(Mlp)
        twin.sizes = self.sizes
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin


class Adam:
    """Bias-corrected Adam over a list of parameter arrays."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def mlp_params(net: Mlp) -> list[np.ndarray]:
    """Live parameter arrays, interleaved (w0, b0, w1, b1, ...)."""
    out = []
    for w, b in zip(net.weights, net.biases):
        out.append(w)
        out.append(b)
    return out


def interleave_grads(grads: tuple[list[np.ndarray], list[np.ndarray]]) -> list[np.ndarray]:
    grads_w, grads_b = grads
    out = []
    for gw, gb in zip(grads_w, grads_b):
        out.append(gw)
        out.append(gb)
    return out


def polyak_update(target: Mlp, source: Mlp, tau: float) -> None:
    for tw, sw in zip(target.weights, source.weights):
        tw *= 1.0 - tau
        tw += tau * sw
    for tb, sb in zip(target.biases, source.biases):
        tb *= 1.0 - tau
        tb += tau * sb


def gradient_check(
    net: Mlp,
    loss_fn,
    rng: np.random.Generator,
    sample_fraction: float = 0.01,
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_fn() -> (loss, (grads_w, grads_b)) evaluated at the net's current
    parameters; a random sample of parameters is probed.
    """
    _, grads = loss_fn()
    analytic = net.flatten_grads(grads)
    base = net.get_flat()
    n = base.size
    k = max(1, int(round(n * sample_fraction)))
    indices = rng.choice(n, size=min(k, n), replace=False)
    worst = 0.0
    try:
        for i in indices:
            probe = base.copy()
            probe[i] += step
            net.set_flat(probe)
            up = loss_fn()[0]
            probe[i] -= 2.0 * step
            net.set_flat(probe)
            down = loss_fn()[0]
            fd = (up - down) / (2.0 * step)
            denom = max(1e-6, abs(fd), abs(analytic[i]))
            worst = max(worst, abs(fd - analytic[i]) / denom)
    finally:
        net.set_flat(base)
    return worst


def scalar_gradient_check(value: float, loss_fn, step: float = 1e-5) -> float:
    """Same idea for a single scalar parameter: loss_fn(x) -> (loss, grad)."""
    _, analytic = loss_fn(value)
    up = loss_fn(value + step)[0]
    down = loss_fn(value - step)[0]
    fd = (up - down) / (2.0 * step)
    denom = max(1e-6, abs(fd), abs(analytic))
    return abs(fd - analytic) / denom
