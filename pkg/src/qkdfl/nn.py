"""Minimal float64 conv-net building blocks with explicit backprop.

Layers are stateful: forward() caches what backward() needs, so each layer
instance belongs to exactly one position in one model.  Tensors are NHWC.
Convolutions are stride-1 with same padding (odd kernels only), which keeps
spatial dims equal between input and output at every scale.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit
from scipy.stats import truncnorm

SELU_ALPHA = 1.6732632423543772848170429916717
SELU_SCALE = 1.0507009873554804934193349852946


def truncated_normal_init(
    rng: np.random.Generator, shape: tuple[int, ...], fan_in: int
) -> np.ndarray:
    """Fan-in scaled truncated Gaussian (cut at two standard deviations)."""
    stddev = np.sqrt(1.0 / fan_in)
    draws = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=stddev, size=int(np.prod(shape)),
                          random_state=rng)
    return np.asarray(draws, dtype=np.float64).reshape(shape)


class Conv2D:
    """Same-padded stride-1 convolution via im2col."""

    def __init__(self, name: str, kh: int, kw: int, cin: int, cout: int):
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError("same padding requires odd kernel sizes")
        self.name = name
        self.kh, self.kw, self.cin, self.cout = kh, kw, cin, cout
        self.w = np.zeros((kh, kw, cin, cout))
        self.b = np.zeros(cout)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cols = None
        self._xshape = None

    def init_params(self, rng: np.random.Generator) -> None:
        self.w = truncated_normal_init(rng, self.w.shape, self.kh * self.kw * self.cin)
        self.b = np.zeros(self.cout)

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, h, w, cin = x.shape
        if cin != self.cin:
            raise ValueError(f"{self.name}: expected {self.cin} input channels, got {cin}")
        ph, pw = self.kh // 2, self.kw // 2
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
        windows = sliding_window_view(xp, (self.kh, self.kw), axis=(1, 2))
        # (n, h, w, cin, kh, kw) -> rows ordered (kh, kw, cin) to match w.reshape
        cols = np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 5, 3))
        cols = cols.reshape(n * h * w, self.kh * self.kw * self.cin)
        out = cols @ self.w.reshape(-1, self.cout) + self.b
        self._cols = cols
        self._xshape = x.shape
        return out.reshape(n, h, w, self.cout)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        n, h, w, cin = self._xshape
        dy2 = dy.reshape(n * h * w, self.cout)
        self.dw = (self._cols.T @ dy2).reshape(self.w.shape)
        self.db = dy2.sum(axis=0)
        dcols = (dy2 @ self.w.reshape(-1, self.cout).T).reshape(
            n, h, w, self.kh, self.kw, cin
        )
        ph, pw = self.kh // 2, self.kw // 2
        dxp = np.zeros((n, h + 2 * ph, w + 2 * pw, cin))
        for i in range(self.kh):
            for j in range(self.kw):
                dxp[:, i : i + h, j : j + w, :] += dcols[:, :, :, i, j, :]
        return dxp[:, ph : ph + h, pw : pw + w, :]


class Activation:
    """Elementwise nonlinearity: selu, softplus or relu."""

    KINDS = ("selu", "softplus", "relu")

    def __init__(self, kind: str):
        if kind not in self.KINDS:
            raise ValueError(f"unknown activation {kind!r}")
        self.kind = kind
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        if self.kind == "selu":
            return SELU_SCALE * np.where(
                x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0))
            )
        if self.kind == "softplus":
            return np.logaddexp(0.0, x)
        return np.maximum(x, 0.0)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        if self.kind == "selu":
            grad = SELU_SCALE * np.where(
                x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0))
            )
            return dy * grad
        if self.kind == "softplus":
            return dy * expit(x)
        return dy * (x > 0)


class MaxPool2:
    """2x2 max pooling, stride 2; ties route to the first window position."""

    def __init__(self):
        self._idx = None
        self._xshape = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, h, w, c = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"pooling needs even spatial dims, got {h}x{w}")
        xr = (
            x.reshape(n, h // 2, 2, w // 2, 2, c)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(n, h // 2, w // 2, c, 4)
        )
        self._idx = xr.argmax(axis=-1)
        self._xshape = x.shape
        return np.take_along_axis(xr, self._idx[..., None], axis=-1)[..., 0]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        n, h, w, c = self._xshape
        dxr = np.zeros((n, h // 2, w // 2, c, 4))
        np.put_along_axis(dxr, self._idx[..., None], dy[..., None], axis=-1)
        return (
            dxr.reshape(n, h // 2, w // 2, c, 2, 2)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(n, h, w, c)
        )


class UpsampleNearest2:
    """Nearest-neighbour 2x upsampling."""

    def __init__(self):
        self._xshape = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._xshape = x.shape
        return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        n, h, w, c = self._xshape
        return dy.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4))


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. pred."""
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff


def softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax over the last axis."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean per-pixel categorical cross-entropy and its gradient w.r.t. logits.

    `logits` has a trailing class axis; `labels` holds integer class ids
    with the same leading shape.
    """
    z = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    picked = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
    loss = float(-picked.mean())
    probs = np.exp(logp)
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
    return loss, (probs - onehot) / labels.size


class Adam:
    """Adaptive-moment optimizer with bias correction; updates in place."""

    def __init__(
        self,
        arrays: list[np.ndarray],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
