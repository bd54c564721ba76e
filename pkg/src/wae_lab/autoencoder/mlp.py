"""Small fully connected networks with hand-written backpropagation."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import NonFiniteError
from ..rng import as_rng

ACTIVATIONS = ("relu", "tanh")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _dact(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return (z > 0).astype(float) if name == "relu" else 1.0 - a * a


@dataclass(frozen=True, eq=False)
class Mlp:
    """Feed-forward net ``x -> W_L act(... act(x W_1 + b_1) ...) + b_L``.

    Weights are stored input-major (``W_l`` has shape ``(fan_in, fan_out)``)
    so a batch ``(n, d)`` maps to ``(n, out)``.  Hidden layers use
    ``activation``; the output layer is linear.  Instances are immutable:
    training steps return new nets.
    """

    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    activation: str = "tanh"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        ws = tuple(np.array(w, dtype=float) for w in self.weights)
        bs = tuple(np.array(b, dtype=float).reshape(-1) for b in self.biases)
        if len(ws) != len(bs) or not ws:
            raise ValueError("need one bias per weight matrix")
        for k, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or w.shape[1] != len(b):
                raise ValueError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k and ws[k - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {k}: fan-in {w.shape[0]} != previous fan-out {ws[k - 1].shape[1]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NonFiniteError(f"layer {k} has non-finite parameters")
            w.setflags(write=False)
            b.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    # -- construction ----------------------------------------------------
    @classmethod
    def init(cls, widths: Sequence[int], activation: str = "tanh", seed: int = 0,
             scale: float = 1.0) -> "Mlp":
        """Gaussian initialisation with variance ``scale / fan_in`` (``2 / fan_in`` for ReLU)."""
        rng = as_rng(seed)
        gain = 2.0 if activation == "relu" else 1.0
        ws, bs = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            ws.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(gain * scale / fan_in))
            bs.append(np.zeros(fan_out))
        return cls(tuple(ws), tuple(bs), activation, int(seed) if not isinstance(seed, np.random.Generator) else None)

    @classmethod
    def relu_identity(cls, dim: int = 1) -> "Mlp":
        """Exact identity through one ReLU layer: ``x = relu(x) - relu(-x)``."""
        eye = np.eye(dim)
        w1 = np.hstack([eye, -eye])
        w2 = np.vstack([eye, -eye])
        return cls((w1, w2), (np.zeros(2 * dim), np.zeros(dim)), "relu")

    @classmethod
    def affine(cls, slope: float, offset: float = 0.0, width: int = 2) -> "Mlp":
        """Exact 1-D affine map ``slope * x + offset`` as a ReLU net."""
        base = cls.relu_identity(1)
        w2 = base.weights[1] * slope
        return cls((base.weights[0], w2), (base.biases[0], np.array([offset])), "relu")

    @classmethod
    def near_identity(cls, hidden: int = 8, noise: float = 0.05, seed: int = 0,
                      activation: str = "tanh") -> "Mlp":
        """1-D net close to the identity on moderate inputs, plus small random weights.

        For tanh, pairs of units ``+-`` with small input gain ``g`` and output
        weight ``1 / (2 g)`` give ``x + O(g^2 x^3)``.
        """
        if hidden < 2 or hidden % 2:
            raise ValueError("near-identity nets need an even hidden width")
        rng = as_rng(seed)
        half = hidden // 2
        if activation == "relu":
            w1 = np.concatenate([np.ones(half), -np.ones(half)]) / half
            w2 = np.concatenate([np.ones(half), -np.ones(half)])
        else:
            gain = 0.2
            w1 = np.concatenate([np.full(half, gain), np.full(half, -gain)])
            w2 = np.concatenate([np.full(half, 1.0), np.full(half, -1.0)]) / (2 * gain * half)
        w1 = w1[None, :] + noise * rng.standard_normal((1, hidden))
        w2 = w2[:, None] + noise * rng.standard_normal((hidden, 1)) / hidden
        b1 = noise * rng.standard_normal(hidden)
        return cls((w1, w2), (b1, np.zeros(1)), activation, int(seed))

    # -- shape -------------------------------------------------------------
    @property
    def widths(self) -> Tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    # -- evaluation --------------------------------------------------------
    def _as_batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, self.widths[0])
        return x

    def forward(self, x) -> np.ndarray:
        return self.forward_cache(x)[0]

    __call__ = forward

    def forward_cache(self, x):
        a = self._as_batch(x)
        cache = [(a, None)]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = z if k == last else _act(self.activation, z)
            cache.append((a, z))
        if not np.all(np.isfinite(a)):
            raise NonFiniteError("network output is not finite")
        return a, cache

    def backward(self, cache, grad_out: np.ndarray):
        """Gradients of ``sum(grad_out * forward(x))``.

        Returns ``(weight_grads, bias_grads, grad_input)``.
        """
        g = np.asarray(grad_out, dtype=float)
        gw, gb = [None] * len(self.weights), [None] * len(self.weights)
        last = len(self.weights) - 1
        for k in range(last, -1, -1):
            a_out, z = cache[k + 1]
            if k != last:
                g = g * _dact(self.activation, z, a_out)
            a_in = cache[k][0]
            gw[k] = a_in.T @ g
            gb[k] = g.sum(axis=0)
            g = g @ self.weights[k].T
        return gw, gb, g

    # -- parameter vectors -------------------------------------------------
    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    @staticmethod
    def flatten_grads(gw, gb) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(gw, gb)])

    def with_flat(self, vec: np.ndarray) -> "Mlp":
        vec = np.asarray(vec, dtype=float)
        ws, bs, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(vec[pos:pos + w.size].reshape(w.shape))
            pos += w.size
            bs.append(vec[pos:pos + b.size])
            pos += b.size
        if pos != len(vec):
            raise ValueError(f"expected {pos} parameters, got {len(vec)}")
        return Mlp(tuple(ws), tuple(bs), self.activation, self.seed)

    def sgd_step(self, gw, gb, lr: float) -> "Mlp":
        ws = tuple(w - lr * g for w, g in zip(self.weights, gw))
        bs = tuple(b - lr * g for b, g in zip(self.biases, gb))
        return Mlp(ws, bs, self.activation, self.seed)

    # -- text format -------------------------------------------------------
    def to_text(self) -> str:
        """Layer-shape header lines followed by row-major values (17 significant digits)."""
        buf = io.StringIO()
        buf.write(f"mlp activation={self.activation} layers={len(self.weights)}\n")
        for w, b in zip(self.weights, self.biases):
            buf.write(f"W {w.shape[0]} {w.shape[1]}\n")
            buf.write(" ".join(f"{v:.17g}" for v in w.ravel()) + "\n")
            buf.write(f"b {b.size}\n")
            buf.write(" ".join(f"{v:.17g}" for v in b) + "\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "Mlp":
        lines = text.strip().splitlines()
        head = dict(tok.split("=") for tok in lines[0].split()[1:])
        ws, bs = [], []
        pos = 1
        for _ in range(int(head["layers"])):
            _, r, c = lines[pos].split()
            ws.append(np.array(lines[pos + 1].split(), dtype=float).reshape(int(r), int(c)))
            _, m = lines[pos + 2].split()
            vals = lines[pos + 3].split() if int(m) else []
            bs.append(np.array(vals, dtype=float).reshape(int(m)))
            pos += 4
        return cls(tuple(ws), tuple(bs), head["activation"])
