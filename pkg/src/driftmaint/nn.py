"""Small dense networks with hand-written reverse-mode gradients.

Everything works on float64 numpy arrays in the row-vector convention
``y = x @ W + b``. A module exposes ``params()``, ``forward``,
``forward_cached`` and ``backward(cache, grad_out)``; the latter returns the
parameter gradients aligned with ``params()`` plus the gradient w.r.t. the
module input. Chains of modules are trained with :func:`backward_and_step`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, NumericalError

ACTIVATIONS = ("relu", "identity")


def _activate(pre: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(pre, 0.0)
    return pre


@dataclass
class Layer:
    weight: np.ndarray  # (d_in, d_out)
    bias: np.ndarray  # (d_out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ConfigError(
                f"layer shapes incompatible: W{self.weight.shape} b{self.bias.shape}"
            )


class DenseNet:
    """Feed-forward MLP; hidden layers use ReLU, the last layer is linear by default."""

    def __init__(self, layers: Sequence[Layer]):
        layers = list(layers)
        if not layers:
            raise ConfigError("a network needs at least one layer")
        for prev, nxt in zip(layers[:-1], layers[1:]):
            if prev.weight.shape[1] != nxt.weight.shape[0]:
                raise ConfigError(
                    f"layer widths not chain-compatible: {prev.weight.shape} -> {nxt.weight.shape}"
                )
        self.layers = layers
        self.frozen = False

    @classmethod
    def build(
        cls,
        sizes: Sequence[int],
        seed: int = 0,
        hidden: str = "relu",
        output: str = "identity",
        out_scale: float = 1.0,
    ) -> "DenseNet":
        """Seeded fan-in uniform init (He bound), zero biases.

        ``out_scale`` shrinks the last layer's weights, e.g. so a policy
        starts close to uniform.
        """
        if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
            raise ConfigError(f"invalid layer sizes {list(sizes)}")
        rng = np.random.default_rng(seed)
        layers = []
        n = len(sizes) - 1
        for i, (d_in, d_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = np.sqrt(6.0 / d_in)
            w = rng.uniform(-bound, bound, size=(d_in, d_out))
            last = i == n - 1
            if last:
                w = w * out_scale
            layers.append(Layer(w, np.zeros(d_out), output if last else hidden))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.in_dim] + [layer.weight.shape[1] for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ConfigError(f"expected input of width {self.in_dim}, got shape {x.shape}")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = self._check(x)
        for layer in self.layers:
            h = _activate(h @ layer.weight + layer.bias, layer.activation)
        return h

    def forward_cached(self, x: np.ndarray):
        h = self._check(x)
        cache = []
        for layer in self.layers:
            pre = h @ layer.weight + layer.bias
            cache.append((h, pre))
            h = _activate(pre, layer.activation)
        return h, cache

    def backward(self, cache, grad_out: np.ndarray, need_input_grad: bool = True):
        grads: list[np.ndarray] = [None] * (2 * len(self.layers))  # type: ignore[list-item]
        g = grad_out
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            h_in, pre = cache[i]
            if layer.activation == "relu":
                g = g * (pre > 0)
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0 or need_input_grad:
                g = g @ layer.weight.T
        return grads, g

    def freeze(self) -> "DenseNet":
        """Mark parameters read-only; any later in-place update raises."""
        for p in self.params():
            p.setflags(write=False)
        self.frozen = True
        return self

    def copy(self) -> "DenseNet":
        return DenseNet(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def digest(self) -> str:
        return params_digest(self.params())

    # checkpoint format: npz with W{i}, b{i} arrays plus a JSON "meta" entry

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {}
        for i, layer in enumerate(self.layers):
            state[f"W{i}"] = layer.weight
            state[f"b{i}"] = layer.bias
        meta = {"kind": "dense", "activations": [l.activation for l in self.layers]}
        state["meta"] = np.array(json.dumps(meta))
        return state

    @classmethod
    def from_state_dict(cls, state) -> "DenseNet":
        meta = json.loads(str(state["meta"]))
        if meta.get("kind") != "dense":
            raise ConfigError("checkpoint does not hold a dense network")
        layers = [
            Layer(np.array(state[f"W{i}"], dtype=np.float64),
                  np.array(state[f"b{i}"], dtype=np.float64), act)
            for i, act in enumerate(meta["activations"])
        ]
        return cls(layers)

    def save(self, path) -> None:
        save_state(path, self.state_dict())

    @classmethod
    def load(cls, path) -> "DenseNet":
        with np.load(path, allow_pickle=False) as data:
            return cls.from_state_dict(data)


class Adapter:
    """Residual bottleneck ``A(z) = z + relu(z @ W_down + b_down) @ W_up + b_up``.

    The up-projection starts at zero so a fresh adapter is the identity map.
    """

    def __init__(self, w_down, b_down, w_up, b_up):
        self.w_down = np.asarray(w_down, dtype=np.float64)
        self.b_down = np.asarray(b_down, dtype=np.float64)
        self.w_up = np.asarray(w_up, dtype=np.float64)
        self.b_up = np.asarray(b_up, dtype=np.float64)
        d_z, b = self.w_down.shape
        if self.w_up.shape != (b, d_z) or self.b_down.shape != (b,) or self.b_up.shape != (d_z,):
            raise ConfigError("adapter parameter shapes are inconsistent")
        if b >= d_z:
            raise ConfigError(f"bottleneck {b} must be smaller than latent width {d_z}")

    @classmethod
    def build(cls, latent_dim: int, bottleneck: int, seed: int = 0) -> "Adapter":
        rng = np.random.default_rng(seed)
        bound = np.sqrt(6.0 / latent_dim)
        return cls(
            rng.uniform(-bound, bound, size=(latent_dim, bottleneck)),
            np.zeros(bottleneck),
            np.zeros((bottleneck, latent_dim)),
            np.zeros(latent_dim),
        )

    @property
    def latent_dim(self) -> int:
        return self.w_down.shape[0]

    @property
    def bottleneck(self) -> int:
        return self.w_down.shape[1]

    in_dim = latent_dim
    out_dim = latent_dim

    def params(self) -> list[np.ndarray]:
        return [self.w_down, self.b_down, self.w_up, self.b_up]

    def _check(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ConfigError(f"adapter expects width {self.latent_dim}, got shape {z.shape}")
        return z

    def forward(self, z: np.ndarray) -> np.ndarray:
        z = self._check(z)
        h = np.maximum(z @ self.w_down + self.b_down, 0.0)
        return z + h @ self.w_up + self.b_up

    def forward_cached(self, z: np.ndarray):
        z = self._check(z)
        pre = z @ self.w_down + self.b_down
        h = np.maximum(pre, 0.0)
        return z + h @ self.w_up + self.b_up, (z, pre, h)

    def backward(self, cache, grad_out: np.ndarray, need_input_grad: bool = True):
        z, pre, h = cache
        g_w_up = h.T @ grad_out
        g_b_up = grad_out.sum(axis=0)
        g_h = (grad_out @ self.w_up.T) * (pre > 0)
        g_w_down = z.T @ g_h
        g_b_down = g_h.sum(axis=0)
        g_in = grad_out + g_h @ self.w_down.T if need_input_grad else None
        return [g_w_down, g_b_down, g_w_up, g_b_up], g_in

    def copy(self) -> "Adapter":
        return Adapter(*(p.copy() for p in self.params()))

    def load_from(self, other: "Adapter") -> None:
        """Overwrite parameters in place with a copy of ``other``'s."""
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def digest(self) -> str:
        return params_digest(self.params())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {
            "w_down": self.w_down, "b_down": self.b_down,
            "w_up": self.w_up, "b_up": self.b_up,
            "meta": np.array(json.dumps({"kind": "adapter"})),
        }

    @classmethod
    def from_state_dict(cls, state) -> "Adapter":
        return cls(*(np.array(state[k], dtype=np.float64) for k in ("w_down", "b_down", "w_up", "b_up")))


def adapter_apply(adapter: Adapter, z: np.ndarray) -> np.ndarray:
    return adapter.forward(z)


def params_digest(params: Sequence[np.ndarray]) -> str:
    h = hashlib.sha256()
    for p in params:
        h.update(str(p.shape).encode())
        h.update(np.ascontiguousarray(p, dtype=np.float64).tobytes())
    return h.hexdigest()


def save_state(path, state: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **state)


# ---------------------------------------------------------------- losses


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def masked_mse(x: np.ndarray, x_hat: np.ndarray, mask: np.ndarray, eps: float = 1e-8) -> float:
    """Reconstruction error over masked positions, normalised per sample, then batch-averaged."""
    x, x_hat, mask = (np.asarray(a, dtype=np.float64) for a in (x, x_hat, mask))
    if not (x.shape == x_hat.shape == mask.shape):
        raise ConfigError(f"shape mismatch: {x.shape}, {x_hat.shape}, {mask.shape}")
    if x.ndim == 1:
        x, x_hat, mask = x[None], x_hat[None], mask[None]
    per_sample = (mask * (x - x_hat) ** 2).sum(axis=1) / (mask.sum(axis=1) + eps)
    return float(per_sample.mean())


def masked_mse_grad(x: np.ndarray, x_hat: np.ndarray, mask: np.ndarray, eps: float = 1e-8):
    """Loss and gradient w.r.t. ``x_hat`` of :func:`masked_mse`."""
    denom = mask.sum(axis=1, keepdims=True) + eps
    diff = x_hat - x
    per_sample = (mask * diff**2).sum(axis=1, keepdims=True) / denom
    n = x.shape[0]
    return float(per_sample.mean()), 2.0 * mask * diff / denom / n


# ------------------------------------------------------------- optimizer


class Adam:
    """Adam over a fixed list of parameter arrays, updated in place."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ConfigError("gradient list does not match optimizer parameters")
        self.t += 1
        if self.lr == 0.0:
            return
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


OptimState = Adam


def chain_forward(modules, x, cached: bool = True):
    caches = []
    h = x
    for mod in modules:
        if cached:
            h, c = mod.forward_cached(h)
            caches.append(c)
        else:
            h = mod.forward(h)
    return h, caches


def chain_backward(modules, caches, grad_out, trainable: Sequence[bool]):
    """Backprop through ``modules``; returns per-module gradient lists (None when frozen).

    Backpropagation stops once no earlier module is trainable.
    """
    first = next((i for i, t in enumerate(trainable) if t), None)
    grads: list = [None] * len(modules)
    if first is None:
        return grads
    g = grad_out
    for i in range(len(modules) - 1, first - 1, -1):
        pg, g = modules[i].backward(caches[i], g, need_input_grad=i > first)
        if trainable[i]:
            grads[i] = pg
    return grads


def trainable_params(modules, trainable: Sequence[bool]) -> list[np.ndarray]:
    out = []
    for mod, t in zip(modules, trainable):
        if t:
            out.extend(mod.params())
    return out


def loss_and_grads(modules, x, targets, trainable, loss: str = "cross_entropy",
                   mask=None, eps: float = 1e-8):
    """Forward the chain, evaluate ``loss`` and return it with flat trainable gradients."""
    out, caches = chain_forward(modules, x)
    if loss == "cross_entropy":
        value, g_out = cross_entropy(out, targets)
    elif loss == "masked_mse":
        if mask is None:
            raise ConfigError("masked_mse needs a mask")
        value, g_out = masked_mse_grad(np.asarray(targets, dtype=np.float64), out, mask, eps)
    else:
        raise ConfigError(f"unknown loss kind {loss!r}")
    if not np.isfinite(value):
        raise NumericalError(f"non-finite {loss} loss")
    per_module = chain_backward(modules, caches, g_out, trainable)
    flat = [g for grads in per_module if grads is not None for g in grads]
    return value, flat


def backward_and_step(modules, x, targets, opt: Adam, trainable: Sequence[bool],
                      loss: str = "cross_entropy", mask=None, eps: float = 1e-8) -> float:
    """One optimizer step on the trainable subset of a module chain.

    ``opt`` must have been built over ``trainable_params(modules, trainable)``.
    Returns the loss evaluated before the step.
    """
    value, flat = loss_and_grads(modules, x, targets, trainable, loss=loss, mask=mask, eps=eps)
    for g in flat:
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient")
    opt.step(flat)
    return value
