"""A small dense classifier with exact manual backpropagation.

The network is a chain of affine layers with rectifier activations on the
hidden layers and raw logits at the output.  Forward passes cache their
intermediate activations; ``backward`` consumes a cache produced by the
matching parameter object and refuses stale ones, which keeps the
forward/backward pairing honest when the optimizer swaps parameters.

Checkpoint format (text, one value per whitespace token)::

    fullmatch-lab-checkpoint v1
    dims <d0> <d1> ... <dL>
    weights <layer-index> <out*in row-major floats...>
    bias <layer-index> <out floats...>

Floats are written with shortest round-trip repr, so a save/load cycle is
bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CHECKPOINT_MAGIC = "fullmatch-lab-checkpoint"
CHECKPOINT_VERSION = "v1"


@dataclass
class ModelParameters:
    """Ordered (out x in) weight matrices and (out,) biases."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def copy(self) -> "ModelParameters":
        return ModelParameters(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class ModelGradients:
    """Cotangents with the same shapes as the parameters they differentiate."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class ForwardCache:
    """Activations memoized by ``forward`` for the matching backward pass."""

    params: ModelParameters
    inputs: list[np.ndarray]
    preacts: list[np.ndarray]


def init_model(layer_dims: list[int], seed) -> ModelParameters:
    """Zero-bias init with weights drawn from N(0, 1/fan_in) per entry.

    ``seed`` may be an integer or an existing numpy Generator.
    """
    if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
        raise ValueError(f"init_model: invalid layer dims {layer_dims}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        scale = 1.0 / np.sqrt(fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParameters(weights=weights, biases=biases)


def forward(params: ModelParameters, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Logits for a single feature vector (D,) or a batch (B, D)."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != params.weights[0].shape[1]:
        raise ValueError(
            f"forward: input dim {h.shape[1]} != model dim {params.weights[0].shape[1]}"
        )
    inputs = []
    preacts = []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w.T + b
        preacts.append(z)
        h = z if i == last else np.maximum(z, 0.0)
    logits = h[0] if squeeze else h
    return logits, ForwardCache(params=params, inputs=inputs, preacts=preacts)


def backward(
    params: ModelParameters, cache: ForwardCache, grad_logits: np.ndarray
) -> ModelGradients:
    """Exact reverse-mode gradients for the forward pass that built ``cache``."""
    if cache.params is not params:
        raise ValueError("backward: cache was built by different parameters")
    g = np.asarray(grad_logits, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.preacts[-1].shape:
        raise ValueError("backward: grad_logits shape mismatch with cached forward")
    grad_w: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * len(params.biases)  # type: ignore[list-item]
    delta = g
    for i in range(len(params.weights) - 1, -1, -1):
        if i < len(params.weights) - 1:
            delta = delta * (cache.preacts[i] > 0.0)
        grad_w[i] = delta.T @ cache.inputs[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ params.weights[i]
    return ModelGradients(weights=grad_w, biases=grad_b)


def flatten_parameters(params: ModelParameters) -> np.ndarray:
    """All parameters as one flat vector (weights then bias, layer by layer)."""
    parts = []
    for w, b in zip(params.weights, params.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def unflatten_parameters(template: ModelParameters, vector: np.ndarray) -> ModelParameters:
    """Inverse of ``flatten_parameters`` against a shape template."""
    vector = np.asarray(vector, dtype=np.float64)
    weights = []
    biases = []
    offset = 0
    for w, b in zip(template.weights, template.biases):
        weights.append(vector[offset : offset + w.size].reshape(w.shape).copy())
        offset += w.size
        biases.append(vector[offset : offset + b.size].copy())
        offset += b.size
    if offset != vector.size:
        raise ValueError("unflatten_parameters: vector length mismatch")
    return ModelParameters(weights=weights, biases=biases)


def flatten_gradients(grads: ModelGradients) -> np.ndarray:
    parts = []
    for w, b in zip(grads.weights, grads.biases):
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def save_checkpoint(params: ModelParameters, path) -> None:
    """Write the documented versioned text dump."""
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}"]
    lines.append("dims " + " ".join(str(d) for d in params.layer_dims))
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        lines.append(f"weights {i} " + " ".join(repr(float(v)) for v in w.ravel()))
        lines.append(f"bias {i} " + " ".join(repr(float(v)) for v in b))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> ModelParameters:
    """Read a checkpoint written by ``save_checkpoint``."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}":
        raise ValueError(f"load_checkpoint: {path} is not a {CHECKPOINT_VERSION} checkpoint")
    if not lines[1].startswith("dims "):
        raise ValueError("load_checkpoint: missing dims line")
    dims = [int(tok) for tok in lines[1].split()[1:]]
    n_layers = len(dims) - 1
    weights: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    biases: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for line in lines[2:]:
        kind, idx_str, *vals = line.split()
        i = int(idx_str)
        data = np.array([float(v) for v in vals])
        if kind == "weights":
            weights[i] = data.reshape(dims[i + 1], dims[i])
        elif kind == "bias":
            biases[i] = data
        else:
            raise ValueError(f"load_checkpoint: unknown record {kind!r}")
    if any(w is None for w in weights) or any(b is None for b in biases):
        raise ValueError("load_checkpoint: incomplete checkpoint")
    return ModelParameters(weights=weights, biases=biases)
