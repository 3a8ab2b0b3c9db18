"""Fully connected feed-forward networks on a flat weight vector.

Flat layout
-----------
Layers are stored from the input side to the output side. Inside a layer
the parameters are grouped by destination neuron: the neuron's incoming
weights (source index ascending) followed by its bias. For a 1-5-1 network
the 16 entries are therefore::

    w(x->h1) b(h1) w(x->h2) b(h2) ... b(h5) w(h1->y) ... w(h5->y) b(y)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import numpy.typing as npt

__all__ = [
    "ACTIVATIONS",
    "DimensionMismatch",
    "NetworkArchitecture",
    "weight_count",
    "unflatten",
    "flatten",
    "forward",
    "forward_ensemble",
]

Array = npt.NDArray[np.float64]


def _sigmoid(z: Array) -> Array:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


ACTIVATIONS: dict[str, Callable[[Array], Array]] = {
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
    "sigmoid": _sigmoid,
    "linear": lambda z: z,
}


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class NetworkArchitecture:
    """Layer sizes and activations of a dense network.

    ``layer_widths`` lists the hidden layers followed by the output layer,
    e.g. ``NetworkArchitecture(2, (4, 4, 10, 1))`` is the 93-weight
    reference network.
    """

    input_dim: int
    layer_widths: tuple[int, ...]
    hidden_activation: str = "tanh"
    output_activation: str = "linear"

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")
        if not self.layer_widths or min(self.layer_widths) < 1:
            raise ValueError("need at least one layer, all widths >= 1")
        for act in (self.hidden_activation, self.output_activation):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}; choose from {sorted(ACTIVATIONS)}")

    @property
    def output_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        """``(fan_in, fan_out)`` of every layer, input side first."""
        sizes = (self.input_dim, *self.layer_widths)
        return list(zip(sizes[:-1], sizes[1:]))

    @property
    def n_weights(self) -> int:
        return weight_count(self)


def weight_count(arch: NetworkArchitecture) -> int:
    return sum(fan_in * fan_out + fan_out for fan_in, fan_out in arch.layer_shapes)


def _check_length(arch: NetworkArchitecture, n: int) -> None:
    if n != arch.n_weights:
        raise DimensionMismatch(f"expected {arch.n_weights} weights for {arch}, got {n}")


def unflatten(arch: NetworkArchitecture, weights) -> list[tuple[Array, Array]]:
    """Split flat weights into per-layer ``(W, b)``.

    ``weights`` may be a vector of length N_m or an (N_m, N_e) ensemble.
    For a vector, ``W`` has shape (fan_out, fan_in) and ``b`` (fan_out,);
    for an ensemble a trailing realization axis is kept on both.
    """
    weights = np.asarray(weights, dtype=np.float64)
    _check_length(arch, weights.shape[0])
    tail = weights.shape[1:]
    layers = []
    start = 0
    for fan_in, fan_out in arch.layer_shapes:
        stop = start + fan_out * (fan_in + 1)
        block = weights[start:stop].reshape(fan_out, fan_in + 1, *tail)
        layers.append((block[:, :fan_in], block[:, fan_in]))
        start = stop
    return layers


def flatten(arch: NetworkArchitecture, layers: Sequence[tuple[Array, Array]]) -> Array:
    """Inverse of :func:`unflatten`."""
    if len(layers) != len(arch.layer_shapes):
        raise DimensionMismatch("wrong number of layers")
    blocks = []
    for (W, b), (fan_in, fan_out) in zip(layers, arch.layer_shapes):
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if W.shape[:2] != (fan_out, fan_in) or b.shape[0] != fan_out:
            raise DimensionMismatch(f"layer expects W {(fan_out, fan_in)}, got {W.shape}")
        block = np.concatenate([W, b[:, None]], axis=1)
        blocks.append(block.reshape(fan_out * (fan_in + 1), *W.shape[2:]))
    return np.concatenate(blocks, axis=0)


def _check_inputs(arch: NetworkArchitecture, inputs) -> Array:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None] if arch.input_dim == 1 else x[None, :]
    if x.ndim != 2 or x.shape[1] != arch.input_dim:
        raise DimensionMismatch(f"inputs must be (n, {arch.input_dim}), got {np.shape(inputs)}")
    return x


def forward(arch: NetworkArchitecture, weights, inputs) -> Array:
    """Evaluate the network for one weight vector.

    Returns an (n_samples, output_dim) array.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 1:
        raise DimensionMismatch("forward takes a single weight vector; use forward_ensemble")
    return forward_ensemble(arch, weights[:, None], inputs, flat=False)[0]


def forward_ensemble(arch: NetworkArchitecture, ensemble, inputs, flat: bool = True) -> Array:
    """Evaluate every column of an (N_m, N_e) weight ensemble.

    With ``flat=True`` (default) returns the (N_d, N_e) prediction matrix,
    N_d = n_samples * output_dim, flattened sample-major (all outputs of
    sample 1, then sample 2, ...). With ``flat=False`` returns the raw
    (N_e, n_samples, output_dim) array.
    """
    ensemble = np.asarray(ensemble, dtype=np.float64)
    if ensemble.ndim != 2:
        raise DimensionMismatch(f"ensemble must be 2-D (N_m, N_e), got {ensemble.shape}")
    x = _check_inputs(arch, inputs)
    layers = unflatten(arch, ensemble)
    hidden = ACTIVATIONS[arch.hidden_activation]
    # h: (N_e, n_samples, width)
    h = np.broadcast_to(x, (ensemble.shape[1], *x.shape))
    for i, (W, b) in enumerate(layers):
        # W: (fan_out, fan_in, N_e), b: (fan_out, N_e)
        z = np.einsum("esi,oie->eso", h, W) + b.T[:, None, :]
        act = ACTIVATIONS[arch.output_activation] if i == len(layers) - 1 else hidden
        h = act(z)
    if not flat:
        return h
    return h.reshape(h.shape[0], -1).T
