"""Seeded parameter initialization."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ParameterError
from .rng import Rng
from .tensor import Tensor, tensor

SCHEMES = ("uniform_scaled", "zeros", "ones")


def seeded_init(shape, scheme: str, rng: Rng | None = None, name: str | None = None) -> Tensor:
    """Create a tensor of the given shape.

    ``uniform_scaled`` draws from U(-s, s) with s = sqrt(6 / (fan_in + fan_out)),
    where fan_out is the trailing dimension and fan_in the product of the rest.
    """
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ParameterError("seeded_init requires a non-empty shape")
    if any(s <= 0 for s in shape):
        raise ParameterError(f"seeded_init shape must be positive, got {shape}")
    if scheme == "zeros":
        return tensor(np.zeros(shape), name=name)
    if scheme == "ones":
        return tensor(np.ones(shape), name=name)
    if scheme != "uniform_scaled":
        raise ParameterError(f"unknown init scheme {scheme!r}; expected one of {SCHEMES}")
    if rng is None:
        raise ParameterError("uniform_scaled initialization requires an Rng")
    fan_out = shape[-1]
    fan_in = shape[0] if len(shape) == 1 else int(np.prod(shape[:-1]))
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return tensor(rng.uniform(-s, s, shape), name=name)
