"""Interpolating-process math.

The corruption path connects a clean latent z at t=0 to unit Gaussian
noise at t=1 through y = a(t) z + b(t) eps. This module holds the
schedule coefficients and their derivatives, the corruption and velocity
target used for training, and the velocity-to-score conversion used by
SDE sampling. Everything here is pure and stateless; functions accept
numpy arrays or torch tensors, and t may be a scalar or a per-sample
batch vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np
import torch

from .errors import SingularTimeError

Array = Union[np.ndarray, torch.Tensor]

# b(t) below this is treated as singular in the score conversion; samplers
# stop at t_min > 0 so they never hit it.
B_TOLERANCE = 1e-6


class ScheduleKind(Enum):
    LINEAR = "linear"


@dataclass(frozen=True)
class InterpolantSchedule:
    """Coefficient schedule a(t), b(t). Only the linear schedule is built."""

    kind: ScheduleKind = ScheduleKind.LINEAR


def _check_time(t) -> None:
    t = np.asarray(t)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError(f"t must lie in [0, 1], got {t}")


def schedule_eval(s: InterpolantSchedule, t):
    """Evaluate (a, b, a_dot, b_dot) at time t.

    t may be a float or a 1-d array; coefficients come back with the same
    shape. Boundary identities a(0)=1, a(1)=0, b(0)=0, b(1)=1 hold exactly.
    """
    _check_time(t)
    if s.kind is ScheduleKind.LINEAR:
        if np.ndim(t) == 0:
            tf = float(t)
            return 1.0 - tf, tf, -1.0, 1.0
        t = np.asarray(t)
        return 1.0 - t, t, np.full_like(t, -1.0), np.full_like(t, 1.0)
    raise NotImplementedError(f"schedule {s.kind} not implemented")


def _coeff_like(c, x: Array):
    """Shape a schedule coefficient so it broadcasts over the batch of x."""
    if np.ndim(c) == 0:
        return float(c)
    shape = (-1,) + (1,) * (x.ndim - 1)
    if isinstance(x, torch.Tensor):
        return torch.as_tensor(np.asarray(c), dtype=x.dtype).reshape(shape)
    return np.asarray(c, dtype=x.dtype).reshape(shape)


def _all_finite(x: Array) -> bool:
    if isinstance(x, torch.Tensor):
        return bool(torch.isfinite(x).all())
    return bool(np.isfinite(x).all())


@dataclass
class NoisyState:
    """A corrupted sample y = a(t) z + b(t) eps plus the draw that made it."""

    y: Array
    t: Union[float, np.ndarray]
    eps: Array


def corrupt(z: Array, eps: Array, t, s: InterpolantSchedule) -> NoisyState:
    """Corrupt z with noise eps at time t.

    For batched inputs t may be a length-B vector; coefficients then apply
    per sample along the leading axis.
    """
    if tuple(z.shape) != tuple(eps.shape):
        raise ValueError(f"z and eps shapes differ: {tuple(z.shape)} vs {tuple(eps.shape)}")
    if not (_all_finite(z) and _all_finite(eps)):
        raise ValueError("corrupt requires finite z and eps")
    a, b, _, _ = schedule_eval(s, t)
    y = _coeff_like(a, z) * z + _coeff_like(b, eps) * eps
    return NoisyState(y=y, t=t, eps=eps)


def velocity_target(z: Array, eps: Array, t, s: InterpolantSchedule) -> Array:
    """Training target a_dot(t) z + b_dot(t) eps for the velocity model."""
    if tuple(z.shape) != tuple(eps.shape):
        raise ValueError(f"z and eps shapes differ: {tuple(z.shape)} vs {tuple(eps.shape)}")
    _, _, a_dot, b_dot = schedule_eval(s, t)
    return _coeff_like(a_dot, z) * z + _coeff_like(b_dot, eps) * eps


def velocity_to_score(y: Array, v: Array, t, s: InterpolantSchedule) -> Array:
    """Convert a velocity into the score of the marginal at time t.

    score = (a_dot y - a v) / (b (a b_dot - a_dot b)). Rejects times where
    b(t) < B_TOLERANCE (the conversion is singular as b -> 0). For any
    consistent (y, v) built from the same (z, eps), the result equals
    -eps / b(t).
    """
    if tuple(y.shape) != tuple(v.shape):
        raise ValueError(f"y and v shapes differ: {tuple(y.shape)} vs {tuple(v.shape)}")
    a, b, a_dot, b_dot = schedule_eval(s, t)
    b_min = float(np.min(b)) if np.ndim(b) else float(b)
    if b_min < B_TOLERANCE:
        t_bad = float(np.min(t)) if np.ndim(t) else float(t)
        raise SingularTimeError(t_bad, b_min, B_TOLERANCE)
    denom = b * (a * b_dot - a_dot * b)
    num = _coeff_like(a_dot, y) * y - _coeff_like(a, v) * v
    return num / _coeff_like(denom, y)
