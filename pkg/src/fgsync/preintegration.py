"""Preintegration of body-rate samples into one relative planar motion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import se2
from .core import BodyRatePayload, Measurement, to_ns
from .errors import DataError


@dataclass(frozen=True, eq=False)
class PreintegratedMotion:
    relative_pose: np.ndarray
    covariance: np.ndarray
    t_a: float
    t_b: float
    first_sample_shift: float
    n_samples: int


def preintegrate(samples: Sequence[Measurement], t_a: float, t_b: float) -> PreintegratedMotion:
    """Compose piecewise-constant body rates over ``[t_a, t_b]``.

    Sample ``k`` holds from its own timestamp (the first one from ``t_a``)
    until the next sample, the last one until ``t_b``. Each dwell is
    integrated exactly as a constant twist, and the covariance is carried
    to first order in the right-perturbation frame of the running pose.
    """
    if not samples:
        raise DataError("preintegration needs at least one continuous sample")
    a_ns, b_ns = to_ns(t_a), to_ns(t_b)
    if b_ns <= a_ns:
        raise DataError("preintegration interval is empty")
    for s in samples:
        if not isinstance(s.payload, BodyRatePayload):
            raise DataError(f"{s!r} is not a body-rate measurement")
        if not a_ns <= s.t_ns <= b_ns:
            raise DataError(f"{s!r} lies outside [{t_a}, {t_b}]")

    starts = [a_ns] + [s.t_ns for s in samples[1:]]
    ends = [s.t_ns for s in samples[1:]] + [b_ns]

    T = np.zeros(3)
    cov = np.zeros((3, 3))
    for s, start, end in zip(samples, starts, ends):
        dt = (end - start) / 1e9
        if dt <= 0:
            continue
        p = s.payload
        xi = dt * np.array([p.velocity[0], p.velocity[1], p.yaw_rate])
        step = se2.exp(xi)
        ad = se2.adjoint(se2.inverse(step))
        jr = se2.right_jacobian(xi)
        cov = ad @ cov @ ad.T + dt * dt * (jr @ s.noise_covariance @ jr.T)
        T = se2.compose(T, step)

    cov = 0.5 * (cov + cov.T)
    return PreintegratedMotion(
        relative_pose=T,
        covariance=cov,
        t_a=t_a,
        t_b=t_b,
        first_sample_shift=(samples[0].t_ns - a_ns) / 1e9,
        n_samples=len(samples),
    )
