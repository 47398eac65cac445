"""Planar rigid motions.

Poses are ``numpy`` arrays ``[x, y, theta]``. Tangent vectors use the
ordering ``[rho_x, rho_y, theta]``. Perturbations are applied on the right,
``X <- X * Exp(delta)``, everywhere in this package.
"""

from __future__ import annotations

import math

import numpy as np

_SMALL = 1e-9


def wrap(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    t = math.fmod(theta + math.pi, 2.0 * math.pi)
    if t <= 0.0:
        t += 2.0 * math.pi
    return t - math.pi


def pose(x: float, y: float, theta: float) -> np.ndarray:
    return np.array([x, y, wrap(theta)], dtype=float)


def rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    c, s = math.cos(a[2]), math.sin(a[2])
    return np.array(
        [a[0] + c * b[0] - s * b[1], a[1] + s * b[0] + c * b[1], wrap(a[2] + b[2])]
    )


def inverse(a: np.ndarray) -> np.ndarray:
    c, s = math.cos(a[2]), math.sin(a[2])
    return np.array([-c * a[0] - s * a[1], s * a[0] - c * a[1], wrap(-a[2])])


def between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Relative motion ``a^-1 * b``."""
    return compose(inverse(a), b)


def _v_coeffs(theta: float) -> tuple[float, float]:
    # sin(t)/t and (1 - cos(t))/t
    if abs(theta) < 1e-5:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0
    return math.sin(theta) / theta, 2.0 * math.sin(theta / 2.0) ** 2 / theta


def exp(tau: np.ndarray) -> np.ndarray:
    a, b = _v_coeffs(tau[2])
    return np.array(
        [a * tau[0] - b * tau[1], b * tau[0] + a * tau[1], wrap(tau[2])]
    )


def log(T: np.ndarray) -> np.ndarray:
    theta = wrap(T[2])
    a, b = _v_coeffs(theta)
    det = a * a + b * b
    return np.array(
        [(a * T[0] + b * T[1]) / det, (-b * T[0] + a * T[1]) / det, theta]
    )


def _jr_terms(tau) -> tuple[float, float, float, float]:
    r1, r2, th = tau
    if abs(th) < 1e-5:
        t2 = th * th
        sa, ca = 1.0 - t2 / 6.0, th / 2.0 - th * t2 / 24.0
        j13 = -r2 / 2.0 + r1 * th / 6.0
        j23 = r1 / 2.0 + r2 * th / 6.0
    else:
        # 1 - cos written as 2 sin^2(t/2) to avoid cancellation
        one_minus_cos = 2.0 * math.sin(th / 2.0) ** 2
        th_minus_sin = th - math.sin(th)
        sa, ca = math.sin(th) / th, one_minus_cos / th
        j13 = (r1 * th_minus_sin - r2 * one_minus_cos) / (th * th)
        j23 = (r1 * one_minus_cos + r2 * th_minus_sin) / (th * th)
    return sa, ca, j13, j23


def right_jacobian(tau: np.ndarray) -> np.ndarray:
    sa, ca, j13, j23 = _jr_terms(tau)
    return np.array([[sa, ca, j13], [-ca, sa, j23], [0.0, 0.0, 1.0]])


def right_jacobian_inv(tau: np.ndarray) -> np.ndarray:
    # block inverse of [[A, c], [0, 1]] where A is a scaled rotation
    sa, ca, j13, j23 = _jr_terms(tau)
    d = sa * sa + ca * ca
    a, b = sa / d, ca / d
    return np.array(
        [[a, -b, -(a * j13 - b * j23)], [b, a, -(b * j13 + a * j23)], [0.0, 0.0, 1.0]]
    )


def adjoint(T: np.ndarray) -> np.ndarray:
    c, s = math.cos(T[2]), math.sin(T[2])
    return np.array([[c, -s, T[1]], [s, c, -T[0]], [0.0, 0.0, 1.0]])


def interpolate(a: np.ndarray, b: np.ndarray, s: float) -> np.ndarray:
    """Linear in translation, shortest-arc in heading."""
    dth = wrap(b[2] - a[2])
    return np.array(
        [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]), wrap(a[2] + s * dth)]
    )


def transform_points(T: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Move body-frame points (N, 3) into the world; z passes through."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    c, s = math.cos(T[2]), math.sin(T[2])
    out = np.empty_like(pts)
    out[:, 0] = T[0] + c * pts[:, 0] - s * pts[:, 1]
    out[:, 1] = T[1] + s * pts[:, 0] + c * pts[:, 1]
    out[:, 2] = pts[:, 2]
    return out
