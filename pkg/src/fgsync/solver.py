"""Levenberg-Marquardt on planar poses.

Every factor contributes a whitened residual ``W (h(x) - z)`` where ``W`` is
the symmetric inverse square root of its covariance. Relative factors map
their error through the group logarithm, and Jacobians are taken with
respect to right perturbations ``X * Exp(delta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import se2
from .errors import RankDeficientError
from .graph import FactorGraph, FactorKind, FactorNode
from .preintegration import PreintegratedMotion, preintegrate  # noqa: F401  (re-export)

LAMBDA_INIT = 1e-4
MAX_ITERATIONS = 100
REL_TOL = 1e-9
STEP_TOL = 1e-10

CONVERGENCE = {
    "lambda_init": LAMBDA_INIT,
    "max_iterations": MAX_ITERATIONS,
    "relative_error_tol": REL_TOL,
    "step_inf_tol": STEP_TOL,
}


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A: np.ndarray
    b: np.ndarray
    columns: tuple  # var id for each 3-column block


def _relative_error(z: np.ndarray, xi: np.ndarray, xj: np.ndarray) -> tuple[np.ndarray, list]:
    """``Log(z^-1 Xi^-1 Xj)`` and its Jacobians, written out in scalars."""
    xi0, xi1, xi2 = xi.tolist()
    xj0, xj1, xj2 = xj.tolist()
    z0, z1, z2 = z.tolist()
    ci, si = math.cos(xi2), math.sin(xi2)
    dx, dy = xj0 - xi0, xj1 - xi1
    mx, my = ci * dx + si * dy, -si * dx + ci * dy
    mt = se2.wrap(xj2 - xi2)
    cz, sz = math.cos(z2), math.sin(z2)
    ux, uy = mx - z0, my - z1
    th = se2.wrap(mt - z2)
    a, b = se2._v_coeffs(th)
    det = a * a + b * b
    px, py = cz * ux + sz * uy, -sz * ux + cz * uy
    e = ((a * px + b * py) / det, (-b * px + a * py) / det, th)
    # Jr^-1(e) = [[p, -q, c1], [q, p, c2], [0, 0, 1]]
    sa, ca, j13, j23 = se2._jr_terms(e)
    d = sa * sa + ca * ca
    p, q = sa / d, ca / d
    c1, c2 = -(p * j13 - q * j23), -(q * j13 + p * j23)
    jj = np.array([[p, -q, c1], [q, p, c2], [0.0, 0.0, 1.0]])
    # -Jr^-1 times the adjoint of m^-1
    cm, sm = math.cos(mt), math.sin(mt)
    u, v = sm * mx - cm * my, cm * mx + sm * my
    ji = np.array(
        [
            [-(p * cm + q * sm), -(p * sm - q * cm), -(p * u - q * v + c1)],
            [-(q * cm - p * sm), -(q * sm + p * cm), -(q * u + p * v + c2)],
            [0.0, 0.0, -1.0],
        ]
    )
    return np.array(e), [ji, jj]


def raw_error(factor: FactorNode, states: dict) -> tuple[np.ndarray, list]:
    """Unwhitened error and its Jacobian blocks, one per connected variable."""
    z = factor.measurement
    if factor.kind is FactorKind.PRIOR_POSITION:
        x = states[factor.var_ids[0]]
        e = x[:2] - z
        J = np.zeros((2, 3))
        J[:, :2] = se2.rot(x[2])
        return e, [J]
    if factor.kind is FactorKind.ANCHOR:
        x = states[factor.var_ids[0]]
        e = se2.log(se2.between(z, x))
        return e, [se2.right_jacobian_inv(e)]
    return _relative_error(z, states[factor.var_ids[0]], states[factor.var_ids[1]])


def residual(factor: FactorNode, states: dict) -> tuple[np.ndarray, list]:
    e, blocks = raw_error(factor, states)
    W = factor.sqrt_info
    return W @ e, [W @ J for J in blocks]


def solver_error(g: FactorGraph, solution: dict) -> float:
    """Sum of squared Mahalanobis distances over the factors of ``g``."""
    total = 0.0
    for f in g.factors.values():
        r, _ = residual(f, solution)
        total += float(r @ r)
    return total


def _active_factors(g: FactorGraph, free: set) -> list[FactorNode]:
    return [g.factors[k] for k in sorted(g.factors) if free.intersection(g.factors[k].var_ids)]


def linearize(factors: list[FactorNode], states: dict, columns: tuple) -> LinearSystem:
    col = {v: 3 * i for i, v in enumerate(columns)}
    rows = sum(f.dim for f in factors)
    A = np.zeros((rows, 3 * len(columns)))
    b = np.zeros(rows)
    r0 = 0
    for f in factors:
        r, blocks = residual(f, states)
        d = r.shape[0]
        b[r0 : r0 + d] = r
        for v, J in zip(f.var_ids, blocks):
            if v in col:
                A[r0 : r0 + d, col[v] : col[v] + 3] = J
        r0 += d
    return LinearSystem(A, b, columns)


def rank_deficiency(system: LinearSystem) -> int:
    A = system.A
    if A.size == 0:
        return A.shape[1]
    norms = np.linalg.norm(A, axis=0)
    scaled = A / np.where(norms > 0, norms, 1.0)
    rank = np.linalg.matrix_rank(scaled, tol=1e-9 * max(A.shape))
    return A.shape[1] - int(rank)


def initialize(g: FactorGraph, known: dict) -> dict:
    """Seed unknown poses by dead reckoning from already-solved ones."""
    states = {k: np.array(v, dtype=float) for k, v in known.items()}
    pending = sorted(v for v in g.variables if v not in states)
    factors = [g.factors[k] for k in sorted(g.factors)]
    for f in factors:
        if f.kind is FactorKind.ANCHOR and f.var_ids[0] not in states:
            states[f.var_ids[0]] = f.measurement.copy()
    progress = True
    while progress:
        progress = False
        for f in factors:
            if len(f.var_ids) != 2:
                continue
            a, b = f.var_ids
            if a in states and b not in states:
                states[b] = se2.compose(states[a], f.measurement)
                progress = True
            elif b in states and a not in states:
                states[a] = se2.compose(states[b], se2.inverse(f.measurement))
                progress = True
    t_of = {k: v.t_ns for k, v in g.variables.items()}
    for vid in pending:
        if vid in states:
            continue
        seeded = [k for k in states if k in t_of]
        if seeded:
            nearest = min(seeded, key=lambda k: (abs(t_of[k] - t_of[vid]), k))
            base = states[nearest].copy()
        else:
            base = np.zeros(3)
        for f in factors:
            if f.kind is FactorKind.PRIOR_POSITION and f.var_ids[0] == vid:
                base[:2] = f.measurement
                break
        states[vid] = base
    return states


@dataclass(frozen=True, eq=False)
class SolveResult:
    solution: dict
    final_error: float
    iterations: int

    def __iter__(self):
        return iter((self.solution, self.final_error, self.iterations))


def optimize(
    g: FactorGraph,
    initial: dict,
    free: Optional[Iterable[int]] = None,
    epoch: Optional[int] = None,
) -> SolveResult:
    """Minimise the whitened objective over the ``free`` variables.

    Variables referenced by factors but not free are held at their
    ``initial`` values. ``free`` defaults to all variables owned by ``g``.
    Only factors touching a free variable enter the objective.
    """
    free_set = set(g.variables if free is None else free)
    columns = tuple(sorted(free_set))
    factors = _active_factors(g, free_set)
    states = {k: np.array(v, dtype=float) for k, v in initial.items()}
    missing = {v for f in factors for v in f.var_ids} - set(states)
    if missing:
        raise ValueError(f"no initial value for variables {sorted(missing)}")

    system = linearize(factors, states, columns)
    deficiency = rank_deficiency(system)
    if deficiency:
        raise RankDeficientError(deficiency, epoch)

    err = float(system.b @ system.b)
    lam = LAMBDA_INIT
    it = 0
    while it < MAX_ITERATIONS and err > 0.0:
        it += 1
        A, b = system.A, system.b
        H = A.T @ A
        grad = A.T @ b
        H_damped = H + lam * np.diag(np.diag(H))
        try:
            delta = -np.linalg.solve(H_damped, grad)
        except np.linalg.LinAlgError as exc:
            raise RankDeficientError(rank_deficiency(system), epoch) from exc
        trial = dict(states)
        for i, v in enumerate(columns):
            trial[v] = se2.compose(states[v], se2.exp(delta[3 * i : 3 * i + 3]))
        trial_system = linearize(factors, trial, columns)
        trial_err = float(trial_system.b @ trial_system.b)
        step_small = np.max(np.abs(delta)) < STEP_TOL
        if trial_err <= err:
            converged = abs(err - trial_err) <= REL_TOL * err
            states, system, err = trial, trial_system, trial_err
            lam = max(lam / 10.0, 1e-12)
            if converged or step_small:
                break
        else:
            lam *= 10.0
            if step_small or lam > 1e12:
                break

    solution = {v: states[v] for v in columns}
    return SolveResult(solution, err, it)
