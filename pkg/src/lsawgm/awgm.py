"""Adaptive least-squares wavelet Galerkin loop on multitrees.

One outer iteration solves the normal equations on the current trial/test
pair with CGLS, estimates the dual residual on a cone around the trial set,
and enlarges the trial set by approximate bulk chasing.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .assembly import OperatorSpec, RieszConstants, operator_bounds
from .indexset import (
    MultiTree,
    Variant,
    complete_to_multitree,
    full_expansion_to_trial,
    reduced_multitree_cone,
    sparse_grid_sets,
    stable_expansion,
)
from .tensorapply import Operator

log = logging.getLogger(__name__)


class ResidualConstruction(enum.Enum):
    FULL_RES = "fullres"
    OPTIM_RES = "optimres"


class Status(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    SIZE_BUDGET = "size_budget"


class ConvergenceError(RuntimeError):
    """CGLS ran out of iterations; `residual` holds the last normal-equation residual."""

    def __init__(self, message: str, residual: float, iterate: np.ndarray):
        super().__init__(message)
        self.residual = residual
        self.iterate = iterate


class RhsSource(Protocol):
    def rhs(self, test_set: MultiTree) -> np.ndarray: ...


@dataclass
class AwgmParams:
    delta: float = 0.7
    omega_ls: float = 0.5
    gamma_ls: float = 0.01
    ell: int = 1
    expansion_variant: Variant = Variant.FULL
    residual_construction: ResidualConstruction = ResidualConstruction.OPTIM_RES
    epsilon: float = 1e-4
    max_iterations: int = 100
    cgls_max_iterations: int = 5000
    max_trial_size: int | None = None
    norm_binv_sq: float | None = None
    initial_J: int = 0

    def __post_init__(self):
        self.expansion_variant = Variant(self.expansion_variant)
        self.residual_construction = ResidualConstruction(self.residual_construction)
        for name in ("delta", "omega_ls", "gamma_ls"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.ell < 1:
            raise ValueError("ell must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1 or self.cgls_max_iterations < 1:
            raise ValueError("iteration limits must be positive")
        if self.initial_J < 0:
            raise ValueError("initial_J must be nonnegative")


@dataclass
class IterationRecord:
    k: int
    primal_res_norm: float
    dual_res_norm: float
    trial_size: int
    test_size: int
    xi_trial_size: int
    xi_test_size: int
    cgls_iterations: int


@dataclass
class ResidualResult:
    xi_test: MultiTree
    xi_trial: MultiTree
    r_check: np.ndarray
    r_hat: np.ndarray
    nu: float

    @property
    def primal_norm(self) -> float:
        return float(np.linalg.norm(self.r_check))


@dataclass
class RunResult:
    history: list[IterationRecord]
    trial_set: MultiTree
    test_set: MultiTree
    coefficients: np.ndarray
    status: Status
    sets: list[tuple[MultiTree, MultiTree, MultiTree, MultiTree]] = field(default_factory=list)
    iterates: list[np.ndarray] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def galsolve(spec: OperatorSpec, trial: MultiTree, test: MultiTree, f: np.ndarray, w0: np.ndarray | None, abs_tol: float,
             max_iterations: int = 5000, op: Operator | None = None) -> tuple[np.ndarray, int]:
    """CGLS for min ||f - B w|| over the trial set, stopped once ||B^T (f - B w)|| <= abs_tol."""
    op = op or Operator(spec, test, trial, check=False)
    w = np.zeros(len(trial)) if w0 is None else np.array(w0, dtype=float)
    r = f - op.matvec(w) if np.any(w) else np.array(f, dtype=float)
    s = op.rmatvec(r)
    p = s.copy()
    gam = float(s @ s)
    it = 0
    while math.sqrt(gam) > abs_tol:
        if it >= max_iterations:
            raise ConvergenceError(f"CGLS did not reach {abs_tol:.3e} in {max_iterations} iterations", math.sqrt(gam), w)
        q = op.matvec(p)
        qq = float(q @ q)
        if qq == 0.0:
            break
        a = gam / qq
        w += a * p
        r -= a * q
        s = op.rmatvec(r)
        gnew = float(s @ s)
        p = s + (gnew / gam) * p
        gam = gnew
        it += 1
    return w, it


def residual(spec: OperatorSpec, problem: RhsSource, trial: MultiTree, w: np.ndarray, params: AwgmParams) -> ResidualResult:
    """Primal residual on a stable expansion of the reduced cone, dual residual on the cone
    (OptimRes) or on the full trial expansion of the primal set (FullRes)."""
    xi_tmp = reduced_multitree_cone(trial, params.ell)
    xi_test = stable_expansion(xi_tmp, params.ell, params.expansion_variant)
    if params.residual_construction is ResidualConstruction.FULL_RES:
        xi_trial = full_expansion_to_trial(xi_test, params.ell)
    else:
        xi_trial = xi_tmp
    f = problem.rhs(xi_test)
    r_check = f - Operator(spec, xi_test, trial, check=False).matvec(w) if np.any(w) else f
    r_hat = Operator(spec, xi_test, xi_trial, check=False).rmatvec(r_check)
    return ResidualResult(xi_test, xi_trial, r_check, r_hat, float(np.linalg.norm(r_hat)))


def bulk_chase(values: np.ndarray, inside: np.ndarray, delta: float) -> np.ndarray:
    """Positions outside `inside` to add so that the selection holds a delta fraction of ||values||^2.

    Candidates are bucketed by floor(log2(max v^2 / v^2)) and taken bucket by
    bucket, ties broken by position; within a bucket squares differ by less
    than a factor 2, which keeps the prefix within twice the exact-sort minimum.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    values = np.asarray(values, dtype=float)
    total = float(values @ values)
    slack = (1.0 - delta**2) * total  # mass allowed to stay unselected
    out = np.flatnonzero(~inside & (values != 0.0))
    sq = values[out] ** 2
    if float(sq.sum()) <= slack:
        return np.zeros(0, dtype=np.int64)
    bucket = np.floor(np.log2(sq.max() / sq)).astype(np.int64)
    order = np.lexsort((out, bucket))
    # left-over mass after taking the first i+1 candidates, summed from the small end
    left = np.cumsum(sq[order][::-1])[::-1]
    left = np.append(left[1:], 0.0)
    n = int(np.argmax(left <= slack)) + 1
    return out[order[:n]]


def expand(trial: MultiTree, xi_trial: MultiTree, r_hat: np.ndarray, delta: float) -> MultiTree:
    """Bulk chasing on r_hat (indexed by xi_trial) followed by multitree completion."""
    inside = np.isin(xi_trial.keys, trial.keys)
    pick = bulk_chase(r_hat, inside, delta)
    if len(pick) == 0:
        return trial
    return complete_to_multitree(MultiTree(trial.tb, np.union1d(trial.keys, xi_trial.keys[pick])))


def stopping_constant(spec: OperatorSpec, params: AwgmParams, riesz: RieszConstants | None = None) -> float:
    """||B^-1||^2 for the stopping test."""
    if params.norm_binv_sq is not None:
        return float(params.norm_binv_sq)
    try:
        riesz = riesz or RieszConstants.estimate(spec.n)
        return operator_bounds(riesz, spec.alpha, spec.gamma).normBinv ** 2
    except Exception as exc:  # estimation is numerical and may fail on exotic setups
        log.warning("Riesz estimation failed (%s); stopping constant falls back to 1", exc)
        return 1.0


def _zero_extend(old: MultiTree, w: np.ndarray, new: MultiTree) -> np.ndarray:
    out = np.zeros(len(new))
    out[new.positions(old.keys)] = w
    return out


def ls_awgm(spec: OperatorSpec, problem: RhsSource, params: AwgmParams, initial_J: int | None = None,
            callback: Callable[[IterationRecord], None] | None = None, keep_sets: bool = False) -> RunResult:
    """Adaptive loop: GALSOLVE, RESIDUAL, stopping test, EXPAND."""
    J = params.initial_J if initial_J is None else initial_J
    j0, T = 2, 1.0
    trial, test = sparse_grid_sets(J, spec.n, j0, T)
    binv2 = stopping_constant(spec, params)
    nu_prev = residual(spec, problem, trial, np.zeros(len(trial)), params).nu
    w = np.zeros(len(trial))
    history: list[IterationRecord] = []
    sets, iterates = [], []
    status = Status.MAX_ITERATIONS
    for k in range(params.max_iterations):
        op = Operator(spec, test, trial, check=False)
        w, its = galsolve(spec, trial, test, problem.rhs(test), w, params.gamma_ls * nu_prev, params.cgls_max_iterations, op)
        res = residual(spec, problem, trial, w, params)
        rec = IterationRecord(k, res.primal_norm, res.nu, len(trial), len(test), len(res.xi_trial), len(res.xi_test), its)
        history.append(rec)
        if keep_sets:
            sets.append((trial, test, res.xi_trial, res.xi_test))
            iterates.append(w.copy())
        if callback:
            callback(rec)
        log.info("k=%d nu=%.3e #trial=%d #test=%d cgls=%d", k, res.nu, len(trial), len(test), its)
        if res.nu <= params.epsilon / binv2:
            status = Status.CONVERGED
            break
        if params.max_trial_size is not None and len(trial) >= params.max_trial_size:
            status = Status.SIZE_BUDGET
            break
        new = expand(trial, res.xi_trial, res.r_hat, params.delta)
        w = _zero_extend(trial, w, new)
        trial = new
        test = stable_expansion(trial, params.ell, params.expansion_variant)
        nu_prev = res.nu
    return RunResult(history, trial, test, w, status, sets, iterates)


def sparse_grid_solve(spec: OperatorSpec, problem: RhsSource, J_range, params: AwgmParams | None = None,
                      callback: Callable[[IterationRecord], None] | None = None, keep_sets: bool = False) -> RunResult:
    """Uniform sparse-grid baseline with the same solver and residual constructions."""
    params = params or AwgmParams()
    Js = list(J_range)
    if not Js or Js != sorted(Js):
        raise ValueError("J_range must be nonempty and ascending")
    history, sets, iterates = [], [], []
    w = trial = test = None
    nu_prev = None
    for k, J in enumerate(Js):
        prev = trial
        trial, test = sparse_grid_sets(J, spec.n)
        if nu_prev is None:
            nu_prev = residual(spec, problem, trial, np.zeros(len(trial)), params).nu
        w0 = _zero_extend(prev, w, trial) if prev is not None else None
        w, its = galsolve(spec, trial, test, problem.rhs(test), w0, params.gamma_ls * nu_prev, params.cgls_max_iterations)
        res = residual(spec, problem, trial, w, params)
        rec = IterationRecord(k, res.primal_norm, res.nu, len(trial), len(test), len(res.xi_trial), len(res.xi_test), its)
        history.append(rec)
        if keep_sets:
            sets.append((trial, test, res.xi_trial, res.xi_test))
            iterates.append(w.copy())
        if callback:
            callback(rec)
        nu_prev = res.nu
    return RunResult(history, trial, test, w, Status.CONVERGED, sets, iterates)
