"""Adaptive explicit Runge-Kutta driver shared by all propagators.

Wraps scipy's embedded Dormand-Prince steppers so that callers get states at
requested output times (via the stepper's dense output) without storing the
whole trajectory.  State arrays of any shape and complex dtype are flattened
internally.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Tuple

import numpy as np
from scipy.integrate import DOP853, RK45

__all__ = ["IntegratorConfig", "IntegrationError", "iterate", "solve", "solve_final"]

_METHODS = {"DOP853": DOP853, "RK45": RK45}


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    max_step: float = np.inf
    method: str = "DOP853"

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}, choose from {sorted(_METHODS)}")

    def tightened(self, rel_tol: float, abs_tol: float | None = None) -> "IntegratorConfig":
        return IntegratorConfig(rel_tol, rel_tol * 1e-2 if abs_tol is None else abs_tol,
                                self.max_step, self.method)


class IntegrationError(RuntimeError):
    """Raised when the stepper fails; ``t_reached`` is the last accepted time."""

    def __init__(self, message: str, t_reached: float):
        super().__init__(f"{message} (t reached: {t_reached:.6g})")
        self.t_reached = t_reached


def iterate(fun: Callable, t0: float, y0: np.ndarray, t_eval, cfg: IntegratorConfig
            ) -> Iterator[Tuple[float, np.ndarray]]:
    """Yield ``(t, y(t))`` for each time in the monotone sequence ``t_eval``.

    ``fun(t, y)`` receives and returns arrays shaped like ``y0``.  The
    integration runs from ``t0`` to ``t_eval[-1]``, which may lie before
    ``t0`` (backward propagation).
    """
    y0 = np.asarray(y0)
    shape = y0.shape
    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    if t_eval.size == 0:
        return
    t_end = float(t_eval[-1])
    direction = 1.0 if t_end >= t0 else -1.0
    if np.any(direction * np.diff(t_eval) < 0) or direction * (t_eval[0] - t0) < 0:
        raise ValueError("t_eval must be monotone and lie on one side of t0")
    dtype = np.result_type(y0.dtype, float)
    y0 = y0.astype(dtype, copy=False)

    i = 0
    while i < t_eval.size and t_eval[i] == t0:
        yield float(t0), y0.copy()
        i += 1
    if i == t_eval.size:
        return

    def flat_fun(t, y):
        return np.asarray(fun(t, y.reshape(shape)), dtype=dtype).ravel()

    solver = _METHODS[cfg.method](flat_fun, t0, y0.ravel(), t_end, max_step=cfg.max_step,
                                  rtol=cfg.rel_tol, atol=cfg.abs_tol)
    while i < t_eval.size:
        msg = solver.step()
        if solver.status == "failed":
            raise IntegrationError(f"integration failed: {msg}", float(solver.t))
        t_new = solver.t
        n_new = i
        while n_new < t_eval.size and direction * (t_eval[n_new] - t_new) <= 0:
            n_new += 1
        if n_new > i:
            if t_eval[n_new - 1] == t_new and n_new - 1 == i:
                yield float(t_new), solver.y.reshape(shape).copy()
            else:
                dense = solver.dense_output()
                for j in range(i, n_new):
                    if t_eval[j] == t_new:
                        yield float(t_new), solver.y.reshape(shape).copy()
                    else:
                        yield float(t_eval[j]), dense(t_eval[j]).reshape(shape)
            i = n_new
        if solver.status == "finished" and i < t_eval.size:
            raise IntegrationError("solver finished before all output times", float(solver.t))


def solve(fun: Callable, t0: float, y0: np.ndarray, t_eval, cfg: IntegratorConfig) -> np.ndarray:
    """Stacked states at ``t_eval``, shape ``(len(t_eval),) + y0.shape``."""
    return np.stack([y for _, y in iterate(fun, t0, y0, t_eval, cfg)])


def solve_final(fun: Callable, t0: float, y0: np.ndarray, t1: float, cfg: IntegratorConfig) -> np.ndarray:
    for _, y in iterate(fun, t0, y0, [t1], cfg):
        pass
    return y
