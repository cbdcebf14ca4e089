"""Static and Floquet-Bogoliubov states of the pair-excitation ladder.

For each quasimomentum pair ``+-k`` the Bogoliubov ansatz
``sum_n c_n |n, N-2n, n>`` reduces the many-body problem (N -> infinity at
fixed g) to a tridiagonal hermitian generator on ``n = 0..n_max``:

    A_nn(t) = 2 (g + delta cos Ft) n,    A_{n,n+1} = g (n + 1),
    delta = J (1 - cos kappa).

Static states diagonalize ``A`` at F = 0.  Floquet-Bogoliubov states are the
eigenvectors of the time-ordered exponential of ``-i A(t)`` over one Bloch
period.  That propagator is integrated in the interaction picture of the
diagonal part, which removes the stiff ``2(g+delta) n`` rotation and leaves
an off-diagonal generator of size ``g n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal, schur

from . import sweep
from .integrate import IntegratorConfig, solve_final
from .lattice import LatticeParams

__all__ = [
    "BogoliubovProblem",
    "BogoliubovSolution",
    "FloquetBogoliubov",
    "TruncationError",
    "static_matrix",
    "bogoliubov_frequency",
    "static_spectrum",
    "static_states",
    "ladder_propagator",
    "floquet_bogoliubov",
    "depletion",
    "depletion_diagram",
    "quasienergy_spectrum",
]

LADDER_CONFIG = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)


class TruncationError(RuntimeError):
    """The selected states did not converge in ``n_max``; ``trace`` lists (n_max, tail mass)."""

    def __init__(self, message, trace):
        super().__init__(f"{message}; tail-mass trace: {trace}")
        self.trace = trace


@dataclass(frozen=True)
class BogoliubovProblem:
    delta: float
    g: float
    F: float = 0.0
    n_max: int = 64
    k: Optional[int] = None

    def __post_init__(self):
        if self.n_max < 10:
            raise ValueError("n_max must be at least 10")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.F < 0:
            raise ValueError("F must be non-negative")

    @classmethod
    def from_params(cls, p: LatticeParams, k: int, n_max: int = 64, static: bool = False):
        kappa = 2 * math.pi * k / p.L
        return cls(p.J * (1 - math.cos(kappa)), p.g, 0.0 if static else p.F, n_max, k)

    def with_n_max(self, n_max: int) -> "BogoliubovProblem":
        return BogoliubovProblem(self.delta, self.g, self.F, n_max, self.k)

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.n_max + 1)


@dataclass
class BogoliubovSolution:
    coeffs: np.ndarray
    quasienergy: float
    depletion: float
    tail_mass: float

    @staticmethod
    def from_vector(c: np.ndarray, energy: float) -> "BogoliubovSolution":
        n = np.arange(c.size)
        w = np.abs(c) ** 2
        tail_start = c.size - max(1, int(math.ceil(0.1 * c.size)))
        return BogoliubovSolution(c, float(energy), float(np.sum(2 * n * w)),
                                  float(np.sum(w[tail_start:])))


def static_matrix(prob: BogoliubovProblem) -> np.ndarray:
    n = prob.n
    A = np.diag(2.0 * (prob.g + prob.delta) * n)
    off = prob.g * (n[:-1] + 1.0)
    A += np.diag(off, 1) + np.diag(off, -1)
    return A


def bogoliubov_frequency(g: float, delta: float) -> float:
    return 2.0 * math.sqrt(2.0 * g * delta + delta * delta)


@dataclass
class StaticSpectrum:
    eigenvalues: np.ndarray
    omega: float

    def gaps(self, count: int = 10) -> np.ndarray:
        return np.diff(self.eigenvalues[: count + 1])

    def max_gap_error(self, count: int = 10) -> float:
        return float(np.max(np.abs(self.gaps(count) / self.omega - 1.0)))


def static_spectrum(prob: BogoliubovProblem) -> StaticSpectrum:
    n = prob.n
    w = eigh_tridiagonal(2.0 * (prob.g + prob.delta) * n, prob.g * (n[:-1] + 1.0),
                         eigvals_only=True)
    return StaticSpectrum(np.sort(w), bogoliubov_frequency(prob.g, prob.delta))


def static_states(prob: BogoliubovProblem, count: Optional[int] = None) -> list[BogoliubovSolution]:
    """Eigenvectors of the static ladder ordered by depletion."""
    n = prob.n
    w, v = eigh_tridiagonal(2.0 * (prob.g + prob.delta) * n, prob.g * (n[:-1] + 1.0))
    sols = [BogoliubovSolution.from_vector(v[:, j], w[j]) for j in range(w.size)]
    sols.sort(key=lambda s: s.depletion)
    return sols[:count] if count else sols


def ladder_propagator(prob: BogoliubovProblem, cfg: IntegratorConfig = LADDER_CONFIG,
                      half_period: bool = True) -> np.ndarray:
    """Time-ordered exponential of ``-i A(t)`` over ``[0, 2 pi / F]``.

    ``A(t)`` is real symmetric with ``A(T - t) = A(t)``, so time reversal gives
    ``U(T) = U(T/2)^T U(T/2)`` and only half a period is integrated.  Pass
    ``half_period=False`` to integrate the full period instead.
    """
    if prob.F <= 0:
        raise ValueError("ladder propagator needs F > 0")
    g, d, F = prob.g, prob.delta, prob.F
    n = prob.n.astype(float)
    off = g * (n[:-1] + 1.0)
    T = 2 * math.pi / F

    # interaction picture: U = diag(exp(-i theta_n(t))) U_I,
    # theta_n(t) = 2 n (g t + (delta/F) sin Ft)
    def rhs(t, U):
        phi = 2.0 * (g * t + d / F * math.sin(F * t))
        e = np.exp(-1j * phi)
        out = np.zeros_like(U)
        out[:-1] += (off * e)[:, None] * U[1:]
        out[1:] += (off * np.conj(e))[:, None] * U[:-1]
        return -1j * out

    if half_period:
        # theta_n(T/2) = n g T since sin(pi) = 0
        U_I = solve_final(rhs, 0.0, np.eye(n.size, dtype=complex), T / 2, cfg)
        Uh = np.exp(-1j * n * g * T)[:, None] * U_I
        return Uh.T @ Uh
    U_I = solve_final(rhs, 0.0, np.eye(n.size, dtype=complex), T, cfg)
    return np.exp(-2j * n * g * T)[:, None] * U_I


@dataclass
class FloquetBogoliubov:
    solutions: list  # ordered by increasing depletion
    n_max: int
    converged: bool
    trace: list = field(default_factory=list)
    F: float = 0.0

    @property
    def ground(self) -> BogoliubovSolution:
        return self.solutions[0]


def _floquet_states(prob: BogoliubovProblem, cfg: IntegratorConfig) -> list[BogoliubovSolution]:
    U = ladder_propagator(prob, cfg)
    # complex Schur form of a normal matrix is diagonal with orthonormal vectors
    Tm, Z = schur(U, output="complex")
    lam = np.diag(Tm)
    F = prob.F
    E = np.mod(-F / (2 * math.pi) * np.angle(lam), F)
    sols = [BogoliubovSolution.from_vector(Z[:, j], E[j]) for j in range(lam.size)]
    sols.sort(key=lambda s: s.depletion)
    return sols


def floquet_bogoliubov(prob: BogoliubovProblem, n_states: int = 1, tail_tol: float = 1e-8,
                       n_cap: int = 4096, stall_factor: float = 0.1, strict: bool = True,
                       cfg: IntegratorConfig = LADDER_CONFIG) -> FloquetBogoliubov:
    """Floquet-Bogoliubov states with automatic truncation escalation.

    Starting from ``prob.n_max`` the truncation doubles until the ``n_states``
    lowest-depletion states carry less than ``tail_tol`` weight in the last
    10 % of the ladder, or ``n_cap`` is reached.  If a doubling fails to
    shrink the tail mass by at least ``stall_factor`` the ladder is treated as
    divergent (no normalizable Bogoliubov structure) and escalation stops.
    Non-convergence raises :class:`TruncationError` unless ``strict`` is off.
    """
    trace = []
    n_max = prob.n_max
    while True:
        sols = _floquet_states(prob.with_n_max(n_max), cfg)
        tail = max(s.tail_mass for s in sols[:n_states])
        trace.append((n_max, tail))
        if tail < tail_tol:
            return FloquetBogoliubov(sols, n_max, True, trace, prob.F)
        stalled = len(trace) > 1 and tail > stall_factor * trace[-2][1]
        if stalled or 2 * n_max > n_cap:
            if strict:
                raise TruncationError(f"no convergence up to n_max={n_max}", trace)
            return FloquetBogoliubov(sols, n_max, False, trace, prob.F)
        n_max *= 2


@dataclass
class DepletionResult:
    N_D: float
    saturated: bool
    per_k: dict

    def as_dict(self) -> dict:
        return {"N_D": self.N_D, "saturated": self.saturated}


def depletion(p: LatticeParams, state_index: int = 0, static: bool = False,
              n_start: int = 64, n_cap: int = 4096, **kw) -> DepletionResult:
    """Total depletion ``sum_{k>0} sum_n 2n |c_n^(k)|^2`` of the selected state.

    ``state_index`` picks the same position in the depletion ordering for every
    ``k``.  If any ``k`` fails to converge the result is flagged saturated and
    ``N_D`` is reported as ``inf``.
    """
    per_k = {}
    saturated = False
    for k in range(1, (p.L - 1) // 2 + 1):
        prob = BogoliubovProblem.from_params(p, k, n_start, static=static)
        if static or prob.F == 0:
            sols = static_states(prob)
            per_k[k] = sols[state_index].depletion
            continue
        res = floquet_bogoliubov(prob, n_states=state_index + 1, n_cap=n_cap, strict=False, **kw)
        if not res.converged:
            saturated = True
            per_k[k] = math.inf
        else:
            per_k[k] = res.solutions[state_index].depletion
    total = math.inf if saturated else float(sum(per_k.values()))
    return DepletionResult(total, saturated, per_k)


def _depletion_cell(params: dict) -> dict:
    p = LatticeParams(J=params["J"], g=params["g"], F=params["F"], L=params["L"])
    if p.g == 0:
        return {"N_D": 0.0, "saturated": False}
    r = depletion(p, n_start=params["n_start"], n_cap=params["n_cap"])
    return {"N_D": None if math.isinf(r.N_D) else r.N_D, "saturated": r.saturated}


@dataclass
class DepletionDiagram:
    F_over_J: np.ndarray
    g_over_J: np.ndarray
    N_D: np.ndarray  # inf where saturated, nan where the cell failed
    saturated: np.ndarray
    meta: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def rows(self):
        for i, g in enumerate(self.g_over_J):
            for j, F in enumerate(self.F_over_J):
                yield float(F), float(g), float(self.N_D[i, j]), bool(self.saturated[i, j])


def depletion_diagram(F_values: Sequence[float], g_values: Sequence[float], p_base: LatticeParams,
                      n_start: int = 32, n_cap: int = 4096, workers: int = 1,
                      cache: Optional[sweep.CellCache] = None) -> DepletionDiagram:
    """Ground-state depletion on the grid ``g_values x F_values`` (units of J).

    Cells whose truncation escalation stalls or hits ``n_cap`` are flagged
    saturated and carry ``N_D = inf``.
    """
    F_values = np.asarray(F_values, dtype=float)
    g_values = np.asarray(g_values, dtype=float)
    J = p_base.J
    cells = [{"J": J, "g": float(g * J), "F": float(F * J), "L": p_base.L,
              "n_start": n_start, "n_cap": n_cap}
             for g in g_values for F in F_values]
    out = sweep.run_cells(_depletion_cell, cells, workers=workers, cache=cache)
    nd = np.full(len(cells), np.nan)
    sat = np.zeros(len(cells), dtype=bool)
    for i, r in enumerate(out.results):
        if r is None:
            continue
        sat[i] = r["saturated"]
        nd[i] = math.inf if r["N_D"] is None else r["N_D"]
    shape = (len(g_values), len(F_values))
    meta = {"L": p_base.L, "J": J, "n_start": n_start, "n_cap": n_cap,
            "resolution": [len(F_values), len(g_values)], "cells_computed": out.computed, "cells_cached": out.cached}
    return DepletionDiagram(F_values, g_values, nd.reshape(shape), sat.reshape(shape), meta,
                            out.failures)


@dataclass
class QuasienergyPoint:
    F: float
    energies: np.ndarray  # folded to [0, F), ordered by depletion
    depletions: np.ndarray
    converged: bool

    def replicas(self, zones: Sequence[int] = (-1, 0, 1)) -> np.ndarray:
        return np.concatenate([self.energies + j * self.F for j in zones])

    def gap_deviation(self) -> float:
        """Largest deviation of successive gaps from the first, relative to F."""
        if self.energies.size < 3:
            return 0.0
        gaps = np.diff(self.energies)
        dev = (gaps - gaps[0] + 0.5 * self.F) % self.F - 0.5 * self.F
        return float(np.max(np.abs(dev)) / self.F)


def quasienergy_spectrum(p: LatticeParams, count: int, F_values: Sequence[float], k: int = 1,
                         n_start: int = 64, n_cap: int = 1024) -> list[QuasienergyPoint]:
    """Quasienergies of the ``count`` lowest-depletion Floquet-Bogoliubov states."""
    out = []
    for F in F_values:
        prob = BogoliubovProblem.from_params(p.replace(F=float(F)), k, n_start)
        res = floquet_bogoliubov(prob, n_states=count, n_cap=n_cap, strict=False)
        sols = res.solutions[:count]
        out.append(QuasienergyPoint(float(F), np.array([s.quasienergy for s in sols]),
                                    np.array([s.depletion for s in sols]), res.converged))
    return out
