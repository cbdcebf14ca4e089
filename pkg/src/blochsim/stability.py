"""Floquet stability of the uniform Bloch oscillation.

Each quasimomentum pair ``(b_{+k}, b*_{-k})`` linearized around the Bloch
oscillation evolves under the 2x2 generator ``-i g [[1, f], [-f*, -1]]`` with
``f(t) = exp(i (2J/F)(1 - cos kappa) sin Ft)``.  The one-period propagator of
this generator is the monodromy block; its largest eigenvalue modulus gives the
instability increment per Bloch period.  The full ``2L x 2L`` monodromy of the
site-space linearization is computed independently and block-diagonalized by
the lattice Fourier transform as a cross-check.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import sweep
from .integrate import IntegratorConfig, solve_final
from .lattice import LatticeParams, _fourier_matrix, bloch_oscillation, k_values
from .meanfield import tangent_matrix

log = logging.getLogger(__name__)

__all__ = [
    "BLOCK_CONFIG",
    "MonodromyBlock",
    "FullMonodromy",
    "StabilityDiagram",
    "monodromy_blocks",
    "stability_block",
    "increments",
    "increment",
    "full_monodromy",
    "critical_force",
    "stable_threshold_force",
    "stability_diagram",
]

# Tighter than the propagation default: det(U) = 1 must hold to 1e-9.
BLOCK_CONFIG = IntegratorConfig(rel_tol=1e-12, abs_tol=1e-14)


class BlockResidualError(RuntimeError):
    pass


@dataclass(frozen=True)
class MonodromyBlock:
    k: int
    U: np.ndarray
    eigenvalues: np.ndarray  # sorted |lambda_1| >= |lambda_2|
    nu_raw: float

    @property
    def elliptic(self) -> bool:
        # SU(1,1): eigenvalues lie on the unit circle iff |Re tr U| <= 2
        return abs(0.5 * (self.U[0, 0] + self.U[1, 1]).real) <= 1.0

    @property
    def nu(self) -> float:
        return 0.0 if self.elliptic else max(0.0, self.nu_raw)

    @property
    def det(self) -> complex:
        return complex(np.linalg.det(self.U))

    @property
    def stable(self) -> bool:
        return self.nu < 1e-6


def _block_generator_phases(p: LatticeParams, ks) -> np.ndarray:
    kap = 2 * np.pi * np.asarray(ks, dtype=float) / p.L
    return 2 * p.J / p.F * (1 - np.cos(kap))


def monodromy_blocks(p: LatticeParams, ks=None, cfg: IntegratorConfig = BLOCK_CONFIG) -> np.ndarray:
    """One-period propagators for several ``k`` at once, shape ``(K, 2, 2)``."""
    if p.F <= 0:
        raise ValueError("stability blocks need F > 0")
    if ks is None:
        ks = np.arange(1, (p.L - 1) // 2 + 1)
    ks = np.atleast_1d(ks)
    if ks.size == 0:
        return np.zeros((0, 2, 2), dtype=complex)
    amp = _block_generator_phases(p, ks)
    g, F = p.g, p.F

    def rhs(t, U):
        f = np.exp(1j * amp * math.sin(F * t))[:, None]
        out = np.empty_like(U)
        out[:, 0] = U[:, 0] + f * U[:, 1]
        out[:, 1] = -np.conj(f) * U[:, 0] - U[:, 1]
        return -1j * g * out

    U0 = np.broadcast_to(np.eye(2, dtype=complex), (ks.size, 2, 2)).copy()
    if g == 0:
        return U0
    return solve_final(rhs, 0.0, U0, p.T_B, cfg)


def _make_block(k: int, U: np.ndarray) -> MonodromyBlock:
    ev = np.linalg.eigvals(U)
    ev = ev[np.argsort(-np.abs(ev))]
    return MonodromyBlock(int(k), U, ev, float(np.log(np.abs(ev[0]))))


def stability_block(k: int, p: LatticeParams, cfg: IntegratorConfig = BLOCK_CONFIG) -> MonodromyBlock:
    if not 1 <= abs(k) <= (p.L - 1) // 2:
        raise ValueError(f"k must satisfy 1 <= |k| <= {(p.L - 1) // 2}")
    return _make_block(k, monodromy_blocks(p, [k], cfg)[0])


def increments(p: LatticeParams, cfg: IntegratorConfig = BLOCK_CONFIG) -> list[MonodromyBlock]:
    ks = np.arange(1, (p.L - 1) // 2 + 1)
    return [_make_block(k, U) for k, U in zip(ks, monodromy_blocks(p, ks, cfg))]


def increment(p: LatticeParams, cfg: IntegratorConfig = BLOCK_CONFIG) -> float:
    """``max_k nu^(k)``; zero exactly when every block is on the unit circle."""
    blocks = increments(p, cfg)
    return max((b.nu for b in blocks), default=0.0)


@dataclass
class FullMonodromy:
    U: np.ndarray  # site representation, 2L x 2L
    U_modes: np.ndarray  # after the Fourier similarity transform
    blocks: dict  # k -> 2x2
    offblock_residual: float

    def block_moduli(self, k: int) -> np.ndarray:
        return np.sort(np.abs(np.linalg.eigvals(self.blocks[k])))[::-1]


def full_monodromy(p: LatticeParams, cfg: IntegratorConfig = BLOCK_CONFIG,
                   residual_tol: float = 1e-6) -> FullMonodromy:
    """Monodromy of the ``2L``-dimensional tangent flow around the Bloch oscillation."""
    L = p.L

    def rhs(t, U):
        a = bloch_oscillation(p, t)
        return -1j * (tangent_matrix(a, t, p) @ U)

    U = solve_final(rhs, 0.0, np.eye(2 * L, dtype=complex), p.T_B, cfg)
    T = _fourier_matrix(L)
    V = np.block([[T, np.zeros_like(T)], [np.zeros_like(T), T]])
    Um = V @ U @ V.conj().T
    blocks = {}
    mask = np.ones_like(Um, dtype=bool)
    for i, k in enumerate(k_values(L)):
        idx = np.array([i, L + i])
        blocks[int(k)] = Um[np.ix_(idx, idx)]
        mask[np.ix_(idx, idx)] = False
    resid = float(np.abs(Um[mask]).max()) if mask.any() else 0.0
    if resid > residual_tol:
        raise BlockResidualError(f"off-block residual {resid:.3g} exceeds {residual_tol:g}")
    return FullMonodromy(U, Um, blocks, resid)


def critical_force(g: float, J: float = 1.0) -> float:
    """Approximate large-L stability boundary.

    ``3g`` while that is below ``2.9 J``, otherwise ``2.96 sqrt(g J)``.  The
    branch condition is phrased in F, so for ``g/J`` between about 0.96 and
    0.97 both readings are possible; the rule is applied literally.
    """
    F = 3.0 * g
    if F < 2.9 * J:
        return F
    return 2.96 * math.sqrt(g * J)


def stable_threshold_force(p_base: LatticeParams, F_lo: float, F_hi: float, n_scan: int = 200,
                           threshold: float = 1e-6, xtol: float = 1e-4,
                           cfg: IntegratorConfig = BLOCK_CONFIG) -> float:
    """Lower edge of the connected large-F region where ``nu < threshold``.

    Scans ``n_scan`` forces down from ``F_hi`` and bisects the first
    unstable/stable bracket.  Returns ``F_lo`` if no instability is found and
    ``nan`` if ``F_hi`` itself is unstable.
    """
    def nu(F):
        return increment(p_base.replace(F=F), cfg)

    Fs = np.linspace(F_hi, F_lo, n_scan)
    if nu(Fs[0]) >= threshold:
        return math.nan
    prev = Fs[0]
    for F in Fs[1:]:
        if nu(F) >= threshold:
            lo, hi = F, prev
            while hi - lo > xtol:
                mid = 0.5 * (lo + hi)
                if nu(mid) >= threshold:
                    lo = mid
                else:
                    hi = mid
            return hi
        prev = F
    return F_lo


@dataclass
class StabilityDiagram:
    F_over_J: np.ndarray
    g_over_J: np.ndarray
    nu: np.ndarray  # shape (len(g), len(F))
    meta: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def rows(self):
        for i, g in enumerate(self.g_over_J):
            for j, F in enumerate(self.F_over_J):
                yield float(F), float(g), float(self.nu[i, j])


def _stability_cell(params: dict) -> dict:
    p = LatticeParams(J=params["J"], g=params["g"], F=params["F"], L=params["L"])
    return {"nu": increment(p)}


def grid_axis(lo: float, hi: float, n: int, open_low: bool = False) -> np.ndarray:
    """``n`` points on ``[lo, hi]``, or on ``(lo, hi]`` when ``open_low``."""
    if n < 2:
        raise ValueError("resolution must be at least 2 per axis")
    if open_low:
        return lo + (hi - lo) * np.arange(1, n + 1) / n
    return np.linspace(lo, hi, n)


def stability_diagram(F_values: Sequence[float], g_values: Sequence[float], p_base: LatticeParams,
                      workers: int = 1, cache: Optional[sweep.CellCache] = None) -> StabilityDiagram:
    """``max_k nu^(k)`` on the grid ``g_values x F_values`` (in units of J).

    Failed cells become NaN and are listed in ``failures``; the sweep never
    aborts on a single cell.
    """
    F_values = np.asarray(F_values, dtype=float)
    g_values = np.asarray(g_values, dtype=float)
    if np.any(F_values <= 0) or np.any(g_values < 0):
        raise ValueError("F must be positive and g non-negative")
    J = p_base.J
    cells = [{"J": J, "g": float(g * J), "F": float(F * J), "L": p_base.L}
             for g in g_values for F in F_values]
    out = sweep.run_cells(_stability_cell, cells, workers=workers, cache=cache)
    nu = np.array([r["nu"] if r is not None else np.nan for r in out.results])
    nu = nu.reshape(len(g_values), len(F_values))
    meta = {"L": p_base.L, "J": J, "resolution": [len(F_values), len(g_values)],
            "block_rel_tol": BLOCK_CONFIG.rel_tol, "cells_computed": out.computed,
            "cells_cached": out.cached}
    return StabilityDiagram(F_values, g_values, nu, meta, out.failures)
