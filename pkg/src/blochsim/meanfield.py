"""Gauge-frame DNLSE propagation, tangent dynamics and Lyapunov exponents."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .integrate import IntegratorConfig, iterate, solve_final
from .lattice import LatticeParams, MeanFieldState

__all__ = [
    "dnlse_rhs",
    "propagate",
    "propagate_series",
    "TangentVector",
    "tangent_rhs",
    "tangent_matrix",
    "propagate_with_tangent",
    "lyapunov",
    "transient_time",
]

DEFAULT_CONFIG = IntegratorConfig()


def _hop(x, J, F, t):
    # -(J/2) (e^{-iFt} x_{l+1} + e^{+iFt} x_{l-1})
    ph = np.exp(-1j * F * t)
    return -0.5 * J * (ph * np.roll(x, -1, axis=-1) + np.conj(ph) * np.roll(x, 1, axis=-1))


def dnlse_rhs(amps, t: float, p: LatticeParams) -> np.ndarray:
    """Time derivative of the site amplitudes, periodic boundary conditions.

    ``amps`` has shape ``(..., L)``; batches are evaluated in one call.
    """
    a = np.asarray(amps)
    return -1j * (_hop(a, p.J, p.F, t) + p.g * (np.abs(a) ** 2 - 1.0) * a)


def propagate(state: MeanFieldState, p: LatticeParams, t1: float,
              cfg: IntegratorConfig = DEFAULT_CONFIG) -> MeanFieldState:
    """Integrate from ``state.t`` to ``t1`` (``t1 < state.t`` runs backwards)."""
    if state.L != p.L:
        raise ValueError(f"state has {state.L} sites, params say {p.L}")
    a1 = solve_final(lambda t, a: dnlse_rhs(a, t, p), state.t, state.amps, t1, cfg)
    return MeanFieldState(a1, float(t1))


def propagate_series(state: MeanFieldState, p: LatticeParams, t_grid,
                     cfg: IntegratorConfig = DEFAULT_CONFIG):
    """Generator of ``MeanFieldState`` at each time of ``t_grid``."""
    if state.L != p.L:
        raise ValueError(f"state has {state.L} sites, params say {p.L}")
    for t, a in iterate(lambda t, a: dnlse_rhs(a, t, p), state.t, state.amps, t_grid, cfg):
        yield MeanFieldState(a, t)


@dataclass
class TangentVector:
    """Perturbation ``(da_1..da_L, da*_1..da*_L)`` with renormalization bookkeeping.

    The two halves are integrated as independent components; for a physical
    perturbation the lower half is the complex conjugate of the upper half.
    ``log_norm`` accumulates the logarithms of all rescalings applied so far,
    so the true perturbation norm is ``exp(log_norm) * |vec|``.
    """

    vec: np.ndarray
    log_norm: np.ndarray | float = 0.0
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.vec = np.asarray(self.vec, dtype=complex)
        if self.vec.shape[-1] % 2:
            raise ValueError("tangent vector needs an even number of components")
        self.log_norm = np.broadcast_to(np.asarray(self.log_norm, dtype=float),
                                        self.vec.shape[:-1]).copy()

    @classmethod
    def physical(cls, da) -> "TangentVector":
        da = np.asarray(da, dtype=complex)
        return cls(np.concatenate([da, np.conj(da)], axis=-1))

    @property
    def upper(self):
        return self.vec[..., : self.vec.shape[-1] // 2]

    @property
    def lower(self):
        return self.vec[..., self.vec.shape[-1] // 2:]

    def total_log_norm(self):
        return self.log_norm + np.log(np.linalg.norm(self.vec, axis=-1))


def tangent_rhs(amps, dvec, t: float, p: LatticeParams) -> np.ndarray:
    """``-i M[a(t)] dvec`` for the linearization of the gauge-frame DNLSE."""
    a = np.asarray(amps)
    L = a.shape[-1]
    u, w = dvec[..., :L], dvec[..., L:]
    rho = p.g * (2.0 * np.abs(a) ** 2 - 1.0)
    c = p.g * a * a
    du = _hop(u, p.J, p.F, t) + rho * u + c * w
    # conjugate hopping: phases swap sign
    dw = -_hop(w, p.J, -p.F, t) - rho * w - np.conj(c) * u
    return -1j * np.concatenate([du, dw], axis=-1)


def tangent_matrix(amps, t: float, p: LatticeParams) -> np.ndarray:
    """Dense ``2L x 2L`` generator ``M`` with ``i d(dvec)/dt = M dvec``."""
    a = np.asarray(amps)
    L = a.shape[-1]
    A = np.zeros((L, L), dtype=complex)
    for l in range(L):
        A[l, (l + 1) % L] += -0.5 * p.J * np.exp(-1j * p.F * t)
        A[l, (l - 1) % L] += -0.5 * p.J * np.exp(1j * p.F * t)
    D = np.diag(p.g * (2.0 * np.abs(a) ** 2 - 1.0))
    C = np.diag(p.g * a * a)
    return np.block([[A + D, C], [-np.conj(C), -np.conj(A + D)]])


def propagate_with_tangent(state: MeanFieldState, tangent: TangentVector, p: LatticeParams,
                           t1: float, cfg: IntegratorConfig = DEFAULT_CONFIG,
                           renorm_threshold: float = 1e6,
                           segment: Optional[float] = None) -> Tuple[MeanFieldState, TangentVector]:
    """Integrate trajectory and tangent vector jointly.

    The run is split into segments (default a quarter Bloch period); at every
    segment boundary tangent vectors whose norm exceeds ``renorm_threshold``
    are rescaled to unit norm and the logarithm of the factor is accumulated.
    """
    L = state.L
    if tangent.vec.shape[-1] != 2 * L:
        raise ValueError("tangent vector does not match the state dimension")
    if segment is None:
        segment = p.T_B / 4 if p.F > 0 else p.T_J / 4
    batch = np.broadcast_shapes(state.amps.shape[:-1], tangent.vec.shape[:-1])
    y = np.concatenate([np.broadcast_to(state.amps, batch + (L,)),
                        np.broadcast_to(tangent.vec, batch + (2 * L,))], axis=-1)
    log_norm = np.broadcast_to(tangent.log_norm, y.shape[:-1]).copy()
    history = list(tangent.history)

    def rhs(t, yy):
        a = yy[..., :L]
        return np.concatenate([dnlse_rhs(a, t, p), tangent_rhs(a, yy[..., L:], t, p)], axis=-1)

    t = state.t
    n_seg = max(1, int(math.ceil(abs(t1 - t) / segment - 1e-12)))
    edges = np.linspace(t, t1, n_seg + 1)
    for t_next in edges[1:]:
        y = solve_final(rhs, t, y, float(t_next), cfg)
        t = float(t_next)
        nrm = np.linalg.norm(y[..., L:], axis=-1)
        big = nrm > renorm_threshold
        if np.any(big):
            scale = np.where(big, nrm, 1.0)
            y[..., L:] /= scale[..., None]
            log_norm += np.log(scale)
            history.append((t, np.log(scale)))
    return MeanFieldState(y[..., :L], t), TangentVector(y[..., L:], log_norm, history)


def lyapunov(state0: MeanFieldState, tangent0: TangentVector, p: LatticeParams, T: float,
             n_samples: int, cfg: IntegratorConfig = DEFAULT_CONFIG,
             renorm_threshold: float = 1e6) -> np.ndarray:
    """Finite-time exponent ``lambda(t) = ln|da(t)| / t`` on ``n_samples`` times.

    The initial tangent vector is normalized to unit length.  Returns an
    array with columns ``t, lambda_1, ..., lambda_M`` (one column per
    batched trajectory, a single one for an unbatched state).
    """
    if T <= 0:
        raise ValueError("T must be positive")
    vec = tangent0.vec / np.linalg.norm(tangent0.vec, axis=-1, keepdims=True)
    tan = TangentVector(vec)
    state = state0
    times = state0.t + T * np.arange(1, n_samples + 1) / n_samples
    out = []
    for tn in times:
        state, tan = propagate_with_tangent(state, tan, p, float(tn), cfg, renorm_threshold)
        lam = tan.total_log_norm() / (tn - state0.t)
        out.append(np.concatenate([[tn], np.atleast_1d(lam)]))
    return np.array(out)


def transient_time(nu: float, F: float, filling: float) -> float:
    """Time for a perturbation of relative size ``filling**-1/2`` to grow to O(1).

    Evaluated as ``T_B * ln(1/eps) / nu`` with ``eps = filling**-1/2`` and
    ``nu`` the growth per Bloch period.  Diagnostic only.
    """
    if nu <= 0:
        return math.inf
    eps = filling ** -0.5
    return (2 * math.pi / F) * math.log(1.0 / eps) / nu
