"""Lattice parameters, mean-field state containers and observables.

Units: hbar = 1 and lattice period d = 1, so F is both a force and an
energy and the Bloch period is ``2*pi/F``.

All states live in the gauge frame in which the static tilt appears as the
time-periodic hopping phases ``exp(+-iFt)``; the lab frame is never used.

Quasimomentum modes are stored in the order ``k = -(L-1)/2, ..., (L-1)/2``
and are related to site amplitudes by

    b_k = L**-1/2 * sum_l exp(+i kappa_k l) a_l,   kappa_k = 2 pi k / L,

with sites labelled ``l = 1..L``.

Note on the momentum: for the exact Bloch oscillation ``a_l = exp(i(J/F)
sin Ft)`` the normalized momentum evaluates to ``-sin(Ft)``.  The formulas are
kept exactly as they are usually printed; no phase is shifted to turn this
into a cosine.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

__all__ = [
    "LatticeParams",
    "MeanFieldState",
    "ModeState",
    "k_values",
    "kappa_values",
    "to_modes",
    "to_sites",
    "momentum",
    "mode_populations",
    "energy",
    "uniform_state",
    "bloch_oscillation",
]


@dataclass(frozen=True)
class LatticeParams:
    """Physical parameters of the tilted ring lattice.

    ``g`` is the macroscopic interaction ``W * N / L``.  For many-body runs
    either give ``W`` and ``N`` (``g`` is then derived when omitted) or all
    three consistently.
    """

    J: float = 1.0
    g: Optional[float] = None
    F: float = 0.0
    L: int = 5
    W: Optional[float] = None
    N: Optional[int] = None

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1 or self.L % 2 == 0:
            raise ValueError(f"L must be an odd positive integer, got {self.L}")
        object.__setattr__(self, "L", int(self.L))
        if self.N is not None:
            if int(self.N) != self.N or self.N < 1:
                raise ValueError(f"N must be a positive integer, got {self.N}")
            object.__setattr__(self, "N", int(self.N))
        g = self.g
        if g is None:
            if self.W is None or self.N is None:
                raise ValueError("either g or both W and N must be given")
            g = self.W * self.N / self.L
            object.__setattr__(self, "g", float(g))
        elif self.W is not None and self.N is not None:
            g_micro = self.W * self.N / self.L
            if abs(g - g_micro) > 1e-12 * max(abs(g), abs(g_micro), 1e-300):
                raise ValueError(f"inconsistent g={g} and W*N/L={g_micro}")
        if self.J < 0 or self.g < 0:
            raise ValueError("J and g must be non-negative")
        if self.F < 0:
            raise ValueError("F must be non-negative")

    @property
    def filling(self) -> float:
        if self.N is None:
            raise ValueError("filling factor needs N")
        return self.N / self.L

    @property
    def T_B(self) -> float:
        if self.F <= 0:
            raise ValueError("Bloch period needs F > 0")
        return 2 * math.pi / self.F

    @property
    def T_J(self) -> float:
        return 2 * math.pi / self.J

    @property
    def T_W(self) -> float:
        if not self.W:
            raise ValueError("revival period needs W > 0")
        return 2 * math.pi / self.W

    def replace(self, **changes) -> "LatticeParams":
        d = dict(J=self.J, g=self.g, F=self.F, L=self.L, W=self.W, N=self.N)
        d.update(changes)
        # keep g consistent when the microscopic pair changes
        if ("W" in changes or "N" in changes or "L" in changes) and "g" not in changes:
            if d["W"] is not None and d["N"] is not None:
                d["g"] = None
        return LatticeParams(**d)

    def as_dict(self) -> dict:
        return dict(J=self.J, g=self.g, F=self.F, L=self.L, W=self.W, N=self.N)


@dataclass(frozen=True)
class MeanFieldState:
    """Site amplitudes ``a_l`` in the gauge frame.

    ``amps`` may carry leading batch axes, shape ``(..., L)``; the last axis
    is always the site index.
    """

    amps: np.ndarray
    t: float = 0.0
    frame: str = field(default="gauge-rotating")

    def __post_init__(self):
        a = np.asarray(self.amps, dtype=complex)
        if a.ndim < 1:
            raise ValueError("amps needs at least one axis")
        object.__setattr__(self, "amps", a)
        if self.frame != "gauge-rotating":
            raise ValueError(f"unsupported frame {self.frame!r}")

    @property
    def L(self) -> int:
        return self.amps.shape[-1]

    @property
    def norm(self):
        return np.sum(np.abs(self.amps) ** 2, axis=-1)


@dataclass(frozen=True)
class ModeState:
    """Quasimomentum amplitudes ``b_k`` stored for ``k = -(L-1)/2 .. (L-1)/2``."""

    modes: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.modes, dtype=complex)
        if b.ndim < 1:
            raise ValueError("modes needs at least one axis")
        object.__setattr__(self, "modes", b)

    @property
    def L(self) -> int:
        return self.modes.shape[-1]

    @property
    def k(self) -> np.ndarray:
        return k_values(self.L)

    @property
    def kappa(self) -> np.ndarray:
        return kappa_values(self.L)

    def index_of(self, k: int) -> int:
        return int(k) + (self.L - 1) // 2


def k_values(L: int) -> np.ndarray:
    h = (L - 1) // 2
    return np.arange(-h, h + 1)


def kappa_values(L: int) -> np.ndarray:
    return 2 * np.pi * k_values(L) / L


def _fourier_matrix(L: int) -> np.ndarray:
    # T[k, l] = L^-1/2 exp(i kappa_k l), l = 1..L
    sites = np.arange(1, L + 1)
    return np.exp(1j * np.outer(kappa_values(L), sites)) / math.sqrt(L)


def to_modes(state: MeanFieldState) -> ModeState:
    T = _fourier_matrix(state.L)
    return ModeState(state.amps @ T.T, state.t)


def to_sites(modes: ModeState) -> MeanFieldState:
    T = _fourier_matrix(modes.L)
    return MeanFieldState(modes.modes @ T.conj(), modes.t)


def momentum(state: Union[MeanFieldState, ModeState], F: float, t: Optional[float] = None):
    """Normalized momentum ``p(t)/L`` from either representation.

    The exact Bloch oscillation gives ``-sin(Ft)``, bounded by 1 in modulus.
    """
    t = state.t if t is None else t
    if isinstance(state, ModeState):
        return momentum_modes(state.modes, F, t)
    return momentum_sites(state.amps, F, t)


def momentum_sites(amps, F: float, t) -> np.ndarray:
    """``(1/2iL) [sum_l a*_{l+1} a_l e^{-iFt} - c.c.]`` for amplitudes ``(..., L)``.

    ``t`` may be a scalar or broadcast against the leading axes.
    """
    a = np.asarray(amps)
    L = a.shape[-1]
    s = np.sum(np.conj(np.roll(a, -1, axis=-1)) * a, axis=-1)
    return np.imag(s * np.exp(-1j * F * np.asarray(t))) / L


def momentum_modes(modes, F: float, t) -> np.ndarray:
    """``sum_k |b_k|^2 sin(kappa_k - Ft) / L`` for modes ``(..., L)``."""
    b = np.asarray(modes)
    L = b.shape[-1]
    kap = kappa_values(L)
    t = np.asarray(t)
    ph = np.sin(kap - F * t[..., None]) if t.ndim else np.sin(kap - F * t)
    return np.sum(np.abs(b) ** 2 * ph, axis=-1) / L


def mode_populations(modes: ModeState) -> np.ndarray:
    """``|b_k|^2 / L``; equipartition gives ``1/L`` for each mode."""
    return np.abs(modes.modes) ** 2 / modes.L


def energy(state: MeanFieldState, p: LatticeParams, t: Optional[float] = None) -> np.ndarray:
    """Gauge-frame Hamiltonian function, explicitly time dependent."""
    t = state.t if t is None else t
    a = state.amps
    hop = np.sum(np.exp(1j * p.F * t) * np.conj(np.roll(a, -1, axis=-1)) * a, axis=-1)
    n = np.abs(a) ** 2
    return -p.J * np.real(hop) + 0.5 * p.g * np.sum(n * (n - 2), axis=-1)


def uniform_state(L: int, t: float = 0.0) -> MeanFieldState:
    return MeanFieldState(np.ones(L, dtype=complex), t)


def bloch_oscillation(p: LatticeParams, t) -> np.ndarray:
    """Exact site amplitudes ``exp(i (J/F) sin Ft)`` of the uniform solution.

    Returns shape ``t.shape + (L,)``.
    """
    t = np.asarray(t, dtype=float)
    ph = np.exp(1j * (p.J / p.F) * np.sin(p.F * t))
    return np.broadcast_to(ph[..., None], t.shape + (p.L,)).astype(complex)
