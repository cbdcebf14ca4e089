"""Driven Bose-Hubbard model in the fixed-N Fock space.

Gauge-frame Hamiltonian

    H(t) = -(J/2) (e^{iFt} K + e^{-iFt} K^+) + (W/2) sum_l n_l (n_l - 2),
    K = sum_l a^+_{l+1} a_l  (periodic),

acting on occupation vectors in descending lexicographic order, e.g.
(1,0,0), (0,1,0), (0,0,1) for N = 1, L = 3.  The position of an occupation
vector is computed in closed form from binomial counts, so stencil targets
are looked up without a hash table.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import comb, gammaln

from .integrate import IntegratorConfig, iterate, solve_final
from .lattice import LatticeParams, kappa_values

__all__ = [
    "FockBasis",
    "MPState",
    "HoppingStencil",
    "DimensionCapExceeded",
    "build_basis",
    "coherent_state",
    "fock_state",
    "apply_hamiltonian",
    "hamiltonian_matrix",
    "propagate_mp",
    "propagate_mp_series",
    "momentum_mp",
    "density_matrix",
    "mode_populations_mp",
    "floquet_operator",
    "revival_fidelity",
    "frozen_fidelity",
    "write_snapshot",
    "read_snapshot",
]

MP_CONFIG = IntegratorConfig(rel_tol=1e-9, abs_tol=1e-11)


class DimensionCapExceeded(ValueError):
    pass


def _compositions(N: int, L: int) -> np.ndarray:
    """All occupation vectors of N bosons on L sites, descending lexicographic."""
    if L == 1:
        return np.array([[N]], dtype=np.int64)
    blocks = []
    for n1 in range(N, -1, -1):
        rest = _compositions(N - n1, L - 1)
        blocks.append(np.column_stack([np.full(len(rest), n1, dtype=np.int64), rest]))
    return np.concatenate(blocks)


@dataclass(frozen=True, eq=False)
class FockBasis:
    N: int
    L: int
    states: np.ndarray  # (dim, L) int64

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @cached_property
    def _table(self) -> np.ndarray:
        # table[m, r] = number of ways to put m bosons on r sites
        m = np.arange(self.N + 1)[:, None]
        r = np.arange(self.L + 1)[None, :]
        t = comb(m + r - 1, r - 1, exact=False)
        t[:, 0] = (m[:, 0] == 0)
        return np.rint(t).astype(np.int64)

    def index(self, occ) -> np.ndarray:
        """Positions of occupation vectors ``occ`` of shape ``(..., L)``."""
        occ = np.asarray(occ, dtype=np.int64)
        if occ.shape[-1] != self.L:
            raise ValueError(f"occupation vectors need {self.L} entries")
        if np.any(occ < 0) or np.any(occ.sum(axis=-1) != self.N):
            raise ValueError(f"occupations must be non-negative and sum to {self.N}")
        remaining = self.N - np.cumsum(occ, axis=-1) + occ  # bosons left before site l
        idx = np.zeros(occ.shape[:-1], dtype=np.int64)
        for l in range(self.L - 1):
            K = remaining[..., l] - occ[..., l] - 1  # vectors with a larger n_l come first
            ok = K >= 0
            idx += np.where(ok, self._table[np.maximum(K, 0), self.L - l], 0)
        return idx

    def __eq__(self, other):
        return isinstance(other, FockBasis) and (self.N, self.L) == (other.N, other.L)

    def __hash__(self):
        return hash((self.N, self.L))


def basis_dimension(N: int, L: int) -> int:
    return math.comb(N + L - 1, N)


def build_basis(N: int, L: int) -> FockBasis:
    if N < 0 or L < 1:
        raise ValueError("need N >= 0 and L >= 1")
    return FockBasis(N, L, _compositions(N, L))


@dataclass
class MPState:
    coeffs: np.ndarray
    basis: FockBasis
    t: float = 0.0

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape[0] != self.basis.dim:
            raise ValueError("coefficient vector does not match basis dimension")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def coherent_state(basis: FockBasis, amps: Optional[Sequence[complex]] = None) -> MPState:
    """SU(L) coherent state with all particles in the orbital ``amps``.

    ``amps`` are site amplitudes normalized to ``sum |a_l|^2 = L`` (uniform by
    default).  Coefficients ``sqrt(N!/prod n_l!) prod (a_l/sqrt(L))^{n_l}``.
    """
    n = basis.states
    log_mult = 0.5 * (gammaln(basis.N + 1) - gammaln(n + 1).sum(axis=1))
    if amps is None:
        c = np.exp(log_mult - 0.5 * basis.N * math.log(basis.L))
        return MPState(c.astype(complex), basis)
    phi = np.asarray(amps, dtype=complex)
    phi = phi / np.linalg.norm(phi)
    # 0^0 = 1 for empty sites
    c = np.exp(log_mult) * np.prod(np.where(n > 0, phi[None, :] ** n, 1.0), axis=1)
    return MPState(c, basis)


def fock_state(basis: FockBasis, occ) -> MPState:
    c = np.zeros(basis.dim, dtype=complex)
    c[basis.index(occ)] = 1.0
    return MPState(c, basis)


def _hop_operator(basis: FockBasis, src: int, dst: int) -> sp.csr_matrix:
    """Sparse ``a^+_dst a_src``."""
    n = basis.states
    rows = np.flatnonzero(n[:, src] > 0)
    occ = n[rows].copy()
    amp = np.sqrt(occ[:, src].astype(float))
    occ[:, src] -= 1
    amp *= np.sqrt(occ[:, dst] + 1.0)
    occ[:, dst] += 1
    tgt = basis.index(occ)
    return sp.csr_matrix((amp, (tgt, rows)), shape=(basis.dim, basis.dim))


@dataclass(eq=False)
class HoppingStencil:
    """Sparse ``K``, ``K^+`` and the diagonal interaction for one basis.

    ``interaction`` selects ``n(n-2)`` (gauge-shifted, default) or ``n(n-1)``;
    the two differ by ``-W N / 2``, a global phase.
    """

    basis: FockBasis
    K: sp.csr_matrix
    KH: sp.csr_matrix
    diag: np.ndarray
    J: float
    W: float

    @classmethod
    def build(cls, basis: FockBasis, p: LatticeParams, interaction: str = "gauge") -> "HoppingStencil":
        if p.W is None:
            raise ValueError("many-body runs need W (give W and N in LatticeParams)")
        L = basis.L
        K = sp.csr_matrix((basis.dim, basis.dim))
        for l in range(L):
            K = K + _hop_operator(basis, l, (l + 1) % L)
        K = K.tocsr()
        K.sum_duplicates()
        n = basis.states.astype(float)
        shift = {"gauge": 2.0, "bare": 1.0}[interaction]
        diag = 0.5 * p.W * np.sum(n * (n - shift), axis=1)
        return cls(basis, K, K.conj().T.tocsr(), diag, p.J, p.W)

    def row_counts(self) -> np.ndarray:
        """Nonzeros per column of ``K`` (one per occupied site, L >= 3)."""
        return np.diff(self.K.tocsc().indptr)


def _check(state_basis: FockBasis, stencil: HoppingStencil):
    if state_basis != stencil.basis:
        raise ValueError("state and stencil are built on different bases")


def _h_apply(psi, t, F, st: HoppingStencil):
    ph = np.exp(1j * F * t)
    d = st.diag.reshape((-1,) + (1,) * (psi.ndim - 1))
    return -0.5 * st.J * (ph * (st.K @ psi) + np.conj(ph) * (st.KH @ psi)) + d * psi


def apply_hamiltonian(state: MPState, t: float, p: LatticeParams, stencil: HoppingStencil) -> np.ndarray:
    """``H(t)|psi>`` as a coefficient vector."""
    _check(state.basis, stencil)
    return _h_apply(state.coeffs, t, p.F, stencil)


def hamiltonian_matrix(t: float, p: LatticeParams, stencil: HoppingStencil) -> np.ndarray:
    """Dense ``H(t)``; for tests and small bases only."""
    ph = np.exp(1j * p.F * t)
    H = -0.5 * stencil.J * (ph * stencil.K + np.conj(ph) * stencil.KH)
    return H.toarray() + np.diag(stencil.diag)


def _rhs(p, st):
    return lambda t, psi: -1j * _h_apply(psi, t, p.F, st)


def propagate_mp(state: MPState, p: LatticeParams, t1: float, stencil: HoppingStencil,
                 cfg: IntegratorConfig = MP_CONFIG) -> MPState:
    _check(state.basis, stencil)
    c = solve_final(_rhs(p, stencil), state.t, state.coeffs, t1, cfg)
    return MPState(c, state.basis, float(t1))


def propagate_mp_series(state: MPState, p: LatticeParams, t_grid, stencil: HoppingStencil,
                        cfg: IntegratorConfig = MP_CONFIG):
    """Generator of ``MPState`` on ``t_grid``."""
    _check(state.basis, stencil)
    for t, c in iterate(_rhs(p, stencil), state.t, state.coeffs, t_grid, cfg):
        yield MPState(c, state.basis, t)


def momentum_mp(state: MPState, p: LatticeParams, stencil: HoppingStencil,
                t: Optional[float] = None, return_imag: bool = False):
    """``(1/2iN) <sum_l a^+_{l+1} a_l e^{-iFt} - h.c.>``, i.e. ``Im(e^{-iFt}<K>)/N``."""
    t = state.t if t is None else t
    c = state.coeffs
    Kexp = np.vdot(c, stencil.K @ c) * np.exp(-1j * p.F * t)
    # (X - X^+)/(2i) with X = K e^{-iFt}: <X> - <X>^* over 2i
    val = (Kexp - np.conj(Kexp)) / (2j * state.basis.N)
    if return_imag:
        return float(val.real), float(val.imag)
    return float(val.real)


class _PairOperators:
    def __init__(self, basis: FockBasis):
        L = basis.L
        self.ops = {(l, m): _hop_operator(basis, m, l) for l in range(L) for m in range(L) if l != m}


_PAIR_CACHE: dict = {}


def density_matrix(state: MPState) -> np.ndarray:
    """One-body density matrix ``rho_{lm} = <a^+_l a_m>``."""
    basis = state.basis
    key = (basis.N, basis.L)
    if key not in _PAIR_CACHE:
        _PAIR_CACHE.clear()
        _PAIR_CACHE[key] = _PairOperators(basis)
    ops = _PAIR_CACHE[key].ops
    c = state.coeffs
    L = basis.L
    rho = np.empty((L, L), dtype=complex)
    n = basis.states
    w = np.abs(c) ** 2
    for l in range(L):
        rho[l, l] = np.dot(w, n[:, l])
        for m in range(L):
            if l != m:
                rho[l, m] = np.vdot(c, ops[(l, m)] @ c)
    return rho


def mode_populations_mp(state: MPState) -> np.ndarray:
    """``<b^+_k b_k>/N`` with ``b_k = L^-1/2 sum_l e^{i kappa l} a_l``, k ascending."""
    rho = density_matrix(state)
    L = state.basis.L
    sites = np.arange(1, L + 1)
    E = np.exp(1j * np.outer(kappa_values(L), sites)) / math.sqrt(L)  # E[k, l]
    # <b+_k b_k> = sum_lm conj(E[k,l]) E[k,m] rho_lm
    pops = np.einsum("kl,lm,km->k", np.conj(E), rho, E).real
    return pops / state.basis.N


def floquet_operator(basis: FockBasis, p: LatticeParams, stencil: Optional[HoppingStencil] = None,
                     cfg: IntegratorConfig = MP_CONFIG, dim_cap: int = 5000, periods: int = 1,
                     chunk: int = 256) -> np.ndarray:
    """Dense propagator over ``periods`` Bloch periods, built column block by block."""
    if basis.dim > dim_cap:
        raise DimensionCapExceeded(f"basis dimension {basis.dim} exceeds cap {dim_cap}")
    if p.F <= 0:
        raise ValueError("Floquet operator needs F > 0")
    st = stencil or HoppingStencil.build(basis, p)
    U = np.empty((basis.dim, basis.dim), dtype=complex)
    T = periods * p.T_B
    for s in range(0, basis.dim, chunk):
        e = min(basis.dim, s + chunk)
        block = np.zeros((basis.dim, e - s), dtype=complex)
        block[np.arange(s, e), np.arange(e - s)] = 1.0
        U[:, s:e] = solve_final(_rhs(p, st), 0.0, block, T, cfg)
    return U


def frozen_fidelity(state0: MPState, p: LatticeParams, t) -> np.ndarray:
    """Strong-force prediction ``|sum_n |c_n|^2 exp(-i (W t/2) sum_l n_l(n_l-1))|^2``."""
    n = state0.basis.states
    e = np.sum(n * (n - 1), axis=1).astype(float)
    w = np.abs(state0.coeffs) ** 2
    t = np.atleast_1d(np.asarray(t, dtype=float))
    amp = np.exp(-0.5j * p.W * np.outer(t, e)) @ w
    out = np.abs(amp) ** 2
    return out if out.size > 1 else float(out[0])


@dataclass
class RevivalTrace:
    times: np.ndarray
    fidelity: np.ndarray
    frozen: np.ndarray
    momentum: np.ndarray

    def peak(self, t_lo: float, t_hi: float) -> tuple[float, float]:
        sel = (self.times >= t_lo) & (self.times <= t_hi)
        i = np.argmax(np.where(sel, self.fidelity, -np.inf))
        return float(self.times[i]), float(self.fidelity[i])


def revival_fidelity(state0: MPState, t_grid, p: LatticeParams, stencil: Optional[HoppingStencil] = None,
                     cfg: IntegratorConfig = MP_CONFIG) -> RevivalTrace:
    """``|<psi(0)|psi(t)>|^2`` from full propagation plus the frozen-limit value."""
    st = stencil or HoppingStencil.build(state0.basis, p)
    t_grid = np.asarray(t_grid, dtype=float)
    fid, mom = [], []
    c0 = state0.coeffs
    for s in propagate_mp_series(state0, p, t_grid, st, cfg):
        fid.append(abs(np.vdot(c0, s.coeffs)) ** 2)
        mom.append(momentum_mp(s, p, st))
    return RevivalTrace(t_grid, np.array(fid), np.atleast_1d(frozen_fidelity(state0, p, t_grid)),
                        np.array(mom))


_SNAP_HEADER = struct.Struct("<qqqd")


def write_snapshot(path, state: MPState) -> None:
    """Binary layout: little-endian int64 N, L, dim, float64 t, then complex128 coefficients."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_SNAP_HEADER.pack(state.basis.N, state.basis.L, state.basis.dim, state.t))
        fh.write(state.coeffs.astype("<c16").tobytes())
    tmp.replace(path)


def read_snapshot(path, basis: Optional[FockBasis] = None) -> MPState:
    data = Path(path).read_bytes()
    N, L, dim, t = _SNAP_HEADER.unpack_from(data)
    if basis is None:
        basis = build_basis(N, L)
    if (basis.N, basis.L, basis.dim) != (N, L, dim):
        raise ValueError("snapshot does not match the supplied basis")
    c = np.frombuffer(data, dtype="<c16", offset=_SNAP_HEADER.size)
    if c.size != dim:
        raise ValueError(f"snapshot holds {c.size} coefficients, header says {dim}")
    return MPState(c.astype(complex), basis, t)
