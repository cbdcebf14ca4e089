"""Husimi ensembles of mean-field trajectories and decay-law fits.

The many-particle coherent state with all N atoms in the k = 0 mode is
represented by classical amplitudes ``b = sqrt(L) z`` with ``|z| = 1`` drawn
from ``Q(z) ~ |z_0|^{2N}`` by rejection.  Two base measures are offered:

``paper``
    magnitudes ``r_k ~ U(0, 1)`` and phases ``phi_k ~ U(0, 2 pi)``,
    normalized to the unit sphere.  This is not the uniform measure on the
    sphere; it is the default reference recipe.
``haar``
    complex-normal components normalized to the sphere (uniform measure).

Every trajectory draws from its own generator seeded by ``(seed, index)``,
so an ensemble does not depend on how it is split into chunks.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .integrate import IntegrationError, IntegratorConfig, iterate
from .lattice import (LatticeParams, MeanFieldState, ModeState, k_values, mode_populations,
                      momentum_sites, to_modes, to_sites)
from .meanfield import DEFAULT_CONFIG, dnlse_rhs

log = logging.getLogger(__name__)

__all__ = [
    "EnsembleSpec",
    "EnsembleSeries",
    "SamplerStarvation",
    "EnsembleFailure",
    "DecayFit",
    "FitError",
    "sample_husimi",
    "ensemble_average",
    "frozen_evolution",
    "husimi_to_quantum",
    "fit_decay",
    "select_decay_model",
    "bo_amplitude",
]

METHODS = ("paper", "haar")
MAX_ATTEMPTS = 10_000_000
_CHUNK = 8192


class SamplerStarvation(RuntimeError):
    pass


class EnsembleFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class EnsembleSpec:
    N: int
    L: int
    count: int
    seed: int = 0
    method: str = "paper"

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if self.N < 1:
            raise ValueError("N must be a positive integer")
        if self.L < 1 or self.L % 2 == 0:
            raise ValueError("L must be odd")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def as_dict(self) -> dict:
        return {"N": self.N, "L": self.L, "count": self.count, "seed": self.seed,
                "method": self.method}


def _proposals(rng: np.random.Generator, method: str, n: int, L: int) -> np.ndarray:
    if method == "paper":
        z = rng.random((n, L)) * np.exp(2j * np.pi * rng.random((n, L)))
    else:
        z = rng.standard_normal((n, L)) + 1j * rng.standard_normal((n, L))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _draw_one(spec: EnsembleSpec, index: int, i0: int) -> tuple[np.ndarray, int]:
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(index,)))
    attempts = 0
    while attempts < MAX_ATTEMPTS:
        z = _proposals(rng, spec.method, _CHUNK, spec.L)
        v = rng.random(_CHUNK)
        ok = np.flatnonzero(v < np.abs(z[:, i0]) ** (2 * spec.N))
        if ok.size:
            return z[ok[0]], attempts + int(ok[0]) + 1
        attempts += _CHUNK
    hint = "try method='paper'" if spec.method == "haar" else "try method='haar'"
    raise SamplerStarvation(
        f"no sample accepted in {MAX_ATTEMPTS} attempts (N={spec.N}, L={spec.L}, "
        f"method={spec.method}); reduce N*L or {hint}")


def sample_husimi(spec: EnsembleSpec, return_attempts: bool = False):
    """Draw ``spec.count`` mode-space samples, shape ``(count, L)``."""
    i0 = (spec.L - 1) // 2
    out = np.empty((spec.count, spec.L), dtype=complex)
    total = 0
    for i in range(spec.count):
        z, n = _draw_one(spec, i, i0)
        out[i] = math.sqrt(spec.L) * z
        total += n
    states = ModeState(out, 0.0)
    if return_attempts:
        return states, total
    return states


@dataclass
class EnsembleSeries:
    times: np.ndarray
    mean_p: np.ndarray
    se_p: np.ndarray
    pop: np.ndarray  # (n_t, L), k ordered -(L-1)/2 .. (L-1)/2
    se_pop: np.ndarray
    count: int
    dropped: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> np.ndarray:
        return k_values(self.pop.shape[1])

    def columns(self) -> dict:
        cols = {"t": self.times, "mean_p": self.mean_p, "se_p": self.se_p}
        for j, k in enumerate(self.k):
            cols[f"pop_{k}"] = self.pop[:, j]
        for j, k in enumerate(self.k):
            cols[f"se_pop_{k}"] = self.se_pop[:, j]
        return cols

    def window_mean_pop(self, t_lo: float, t_hi: float) -> np.ndarray:
        sel = (self.times >= t_lo) & (self.times <= t_hi)
        return self.pop[sel].mean(axis=0)


def _as_sites(ensemble) -> np.ndarray:
    if isinstance(ensemble, ModeState):
        return to_sites(ensemble).amps
    if isinstance(ensemble, MeanFieldState):
        return ensemble.amps
    return np.asarray(ensemble, dtype=complex)


def _observe_chunk(amps: np.ndarray, p: LatticeParams, times: np.ndarray,
                   cfg: IntegratorConfig):
    """Momentum ``(n_t, M)`` and populations ``(n_t, M, L)`` for one batch."""
    mom = np.empty((times.size, amps.shape[0]))
    pops = np.empty((times.size, amps.shape[0], amps.shape[1]))
    for i, (t, a) in enumerate(iterate(lambda t, a: dnlse_rhs(a, t, p), 0.0, amps, times, cfg)):
        mom[i] = momentum_sites(a, p.F, t)
        pops[i] = mode_populations(to_modes(MeanFieldState(a, t)))
    return mom, pops


def _run_chunk(args):
    batch, start, p, times, cfg = args
    try:
        mom, pops = _observe_chunk(batch, p, times, cfg)
        return mom, pops, 0
    except IntegrationError:
        pass
    kept_m, kept_p, dropped = [], [], 0
    for j in range(batch.shape[0]):
        try:
            m1, p1 = _observe_chunk(batch[j:j + 1], p, times, cfg)
        except IntegrationError as exc:
            log.warning("dropping trajectory %d: %s", start + j, exc)
            dropped += 1
            continue
        kept_m.append(m1)
        kept_p.append(p1)
    if not kept_m:
        return None, None, dropped
    return np.concatenate(kept_m, axis=1), np.concatenate(kept_p, axis=1), dropped


def ensemble_average(ensemble, p: LatticeParams, t_grid: Sequence[float],
                     cfg: IntegratorConfig = DEFAULT_CONFIG, chunk: int = 100,
                     max_fail_fraction: float = 0.01, workers: int = 1) -> EnsembleSeries:
    """Propagate every member from t = 0 and average momentum and populations.

    Members are integrated in batches of ``chunk`` sharing one adaptive step
    sequence, so the result depends on ``chunk`` at the level of the
    tolerance but not on ``workers``.  A batch that fails is retried member
    by member; members that still fail are dropped and counted.  More than
    ``max_fail_fraction`` dropped members raises :class:`EnsembleFailure`.
    """
    amps = _as_sites(ensemble)
    if amps.ndim != 2 or amps.shape[1] != p.L:
        raise ValueError(f"ensemble must have shape (count, {p.L})")
    times = np.asarray(t_grid, dtype=float)
    if times.size == 0 or times[0] < 0:
        raise ValueError("t_grid must be non-empty and start at t >= 0")
    M = amps.shape[0]
    jobs = [(amps[s:s + chunk], s, p, times, cfg) for s in range(0, M, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    else:
        parts = [_run_chunk(j) for j in jobs]
    dropped = sum(d for _, _, d in parts)
    if dropped > max_fail_fraction * M:
        raise EnsembleFailure(f"{dropped} of {M} trajectories failed")
    mom = np.concatenate([m for m, _, _ in parts if m is not None], axis=1)
    pops = np.concatenate([q for _, q, _ in parts if q is not None], axis=1)
    n = mom.shape[1]
    if n > 1:
        se_p = mom.std(axis=1, ddof=1) / math.sqrt(n)
        se_pop = pops.std(axis=1, ddof=1) / math.sqrt(n)
    else:
        se_p, se_pop = np.zeros(times.size), np.zeros((times.size, p.L))
    return EnsembleSeries(times, mom.mean(axis=1), se_p, pops.mean(axis=1), se_pop, n, dropped,
                          {"params": p.as_dict(), "rel_tol": cfg.rel_tol, "abs_tol": cfg.abs_tol,
                           "chunk": chunk})


def husimi_to_quantum(series: EnsembleSeries, N: int) -> EnsembleSeries:
    """Convert Husimi averages to symmetric (normally ordered) expectations.

    Averages over the Husimi function are anti-normally ordered:
    ``E_Q[z_i* z_j] = <a_j a_i^+> / (N + L)``.  Off-diagonal one-body terms
    (the momentum) therefore scale by ``(N + L)/N`` and populations map to
    ``((N + L) E_Q|z_k|^2 - 1)/N``.  Exact for the uniform-measure (``haar``)
    sampler; for ``paper`` samples it is only an approximation.
    """
    L = series.pop.shape[1]
    f = (N + L) / N
    return EnsembleSeries(series.times, f * series.mean_p, f * series.se_p,
                          (f * N * series.pop - 1.0) / N, f * series.se_pop, series.count,
                          series.dropped, dict(series.meta, ordering="normal", N=N))


def frozen_evolution(state0: MeanFieldState, t: float, p: LatticeParams) -> MeanFieldState:
    """Strong-force limit: site populations frozen, phases rotate at ``g(|a|^2-1)``."""
    a = state0.amps
    return MeanFieldState(a * np.exp(-1j * p.g * (np.abs(a) ** 2 - 1.0) * (t - state0.t)), t)


class FitError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(f"{message}; last residuals: {trace[-5:]}")
        self.trace = trace


@dataclass
class DecayFit:
    model: str
    gamma: float
    omega: float
    amplitude: float
    phase: float
    residual: float  # root-mean-square


_ENVELOPES = {
    "exponential": lambda t, g: np.exp(-g * t),
    "gaussian": lambda t, g: np.exp(-g * t * t),
}


def fit_decay(t, y, model: str, omega0: float, gamma0: Optional[float] = None) -> DecayFit:
    """Least-squares fit of ``A env(t) sin(omega t + phi)`` to ``y(t)``.

    ``env`` is ``exp(-gamma t)`` or ``exp(-gamma t^2)``.  ``omega0`` is the
    starting guess for the oscillation frequency (the Bloch frequency).
    """
    if model not in _ENVELOPES:
        raise ValueError(f"model must be one of {sorted(_ENVELOPES)}")
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if omega0 <= 0 or t.size < 8:
        raise ValueError("need omega0 > 0 and at least 8 samples")
    if (t[-1] - t[0]) * omega0 < 5 * 2 * math.pi:
        log.warning("fit window covers fewer than 5 Bloch periods")
    env = _ENVELOPES[model]
    span = t[-1] - t[0]
    if gamma0 is None:
        gamma0 = 1.0 / span if model == "exponential" else 1.0 / span ** 2
    # linear estimate of amplitude and phase at the guessed frequency
    X = np.column_stack([np.sin(omega0 * t), np.cos(omega0 * t)])
    (s, c), *_ = np.linalg.lstsq(X, y, rcond=None)
    x0 = [math.hypot(s, c), omega0, math.atan2(c, s), gamma0]
    trace = []

    def resid(x):
        A, w, ph, g = x
        r = A * env(t, g) * np.sin(w * t + ph) - y
        trace.append(float(np.sqrt(np.mean(r * r))))
        return r

    try:
        sol = least_squares(resid, x0, bounds=([-np.inf, 0.0, -np.inf, 0.0], np.inf),
                            x_scale=[1.0, omega0, 1.0, max(gamma0, 1e-12)])
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise FitError(f"fit failed: {exc}", trace) from exc
    if not sol.success:
        raise FitError(f"fit did not converge: {sol.message}", trace)
    A, w, ph, g = sol.x
    if A < 0:
        A, ph = -A, ph + math.pi
    ph = (ph + math.pi) % (2 * math.pi) - math.pi
    return DecayFit(model, float(g), float(w), float(A), float(ph),
                    float(np.sqrt(np.mean(sol.fun ** 2))))


def select_decay_model(t, y, omega0: float) -> tuple[str, dict]:
    """Fit both envelopes; returns the name with the smaller residual and both fits."""
    fits = {m: fit_decay(t, y, m, omega0) for m in _ENVELOPES}
    best = min(fits, key=lambda m: fits[m].residual)
    return best, fits


def bo_amplitude(t, y, omega: float, t_lo: float, t_hi: float) -> float:
    """Amplitude of the ``omega`` component of ``y`` on ``[t_lo, t_hi]`` (linear fit)."""
    t = np.asarray(t, dtype=float)
    sel = (t >= t_lo) & (t <= t_hi)
    if sel.sum() < 4:
        raise ValueError("window holds fewer than 4 samples")
    ts = t[sel]
    X = np.column_stack([np.sin(omega * ts), np.cos(omega * ts), np.ones_like(ts)])
    (s, c, _), *_ = np.linalg.lstsq(X, np.asarray(y)[sel], rcond=None)
    return float(math.hypot(s, c))
