"""Acceptance criteria, each at its stated tolerance.

Every criterion prints one ``CRITERION n PASS|FAIL: ...`` line and records it
in ``RESULTS`` for the terminal summary.  Run directly with
``python tests/test_acceptance.py [n ...]`` to evaluate without pytest.
"""
import math
import sys
import time

import numpy as np
import pytest

from blochsim import bogoliubov as bg
from blochsim import ensemble as en
from blochsim import manybody as mb
from blochsim import stability as stab
from blochsim.cli import DEFAULTS, compare_series
from blochsim.integrate import IntegratorConfig, solve_final
from blochsim.lattice import LatticeParams, MeanFieldState, to_modes, to_sites
from blochsim.meanfield import propagate

RESULTS = {}
TWO_PI = 2 * math.pi
P5 = dict(J=1.0, g=0.1, L=5)


def _ensemble(F, N=15, count=1000, t_max_TJ=50.0, samples=1001, method="paper", seed=0):
    p = LatticeParams(F=F, **P5)
    t = np.linspace(0, t_max_TJ * TWO_PI, samples)
    modes = en.sample_husimi(en.EnsembleSpec(N, 5, count, seed, method))
    return p, en.ensemble_average(modes, p, t)


def criterion_1():
    nu_lo = stab.increment(LatticeParams(F=0.1, **P5))
    nu_hi = stab.increment(LatticeParams(F=0.4, **P5))
    ok = nu_lo > 0 and nu_hi <= 1e-6
    return ok, f"nu(F=0.1)={nu_lo:.4f} > 0, nu(F=0.4)={nu_hi:.2e} <= 1e-6"


def criterion_2():
    parts, ok = [], True
    for g in (0.05, 0.1, 0.2, 1.0):
        target = 3 * g if g < 1 else 2.96 * math.sqrt(g)
        base = LatticeParams(J=1.0, g=g, F=1.0, L=63)
        Fc = stab.stable_threshold_force(base, 0.3 * target, 2.0 * target)
        rel = abs(Fc - target) / target
        ok &= rel <= 0.15
        parts.append(f"g={g}: F={Fc:.3f} vs {target:.3f} ({100 * rel:.1f}%)")
    return ok, "; ".join(parts)


def criterion_3():
    rng = np.random.default_rng(12345)
    worst_det = 0.0
    for _ in range(1000):
        L = int(rng.choice(np.arange(3, 64, 2)))
        k = int(rng.integers(1, (L - 1) // 2 + 1))
        p = LatticeParams(J=1.0, g=rng.uniform(0, 0.3), F=rng.uniform(0.2, 4.0), L=L)
        worst_det = max(worst_det, abs(stab.stability_block(k, p).det - 1))
    worst_mod = 0.0
    for L in (3, 5):
        for F, g in ((0.4, 0.1), (0.1, 0.1), (1.3, 0.25), (0.25, 0.05)):
            p = LatticeParams(J=1.0, g=g, F=F, L=L)
            fm = stab.full_monodromy(p)
            for b in stab.increments(p):
                for k in (b.k, -b.k):
                    worst_mod = max(worst_mod, np.max(abs(fm.block_moduli(k) - abs(b.eigenvalues))))
    ok = worst_det < 1e-9 and worst_mod < 1e-6
    return ok, f"max|det U - 1|={worst_det:.1e} (1000 draws), max block modulus mismatch={worst_mod:.1e}"


def criterion_4():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        prob = bg.BogoliubovProblem(rng.uniform(0.05, 2.0), rng.uniform(0.01, 1.0), n_max=400)
        worst = max(worst, bg.static_spectrum(prob).max_gap_error(10))
    return worst < 1e-6, f"max relative gap error {worst:.1e} over 20 draws (tol 1e-6)"


def criterion_5():
    p = LatticeParams(J=1.0, g=0.1, F=0.4, L=3)
    fl = [bg.depletion(p, state_index=i).N_D for i in range(3)]
    st = [bg.depletion(p, state_index=i, static=True).N_D for i in range(3)]
    fl_ref, st_ref = (0.113, 2.341, 4.568), (0.002, 2.006, 4.010)
    d_fl = [abs(a - b) for a, b in zip(fl, fl_ref)]
    d_st = [abs(a - b) for a, b in zip(st, st_ref)]
    ok = max(d_fl) <= 0.01 and max(d_st) <= 0.005
    return ok, (f"floquet {np.round(fl, 4).tolist()} (max dev {max(d_fl):.4f}, tol 0.01); "
                f"static {np.round(st, 4).tolist()} (max dev {max(d_st):.4f}, tol 0.005)")


def criterion_6():
    F = stab.grid_axis(0.0, 4.0, 50, open_low=True)
    g = stab.grid_axis(0.0, 1.0, 50, open_low=True)
    base = LatticeParams(J=1.0, g=0.1, F=1.0, L=3)
    nu = stab.stability_diagram(F, g, base).nu
    dd = bg.depletion_diagram(F, g, base, n_start=32, n_cap=128)
    stable = nu == 0
    low = (~dd.saturated) & (dd.N_D < 10)
    frac = float(np.mean(stable == low))
    return frac >= 0.95, (f"{100 * frac:.1f}% of 2500 cells agree (stable: {int(stable.sum())}, "
                          f"low depletion: {int(low.sum())}; need 95%)")


def criterion_7():
    p, s = _ensemble(0.1)
    pops = s.window_mean_pop(40 * TWO_PI, 50 * TWO_PI)
    fit = en.fit_decay(s.times, s.mean_p, "exponential", p.F)
    ok = bool(np.all(abs(pops - 0.2) <= 0.05)) and fit.gamma > 0
    return ok, (f"populations over [40,50] T_J {np.round(pops, 3).tolist()} (need 0.2 +- 0.05); "
                f"gamma_c={fit.gamma:.4f}")


def criterion_8():
    p, s = _ensemble(0.4)
    a0 = en.bo_amplitude(s.times, s.mean_p, p.F, 0.0, p.T_B)
    t_end = 50 * TWO_PI
    a1 = en.bo_amplitude(s.times, s.mean_p, p.F, t_end - p.T_B, t_end)
    return a1 >= 0.8 * a0, f"amplitude ratio at 50 T_J = {a1 / a0:.3f} (need >= 0.8)"


def criterion_9():
    gam, best = {}, {}
    for N in (15, 30):
        p, s = _ensemble(10.0, N=N, t_max_TJ=10.0, samples=3001)
        best[N], fits = en.select_decay_model(s.times, s.mean_p, p.F)
        gam[N] = fits["gaussian"].gamma
    ratio = gam[30] / gam[15]
    ok = best[15] == best[30] == "gaussian" and abs(ratio - 0.5) <= 0.25 * 0.5
    return ok, (f"best model N=15: {best[15]}, N=30: {best[30]}; gamma_r {gam[15]:.3e} -> "
                f"{gam[30]:.3e}, ratio {ratio:.3f} (need 0.5 +- 25%)")


def criterion_10():
    p = LatticeParams(J=1.0, F=10.0, L=5, W=0.1 / 3, N=15)
    basis = mb.build_basis(15, 5)
    psi0 = mb.coherent_state(basis)
    t = np.linspace(0, 1.1 * p.T_W, 8001)
    tr = mb.revival_fidelity(psi0, t, p)
    t_peak, height = tr.peak(0.5 * p.T_W, 1.1 * p.T_W)
    rel = abs(t_peak - p.T_W) / p.T_W
    frozen = mb.frozen_fidelity(psi0, p, p.T_W)
    a0 = en.bo_amplitude(t, tr.momentum, p.F, 0, p.T_B)
    a_half = en.bo_amplitude(t, tr.momentum, p.F, p.T_W / 2 - p.T_B, p.T_W / 2 + p.T_B)
    a_rev = en.bo_amplitude(t, tr.momentum, p.F, p.T_W - p.T_B, p.T_W + p.T_B)
    ok = rel <= 0.02 and abs(frozen - 1) <= 1e-10 and a_half < 0.1 * a0 and a_rev > 0.5 * a0
    return ok, (f"fidelity peak {height:.3f} at t={t_peak:.2f} vs T_W={p.T_W:.2f} "
                f"({100 * rel:.2f}%); frozen fidelity at T_W off by {abs(frozen - 1):.1e}; "
                f"BO amplitude {a0:.3f} -> {a_half:.1e} at T_W/2 -> {a_rev:.3f} at T_W")


def criterion_11():
    parts, ok, disc = [], True, {}
    for F in (0.1, 0.4):
        cfg = dict(DEFAULTS["compare"], F=F, seed=0)
        _, summary = compare_series(cfg)
        disc[F] = summary["discrepancy"]
        ok &= summary["below_ceiling"]
        parts.append(f"F={F}: {disc[F]:.3f}")
    return ok, "relative L2 discrepancy over 20 T_J " + ", ".join(parts) + \
        f" (ceiling {DEFAULTS['compare']['ceiling']})"


def criterion_12():
    rng = np.random.default_rng(7)
    checks = {}
    cfg = IntegratorConfig()

    # norm conservation, mean field and many body
    drift = 0.0
    for F in (0.1, 0.4):
        p = LatticeParams(F=F, **P5)
        a = to_sites(en.sample_husimi(en.EnsembleSpec(15, 5, 1, seed=3))).amps[0]
        drift = max(drift, abs(propagate(MeanFieldState(a), p, 10 * TWO_PI, cfg).norm - 5))
    checks["meanfield norm"] = drift < 10 * cfg.rel_tol * 5
    pm = LatticeParams(J=1.0, F=0.1, L=5, W=0.1 / 3, N=4)
    b = mb.build_basis(4, 5)
    stn = mb.HoppingStencil.build(b, pm)
    s = mb.propagate_mp(mb.coherent_state(b), pm, 30.0, stn)
    checks["many-body norm"] = abs(s.norm - 1) < 10 * mb.MP_CONFIG.rel_tol

    # transform round trip
    worst = 0.0
    for L in (3, 5, 7, 9):
        a = rng.standard_normal((100, L)) + 1j * rng.standard_normal((100, L))
        worst = max(worst, np.max(abs(to_sites(to_modes(MeanFieldState(a))).amps - a)))
    checks["round trip"] = worst < 1e-12

    # hermiticity at random times
    herm = 0.0
    for _ in range(5):
        H = mb.hamiltonian_matrix(rng.uniform(0, 100), pm, stn)
        herm = max(herm, np.max(abs(H - H.conj().T)))
    checks["hermiticity"] = herm < 1e-12

    # W = 0 coherence preservation
    p0 = LatticeParams(J=1.0, F=0.3, L=5, W=0.0, N=4)
    st0 = mb.HoppingStencil.build(b, p0)
    a = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    a *= math.sqrt(5) / np.linalg.norm(a)
    tight = IntegratorConfig(1e-11, 1e-13)
    psi = mb.propagate_mp(mb.coherent_state(b, a), p0, p0.T_B, st0, tight)
    orb = propagate(MeanFieldState(a), p0.replace(g=0.0), p0.T_B, tight).amps
    checks["W=0 coherence"] = abs(np.vdot(mb.coherent_state(b, orb).coeffs, psi.coeffs)) ** 2 > 1 - 1e-6

    # +-k symmetry: exact without force; the force breaks the reflection
    pz = LatticeParams(J=1.0, F=0.0, L=5, W=0.1, N=4)
    stz = mb.HoppingStencil.build(b, pz)
    asym = 0.0
    for s in mb.propagate_mp_series(mb.coherent_state(b), pz, np.linspace(0, 60, 7), stz, tight):
        pops = mb.mode_populations_mp(s)
        asym = max(asym, np.max(abs(pops - pops[::-1])))
    checks["+-k symmetry (F=0)"] = asym < 1e-8
    s = mb.propagate_mp(mb.coherent_state(b), pm, 5 * TWO_PI, stn)
    pops = mb.mode_populations_mp(s)
    forced = float(np.max(abs(pops - pops[::-1])))

    # dense oracle for N <= 2
    dense_err = 0.0
    for N in (1, 2):
        pn = LatticeParams(J=1.0, F=0.3, L=3, W=0.4, N=N)
        bn = mb.build_basis(N, 3)
        sn = mb.HoppingStencil.build(bn, pn)
        c0 = rng.standard_normal(bn.dim) + 1j * rng.standard_normal(bn.dim)
        c0 /= np.linalg.norm(c0)
        ref = solve_final(lambda t, c: -1j * mb.hamiltonian_matrix(t, pn, sn) @ c, 0.0, c0, 15.0,
                          tight)
        got = mb.propagate_mp(mb.MPState(c0, bn), pn, 15.0, sn, tight).coeffs
        dense_err = max(dense_err, np.max(abs(got - ref)))
    checks["dense oracle"] = dense_err < 1e-9

    failed = [k for k, v in checks.items() if not v]
    detail = (f"{len(checks) - len(failed)}/{len(checks)} suites pass"
              + (f", failing: {failed}" if failed else "")
              + f"; F=0.1 breaks +-k symmetry by {forced:.3f} (physical, not asserted)")
    return not failed, detail


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 13)}


def evaluate(n):
    t0 = time.perf_counter()
    passed, detail = CRITERIA[n]()
    passed = bool(passed)
    line = f"{detail} [{time.perf_counter() - t0:.0f}s]"
    RESULTS[n] = (passed, line)
    print(f"CRITERION {n} {'PASS' if passed else 'FAIL'}: {line}", flush=True)
    return passed, line


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    passed, line = evaluate(n)
    assert passed, line


if __name__ == "__main__":
    chosen = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    results = [evaluate(n)[0] for n in chosen]
    sys.exit(0 if all(results) else 1)
