"""Batch command-line front end.

    blochsim <verb> [--config PATH] [--out DIR] [--seed U64] [--threads N] [--resume]
                    [--J ..] [--g ..] [--F ..] [--L ..] [--W ..] [--N ..] [--set key=value ...]
    blochsim preset <name> [--out DIR] [...]

Configuration is merged as: command defaults, then ``--config`` (JSON), then
explicit flags.  Execution options (threads, output directory, resume) are not
part of the recorded configuration, so data files do not depend on them.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import bogoliubov as bg
from . import ensemble as en
from . import io
from . import manybody as mb
from . import meanfield as mf
from . import stability as stab
from .integrate import IntegrationError, IntegratorConfig
from .lattice import (LatticeParams, MeanFieldState, energy, k_values, mode_populations,
                      momentum_sites, to_modes, to_sites, uniform_state)
from .sweep import CACHE_ENV, CellCache

log = logging.getLogger("blochsim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
TWO_PI = 2 * math.pi


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "stability-diagram": {"J": 1.0, "L": 3, "F_range": [0.0, 4.0], "g_range": [0.0, 1.0],
                          "resolution": [200, 200], "overlay": False},
    "meanfield-run": {"J": 1.0, "g": 0.1, "F": 0.1, "L": 5, "t_max_TJ": 50.0, "samples": 1001,
                      "initial": "uniform", "N": 15, "member": 0, "method": "paper",
                      "lyapunov": False, "rel_tol": 1e-9},
    "ensemble-run": {"J": 1.0, "g": 0.1, "F": 0.1, "L": 5, "N": 15, "count": 1000,
                     "method": "paper", "t_max_TJ": 50.0, "samples": 1001, "fit": True,
                     "rel_tol": 1e-9, "chunk": 100},
    "manybody-run": {"J": 1.0, "W": 0.1 / 3, "N": 15, "L": 5, "F": 0.1, "t_max_TJ": 50.0,
                     "samples": 1001, "fidelity": False, "snapshot": False, "rel_tol": 1e-9},
    "bogoliubov": {"J": 1.0, "g": 0.1, "F": 0.4, "L": 3, "states": 3, "n_max": 64,
                   "n_cap": 1024, "F_scan": None, "log_F": True, "quasienergy": None},
    "depletion-diagram": {"J": 1.0, "L": 3, "F_range": [0.0, 4.0], "g_range": [0.0, 1.0],
                          "resolution": [50, 50], "n_start": 32, "n_cap": 128, "with_nu": True},
    "compare": {"J": 1.0, "W": 0.1 / 3, "N": 15, "L": 5, "F": 0.1, "count": 1000,
                "method": "haar", "ordering": "normal", "t_max_TJ": 20.0, "samples": 801,
                "window_TJ": 20.0, "ceiling": 0.15, "rel_tol": 1e-9},
}
SEEDED = {"meanfield-run", "ensemble-run", "compare"}


# ---------------------------------------------------------------- validation

def _need(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _range(cfg, key):
    r = cfg[key]
    _need(isinstance(r, (list, tuple)) and len(r) == 2, f"{key} must be [lo, hi]")
    lo, hi = float(r[0]), float(r[1])
    _need(0 <= lo < hi, f"{key} must satisfy 0 <= lo < hi")
    return lo, hi


def _params(cfg, many_body=False) -> LatticeParams:
    try:
        if many_body:
            return LatticeParams(J=cfg["J"], F=cfg["F"], L=int(cfg["L"]), W=cfg["W"], N=int(cfg["N"]))
        return LatticeParams(J=cfg["J"], g=cfg["g"], F=cfg["F"], L=int(cfg["L"]))
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"bad lattice parameters: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _check_L(cfg):
    L = cfg.get("L")
    _need(isinstance(L, int) and L >= 1 and L % 2 == 1, f"L must be an odd positive integer, got {L!r}")


def _check_time(cfg):
    _need(cfg["t_max_TJ"] > 0, "t_max_TJ must be positive")
    _need(int(cfg["samples"]) >= 2, "samples must be at least 2")


def validate(command: str, cfg: dict) -> None:
    if command in ("stability-diagram", "depletion-diagram"):
        _check_L(cfg)
        _range(cfg, "F_range")
        _range(cfg, "g_range")
        res = cfg["resolution"]
        _need(len(res) == 2 and min(res) >= 2, "resolution must be [nF, ng] with both >= 2")
        _need(cfg["J"] > 0, "J must be positive")
        return
    _check_L(cfg)
    if command == "meanfield-run":
        _params(cfg)
        _check_time(cfg)
        _need(cfg["initial"] in ("uniform", "husimi"), "initial must be 'uniform' or 'husimi'")
        en.EnsembleSpec(cfg["N"], cfg["L"], cfg["member"] + 1, cfg["seed"], cfg["method"])
    elif command == "ensemble-run":
        _params(cfg)
        _check_time(cfg)
        _need(cfg["F"] > 0, "ensemble runs need F > 0")
        en.EnsembleSpec(cfg["N"], cfg["L"], cfg["count"], cfg["seed"], cfg["method"])
    elif command == "manybody-run":
        _params(cfg, many_body=True)
        _check_time(cfg)
        _need(cfg["F"] > 0, "many-body runs need F > 0")
    elif command == "bogoliubov":
        _params(cfg)
        _need(cfg["F"] > 0, "bogoliubov needs F > 0")
        _need(1 <= cfg["states"] <= cfg["n_max"], "states must be between 1 and n_max")
        _need(cfg["n_max"] >= 10, "n_max must be at least 10")
        for key in ("F_scan",):
            if cfg[key] is not None:
                _need(len(cfg[key]) == 3 and 0 < cfg[key][0] < cfg[key][1] and cfg[key][2] >= 2,
                      f"{key} must be [F_lo > 0, F_hi, count >= 2]")
        q = cfg["quasienergy"]
        if q is not None:
            _need(isinstance(q, dict) and q.get("count", 0) >= 1 and len(q.get("F", [])) == 3
                  and 0 < q["F"][0] < q["F"][1],
                  "quasienergy needs count >= 1 and F = [lo > 0, hi, n]")
    elif command == "compare":
        _params(cfg, many_body=True)
        _check_time(cfg)
        _need(cfg["F"] > 0, "compare needs F > 0")
        _need(cfg["ordering"] in ("normal", "husimi"), "ordering must be 'normal' or 'husimi'")
        _need(0 < cfg["window_TJ"] <= cfg["t_max_TJ"], "window_TJ must lie in (0, t_max_TJ]")
        en.EnsembleSpec(cfg["N"], cfg["L"], cfg["count"], cfg["seed"], cfg["method"])
    else:
        raise ConfigError(f"unknown command {command!r}")


# ---------------------------------------------------------------- helpers

def _time_grid(cfg):
    return np.linspace(0.0, cfg["t_max_TJ"] * TWO_PI / cfg["J"], int(cfg["samples"]))


def _axis(lo, hi, n):
    return stab.grid_axis(lo, hi, int(n), open_low=(lo == 0))


def _cache(ctx):
    d = ctx["cache_dir"]
    return CellCache(d, read=ctx["resume"])


def _write_meta(out: Path, name: str, command: str, cfg: dict, payload: dict, t0: float):
    env = io.make_envelope(command, cfg)
    payload = dict(payload, timing={"wall_seconds": round(time.perf_counter() - t0, 3)})
    io.write_json(out / f"{name}.json", env, payload)


def _series_columns(t, p, se_p, pops, se_pops, L):
    cols = {"t": t, "mean_p": p, "se_p": se_p}
    for j, k in enumerate(k_values(L)):
        cols[f"pop_{k}"] = pops[:, j]
    for j, k in enumerate(k_values(L)):
        cols[f"se_pop_{k}"] = se_pops[:, j]
    return cols


# ---------------------------------------------------------------- commands

def cmd_stability_diagram(cfg, out: Path, ctx):
    t0 = time.perf_counter()
    Fs = _axis(*_range(cfg, "F_range"), cfg["resolution"][0])
    gs = _axis(*_range(cfg, "g_range"), cfg["resolution"][1])
    base = LatticeParams(J=cfg["J"], g=0.0, F=1.0, L=cfg["L"])
    d = stab.stability_diagram(Fs, gs, base, workers=ctx["threads"], cache=_cache(ctx))
    rows = list(d.rows())
    cols = {"F_over_J": [r[0] for r in rows], "g_over_J": [r[1] for r in rows],
            "nu": [r[2] for r in rows]}
    if cfg["overlay"]:
        cols["F_cr_over_J"] = [stab.critical_force(r[1], 1.0) for r in rows]
    io.write_csv(out / "stability_diagram.csv", cols, io.make_envelope("stability-diagram", cfg))
    _write_meta(out, "stability_diagram", "stability-diagram", cfg,
                {"meta": d.meta, "failures": d.failures}, t0)
    return not d.failures


def cmd_meanfield_run(cfg, out: Path, ctx):
    t0 = time.perf_counter()
    p = _params(cfg)
    if cfg["initial"] == "uniform":
        state = uniform_state(p.L)
    else:
        spec = en.EnsembleSpec(cfg["N"], p.L, cfg["member"] + 1, cfg["seed"], cfg["method"])
        state = MeanFieldState(to_sites(en.sample_husimi(spec)).amps[cfg["member"]], 0.0)
    tg = _time_grid(cfg)
    icfg = IntegratorConfig(cfg["rel_tol"], cfg["rel_tol"])
    cols = {"t": [], "p": [], "norm": [], "energy": []}
    pops = []
    for s in mf.propagate_series(state, p, tg, icfg):
        cols["t"].append(s.t)
        cols["p"].append(float(momentum_sites(s.amps, p.F, s.t)))
        cols["norm"].append(s.norm)
        cols["energy"].append(float(energy(s, p)))
        pops.append(mode_populations(to_modes(s)))
    pops = np.array(pops)
    for j, k in enumerate(k_values(p.L)):
        cols[f"pop_{k}"] = pops[:, j]
    env = io.make_envelope("meanfield-run", cfg)
    io.write_csv(out / "meanfield.csv", cols, env)
    payload = {}
    if cfg["lyapunov"]:
        rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"], spawn_key=(2 ** 32,)))
        da = rng.standard_normal(p.L) + 1j * rng.standard_normal(p.L)
        lam = mf.lyapunov(state, mf.TangentVector.physical(da), p, float(tg[-1]),
                          int(cfg["samples"]) - 1, icfg)
        io.write_csv(out / "lyapunov.csv", {"t": lam[:, 0], "lambda": lam[:, 1]}, env)
        if p.F > 0:
            nu = stab.increment(p)
            payload = {"nu_per_bloch_period": nu, "lambda_final_per_bloch_period": lam[-1, 1] * p.T_B,
                       "transient_time": mf.transient_time(nu, p.F, cfg["N"] / p.L)}
    _write_meta(out, "meanfield", "meanfield-run", cfg, payload, t0)
    return True


def cmd_ensemble_run(cfg, out: Path, ctx):
    t0 = time.perf_counter()
    p = _params(cfg)
    spec = en.EnsembleSpec(cfg["N"], p.L, cfg["count"], cfg["seed"], cfg["method"])
    ens, attempts = en.sample_husimi(spec, return_attempts=True)
    tg = _time_grid(cfg)
    s = en.ensemble_average(ens, p, tg, IntegratorConfig(cfg["rel_tol"], cfg["rel_tol"]),
                            chunk=int(cfg["chunk"]), workers=ctx["threads"])
    env = io.make_envelope("ensemble-run", cfg)
    io.write_csv(out / "ensemble.csv", s.columns(), env)
    payload = {"spec": spec.as_dict(), "trajectories": s.count, "dropped": s.dropped,
               "acceptance_rate": spec.count / attempts}
    if cfg["fit"]:
        try:
            best, fits = en.select_decay_model(tg, s.mean_p, p.F)
            payload["fits"] = {m: vars(f) for m, f in fits.items()}
            payload["best_model"] = best
        except en.FitError as exc:
            payload["fit_error"] = str(exc)
    _write_meta(out, "ensemble", "ensemble-run", cfg, payload, t0)
    return True


def cmd_manybody_run(cfg, out: Path, ctx):
    t0 = time.perf_counter()
    p = _params(cfg, many_body=True)
    basis = mb.build_basis(p.N, p.L)
    st = mb.HoppingStencil.build(basis, p)
    psi0 = mb.coherent_state(basis)
    tg = _time_grid(cfg)
    icfg = IntegratorConfig(cfg["rel_tol"], cfg["rel_tol"] * 1e-2)
    moms, pops, fid, norms = [], [], [], []
    last = psi0
    for s in mb.propagate_mp_series(psi0, p, tg, st, icfg):
        moms.append(mb.momentum_mp(s, p, st))
        pops.append(mb.mode_populations_mp(s))
        fid.append(abs(np.vdot(psi0.coeffs, s.coeffs)) ** 2)
        norms.append(s.norm)
        last = s
    pops = np.array(pops)
    zeros = np.zeros(tg.size)
    env = io.make_envelope("manybody-run", cfg)
    io.write_csv(out / "manybody.csv",
                 _series_columns(tg, np.array(moms), zeros, pops, np.zeros_like(pops), p.L), env)
    payload = {"dim": basis.dim, "max_norm_drift": float(np.max(np.abs(np.array(norms) - 1)))}
    if cfg["fidelity"]:
        io.write_csv(out / "revival.csv", {"t": tg, "fidelity": fid,
                                           "frozen": np.atleast_1d(mb.frozen_fidelity(psi0, p, tg))},
                     env)
        payload["T_W"] = p.T_W
    if cfg["snapshot"]:
        mb.write_snapshot(out / "manybody_final.bin", last)
    _write_meta(out, "manybody", "manybody-run", cfg, payload, t0)
    return True


def cmd_bogoliubov(cfg, out: Path, ctx):
    t0 = time.perf_counter()
    p = _params(cfg)
    env = io.make_envelope("bogoliubov", cfg)
    rows = {"kind": [], "k": [], "state_index": [], "n": [], "re": [], "im": [], "abs2": []}
    summary = {"static": [], "floquet": []}
    m = int(cfg["states"])
    ok = True
    for k in range(1, (p.L - 1) // 2 + 1):
        prob_s = bg.BogoliubovProblem.from_params(p, k, cfg["n_max"], static=True)
        static = bg.static_states(prob_s, m)
        try:
            fl = bg.floquet_bogoliubov(bg.BogoliubovProblem.from_params(p, k, cfg["n_max"]),
                                       n_states=m, n_cap=cfg["n_cap"]).solutions[:m]
        except bg.TruncationError as exc:
            log.warning("k=%d: %s", k, exc)
            fl, ok = [], False
        for kind, sols in (("static", static), ("floquet", fl)):
            summary[kind].append([s.depletion for s in sols])
            for j, s in enumerate(sols):
                for n, c in enumerate(s.coeffs):
                    rows["kind"].append(kind)
                    rows["k"].append(k)
                    rows["state_index"].append(j)
                    rows["n"].append(n)
                    rows["re"].append(c.real)
                    rows["im"].append(c.imag)
                    rows["abs2"].append(abs(c) ** 2)
    io.write_csv(out / "states.csv", rows, env)
    payload = {"N_D_static": [float(sum(v)) for v in zip(*summary["static"])],
               "N_D_floquet": [float(sum(v)) for v in zip(*summary["floquet"])] if ok else None}
    if cfg["F_scan"] is not None:
        lo, hi, n = cfg["F_scan"]
        Fs = np.geomspace(lo, hi, int(n)) if cfg["log_F"] else np.linspace(lo, hi, int(n))
        nd, sat, nu = [], [], []
        for F in Fs:
            r = bg.depletion(p.replace(F=float(F)), n_start=32, n_cap=cfg["n_cap"])
            nd.append(r.N_D)
            sat.append(r.saturated)
            nu.append(stab.increment(p.replace(F=float(F))))
        io.write_csv(out / "depletion_curve.csv", {"F": Fs, "N_D": nd, "saturated": sat, "nu": nu}, env)
    q = cfg["quasienergy"]
    if q is not None:
        lo, hi, n = q["F"]
        pts = bg.quasienergy_spectrum(p, int(q["count"]), np.linspace(lo, hi, int(n)),
                                      n_start=32, n_cap=cfg["n_cap"])
        qc = {"F": [], "state_index": [], "E": [], "N_D": [], "converged": []}
        for pt in pts:
            for j, (E, d) in enumerate(zip(pt.energies, pt.depletions)):
                qc["F"].append(pt.F)
                qc["state_index"].append(j)
                qc["E"].append(E)
                qc["N_D"].append(d)
                qc["converged"].append(pt.converged)
        io.write_csv(out / "quasienergy.csv", qc, env)
    _write_meta(out, "bogoliubov", "bogoliubov", cfg, payload, t0)
    return ok


def cmd_depletion_diagram(cfg, out: Path, ctx):
    t0 = time.perf_counter()
    Fs = _axis(*_range(cfg, "F_range"), cfg["resolution"][0])
    gs = _axis(*_range(cfg, "g_range"), cfg["resolution"][1])
    base = LatticeParams(J=cfg["J"], g=0.0, F=1.0, L=cfg["L"])
    cache = _cache(ctx)
    d = bg.depletion_diagram(Fs, gs, base, n_start=cfg["n_start"], n_cap=cfg["n_cap"],
                             workers=ctx["threads"], cache=cache)
    cols = {"F_over_J": [], "g_over_J": [], "N_D": [], "saturated": []}
    for F, g, nd, s in d.rows():
        cols["F_over_J"].append(F)
        cols["g_over_J"].append(g)
        cols["N_D"].append(nd)
        cols["saturated"].append(s)
    payload = {"meta": d.meta, "failures": d.failures}
    if cfg["with_nu"]:
        sd = stab.stability_diagram(Fs, gs, base, workers=ctx["threads"], cache=cache)
        cols["nu"] = [r[2] for r in sd.rows()]
        stable = sd.nu < 1e-6
        low = (~d.saturated) & (d.N_D < 10)
        payload["agreement"] = float(np.mean(stable == low))
    io.write_csv(out / "depletion_diagram.csv", cols, io.make_envelope("depletion-diagram", cfg))
    _write_meta(out, "depletion_diagram", "depletion-diagram", cfg, payload, t0)
    return not d.failures


def compare_series(cfg, threads=1):
    """Ensemble and many-body momentum on one grid; returns a dict of arrays and a summary."""
    p = _params(cfg, many_body=True)
    tg = _time_grid(cfg)
    icfg = IntegratorConfig(cfg["rel_tol"], cfg["rel_tol"])
    spec = en.EnsembleSpec(p.N, p.L, cfg["count"], cfg["seed"], cfg["method"])
    s = en.ensemble_average(en.sample_husimi(spec), p, tg, icfg, workers=threads)
    if cfg["ordering"] == "normal":
        s = en.husimi_to_quantum(s, p.N)
    basis = mb.build_basis(p.N, p.L)
    st = mb.HoppingStencil.build(basis, p)
    pm = np.array([mb.momentum_mp(x, p, st) for x in
                   mb.propagate_mp_series(mb.coherent_state(basis), p, tg, st,
                                          icfg.tightened(cfg["rel_tol"]))])
    window = tg <= cfg["window_TJ"] * TWO_PI / p.J + 1e-12
    disc = float(np.linalg.norm(s.mean_p[window] - pm[window]) / np.linalg.norm(pm[window]))
    summary = {"discrepancy": disc, "window_TJ": cfg["window_TJ"], "ceiling": cfg["ceiling"],
               "below_ceiling": disc < cfg["ceiling"], "trajectories": s.count}
    if tg[-1] >= p.T_W:
        half = p.T_B
        a_e = en.bo_amplitude(tg, s.mean_p, p.F, p.T_W - half, p.T_W + half)
        a_m = en.bo_amplitude(tg, pm, p.F, p.T_W - half, p.T_W + half)
        summary.update({"amplitude_at_T_W_ensemble": a_e, "amplitude_at_T_W_manybody": a_m,
                        "revival_divergence": bool(a_m - a_e > 0.25)})
    cols = {"t": tg, "p_ensemble": s.mean_p, "se_ensemble": s.se_p, "p_manybody": pm}
    return cols, summary


def cmd_compare(cfg, out: Path, ctx):
    t0 = time.perf_counter()
    cols, summary = compare_series(cfg, ctx["threads"])
    io.write_csv(out / "compare.csv", cols, io.make_envelope("compare", cfg))
    _write_meta(out, "compare", "compare", cfg, summary, t0)
    return True


COMMANDS = {
    "stability-diagram": cmd_stability_diagram,
    "meanfield-run": cmd_meanfield_run,
    "ensemble-run": cmd_ensemble_run,
    "manybody-run": cmd_manybody_run,
    "bogoliubov": cmd_bogoliubov,
    "depletion-diagram": cmd_depletion_diagram,
    "compare": cmd_compare,
}


# ---------------------------------------------------------------- presets and entry point

def preset_names() -> list[str]:
    root = resources.files("blochsim") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("blochsim") / "presets" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(path.read_text())


def _parse_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        return text


def _overrides(args) -> dict:
    o = {}
    for key in ("J", "g", "F", "L", "W", "N"):
        v = getattr(args, key)
        if v is not None:
            o[key] = v
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        o[k.strip()] = _parse_value(v)
    return o


def resolve_config(command: str, file_cfg: dict, overrides: dict, seed) -> dict:
    cfg = dict(DEFAULTS[command])
    unknown = (set(file_cfg) | set(overrides)) - set(cfg) - {"seed"}
    if unknown:
        raise ConfigError(f"unknown keys for {command}: {sorted(unknown)}")
    cfg.update(file_cfg)
    cfg.update(overrides)
    if command in SEEDED:
        cfg["seed"] = int(seed if seed is not None else cfg.get("seed", 0))
    elif seed is not None:
        cfg["seed"] = int(seed)
    validate(command, cfg)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blochsim", description=__doc__.split("\n")[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("verb", choices=sorted(COMMANDS) + ["preset"])
    ap.add_argument("name", nargs="?", help="preset name (for 'preset')")
    ap.add_argument("--config", type=Path, help="JSON file with configuration keys")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--seed", type=int, help="64-bit seed for stochastic runs")
    ap.add_argument("--threads", type=int, default=1, help="worker processes")
    ap.add_argument("--resume", action="store_true", help="reuse finished sweep cells")
    for key in ("J", "g", "F", "W"):
        ap.add_argument(f"--{key}", type=float)
    ap.add_argument("--L", type=int)
    ap.add_argument("--N", type=int)
    ap.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override any configuration key (value parsed as JSON)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _plan(args) -> list[tuple[str, str, dict]]:
    """Validated (command, subdirectory, config) triples; nothing is written yet."""
    overrides = _overrides(args)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if args.threads < 1:
        raise ConfigError("threads must be at least 1")
    if args.verb == "preset":
        if not args.name:
            raise ConfigError(f"preset name required; available: {', '.join(preset_names())}")
        preset = load_preset(args.name)
        plan = []
        for run in preset["runs"]:
            cfg = dict(run.get("config", {}))
            if args.config:
                cfg.update(_read_config(args.config))
            plan.append((run["command"], run["name"],
                         resolve_config(run["command"], cfg, overrides, args.seed)))
        return plan
    file_cfg = _read_config(args.config) if args.config else {}
    return [(args.verb, "", resolve_config(args.verb, file_cfg, overrides, args.seed))]


def _read_config(path: Path) -> dict:
    """Plain JSON object, or the envelope of an earlier CSV/JSON output."""
    try:
        if Path(path).suffix == ".csv":
            return io.read_envelope(path)["config"]
        cfg = json.loads(Path(path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    if isinstance(cfg.get("envelope"), dict):
        cfg = cfg["envelope"]
    if "config" in cfg and "command" in cfg:
        cfg = cfg["config"]
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        plan = _plan(args)
    except (ConfigError, ValueError) as exc:
        print(f"blochsim: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cache_root = Path(os.environ.get(CACHE_ENV) or args.out / ".cache")
    ok = True
    for command, sub, cfg in plan:
        out = args.out / sub if sub else args.out
        out.mkdir(parents=True, exist_ok=True)
        ctx = {"threads": args.threads, "resume": args.resume, "cache_dir": cache_root}
        log.info("running %s -> %s", command, out)
        try:
            ok = COMMANDS[command](cfg, out, ctx) and ok
        except (IntegrationError, bg.TruncationError, en.EnsembleFailure, en.SamplerStarvation,
                en.FitError, stab.BlockResidualError, mb.DimensionCapExceeded,
                FloatingPointError) as exc:
            print(f"blochsim: numerical failure in {command}: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
    return EXIT_OK if ok else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
