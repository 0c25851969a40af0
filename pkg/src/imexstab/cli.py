"""Command-line front end: ``imexstab {simulate,steady,stability,sweep,scalar}``.

Runs are described by an INI file with the sections listed in ``SCHEMA``;
``--set section.key=value`` overrides single entries. Exit status is 0 on
success, 2 for configuration errors and 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import os
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .adaptive import HALF_HISTORY_RULES, AdaptiveConfig, PlateauStop, integrate
from .errors import NumericFailure, StepFailure
from .mesh import Mesh, build_piecewise, build_uniform
from .pnp_fbv import CURRENT, VOLTAGE, PnpFbvProblem, PnpParams
from .scalar_models import (
    ScalarSplit,
    classify_stability,
    interior_sine,
    logistic_problem,
    rho_roots,
    sink_diffusion_problem,
    split_diffusion_problem,
    stability_case,
)
from .stability import analyze, jacobians
from .steady import find_steady_state, residual
from .sweep import (
    ANALYSIS,
    BOTH,
    ADAPTIVE,
    detect_features,
    epsilon_sweep,
    evaluate_point,
    extract_dt_infinity,
    fit_power_law,
    pnp_steady_state,
    refine_transition,
    richardson_comparison,
    write_sweep_csv,
)

MODELS = ("pnp", "logistic", "split_diffusion", "sink_diffusion")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


def _bool(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s) -> List[float]:
    if isinstance(s, (list, tuple)):
        return [float(x) for x in s]
    return [float(x) for x in str(s).replace(",", " ").split()]


# (parser, default); a default of None means "choose from the model".
SCHEMA: Dict[str, Dict[str, tuple]] = {
    "run": {"model": (str, "pnp"), "seed": (int, 0)},
    "pnp": {
        "eps": (float, 0.05), "delta": (float, 1.0), "k_ca": (float, 1.0), "k_cc": (float, 1.0),
        "j_ra": (float, 1.0), "j_rc": (float, 1.0), "drive": (str, VOLTAGE), "v": (float, 2.0),
        "j_ext": (float, 0.0),
    },
    "logistic": {"r": (float, 1.0), "u0": (float, 0.01)},
    "split_diffusion": {"D1": (float, 2.0), "D2": (float, 1.0)},
    "sink_diffusion": {"D1": (float, 1.0), "eps": (float, 0.1)},
    "scalar": {"lam": (float, 1.0), "alpha": (float, -2.0), "dt_min": (float, 1e-2),
               "dt_max": (float, 10.0), "n_dt": (int, 13)},
    "mesh": {"kind": (str, "uniform"), "n_cells": (int, 90), "edge_frac": (float, 0.1),
             "dx_edge": (float, 1 / 150), "dx_bulk": (float, 4 / 75)},
    "adaptive": {
        "tol": (float, 1e-6), "range": (float, None), "dt_min": (float, 1e-10), "dt_max": (float, 1.0),
        "dt_init": (float, 1e-6), "richardson": (_bool, False), "half_history": (str, "fine"),
        "t_end": (float, None), "stride": (int, 1), "stop_on_plateau": (_bool, False),
    },
    "steady": {"dt": (float, None), "t_max": (float, 60.0), "tol": (float, 1e-10)},
    "stability": {"dt_lo": (float, None), "dt_hi": (float, 10.0), "rel_tol": (float, 1e-6),
                  "scan_factor": (float, 1.3), "fd_step": (float, None)},
    "sweep": {
        "kind": (str, "epsilon"), "mode": (str, ANALYSIS), "eps_min": (float, 0.05), "eps_max": (float, 0.2),
        "n_eps": (int, 40), "spacing": (str, "linear"), "voltages": (_floats, [0.0, 1.0, 2.0, 3.0]),
        "refine_resolution": (float, 0.0), "jump_factor": (float, 5.0), "corner_factor": (float, 10.0),
        "t_end": (float, 200.0), "d2_min": (float, None), "d2_max": (float, None), "n_d2": (int, 10),
        "extra_d2": (_floats, []),
    },
}

_DEFAULT_T_END = {"pnp": 20.0, "logistic": 750.0, "split_diffusion": 3000.0, "sink_diffusion": 3000.0}


@dataclass
class RunConfig:
    values: Dict[str, Dict[str, object]]

    def __getitem__(self, section):
        return self.values[section]

    @property
    def model(self) -> str:
        return self.values["run"]["model"]

    def canonical(self) -> str:
        lines = []
        for sec in sorted(self.values):
            for k in sorted(self.values[sec]):
                lines.append(f"{sec}.{k}={self.values[sec][k]!r}")
        return "\n".join(lines)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def metadata(self, command: str) -> Dict[str, str]:
        return {"command": command, "model": self.model, "config_hash": self.digest(),
                "tool_version": f"imexstab {__version__}"}


def _check_key(section, key):
    if section not in SCHEMA:
        raise ConfigError(f"unknown config section [{section}]")
    lookup = {k.lower(): k for k in SCHEMA[section]}
    if key.lower() not in lookup:
        raise ConfigError(f"unknown config key {section}.{key}")
    return lookup[key.lower()]


def load_config(path: Optional[str] = None, overrides: Optional[List[str]] = None) -> RunConfig:
    """Merge defaults, an optional INI file and ``section.key=value`` overrides."""
    raw: Dict[str, Dict[str, object]] = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    given: Dict[str, Dict[str, str]] = {}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for sec in cp.sections():
            for key, val in cp.items(sec):
                given.setdefault(sec, {})[_check_key(sec, key)] = val
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        lhs, val = item.split("=", 1)
        sec, key = lhs.strip().split(".", 1)
        given.setdefault(sec, {})[_check_key(sec, key.strip())] = val.strip()
    for sec, items in given.items():
        for key, val in items.items():
            parse = SCHEMA[sec][key][0]
            try:
                raw[sec][key] = parse(val)
            except ValueError as exc:
                raise ConfigError(f"bad value for {sec}.{key}: {val!r} ({exc})") from exc
    cfg = RunConfig(raw)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.model not in MODELS:
        raise ConfigError(f"run.model must be one of {', '.join(MODELS)}")
    if cfg["mesh"]["kind"] not in ("uniform", "piecewise"):
        raise ConfigError("mesh.kind must be uniform or piecewise")
    if cfg["adaptive"]["half_history"] not in HALF_HISTORY_RULES:
        raise ConfigError(f"adaptive.half_history must be one of {HALF_HISTORY_RULES}")
    if cfg["sweep"]["kind"] not in ("epsilon", "power_law", "richardson"):
        raise ConfigError("sweep.kind must be epsilon, power_law or richardson")
    if cfg["sweep"]["mode"] not in (ANALYSIS, ADAPTIVE, BOTH):
        raise ConfigError("sweep.mode must be analysis, adaptive or both")
    if cfg["sweep"]["spacing"] not in ("linear", "log"):
        raise ConfigError("sweep.spacing must be linear or log")
    if cfg["stability"]["dt_hi"] <= 0 or cfg["adaptive"]["stride"] < 1:
        raise ConfigError("stability.dt_hi must be positive and adaptive.stride >= 1")
    # construct everything once so range errors surface as config errors
    try:
        build_mesh(cfg)
        adaptive_config(cfg)
        build_problem(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# builders

def build_mesh(cfg: RunConfig) -> Mesh:
    m = cfg["mesh"]
    if m["kind"] == "uniform":
        return build_uniform(m["n_cells"])
    return build_piecewise(m["edge_frac"], m["dx_edge"], m["dx_bulk"])


def pnp_params(cfg: RunConfig) -> PnpParams:
    return PnpParams(**cfg["pnp"])


def adaptive_config(cfg: RunConfig) -> AdaptiveConfig:
    a = cfg["adaptive"]
    rng = a["range"] if a["range"] is not None else a["tol"] / 3
    return AdaptiveConfig(tol=a["tol"], range=rng, dt_min=a["dt_min"], dt_max=a["dt_max"],
                          dt_init=a["dt_init"], richardson=a["richardson"], half_history=a["half_history"])


def build_problem(cfg: RunConfig):
    """Return ``(problem, initial_state, steady_guess)``; the guess may be None."""
    model = cfg.model
    if model == "pnp":
        prob = PnpFbvProblem(pnp_params(cfg), build_mesh(cfg))
        return prob, prob.initial_state(), None
    if model == "logistic":
        lg = cfg["logistic"]
        return logistic_problem(lg["r"]), np.array([lg["u0"]]), np.array([1.0])
    mesh = build_mesh(cfg)
    if model == "split_diffusion":
        s = cfg["split_diffusion"]
        prob = split_diffusion_problem(s["D1"], s["D2"], mesh)
    else:
        s = cfg["sink_diffusion"]
        prob = sink_diffusion_problem(s["D1"], s["eps"], mesh)
    return prob, interior_sine(mesh), np.zeros(mesh.N - 2)


def _t_end(cfg: RunConfig) -> float:
    t = cfg["adaptive"]["t_end"]
    return _DEFAULT_T_END[cfg.model] if t is None else t


# ---------------------------------------------------------------------------
# output helpers

def _stamp(path: str, meta: Dict[str, str]) -> None:
    with open(path, "a") as fh:
        for k, v in meta.items():
            fh.write(f"# {k} = {v}\n")


def _write_rows(path: str, header, rows, meta) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in r])
    _stamp(path, meta)


def _write_text(path: str, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def _fmt(v) -> str:
    return "none" if v is None else f"{v:.17g}"


# ---------------------------------------------------------------------------
# steady states and thresholds

def steady_state(cfg: RunConfig, problem, u0, guess):
    if cfg.model == "pnp":
        st = cfg["steady"]
        if st["dt"] is None:
            return pnp_steady_state(problem.params, problem.mesh, t_max=st["t_max"], use_cache=False)
        return find_steady_state(problem, u0, st["dt"], st["t_max"], st["tol"]).u
    return guess


def _threshold(cfg: RunConfig, problem, u_ss):
    st = cfg["stability"]
    dt_lo = st["dt_lo"]
    if dt_lo is None:
        dt_lo = 0.05 * cfg["pnp"]["eps"] ** 2 if cfg.model == "pnp" else 1e-4
    for _ in range(30):
        try:
            return analyze(problem, u_ss, dt_lo, st["dt_hi"], st["rel_tol"], h=st["fd_step"],
                           scan_factor=st["scan_factor"])
        except ValueError:
            if st["dt_lo"] is not None:
                raise NumericFailure(f"scheme already unstable at stability.dt_lo={dt_lo:g}")
            dt_lo *= 0.25
    raise NumericFailure("no stable starting step found for the threshold search")


def jacobian_probe(problem, u_ss, J_f, seed: int, h: Optional[float] = None) -> float:
    """Relative mismatch between ``J_f v`` and a directional difference of f for a random ``v``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(u_ss.size)
    v /= np.linalg.norm(v)
    h = 1e-6 * (1 + np.max(np.abs(u_ss))) if h is None else h
    fd = (problem.eval_f(u_ss + h * v, 0.0) - problem.eval_f(u_ss - h * v, 0.0)) / (2 * h)
    jv = J_f @ v
    return float(np.linalg.norm(fd - jv) / max(np.linalg.norm(jv), 1e-300))


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: RunConfig, out: str, jobs: int = 1) -> int:
    problem, u0, _ = build_problem(cfg)
    acfg = adaptive_config(cfg)
    stop = PlateauStop(acfg) if cfg["adaptive"]["stop_on_plateau"] else None
    traj = integrate(problem, u0, 0.0, _t_end(cfg), acfg, stride=cfg["adaptive"]["stride"], stop=stop)
    meta = cfg.metadata("simulate")
    p = os.path.join(out, "steps.csv")
    traj.records_to_csv(p)
    _stamp(p, meta)
    p = os.path.join(out, "states.csv")
    traj.states_to_csv(p)
    _stamp(p, meta)
    if cfg.model == "pnp":
        p = os.path.join(out, "snapshot.csv")
        problem.snapshot_to_csv(traj.final_state, p)
        _stamp(p, meta)
    dti = extract_dt_infinity(traj.records, dt_max=acfg.dt_max)
    text = (f"t_final = {traj.times[-1]:.17g}\n"
            f"accepted_steps = {len(traj.accepted)}\n"
            f"rejected_steps = {len(traj.records) - len(traj.accepted)}\n"
            f"dt_infinity = {_fmt(dti.value)}\n"
            f"dt_infinity_status = {dti.reason}\n"
            f"steady_residual = {residual(problem, traj.final_state):.17g}\n")
    _write_text(os.path.join(out, "summary.txt"), text)
    print(text, end="")
    return EXIT_OK


def cmd_steady(cfg: RunConfig, out: str, jobs: int = 1) -> int:
    problem, u0, guess = build_problem(cfg)
    u = steady_state(cfg, problem, u0, guess)
    meta = cfg.metadata("steady")
    p = os.path.join(out, "steady.csv")
    if cfg.model == "pnp":
        problem.snapshot_to_csv(u, p)
        _stamp(p, meta)
    else:
        _write_rows(p, ["index", "u"], [(i, float(x)) for i, x in enumerate(u)], meta)
    text = f"steady_residual = {residual(problem, u):.17g}\n"
    if cfg.model == "pnp":
        mp, mm = problem.masses(u)
        text += f"mass_c_plus = {mp:.17g}\nmass_c_minus = {mm:.17g}\n"
    _write_text(os.path.join(out, "summary.txt"), text)
    print(text, end="")
    return EXIT_OK


def cmd_stability(cfg: RunConfig, out: str, jobs: int = 1) -> int:
    problem, u0, guess = build_problem(cfg)
    u_ss = steady_state(cfg, problem, u0, guess)
    rep = _threshold(cfg, problem, u_ss)
    jac = jacobians(problem, u_ss, cfg["stability"]["fd_step"])
    probe = jacobian_probe(problem, u_ss, jac.J_f, cfg["run"]["seed"], cfg["stability"]["fd_step"])
    meta = cfg.metadata("stability")
    p = os.path.join(out, "radius_samples.csv")
    rep.samples_to_csv(p)
    _stamp(p, meta)
    if rep.critical_eigvec is not None:
        p = os.path.join(out, "eigvec.csv")
        x = problem.mesh.nodes if cfg.model == "pnp" else None
        rep.eigvec_to_csv(p, x)
        _stamp(p, meta)
    text = rep.summary() + f"jacobian_probe_rel_error = {probe:.3e}\n"
    _write_text(os.path.join(out, "summary.txt"), text)
    print(text, end="")
    return EXIT_OK


def _eps_grid(sw) -> np.ndarray:
    if sw["n_eps"] < 1 or not 0 < sw["eps_min"] <= sw["eps_max"]:
        raise ConfigError("sweep needs 0 < eps_min <= eps_max and n_eps >= 1")
    if sw["spacing"] == "log":
        return np.geomspace(sw["eps_min"], sw["eps_max"], sw["n_eps"])
    return np.linspace(sw["eps_min"], sw["eps_max"], sw["n_eps"])


def cmd_sweep(cfg: RunConfig, out: str, jobs: int = 1) -> int:
    sw = cfg["sweep"]
    meta = cfg.metadata("sweep")
    kind = sw["kind"]
    if kind in ("epsilon", "power_law") and cfg.model != "pnp":
        raise ConfigError(f"sweep.kind={kind} needs run.model=pnp")
    if kind == "richardson" and cfg.model != "split_diffusion":
        raise ConfigError("sweep.kind=richardson needs run.model=split_diffusion")
    if kind == "richardson":
        return _sweep_richardson(cfg, out, jobs, meta)
    mesh = build_mesh(cfg)
    base = pnp_params(cfg)
    acfg = adaptive_config(cfg)
    grid = _eps_grid(sw)
    if kind == "power_law":
        drives = sw["voltages"]
        rows, points = [], []
        for d in drives:
            b = base.with_(j_ext=d) if base.drive == CURRENT else base.with_(v=d)
            pts = epsilon_sweep(b, grid, mesh, acfg, ANALYSIS, jobs)
            points += pts
            ok = [q for q in pts if q.dt_star is not None]
            p_exp, pref = fit_power_law([q.eps for q in ok], [q.dt_star for q in ok]) if len(ok) >= 2 \
                else (None, None)
            rows.append((float(d), p_exp, pref, len(ok)))
        write_sweep_csv(points, os.path.join(out, "sweep.csv"), meta)
        _write_rows(os.path.join(out, "power_law.csv"), ["drive", "exponent", "prefactor", "n_points"],
                    [tuple("" if v is None else v for v in r) for r in rows], meta)
        text = "".join(f"drive = {r[0]:g}: exponent = {_fmt(r[1])}, prefactor = {_fmt(r[2])}\n" for r in rows)
        _write_text(os.path.join(out, "features.txt"), text)
        print(text, end="")
        return EXIT_OK
    points = epsilon_sweep(base, grid, mesh, acfg, sw["mode"], jobs, t_end=sw["t_end"])
    write_sweep_csv(points, os.path.join(out, "sweep.csv"), meta)
    feats = detect_features(points, sw["jump_factor"], sw["corner_factor"])
    text = _features_report(feats, points, base, mesh, sw)
    _write_text(os.path.join(out, "features.txt"), text)
    print(text, end="")
    return EXIT_OK


def _features_report(feats, points, base, mesh, sw) -> str:
    lines = [f"points = {len(points)}",
             f"failed = {sum(1 for p in points if p.status != 'ok')}"]
    changes = list(feats.crossing_change_eps)
    res = sw["refine_resolution"]
    if res > 0 and changes:
        eps = [p.eps for p in points]
        refined = []
        for c in changes:
            i = int(np.searchsorted(eps, c))
            refined.append(refine_transition(lambda e: evaluate_point(base.with_(eps=e), mesh),
                                             eps[i - 1], eps[i], res))
        changes = refined
    lines.append("crossing_change_eps = " + " ".join(f"{e:.6g}" for e in changes))
    lines.append("jump_eps = " + " ".join(f"{e:.6g}" for e in feats.jump_eps))
    lines.append("corner_eps = " + " ".join(f"{e:.6g}" for e in feats.corner_eps))
    cplx = [p.eps for p in points if p.crossing == "complex_pair"]
    if cplx:
        lines.append(f"complex_grid_points = {min(cplx):.6g} .. {max(cplx):.6g}")
    return "\n".join(lines) + "\n"


def _sweep_richardson(cfg: RunConfig, out: str, jobs: int, meta) -> int:
    sw = cfg["sweep"]
    D1 = cfg["split_diffusion"]["D1"]
    lo = sw["d2_min"] if sw["d2_min"] is not None else 1.05 * D1 / 3
    hi = sw["d2_max"] if sw["d2_max"] is not None else 2 * D1 / 3
    grid = list(np.linspace(lo, hi, sw["n_d2"])) + list(sw["extra_d2"])
    t_end = cfg["adaptive"]["t_end"] or _DEFAULT_T_END["split_diffusion"]
    rc = richardson_comparison(D1, grid, build_mesh(cfg), adaptive_config(cfg), t_end=t_end, jobs=jobs)
    rows = [(p.D2, "" if p.dt_star is None else p.dt_star, "" if p.dt_inf_plain is None else p.dt_inf_plain,
             "" if p.dt_inf_richardson is None else p.dt_inf_richardson, p.reason_plain, p.reason_richardson)
            for p in rc.points]
    _write_rows(os.path.join(out, "richardson.csv"),
                ["D2", "dt_star", "dt_inf_plain", "dt_inf_richardson", "status_plain", "status_richardson"],
                rows, meta)
    text = (f"lam_N = {rc.lam_N:.17g}\nslope = {_fmt(rc.slope)}\noffset = {_fmt(rc.offset)}\n"
            f"neutral_D2_over_D1 = {_fmt(rc.neutral_ratio)}\n")
    _write_text(os.path.join(out, "features.txt"), text)
    print(text, end="")
    return EXIT_OK


def scalar_report(lam: float, alpha: float, dt_grid) -> str:
    s = ScalarSplit(lam, alpha)
    try:
        case = stability_case(s)
    except ValueError:
        case = None
    st = classify_stability(s) if case is not None else None
    lines = [f"lam = {lam:.17g}", f"alpha = {alpha:.17g}",
             f"case = {case if case is not None else 'undefined (lam + alpha >= 0)'}",
             "verdict = " + (st.label if st is not None else "not decaying"),
             f"dt_star = {_fmt(st.dt_star) if st is not None else 'none'}",
             f"{'dt':>12} {'|rho_plus|':>12} {'|rho_minus|':>12}"]
    for dt in dt_grid:
        try:
            rp, rm = rho_roots(s, float(dt))
            lines.append(f"{dt:12.6g} {abs(rp):12.6g} {abs(rm):12.6g}")
        except NumericFailure:
            lines.append(f"{dt:12.6g} {'pole':>12} {'pole':>12}")
    return "\n".join(lines) + "\n"


def cmd_scalar(cfg: RunConfig, out: Optional[str], jobs: int = 1) -> int:
    sc = cfg["scalar"]
    if not 0 < sc["dt_min"] <= sc["dt_max"] or sc["n_dt"] < 1:
        raise ConfigError("scalar needs 0 < dt_min <= dt_max and n_dt >= 1")
    grid = np.geomspace(sc["dt_min"], sc["dt_max"], sc["n_dt"])
    text = scalar_report(sc["lam"], sc["alpha"], grid)
    print(text, end="")
    if out is not None:
        s = ScalarSplit(sc["lam"], sc["alpha"])
        rows = []
        for dt in grid:
            try:
                rp, rm = rho_roots(s, float(dt))
            except NumericFailure:
                continue
            rows.append((float(dt), rp.real, rp.imag, rm.real, rm.imag))
        _write_rows(os.path.join(out, "scalar.csv"),
                    ["dt", "rho_plus_re", "rho_plus_im", "rho_minus_re", "rho_minus_im"], rows,
                    cfg.metadata("scalar"))
        _write_text(os.path.join(out, "summary.txt"), text)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "steady": cmd_steady, "stability": cmd_stability,
            "sweep": cmd_sweep, "scalar": cmd_scalar}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="imexstab", description="IMEX SBDF2 stability experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--set", metavar="K=V", action="append", default=[], dest="overrides",
                       help="override one entry, e.g. pnp.eps=0.12 (repeatable)")
        p.add_argument("--out", metavar="DIR", default=None)
        p.add_argument("--jobs", metavar="N", type=int, default=1)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = args.out
        if out is None and args.command != "scalar":
            out = "out"
        if out is not None:
            os.makedirs(out, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepFailure as exc:
        last = exc.records[-1] if exc.records else None
        ctx = f" (t={last.t:.6g}, dt={last.dt:.3g}, lte={last.lte_estimate:.3g})" if last else ""
        print(f"numeric failure: {exc}{ctx}", file=sys.stderr)
        return EXIT_NUMERIC
    except NumericFailure as exc:
        ctx = ", ".join(f"{k}={v}" for k, v in exc.context.items())
        print(f"numeric failure: {exc}" + (f" ({ctx})" if ctx else ""), file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
