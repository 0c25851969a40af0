"""Parameter sweeps over the PNP-FBV threshold, feature detection and fits."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from .adaptive import AdaptiveConfig, PlateauStop, StepRecord, integrate
from .errors import NumericFailure, StepFailure
from .mesh import Mesh
from .pnp_fbv import CURRENT, PnpFbvProblem, PnpParams
from .scalar_models import (
    extreme_dirichlet_eigenvalues,
    interior_sine,
    split_diffusion_problem,
    split_diffusion_threshold,
)
from .stability import COMPLEX_PAIR, StabilityReport, analyze
from .steady import find_steady_state

log = logging.getLogger(__name__)

ANALYSIS = "analysis"
ADAPTIVE = "adaptive"
BOTH = "both"


class DtInfinity(NamedTuple):
    value: Optional[float]
    reason: str = "ok"


def extract_dt_infinity(records: Sequence[StepRecord], window: int = 100, dt_max: Optional[float] = None,
                        max_spread: float = 0.05) -> DtInfinity:
    """Mean of the last ``window`` accepted steps with a status reason.

    The very last accepted step is dropped when possible since it is clamped to
    land on the final time. A tail whose spread exceeds ``max_spread`` still
    reports its mean, flagged "not stabilized" (the controller cycles around a
    complex-pair crossing instead of settling).
    """
    dts = [r.dt for r in records if r.accepted]
    if len(dts) > window:
        dts = dts[:-1]
    if len(dts) < window:
        return DtInfinity(None, "too few accepted steps")
    tail = np.asarray(dts[-window:])
    if dt_max is not None and np.any(tail >= dt_max * (1 - 1e-12)):
        return DtInfinity(None, "hit dt_max")
    mean = float(tail.mean())
    if np.ptp(tail) > max_spread * mean:
        return DtInfinity(mean, "not stabilized")
    return DtInfinity(mean)


@dataclass
class SweepPoint:
    eps: float
    drive: float
    dt_star: Optional[float] = None
    crossing: str = ""
    im_lambda: float = 0.0
    dt_infinity: Optional[float] = None
    mesh_id: str = ""
    status: str = "ok"
    diagnostics: Dict[str, object] = field(default_factory=dict)

    def row(self):
        fmt = lambda v: "" if v is None else f"{v:.17g}"
        return [fmt(self.eps), fmt(self.drive), fmt(self.dt_star), self.crossing, fmt(self.im_lambda),
                fmt(self.dt_infinity), self.mesh_id, self.status]


SWEEP_COLUMNS = ["eps", "drive", "dt_star", "crossing", "im_lambda", "dt_infinity", "mesh_id", "status"]


def write_sweep_csv(points: Sequence[SweepPoint], path, metadata: Optional[Dict[str, str]] = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for p in points:
            w.writerow(p.row())
        for k, v in (metadata or {}).items():
            fh.write(f"# {k} = {v}\n")


def read_sweep_csv(path) -> List[SweepPoint]:
    out = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, rows = rows[0], rows[1:]
    for r in rows:
        d = dict(zip(header, r))
        num = lambda s: float(s) if s != "" else None
        out.append(SweepPoint(num(d["eps"]), num(d["drive"]), num(d["dt_star"]), d["crossing"],
                              num(d["im_lambda"]) or 0.0, num(d["dt_infinity"]), d["mesh_id"], d["status"]))
    return out


# ---------------------------------------------------------------------------
# single points

_STEADY_CACHE: Dict[tuple, np.ndarray] = {}


def _cache_key(params: PnpParams, mesh: Mesh):
    return (params, mesh.name, mesh.N, float(mesh.nodes[1]))


def pnp_steady_state(params: PnpParams, mesh: Mesh, dt: Optional[float] = None, t_max: float = 60.0,
                     use_cache: bool = True) -> np.ndarray:
    """Numerical steady state from the standard initial data, cached per (params, mesh).

    The relaxation step starts at ``0.4 eps^2`` (or ``dt``) and is halved while
    the fixed-step run fails to settle.
    """
    key = _cache_key(params, mesh)
    if use_cache and key in _STEADY_CACHE:
        return _STEADY_CACHE[key]
    problem = PnpFbvProblem(params, mesh)
    dt = 0.4 * params.eps**2 if dt is None else dt
    last = None
    for _ in range(6):
        try:
            ss = find_steady_state(problem, problem.initial_state(), dt, t_max=t_max)
        except NumericFailure as exc:
            last = exc
            dt *= 0.5
            continue
        if ss.residual < 1e-8 * (1 + float(np.max(np.abs(problem.apply_g(ss.u))))):
            _STEADY_CACHE[key] = ss.u
            return ss.u
        last = NumericFailure(f"steady search stalled at residual {ss.residual:.3g}", dt=dt)
        dt *= 0.5
    raise last


def threshold_for(params: PnpParams, mesh: Mesh, dt_lo: Optional[float] = None, dt_hi: float = 10.0,
                  rel_tol: float = 1e-6, scan_factor: float = 1.3):
    """Steady state plus :func:`~imexstab.stability.analyze` for one parameter set."""
    problem = PnpFbvProblem(params, mesh)
    u_ss = pnp_steady_state(params, mesh)
    dt_lo = 0.05 * params.eps**2 if dt_lo is None else dt_lo
    for _ in range(20):
        try:
            return problem, u_ss, analyze(problem, u_ss, dt_lo, dt_hi, rel_tol, scan_factor=scan_factor)
        except ValueError:
            dt_lo *= 0.25
    raise NumericFailure("no stable dt_lo found", eps=params.eps)


def adaptive_dt_infinity(problem, u0, cfg: AdaptiveConfig, t_end: float, window: int = 100,
                         stop_window: int = 300, stop_spread: float = 1e-3) -> DtInfinity:
    """Run the adaptive stepper until the step size settles and return dt_infinity."""
    stop = PlateauStop(cfg, window=stop_window, rel_spread=stop_spread)
    traj = integrate(problem, u0, 0.0, t_end, cfg, stride=10**9, stop=stop)
    return extract_dt_infinity(traj.records, window, cfg.dt_max)


def evaluate_point(params: PnpParams, mesh: Mesh, mode: str = ANALYSIS,
                   cfg: Optional[AdaptiveConfig] = None, t_end: float = 200.0,
                   scan_factor: float = 1.3) -> SweepPoint:
    drive = params.j_ext if params.drive == CURRENT else params.v
    pt = SweepPoint(params.eps, drive, mesh_id=mesh.name)
    try:
        problem = PnpFbvProblem(params, mesh)
        if mode in (ANALYSIS, BOTH):
            _, u_ss, rep = threshold_for(params, mesh, scan_factor=scan_factor)
            pt.dt_star = rep.dt_star
            pt.crossing = rep.crossing
            pt.im_lambda = rep.im_lambda
            pt.diagnostics["report"] = rep
            if not rep.found:
                pt.status = rep.status
        if mode in (ADAPTIVE, BOTH):
            cfg = cfg or AdaptiveConfig(tol=1e-6, range=1e-6 / 3, dt_max=1.0, dt_min=1e-10, dt_init=1e-6)
            res = adaptive_dt_infinity(problem, problem.initial_state(), cfg, t_end)
            pt.dt_infinity = res.value
            if res.reason != "ok":
                pt.diagnostics["dt_infinity"] = res.reason
    except (NumericFailure, StepFailure, ValueError) as exc:
        pt.status = f"failed: {exc}"
        log.warning("sweep point eps=%g failed: %s", params.eps, exc)
    return pt


def _evaluate_star(args):
    pt = evaluate_point(*args)
    pt.diagnostics.pop("report", None)
    return pt


def epsilon_sweep(base: PnpParams, eps_grid: Sequence[float], mesh: Mesh, cfg: Optional[AdaptiveConfig] = None,
                  mode: str = ANALYSIS, jobs: int = 1, t_end: float = 200.0,
                  scan_factor: float = 1.3) -> List[SweepPoint]:
    """One :class:`SweepPoint` per ``eps``; ordered by ``eps`` whatever ``jobs`` is."""
    if mode not in (ANALYSIS, ADAPTIVE, BOTH):
        raise ValueError(f"unknown sweep mode {mode!r}")
    tasks = [(base.with_(eps=float(e)), mesh, mode, cfg, t_end, scan_factor) for e in sorted(eps_grid)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_evaluate_star, tasks))
    return [evaluate_point(*t) for t in tasks]


# ---------------------------------------------------------------------------
# features

class Features(NamedTuple):
    corner_eps: List[float]
    jump_eps: List[float]
    crossing_change_eps: List[float]


def _clusters(idx):
    groups = []
    for i in idx:
        if groups and i - groups[-1][-1] <= 1:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def detect_features(points: Sequence[SweepPoint], jump_factor: float = 5.0,
                    corner_factor: float = 10.0) -> Features:
    """Flag jumps, corners and changes of crossing type along a sorted sweep.

    A jump is a neighbour difference of ``dt*`` above ``jump_factor`` times the
    median neighbour difference; a corner is a second divided difference above
    ``corner_factor`` times its median, away from jumps. Locations are interval
    midpoints on the input grid; see :func:`refine_transition`.
    """
    pts = sorted([p for p in points if p.dt_star is not None], key=lambda p: p.eps)
    eps = np.array([p.eps for p in pts])
    dts = np.array([p.dt_star for p in pts])
    jumps, corners, changes = [], [], []
    for a, b in zip(pts[:-1], pts[1:]):
        if (a.crossing == COMPLEX_PAIR) != (b.crossing == COMPLEX_PAIR):
            changes.append(0.5 * (a.eps + b.eps))
    if len(pts) < 3:
        return Features(corners, jumps, changes)
    d1 = np.abs(np.diff(dts))
    # floors keep roundoff on exactly linear stretches from counting as signal
    med1 = max(np.median(d1), 1e-8 * d1.max())
    jump_idx = [i for i in range(d1.size) if d1[i] > jump_factor * med1]
    jumps = [0.5 * (eps[i] + eps[i + 1]) for i in jump_idx]
    if len(pts) >= 4:
        slopes = np.diff(dts) / np.diff(eps)
        d2 = np.abs(np.diff(slopes)) / (0.5 * (eps[2:] - eps[:-2]))
        near_jump = set()
        for i in jump_idx:
            near_jump.update({i - 2, i - 1, i, i + 1})
        med2 = max(np.median(d2), 1e-8 * d2.max())
        flagged = [j for j in range(d2.size) if d2[j] > corner_factor * med2 and j not in near_jump]
        for grp in _clusters(flagged):
            j = max(grp, key=lambda k: d2[k])
            corners.append(float(eps[j + 1]))
    return Features(corners, jumps, changes)


def refine_transition(evaluate: Callable[[float], SweepPoint], eps_a: float, eps_b: float,
                      resolution: float = 1e-4, kind: str = "crossing") -> float:
    """Bisect the interval ``[eps_a, eps_b]`` down to ``resolution`` around a transition.

    ``kind="crossing"`` tracks the change of crossing type; ``kind="jump"``
    keeps the half carrying the larger change in ``dt*``.
    """
    pa, pb = evaluate(eps_a), evaluate(eps_b)
    while eps_b - eps_a > resolution:
        mid = 0.5 * (eps_a + eps_b)
        pm = evaluate(mid)
        if kind == "crossing":
            left = (pa.crossing == COMPLEX_PAIR) != (pm.crossing == COMPLEX_PAIR)
        else:
            left = abs(pm.dt_star - pa.dt_star) > abs(pb.dt_star - pm.dt_star)
        if left:
            eps_b, pb = mid, pm
        else:
            eps_a, pa = mid, pm
    return 0.5 * (eps_a + eps_b)


def fit_power_law(eps, dt_star):
    """Least-squares ``log dt* = p log eps + log c``; returns ``(p, c)``."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(dt_star, dtype=float))
    if x.size < 2:
        raise ValueError("need at least two points for a power-law fit")
    p, logc = np.polyfit(x, y, 1)
    return float(p), float(np.exp(logc))


# ---------------------------------------------------------------------------
# Richardson extrapolation on the split heat equation

class RichardsonPoint(NamedTuple):
    D2: float
    dt_star: Optional[float]  # analytic, no extrapolation
    dt_inf_plain: Optional[float]
    dt_inf_richardson: Optional[float]
    reason_plain: str
    reason_richardson: str


class RichardsonComparison(NamedTuple):
    D1: float
    lam_N: float
    points: List[RichardsonPoint]
    slope: Optional[float]  # 1/dt_inf ~ |lam_N| (slope*D2 - offset*D1) with extrapolation
    offset: Optional[float]

    @property
    def neutral_ratio(self) -> Optional[float]:
        """``D2/D1`` below which the extrapolated scheme shows no step limit."""
        if self.slope is None:
            return None
        return self.offset / self.slope


def _split_run(args):
    D1, D2, mesh, cfg, t_end = args
    prob = split_diffusion_problem(D1, D2, mesh)
    return adaptive_dt_infinity(prob, interior_sine(mesh), cfg, t_end)


def richardson_comparison(D1: float, D2_grid: Sequence[float], mesh: Mesh, cfg: Optional[AdaptiveConfig] = None,
                          t_end: float = 5000.0, jobs: int = 1) -> RichardsonComparison:
    """Limiting steps with and without extrapolation across ``D2``, plus a linear fit."""
    cfg = cfg or AdaptiveConfig(tol=1e-6, range=1e-6 / 3, dt_max=1.0, dt_min=1e-12, dt_init=1e-6)
    plain = AdaptiveConfig(**{**cfg.__dict__, "richardson": False})
    rich = AdaptiveConfig(**{**cfg.__dict__, "richardson": True})
    _, lam_N = extreme_dirichlet_eigenvalues(mesh)
    tasks = []
    for D2 in D2_grid:
        tasks += [(D1, float(D2), mesh, plain, t_end), (D1, float(D2), mesh, rich, t_end)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_split_run, tasks))
    else:
        results = [_split_run(t) for t in tasks]
    points = []
    for k, D2 in enumerate(D2_grid):
        a, b = results[2 * k], results[2 * k + 1]
        st = split_diffusion_threshold(D1, float(D2), lam_N)
        points.append(RichardsonPoint(float(D2), st.dt_star, a.value, b.value, a.reason, b.reason))
    fit = [p for p in points if p.reason_richardson == "ok"]
    xs = np.array([p.D2 for p in fit])
    ys = np.array([1.0 / (abs(lam_N) * p.dt_inf_richardson) for p in fit])
    slope = offset = None
    if xs.size >= 2:
        s, c = np.polyfit(xs, ys, 1)
        slope, offset = float(s), float(-c / D1)
    return RichardsonComparison(D1, lam_N, points, slope, offset)
