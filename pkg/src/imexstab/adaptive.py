"""VSSBDF2 adaptive time-stepper driven by a coarse/fine step-doubling estimate.

Each attempt takes one coarse step of size ``dt`` and two fine steps of size
``dt/2``; their difference, scaled by ``8(dt_old+dt)/(7 dt_old+5 dt)``,
estimates the local truncation error of the coarse step. The accepted
solution is the coarse one, or the Richardson blend of coarse and fine.
"""
from __future__ import annotations

import csv
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .errors import NumericFailure, StepFailure
from .imex_core import ImexProblem, StepperHistory, bootstrap_step, vssbdf2_step

log = logging.getLogger(__name__)

# Where the first fine step gets its state at t_now - dt_old/2:
#   "fine"        the midpoint of the previous accepted step's fine pair
#   "interpolate" quadratic Lagrange interpolation of the last three levels
HALF_HISTORY_RULES = ("fine", "interpolate")


@dataclass
class AdaptiveConfig:
    tol: float = 1e-6
    range: float = 1e-6 / 3
    dt_min: float = 1e-10
    dt_max: float = 1.0
    richardson: bool = False
    dt_init: float = 1e-6
    max_rejects_per_step: int = 60
    growth_max: float = 2.0
    shrink_min: float = 0.1
    half_history: str = "fine"

    def __post_init__(self):
        if not 0 < self.range < self.tol:
            raise ValueError("need 0 < range < tol")
        if not 0 < self.dt_min <= self.dt_init <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if self.growth_max < 1 or not 0 < self.shrink_min < 1:
            raise ValueError("growth_max must be >= 1 and shrink_min in (0, 1)")
        if self.half_history not in HALF_HISTORY_RULES:
            raise ValueError(f"half_history must be one of {HALF_HISTORY_RULES}")

    @property
    def accept_limit(self) -> float:
        return self.tol + self.range


class StepRecord(NamedTuple):
    t: float  # time at the end of the attempted step
    dt: float
    lte_estimate: float
    accepted: bool
    reject_count: int
    at_dt_min: bool = False


class StepResult(NamedTuple):
    accepted: bool
    u_next: np.ndarray
    dt_used: float
    dt_next: float
    record: StepRecord
    u_fine_mid: Optional[np.ndarray] = None  # fine solution at t_now + dt_used/2


def lte_factor(dt_old: float, dt_now: float) -> float:
    return 8.0 * (dt_old + dt_now) / (7.0 * dt_old + 5.0 * dt_now)


def estimate_lte(u_coarse, u_fine, dt_old, dt_now):
    """Return ``(estimate_vector, max_norm)`` for the coarse step's local error."""
    est = lte_factor(dt_old, dt_now) * (np.asarray(u_coarse) - np.asarray(u_fine))
    return est, float(np.max(np.abs(est))) if est.size else 0.0


def richardson_weights(dt_old, dt_now):
    """Weights ``(alpha, beta)`` on the coarse and fine solutions; they sum to one."""
    denom = 7.0 * dt_old + 5.0 * dt_now
    return -(dt_old + 3.0 * dt_now) / denom, 8.0 * (dt_old + dt_now) / denom


def richardson_combine(u_coarse, u_fine, dt_old, dt_now):
    a, b = richardson_weights(dt_old, dt_now)
    return a * np.asarray(u_coarse) + b * np.asarray(u_fine)


def propose_dt(dt, est_norm, cfg: AdaptiveConfig) -> float:
    """Controller ``dt (tol/est)^(1/3)`` clipped to the growth/shrink limits and bounds."""
    if est_norm <= 0:
        factor = cfg.growth_max
    else:
        factor = (cfg.tol / est_norm) ** (1.0 / 3.0)
        factor = min(cfg.growth_max, max(cfg.shrink_min, factor))
    return min(cfg.dt_max, max(cfg.dt_min, dt * factor))


def half_history_state(levels, dt_old):
    """State at ``t_now - dt_old/2`` from the stored levels.

    ``levels`` holds ``(t, u)`` pairs, oldest first; the last two (or three)
    are used for linear (or quadratic Lagrange) interpolation.
    """
    t_now = levels[-1][0]
    t_star = t_now - 0.5 * dt_old
    if len(levels) >= 3:
        (t0, u0), (t1, u1), (t2, u2) = levels[-3:]
        l0 = (t_star - t1) * (t_star - t2) / ((t0 - t1) * (t0 - t2))
        l1 = (t_star - t0) * (t_star - t2) / ((t1 - t0) * (t1 - t2))
        l2 = (t_star - t0) * (t_star - t1) / ((t2 - t0) * (t2 - t1))
        return l0 * u0 + l1 * u1 + l2 * u2
    (t1, u1), (t2, u2) = levels[-2:]
    return 0.5 * (u1 + u2)


def advance_one(problem: ImexProblem, hist_coarse: StepperHistory, hist_fine_half: StepperHistory,
                cfg: AdaptiveConfig, dt_candidate: float, reject_count: int = 0) -> StepResult:
    """Attempt one adaptive step of size ``dt_candidate``.

    ``hist_fine_half`` holds the interpolated state at ``t_now - dt_old/2`` and
    ``u_now``, with ``dt_old`` halved. The caller retries rejected steps with
    ``dt_next``.
    """
    dt_old = hist_coarse.dt_old
    dt = dt_candidate
    u_c = vssbdf2_step(problem, hist_coarse, dt)
    u_half = vssbdf2_step(problem, hist_fine_half, 0.5 * dt)
    fine2 = StepperHistory(hist_coarse.u_now, u_half, hist_coarse.t_now + 0.5 * dt, 0.5 * dt,
                           f_prev=hist_coarse.f_now)
    u_f = vssbdf2_step(problem, fine2, 0.5 * dt)
    _, est = estimate_lte(u_c, u_f, dt_old, dt)
    if not np.isfinite(est):
        est = np.inf
    at_floor = dt <= cfg.dt_min * (1 + 1e-12)
    accepted = est <= cfg.accept_limit or at_floor
    if accepted:
        u_next = richardson_combine(u_c, u_f, dt_old, dt) if cfg.richardson else u_c
        dt_next = propose_dt(dt, est, cfg)
    else:
        u_next = u_c
        dt_next = propose_dt(dt, est, cfg)
        if dt_next >= dt:
            dt_next = max(cfg.dt_min, dt * cfg.shrink_min)
    rec = StepRecord(hist_coarse.t_now + dt, dt, est, accepted, reject_count, at_floor and est > cfg.accept_limit)
    return StepResult(accepted, u_next, dt, dt_next, rec, u_half)


@dataclass
class Trajectory:
    times: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    records: List[StepRecord] = field(default_factory=list)

    @property
    def accepted(self) -> List[StepRecord]:
        return [r for r in self.records if r.accepted]

    def accepted_dts(self) -> np.ndarray:
        return np.array([r.dt for r in self.records if r.accepted])

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def records_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "dt", "lte", "accepted", "reject_count"])
            for r in self.records:
                w.writerow([f"{r.t:.17g}", f"{r.dt:.17g}", f"{r.lte_estimate:.17g}", int(r.accepted),
                            r.reject_count])

    def states_to_csv(self, path, stride: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            dim = self.states[0].size
            w.writerow(["t"] + [f"u{i}" for i in range(dim)])
            for k in range(0, len(self.times), stride):
                w.writerow([f"{self.times[k]:.17g}"] + [f"{v:.17g}" for v in self.states[k]])


class AdaptiveStepper:
    """Stateful driver around :func:`advance_one` keeping the last three levels."""

    def __init__(self, problem: ImexProblem, u0, t0: float, cfg: AdaptiveConfig):
        self.problem = problem
        self.cfg = cfg
        u0 = np.asarray(u0, dtype=float)
        dt = cfg.dt_init
        while True:
            try:
                u1 = bootstrap_step(problem, u0, t0, dt)
                break
            except NumericFailure:
                dt *= 0.5
                if dt < cfg.dt_min:
                    raise
        self.levels = deque([(t0, u0), (t0 + dt, u1)], maxlen=3)
        self.f_cache = deque([problem.eval_f(u0, t0), None], maxlen=3)
        self.dt_old = dt
        self.dt_next = dt
        self.fine_mid = None

    @property
    def t(self) -> float:
        return self.levels[-1][0]

    @property
    def u(self) -> np.ndarray:
        return self.levels[-1][1]

    def _histories(self):
        (t_p, u_p), (t_n, u_n) = list(self.levels)[-2:]
        f_p, f_n = list(self.f_cache)[-2:]
        if f_n is None:
            f_n = self.problem.eval_f(u_n, t_n)
            self.f_cache[-1] = f_n
        coarse = StepperHistory(u_p, u_n, t_n, self.dt_old, f_prev=f_p, f_now=f_n)
        if self.cfg.half_history == "fine" and self.fine_mid is not None:
            u_mid = self.fine_mid
        else:
            u_mid = half_history_state(list(self.levels), self.dt_old)
        fine = StepperHistory(u_mid, u_n, t_n, 0.5 * self.dt_old, f_now=f_n)
        return coarse, fine

    def step(self, t_end: Optional[float] = None):
        """Advance by one accepted step; returns every record produced on the way."""
        records = []
        dt = self.dt_next
        if t_end is not None and self.t + dt >= t_end:
            dt = t_end - self.t
        coarse, fine = self._histories()
        for rejects in range(self.cfg.max_rejects_per_step + 1):
            try:
                res = advance_one(self.problem, coarse, fine, self.cfg, dt, reject_count=rejects)
            except NumericFailure:
                # a blown-up stage counts as a rejection
                if dt <= self.cfg.dt_min * (1 + 1e-12):
                    raise
                records.append(StepRecord(self.t + dt, dt, np.inf, False, rejects))
                dt = max(self.cfg.dt_min, dt * self.cfg.shrink_min)
                continue
            records.append(res.record)
            if res.accepted:
                self.levels.append((self.t + dt, res.u_next))
                self.fine_mid = res.u_fine_mid
                self.f_cache.append(None)
                self.dt_old = dt
                self.dt_next = res.dt_next
                return records
            dt = res.dt_next
        raise StepFailure(f"step at t={self.t:.6g} rejected {self.cfg.max_rejects_per_step} times",
                          records)


def integrate(problem: ImexProblem, u0, t0: float, t_end: float, cfg: AdaptiveConfig,
              stride: int = 1, callback=None, stop=None) -> Trajectory:
    """Adaptive integration from ``t0`` to exactly ``t_end``.

    Every accepted state is kept when ``stride == 1``; larger strides thin the
    stored states but all step records are kept. ``stop(trajectory)`` is
    consulted after each accepted step and ends the run early when it returns
    True (the last state is always stored).
    """
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    stepper = AdaptiveStepper(problem, u0, t0, cfg)
    traj = Trajectory([t0, stepper.t], [stepper.levels[0][1], stepper.u])
    traj.records.append(StepRecord(stepper.t, stepper.dt_old, 0.0, True, 0))
    n = 1
    while stepper.t < t_end - 1e-12 * max(1.0, abs(t_end)):
        try:
            recs = stepper.step(t_end)
        except StepFailure as exc:
            exc.records = traj.records + exc.records
            raise
        traj.records.extend(recs)
        n += 1
        done = stop is not None and stop(traj)
        if n % stride == 0 or stepper.t >= t_end or done:
            traj.times.append(stepper.t)
            traj.states.append(stepper.u)
        if callback is not None:
            callback(stepper)
        if done:
            break
    return traj


class PlateauStop:
    """Stop predicate: the last ``window`` accepted dts agree to ``rel_spread``.

    Plateaus at ``dt_max`` do not count. Checked every ``every`` calls.
    """

    def __init__(self, cfg: AdaptiveConfig, window: int = 300, rel_spread: float = 1e-3,
                 every: int = 50, t_min: float = 0.0):
        self.cfg, self.window, self.rel_spread, self.every, self.t_min = cfg, window, rel_spread, every, t_min
        self._calls = 0

    def __call__(self, traj: Trajectory) -> bool:
        self._calls += 1
        if self._calls % self.every or len(traj.records) < self.window:
            return False
        tail = [r.dt for r in traj.records[-4 * self.window:] if r.accepted][-self.window:]
        if len(tail) < self.window or traj.records[-1].t < self.t_min:
            return False
        tail = np.asarray(tail)
        if np.any(tail >= self.cfg.dt_max * (1 - 1e-12)):
            return False
        return bool(np.ptp(tail) <= self.rel_spread * tail.mean())
