import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from imexstab import sweep as sw
from imexstab.adaptive import AdaptiveConfig, StepRecord, integrate
from imexstab.errors import NumericFailure
from imexstab.mesh import build_uniform
from imexstab.pnp_fbv import PnpParams
from imexstab.scalar_models import logistic_problem
from imexstab.stability import COMPLEX_PAIR, REAL_MINUS_ONE
from imexstab.sweep import (
    SweepPoint,
    detect_features,
    epsilon_sweep,
    extract_dt_infinity,
    fit_power_law,
    read_sweep_csv,
    refine_transition,
    richardson_comparison,
    write_sweep_csv,
)


def recs(dts):
    return [StepRecord(float(i), d, 1e-6, True, 0) for i, d in enumerate(dts)]


def test_extract_constant_tail():
    assert extract_dt_infinity(recs([0.003] * 150)).value == pytest.approx(0.003)


def test_extract_ignores_rejects_and_last_step():
    rs = recs([0.003] * 150) + [StepRecord(200.0, 0.5, 1.0, False, 1), StepRecord(201.0, 1e-5, 0, True, 0)]
    assert extract_dt_infinity(rs).value == pytest.approx(0.003)


def test_extract_failure_reasons():
    assert extract_dt_infinity(recs([1.0] * 150), dt_max=1.0).reason == "hit dt_max"
    cycling = extract_dt_infinity(recs(np.linspace(0.1, 0.2, 150)))
    assert cycling.reason == "not stabilized"
    assert cycling.value == pytest.approx(np.mean(np.linspace(0.1, 0.2, 150)[-101:-1]))
    assert extract_dt_infinity(recs([0.1] * 50)).value is None


def test_extract_logistic():
    tr = integrate(logistic_problem(1.0), np.array([0.01]), 0.0, 750.0, AdaptiveConfig(dt_max=8 / 7), stride=10**6)
    assert extract_dt_infinity(tr.records, dt_max=8 / 7).value == pytest.approx(4 / 7, rel=0.02)


def pts(eps, dts, crossings=None):
    crossings = crossings or [REAL_MINUS_ONE] * len(eps)
    return [SweepPoint(float(e), 2.0, float(d), c) for e, d, c in zip(eps, dts, crossings)]


def test_no_features_on_smooth_data():
    e = np.linspace(0.05, 0.2, 40)
    f = detect_features(pts(e, 0.9 * e**2.1))
    assert f == ([], [], [])


def test_jump_detected_at_step():
    e = np.linspace(0.05, 0.2, 40)
    d = 0.9 * e**2 + np.where(e > 0.13, -0.01, 0.0)
    f = detect_features(pts(e, d))
    i = np.searchsorted(e, 0.13)
    assert f.jump_eps == [pytest.approx(0.5 * (e[i - 1] + e[i]))]
    assert f.corner_eps == []


def test_corner_detected_at_kink():
    e = np.linspace(0.05, 0.2, 40)
    k = e[15]
    d = np.where(e < k, 0.1 * e, 0.1 * k + 0.3 * (e - k))
    f = detect_features(pts(e, d))
    assert f.corner_eps == [pytest.approx(k)]
    assert f.jump_eps == []


def test_crossing_changes():
    e = np.linspace(0, 1, 6)
    c = [REAL_MINUS_ONE, REAL_MINUS_ONE, COMPLEX_PAIR, COMPLEX_PAIR, REAL_MINUS_ONE, REAL_MINUS_ONE]
    f = detect_features(pts(e, 1 + e, c))
    assert f.crossing_change_eps == pytest.approx([0.3, 0.7])


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(5, 30))
def test_features_scale_invariant(scale, k):
    e = np.linspace(0.05, 0.2, 40)
    d = np.where(e < e[k], 0.1 * e, 0.1 * e[k] + 0.3 * (e - e[k])) + np.where(e > 0.15, -0.02, 0)
    a = detect_features(pts(e, d))
    b = detect_features(pts(e, scale * d))
    assert a == b


def test_refine_transition():
    ev = lambda x: SweepPoint(x, 0.0, 1.0 if x < 0.1234 else 2.0, COMPLEX_PAIR if x >= 0.1234 else REAL_MINUS_ONE)
    assert refine_transition(ev, 0.1, 0.15, 1e-6) == pytest.approx(0.1234, abs=1e-6)
    assert refine_transition(ev, 0.1, 0.15, 1e-6, kind="jump") == pytest.approx(0.1234, abs=1e-6)


def test_fit_power_law_exact():
    e = np.geomspace(0.03, 0.1, 8)
    p, c = fit_power_law(e, 0.7 * e**2)
    assert p == pytest.approx(2.0, abs=1e-10) and c == pytest.approx(0.7, rel=1e-9)
    with pytest.raises(ValueError):
        fit_power_law([0.1], [0.2])


def test_sweep_csv_roundtrip(tmp_path):
    ps = [SweepPoint(0.05, 2.0, 0.003, REAL_MINUS_ONE, 0.0, 0.00301, "uniform90"),
          SweepPoint(0.12, 2.0, None, "", 0.0, None, "uniform90", "failed: x")]
    path = tmp_path / "s.csv"
    write_sweep_csv(ps, path, {"config_hash": "abc"})
    text = path.read_text().splitlines()
    assert text[0] == "eps,drive,dt_star,crossing,im_lambda,dt_infinity,mesh_id,status"
    assert text[-1] == "# config_hash = abc"
    back = read_sweep_csv(path)
    assert back[0].dt_star == 0.003 and back[1].dt_star is None and back[1].status == "failed: x"


def test_small_sweep_ordering_and_parallel_agree():
    mesh = build_uniform(24)
    base = PnpParams(eps=0.1, v=2.0)
    grid = [0.14, 0.1]
    a = epsilon_sweep(base, grid, mesh)
    assert [p.eps for p in a] == [0.1, 0.14]
    assert all(p.dt_star is not None and p.status == "ok" for p in a)
    b = epsilon_sweep(base, grid, mesh, jobs=2)
    assert [p.row() for p in a] == [p.row() for p in b]


def test_failures_are_isolated(monkeypatch):
    real = sw.pnp_steady_state

    def flaky(params, mesh, **kw):
        if params.eps > 0.12:
            raise NumericFailure("no steady state")
        return real(params, mesh, **kw)

    monkeypatch.setattr(sw, "pnp_steady_state", flaky)
    out = epsilon_sweep(PnpParams(eps=0.1), [0.1, 0.15], build_uniform(24))
    assert out[0].status == "ok" and out[1].status.startswith("failed")
    assert out[1].dt_star is None


def test_both_modes_self_consistent():
    mesh = build_uniform(24)
    cfg = AdaptiveConfig(dt_max=1.0)
    p = epsilon_sweep(PnpParams(eps=0.1, v=2.0), [0.1], mesh, cfg, mode="both", t_end=200.0)[0]
    assert p.dt_star is not None and p.dt_infinity is not None
    assert abs(p.dt_infinity - p.dt_star) / p.dt_star < 0.02
    with pytest.raises(ValueError):
        epsilon_sweep(PnpParams(), [0.1], mesh, mode="fast")


def test_richardson_comparison_small():
    rc = richardson_comparison(2.0, [0.9, 1.2, 0.6], build_uniform(10), t_end=2000.0)
    plain = [p.dt_inf_plain for p in rc.points]
    assert plain[0] == pytest.approx(rc.points[0].dt_star, rel=0.05)
    # D2 = 0.3 D1 is unconditional without extrapolation
    assert rc.points[2].dt_star is None and rc.points[2].reason_plain == "hit dt_max"
    assert rc.points[2].dt_inf_richardson is not None
    assert rc.slope > 0 and rc.neutral_ratio < 1 / 3
