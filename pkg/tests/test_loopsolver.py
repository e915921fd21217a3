import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import solve_ivp

from oracles import ode_trajectory
from sgihp.integrator import IntegratorSettings, accel_exact, integrate_arm
from sgihp.loopsolver import (
    BracketError,
    ClosureError,
    ClosureProblem,
    DegenerateClosure,
    _root,
    closure_residuals,
    solve_full_closure,
    solve_stage4_eta,
    solve_stage5,
    solve_T1,
    solve_T3,
)
from sgihp.loopsolver import _state_before
from sgihp.trajectory import arm_trajectory, spin_offset, stage1_trajectory

TABLE2 = {"T1": 0.01784, "T3": 0.00415, "eta_n4": 992199.56, "eta_l5": 2414.07, "T5": 0.01853}


def _quiet(fn, *a, **k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*a, **k)


def _stall_event_ode(x0, v0, w, t_max):
    """solve_ivp of x'' = w^2 x until v = 0; returns (t, x)."""
    ev = lambda t, y: y[1]  # noqa: E731
    ev.terminal = True
    sol = solve_ivp(lambda t, y: [y[1], w**2 * y[0]], (0, t_max), [x0, v0], method="DOP853",
                    rtol=1e-13, atol=[1e-25, 1e-20], events=ev)
    return sol.t_events[0][0], sol.y_events[0][0][0]


def test_T1_is_half_period(table2):
    assert_allclose(solve_T1(table2), TABLE2["T1"], rtol=1e-3)
    assert_allclose(solve_T1(table2), math.pi / table2.stage(1).frequency(table2.constants), rtol=1e-15)


def test_T3_reference(table2):
    assert abs(solve_T3(table2) - TABLE2["T3"]) < 1e-5
    assert solve_T3(table2, 1e-5) == pytest.approx(0.00415, abs=1e-12)


def test_T3_zero_when_stage2_ends_at_rest(table2):
    # exact half period, so stage 1 (and the empty stage 2) end at rest
    cfg = table2.replace_stage(1, duration=solve_T1(table2)).replace_stage(2, duration=0.0)
    assert solve_T3(cfg) == 0.0


def test_T3_against_ode_peak_finding(table2):
    # +1% stage-3 frequency; the ODE's first velocity zero sits at T3 / 2
    cfg = table2.replace_stage(3, eta_linear=1.01 * table2.stage(3).eta_linear)
    s2 = _state_before(cfg, 3)
    w3 = cfg.stage(3).frequency(cfg.constants)
    ev = lambda t, y: y[1]  # noqa: E731
    ev.terminal = True
    sol = solve_ivp(lambda t, y: [y[1], -w3**2 * y[0]], (0, 0.1), [s2.x, s2.v], method="DOP853",
                    rtol=1e-13, atol=[1e-22, 1e-18], events=ev)
    assert_allclose(solve_T3(cfg), 2 * sol.t_events[0][0], rtol=1e-9)
    assert solve_T3(cfg) != solve_T3(table2)


def test_stage4_time_mode_reference(table2):
    sol = solve_stage4_eta(table2, T4=0.03)
    assert_allclose(sol.eta_nonlinear, TABLE2["eta_n4"], rtol=1e-3)
    assert_allclose(2 * abs(sol.X4), 6e-9, rtol=0.05)
    assert sol.residual < 1e-12


def test_stage4_separation_mode_six_nm(table2):
    sol = _quiet(solve_stage4_eta, table2, 6e-9, 0.03, mode="separation")
    assert_allclose(sol.eta_nonlinear, TABLE2["eta_n4"], rtol=1e-3)
    assert abs(2 * abs(sol.X4) - 6e-9) < 1e-12


def test_stage4_separation_mode_twelve_nm_against_ode(table2):
    six = _quiet(solve_stage4_eta, table2, 6e-9, 0.03, mode="separation")
    sol = _quiet(solve_stage4_eta, table2, 12e-9, 0.03, mode="separation")
    assert sol.eta_nonlinear != six.eta_nonlinear
    s3 = _state_before(table2, 4)
    w = table2.stage(4).with_(eta_nonlinear=sol.eta_nonlinear).frequency(table2.constants)
    t, x = _stall_event_ode(s3.x, s3.v, w, 0.05)
    assert_allclose(t, sol.duration, rtol=1e-7)
    assert_allclose(2 * abs(x), 12e-9, rtol=1e-4)


def test_stage4_stall_warning_past_T4(table2):
    from sgihp.loopsolver import StallDurationWarning

    with pytest.warns(StallDurationWarning):
        solve_stage4_eta(table2, 6e-9, 0.03, mode="separation")


def test_stage4_degenerate_target(table2):
    X3 = _state_before(table2, 4).x
    with pytest.raises(ClosureError) as info:
        solve_stage4_eta(table2, 2 * abs(X3), 0.03, mode="separation")
    assert info.value.stage == 4


def test_stage4_bracket_error_reports_residuals(table2):
    with pytest.raises(BracketError) as info:
        solve_stage4_eta(table2, T4=0.03, bracket=(1.1e6, 1.2e6))
    assert len(info.value.residuals) == 2
    assert all(np.isfinite(info.value.residuals))


def test_root_falls_back_to_bisection_when_not_monotone():
    f = lambda x: math.sin(3 * x) + 0.3 * x - 0.1  # noqa: E731
    r = _root(f, -2.0, 3.0, 0, xtol=1e-14)
    assert abs(f(r)) < 1e-12


def test_stage5_reference_chain(solved_exact):
    cfg, report = solved_exact
    assert_allclose(cfg.stage(5).eta_linear, TABLE2["eta_l5"], rtol=1e-3)
    assert_allclose(cfg.stage(5).duration, TABLE2["T5"], rtol=1e-3)
    assert report.closed


def test_stage5_inverts_stage1(table2):
    # a stall at the stage-1 half-period excursion is undone by the stage-1 gradient itself
    cfg = table2.replace_stage(1, duration=solve_T1(table2))
    X1 = stage1_trajectory(cfg, +1).end_state.x
    eta, T = solve_stage5(cfg, X1)
    assert_allclose(eta, table2.stage(1).eta_linear, rtol=1e-12)
    assert_allclose(T, solve_T1(table2), rtol=1e-12)


def test_stage5_errors(table2):
    with pytest.raises(DegenerateClosure):
        solve_stage5(table2, 0.0)
    with pytest.raises(ClosureError):
        solve_stage5(table2, +3e-9)  # the +1 arm cannot be pushed back from positive x


def test_solved_stage5_closes_under_ode_oracle(solved_exact):
    # stage by stage through scipy's DOP853 on the full (quartic) force, independent of the package integrator
    cfg, _ = solved_exact
    for arm in (1, -1):
        x, v = 0.0, 0.0
        for stage in cfg.stages:
            spin = stage.arm_spin(arm)
            x, v = ode_trajectory(lambda q, s=stage, sp=spin: accel_exact(cfg, s, sp, q), x, v,
                                  stage.duration, rtol=1e-13, atol_scale=1e-17)
        assert abs(x) < 1e-12 and abs(v) < 1e-9


def test_full_closure_reproduces_table(solved_exact):
    cfg, report = solved_exact
    for name, value in (("T1", cfg.stage(1).duration), ("T3", cfg.stage(3).duration),
                        ("eta_n4", cfg.stage(4).eta_nonlinear), ("eta_l5", cfg.stage(5).eta_linear),
                        ("T5", cfg.stage(5).duration)):
        assert_allclose(value, TABLE2[name], rtol=1e-3, err_msg=name)
    assert set(report.solved) == set(TABLE2)
    assert report.closed
    assert max(map(abs, report.final_x)) < 1e-12
    assert max(map(abs, report.final_v)) < 1e-9


def test_analytic_closure_is_closed(solved_analytic):
    cfg, report = solved_analytic
    assert report.closed
    assert_allclose(cfg.stage(4).eta_nonlinear, TABLE2["eta_n4"], rtol=1e-3)
    for arm in (1, -1):
        end = integrate_arm(cfg, arm, IntegratorSettings(quartic=False))[-1].final
        assert abs(end.x) < 1e-12 and abs(end.v) < 1e-9


def test_trivial_closure_stage1_only(partial_cfg):
    cfg = partial_cfg.experiment.replace_stage(2, duration=0.0).replace_stage(4, duration=0.0)
    out, report = _quiet(solve_full_closure, ClosureProblem(cfg))
    assert out.stage(3).duration == 0.0
    assert_allclose(out.stage(5).eta_linear, out.stage(1).eta_linear, rtol=1e-12)
    assert max(map(abs, report.final_x)) < 1e-20
    assert max(map(abs, report.final_v)) < 1e-15
    assert any("zero duration" in n for n in report.notes)


def test_shorter_inflation_gives_new_consistent_set(partial_cfg):
    cfg = partial_cfg.experiment.replace_stage(2, duration=0.02)
    problem = ClosureProblem(cfg, T3_resolution=None, dynamics="analytic")
    out, report = _quiet(solve_full_closure, problem)
    assert report.closed
    assert out.stage(4).eta_nonlinear != pytest.approx(TABLE2["eta_n4"], rel=1e-6)
    for arm in (1, -1):
        end = integrate_arm(out, arm, IntegratorSettings(quartic=False))[-1].final
        assert abs(end.x) < 1e-12 and abs(end.v) < 1e-9


def test_solver_deterministic(partial_cfg):
    problem = ClosureProblem(partial_cfg.experiment, T3_resolution=1e-5)
    a = _quiet(solve_full_closure, problem)[0]
    b = _quiet(solve_full_closure, problem)[0]
    assert a == b


def test_problem_validation(partial_cfg):
    cfg = partial_cfg.experiment
    assert ClosureProblem(cfg).resolved_unknowns() == {"T1", "T3", "eta_n4", "eta_l5", "T5"}
    with pytest.raises(ValueError):
        ClosureProblem(cfg, unknowns={"eta_l5"}).validate()
    with pytest.raises(ValueError):
        ClosureProblem(cfg, unknowns={"B0"}).validate()


def test_closure_residuals_reference_is_not_closed(table2):
    # the printed values carry too few digits to close the loop to 1e-12 m
    fx, fv = closure_residuals(table2)
    assert max(map(abs, fx)) > 1e-12


def test_verification_of_complete_config(solved_exact):
    cfg, _ = solved_exact
    out, report = _quiet(solve_full_closure, ClosureProblem(cfg, dynamics="exact"))
    assert report.solved == {}
    assert out == cfg
    assert report.closed
    assert_allclose(report.stall_separation, 6.24e-9, rtol=1e-2)
    sols = _quiet(arm_trajectory, cfg, +1)
    assert spin_offset(cfg, cfg.stage(5), +1) < 0 and sols[3].end_state.x < 0
