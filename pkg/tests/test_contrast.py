import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from oracles import overlap_quadrature
from sgihp.contrast import (
    REFERENCE_GRADIENTS,
    Axis,
    Deviations,
    Perturbation,
    apply_perturbation,
    contrast_from_deviations,
    contrast_sweep,
    contrast_threshold,
    evaluate_point,
    hp_only_config,
    hp_only_contrast,
    overlap,
    perturbed_protocol_deviations,
)
from sgihp.model import PotentialKind
from sgihp.wavepacket import PacketState

SIGMA = 2.7e-11


def test_perfect_closure_is_unity():
    assert contrast_from_deviations(Deviations(0.0, 0.0), SIGMA) == 1.0
    assert contrast_from_deviations(Deviations(0.0, 0.0), 1.0) == 1.0


def test_inversion_gives_099():
    dx = SIGMA * math.sqrt(8 * math.log(100 / 99))
    assert_allclose(contrast_from_deviations(Deviations(dx, 0.0), SIGMA), 0.99, rtol=1e-14)
    db = math.sqrt(2 * math.log(100 / 99)) / SIGMA
    assert_allclose(contrast_from_deviations(Deviations(0.0, db), SIGMA), 0.99, rtol=1e-14)


def test_nonpositive_width_rejected():
    with pytest.raises(ValueError):
        contrast_from_deviations(Deviations(0.0, 0.0), 0.0)


def test_closed_form_against_overlap_quadrature():
    # 100 width-matched packet pairs differing only in centre and linear phase
    rng = np.random.default_rng(20240517)
    worst = 0.0
    for _ in range(100):
        sigma = 10 ** rng.uniform(-12, -8)
        dx = rng.uniform(-4, 4) * sigma
        db = rng.uniform(-4, 4) / sigma
        a = rng.uniform(-2, 2) / sigma**2
        xc = rng.uniform(-1e3, 1e3) * sigma
        left = replace(PacketState.gaussian(sigma, xc), a=a)
        right = replace(left, x_c=xc + dx, b=left.b + db)
        quad = abs(overlap_quadrature(left, right))
        closed = contrast_from_deviations(Deviations(dx, db), sigma)
        worst = max(worst, abs(closed / quad - 1))
    assert worst < 1e-8


@settings(max_examples=60, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0), st.floats(-2, 2), st.floats(-2, 2),
       st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1))
def test_general_overlap_against_quadrature(s1, s2, x1, x2, a1, a2, b, c):
    # the strict-mode overlap for unequal widths and chirps
    sig = 1e-9
    L = PacketState(s1 * sig, x1 * sig, a1 / sig**2, b / sig, c, (2 * math.pi * (s1 * sig) ** 2) ** -0.25)
    R = PacketState(s2 * sig, x2 * sig, a2 / sig**2, -b / sig, 0.3, (2 * math.pi * (s2 * sig) ** 2) ** -0.25)
    ref = overlap_quadrature(L, R)
    got = overlap(L, R)
    assert abs(got - ref) < 1e-8 * max(abs(ref), 1e-6)
    assert abs(got) <= 1 + 1e-12


def test_overlap_reduces_to_closed_form():
    L = replace(PacketState.gaussian(SIGMA, 1e-9), a=3e20)
    R = replace(L, x_c=L.x_c + 0.7 * SIGMA, b=L.b + 0.4 / SIGMA)
    assert_allclose(abs(overlap(L, R)), contrast_from_deviations(Deviations(0.7 * SIGMA, 0.4 / SIGMA), SIGMA),
                    rtol=1e-12)
    assert_allclose(overlap(L, L), 1.0, rtol=1e-12)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 5), st.floats(0, 5))
def test_monotone_in_each_deviation(dx1, dx2, db, other):
    lo, hi = sorted((dx1, dx2))
    C = contrast_from_deviations
    assert C(Deviations(hi * SIGMA, other / SIGMA), SIGMA) <= C(Deviations(lo * SIGMA, other / SIGMA), SIGMA)
    assert C(Deviations(other * SIGMA, hi / SIGMA), SIGMA) <= C(Deviations(other * SIGMA, lo / SIGMA), SIGMA)
    c = C(Deviations(dx1 * SIGMA, db / SIGMA), SIGMA)
    assert 0 <= c <= 1


def test_unperturbed_deviations_zero(solved_analytic):
    cfg, _ = solved_analytic
    for axis in Axis:
        d = perturbed_protocol_deviations(cfg, Perturbation(axis, 0.0))
        assert d == Deviations(0.0, 0.0)
        assert evaluate_point(cfg, Perturbation(axis, 0.0)).contrast == 1.0


def test_apply_perturbation_targets_matching_stages(table2):
    p = apply_perturbation(table2, Perturbation(Axis.ETA_LINEAR, 1e-3, relative=True))
    for a, b in zip(table2.stages, p.stages):
        if a.kind is PotentialKind.HARMONIC:
            assert_allclose(b.eta_linear - a.eta_linear, 1e-3 * REFERENCE_GRADIENTS["eta_linear"])
        else:
            assert b == a
    p = apply_perturbation(table2, Perturbation(Axis.ETA_NONLINEAR, 5.0))
    assert p.stage(2).eta_nonlinear == table2.stage(2).eta_nonlinear + 5.0
    assert p.stage(1) == table2.stage(1)
    p = apply_perturbation(table2, Perturbation(Axis.INITIAL_POSITION, 1e-9, relative=True))
    assert p.particle.x0 == table2.particle.x0 + 1e-9


def test_axis_parse():
    assert Axis.parse("eta-linear") is Axis.ETA_LINEAR
    assert Axis.parse("init-pos") is Axis.INITIAL_POSITION
    assert Axis.parse("eta_nonlinear") is Axis.ETA_NONLINEAR
    with pytest.raises(ValueError):
        Axis.parse("mass")


def test_position_deviation_is_linear_in_offset(solved_analytic):
    # the protocol is linear in the initial state, so dx and db scale with delta x0; the
    # stall point cancels ~0.1 m terms down to nm, leaving ~4e-17 m of rounding in final x
    cfg, _ = solved_analytic
    d1 = perturbed_protocol_deviations(cfg, Perturbation(Axis.INITIAL_POSITION, 1e-10))
    d2 = perturbed_protocol_deviations(cfg, Perturbation(Axis.INITIAL_POSITION, 2e-10))
    assert_allclose(d2.delta_x, 2 * d1.delta_x, rtol=1e-5)
    # velocity rounding at the stall (~1e-14 m/s) is ~1e5 /m in db: invisible in C
    assert abs(d2.delta_b) * 2.7e-11 < 1e-4


def test_result_recomputable(solved_analytic):
    cfg, _ = solved_analytic
    for axis in Axis:
        r = evaluate_point(cfg, Perturbation(axis, 1e-14, relative=True))
        assert r.error is None
        assert r.recomputed() == r.contrast
        assert 0 < r.contrast <= 1


def test_sweep_requires_ascending(table2):
    with pytest.raises(ValueError):
        contrast_sweep(table2, Axis.ETA_LINEAR, [1e-7, 1e-9])


def test_sweep_monotone_and_ordered(solved_analytic):
    cfg, _ = solved_analytic
    values = np.logspace(-16, -12, 9)
    res = contrast_sweep(cfg, Axis.ETA_NONLINEAR, values)
    assert [r.perturbation.value for r in res] == list(values)
    C = [r.contrast for r in res]
    assert all(b <= a for a, b in zip(C, C[1:]))
    par = contrast_sweep(cfg, Axis.ETA_NONLINEAR, values, workers=2)
    assert [r.contrast for r in par] == C


def test_sweep_records_point_errors(table2):
    # a 30% weaker deceleration field never stalls the arm; the point fails, the sweep goes on
    res = contrast_sweep(table2, Axis.ETA_NONLINEAR, [-0.3, 1e-12])
    assert math.isnan(res[0].contrast) and "velocity never reaches zero" in res[0].error
    assert "perturbed" in res[0].error
    assert res[1].error is None


def test_strict_mode_close_to_closed_form_for_small_offsets(solved_analytic):
    cfg, _ = solved_analytic
    r = evaluate_point(cfg, Perturbation(Axis.INITIAL_POSITION, 1e-13), strict=True)
    assert r.strict_contrast is not None
    assert 0 < r.strict_contrast <= 1
    assert_allclose(r.strict_contrast, r.contrast, rtol=1e-3)


def test_threshold_hits_target(solved_analytic):
    cfg, _ = solved_analytic
    thr = contrast_threshold(cfg, Axis.INITIAL_POSITION, 1e-14, 1e-9, relative=False)
    assert 1e-14 < thr < 1e-9
    C = evaluate_point(cfg, Perturbation(Axis.INITIAL_POSITION, thr)).contrast
    # the crossing sits at dx ~ 1e-12 m, where the ~4e-17 m rounding floor of the chain limits C
    assert_allclose(C, 0.99, rtol=1e-6)
    assert math.isnan(contrast_threshold(cfg, Axis.INITIAL_POSITION, 1e-10, 1e-9, relative=False))


def test_hp_only_examples(table2):
    assert hp_only_contrast(table2, 0.0) == (1.0, 1.0)
    closed, pipe = hp_only_contrast(table2, 2e-11)
    assert_allclose(closed, math.exp(-1 / 8), rtol=1e-15)
    assert_allclose(closed, 0.8825, atol=5e-5)
    assert abs(pipe - closed) < 1e-10
    closed, pipe = hp_only_contrast(table2, 1e-11)
    assert abs(pipe - closed) < 1e-10


@given(st.floats(0.0, 6e-11))
def test_hp_only_even(dx):
    cfg = hp_only_config(__import__("sgihp.model", fromlist=["x"]).table2_config())
    a = evaluate_point(cfg, Perturbation(Axis.INITIAL_POSITION, dx)).contrast
    b = evaluate_point(cfg, Perturbation(Axis.INITIAL_POSITION, -dx)).contrast
    assert_allclose(a, b, rtol=1e-12)


def test_hp_only_config_is_full_period(table2):
    cfg = hp_only_config(table2)
    assert len(cfg.stages) == 1
    w = table2.stage(1).frequency(table2.constants)
    assert_allclose(cfg.stage(1).duration * w, 2 * math.pi, rtol=1e-15)
