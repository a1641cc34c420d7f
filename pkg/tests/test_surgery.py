import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scpgan import surgery
from scpgan.checks import random_triple
from scpgan.errors import LengthMismatch


def v(*xs):
    return np.array(xs, dtype=float)


def test_dot_and_norms():
    assert surgery.dot_and_norms(v(1, 0), v(0, 1)) == (0.0, 1.0, 1.0)
    assert surgery.dot_and_norms(v(1, 2), v(3, 4))[0] == 11.0
    with pytest.raises(LengthMismatch):
        surgery.dot_and_norms(v(1, 2), v(1, 2, 3))


def _kahan(a, b):
    s = c = 0.0
    for x in (a * b).tolist():
        y = x - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def test_dot_vs_compensated_sum(rng):
    a, b = rng.standard_normal(100_000), rng.standard_normal(100_000)
    dot = surgery.dot_and_norms(a, b)[0]
    oracle = _kahan(a, b)
    assert abs(dot - oracle) / abs(oracle) < 1e-12


# Hand-traced worked cases.

def test_sc2_acute():
    w = surgery.sc2_weights(v(1, 0), v(0.5, 0.5))
    assert (w.w_c, w.w_e, w.branch) == (1.0, 1.0, "two_part_acute")


def test_sc2_obtuse():
    ge = v(-1, 1)
    w = surgery.sc2_weights(v(1, 0), ge)
    assert abs(w.w_e - 0.5) <= 1e-12
    g = surgery.combine(v(1, 0), ge, None, w)
    assert np.allclose(g, [0.5, 0.5], atol=1e-12, rtol=0)
    assert abs(g @ ge) <= 1e-12


def test_sc2_antiparallel_collapse():
    w = surgery.sc2_weights(v(1, 0), v(-1, 0))
    assert abs(w.w_e - 1.0) <= 1e-12 and w.degenerate
    assert not np.any(surgery.combine(v(1, 0), v(-1, 0), None, w))


def test_sc3_all_acute():
    w = surgery.sc3_weights(v(1, 0, 0), v(1, 1, 0), v(1, 0, 1))
    assert (w.w_c, w.w_e, w.w_n, w.branch) == (1.0, 1.0, 1.0, "acute_acute")


def test_sc3_acute_then_obtuse():
    gc, ge, gn = v(1, 0, 0), v(1, 1, 0), v(-1, 0, 0)
    w = surgery.sc3_weights(gc, ge, gn)
    assert abs(w.w_n - 2.0) <= 1e-12 and w.branch == "acute_obtuse"
    oracle = -(gc @ gn + ge @ gn) / (gn @ gn)
    assert abs(w.w_n - oracle) <= 1e-12
    g = surgery.combine(gc, ge, gn, w)
    assert np.allclose(g, [0, 1, 0], atol=1e-12, rtol=0)
    assert abs(g @ gn) <= 1e-12


def test_sc3_obtuse_then_obtuse():
    gc, ge, gn = v(1, 0, 0), v(-1, 1, 0), v(0, -1, 0)
    w = surgery.sc3_weights(gc, ge, gn)
    assert abs(w.w_e - 0.5) <= 1e-12 and abs(w.w_n - 0.5) <= 1e-12
    assert w.branch == "obtuse_obtuse"
    g = surgery.combine(gc, ge, gn, w)
    assert np.allclose(g, [0.5, 0, 0], atol=1e-12, rtol=0)


def test_orthogonal_takes_correction_branch():
    w = surgery.sc2_weights(v(1, 0), v(0, 1))
    assert w.branch == "two_part_obtuse" and w.w_e == 0.0
    rep = surgery.conflict_report(v(1, 0), v(0, 1))
    assert rep.angle_ce_deg == pytest.approx(90.0)
    assert surgery.conflict_report(v(1, 2), v(1, 2)).angle_ce_deg == pytest.approx(0.0, abs=1e-6)


def test_conflict_report_flags_orthogonal_as_non_obtuse():
    rep = surgery.conflict_report(v(1, 0, 0), v(1, 1, 0), v(-1, 0, 0))
    assert rep.dot_g_n == 0.0 and rep.obtuse_n is False
    row = rep.csv_row(7)
    assert tuple(row) == surgery.ConflictReport.CSV_FIELDS and row["step"] == 7
    text = surgery.reports_to_csv([rep, rep])
    assert text.splitlines()[0] == ",".join(surgery.ConflictReport.CSV_FIELDS)


def test_degenerate_guards():
    w = surgery.sc2_weights(v(1, 0), v(0, 0))
    assert w.w_e == 1.0 and w.degenerate
    w = surgery.sc3_weights(v(1, 0), v(1, 0), v(0, 0))
    assert w.w_n == 1.0


def test_combine_linearity_and_plain_sum(rng):
    gc, ge, gn = rng.standard_normal((3, 50))
    ones = surgery.ScWeights(1.0, 1.0, 1.0, "acute_acute")
    assert np.array_equal(surgery.combine(gc, ge, gn, ones), gc + ge + gn)
    w = surgery.sc2_weights(gc, ge)
    w3 = surgery.ScWeights(w.w_c, w.w_e, 3.7, "x")
    assert np.array_equal(surgery.combine(gc, ge, np.zeros(50), w3), surgery.combine(gc, ge, None, w))


def test_acute_inputs_reduce_to_sum(rng):
    for _ in range(100):
        gc = rng.random(20)
        ge, gn = rng.random(20), rng.random(20)
        w = surgery.sc3_weights(gc, ge, gn)
        assert np.array_equal(surgery.combine(gc, ge, gn, w), gc + ge + gn)


def test_weight_invariants(rng):
    for _ in range(2000):
        gc, ge, gn = random_triple(rng)
        w = surgery.sc3_weights(gc, ge, gn)
        assert w.w_c == 1.0 and w.w_e >= 0
        if w.w_n != 1.0 and not w.degenerate:
            g = surgery.combine(gc, ge, gn, w)
            assert abs(g @ gn) <= 1e-9 * np.linalg.norm(g) * max(map(np.linalg.norm, (gc, ge, gn))) + 1e-300


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**32 - 1), st.integers(-20, 20))
def test_scale_invariance_power_of_two(dim, seed, k):
    r = np.random.default_rng(seed)
    gc, ge = r.standard_normal(dim), r.standard_normal(dim)
    if gc @ ge > 0:
        ge = ge - 2 * (gc @ ge) / (gc @ gc) * gc
    alpha = 2.0 ** k
    a = surgery.combine(gc, ge, None, surgery.sc2_weights(gc, ge))
    b = surgery.combine(gc, alpha * ge, None, surgery.sc2_weights(gc, alpha * ge))
    assert np.array_equal(a, b)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
def test_scale_invariance_general(dim, seed, alpha):
    r = np.random.default_rng(seed)
    gc, ge = r.standard_normal(dim), r.standard_normal(dim)
    if gc @ ge > 0:
        ge = ge - 2 * (gc @ ge) / (gc @ gc) * gc
    a = surgery.combine(gc, ge, None, surgery.sc2_weights(gc, ge))
    b = surgery.combine(gc, alpha * ge, None, surgery.sc2_weights(gc, alpha * ge))
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12 * np.linalg.norm(gc))


def test_open_question_telemetry_is_logged_not_asserted():
    # After an N correction the final direction can turn obtuse to C; the report records it.
    gc, ge, gn = v(1, 0), v(1, 0.1), v(-1, 10)
    rep = surgery.conflict_report(gc, ge, gn)
    assert rep.branch == "acute_obtuse"
    assert rep.obtuse_c == (rep.dot_g_c < -rep.tau)
    assert not rep.obtuse_n
    assert math.isfinite(rep.angle_cen_deg)
