import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rissec import fp
from rissec.mm import (
    SurrogatePhi,
    SurrogateW,
    bcd_mm,
    lambda_max,
    mm_phi_step,
    mm_w_step,
    mm_weights,
    smoothed_min,
    squarem_accelerate,
    surrogate_phi_params,
    surrogate_w_params,
)
from rissec.quadform import QuadraticForm, all_phi_forms, all_w_forms
from rissec.scenario import AlgoParams, SystemConfig, generate_channels

from conftest import random_state

finite = st.floats(-50, 50, allow_nan=False)


def test_smoothed_min_single():
    assert smoothed_min([0.7], 3.0) == 0.7


def test_smoothed_min_equal_values():
    assert smoothed_min([0, 0, 0], 2.5) == pytest.approx(-math.log(3) / 2.5, abs=1e-15)


@given(st.lists(finite, min_size=1, max_size=8), st.floats(0.01, 1e3))
def test_smoothed_min_sandwich(values, zeta):
    f = smoothed_min(values, zeta)
    lo = min(values)
    assert f <= lo + 1e-12
    assert f >= lo - math.log(len(values)) / zeta - 1e-9


def test_smoothed_min_no_overflow():
    assert math.isfinite(smoothed_min([1e4, -1e4, 3.0], 500.0))


@given(st.lists(finite, min_size=1, max_size=8), st.floats(0.01, 1e3))
def test_weights_normalized(values, zeta):
    h = mm_weights(values, zeta)
    assert np.all(h >= 0) and abs(h.sum() - 1) <= 1e-12


def test_weights_uniform_and_concentrated():
    assert np.allclose(mm_weights([2.0] * 4, 7.0), 0.25)
    assert mm_weights([0.0, 1.0, 2.0], 100.0)[0] >= 1 - 1e-6


def test_lambda_max_matches_eigh():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    a = a @ a.conj().T
    lam = lambda_max(a)
    top = np.linalg.eigvalsh(a).max()
    assert lam >= top * (1 - 1e-10)
    assert lam == pytest.approx(top, rel=1e-3)


def _zero_forms(n, k=2):
    return [QuadraticForm(np.zeros((n, n), complex), np.zeros(n, complex), 0.0) for _ in range(k)]


def test_zero_forms_give_zero_surrogates():
    w0 = np.array([1.0, 0, 0], complex)
    s = surrogate_w_params(_zero_forms(3), w0, 2.0, 1.0)
    assert s.alpha_bar == 0.0 and np.allclose(s.v_bar, 0)
    p = surrogate_phi_params(_zero_forms(3), np.ones(3, complex), 2.0)
    assert p.beta_bar == 0.0 and np.allclose(p.v_bar, 0)


def _surr_w(v, anchor):
    return SurrogateW(v, -1.0, 0.0, anchor, 0.0, v - anchor)


def test_w_step_closed_form():
    # maximizer of 2 Re{v^H w} on |w|^2 = P is aligned with v
    out = mm_w_step(_surr_w(np.array([1.0, 0.0], complex), np.zeros(2, complex)), 4.0)
    assert np.allclose(out, [2.0, 0.0])


def test_w_step_zero_direction_keeps_iterate():
    a = np.array([0.6, 0.8j])
    assert np.array_equal(mm_w_step(_surr_w(np.zeros(2, complex), a), 1.0), a)


@pytest.mark.parametrize("seed", range(5))
def test_w_step_on_sphere(seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    out = mm_w_step(_surr_w(v, np.zeros(6, complex)), 2.5)
    assert np.vdot(out, out).real == pytest.approx(2.5, rel=1e-14)


def test_phi_step_angle_and_tie():
    anchor = np.array([1.0, 1j])
    s = SurrogatePhi(np.array([1 + 1j, 0.0]), -1.0, 0.0, anchor, 0.0, np.zeros(2))
    out = mm_phi_step(s)
    assert out[0] == pytest.approx(np.exp(1j * np.pi / 4))
    assert out[1] == pytest.approx(1j)
    assert np.all(np.abs(out) == 1.0) or np.allclose(np.abs(out), 1.0, atol=1e-15)


def test_phi_step_maximizes_linear_term():
    rng = np.random.default_rng(3)
    v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    best = mm_phi_step(SurrogatePhi(v, -1.0, 0.0, np.ones(8, complex), 0.0, v))
    top = 2 * np.real(np.vdot(v, best))
    for _ in range(100):
        p = np.exp(1j * rng.uniform(0, 2 * np.pi, 8))
        assert 2 * np.real(np.vdot(v, p)) <= top + 1e-12


def _instance(seed, zeta):
    cfg = SystemConfig(n_tx=3, m_ris=6, k_users=2)
    ch = generate_channels(cfg, seed)
    rng = np.random.default_rng(seed)
    s = random_state(rng, 3, 2, 6)
    aux = fp.update_aux(random_state(rng, 3, 2, 6), ch, cfg)
    return cfg, s, all_w_forms(s.phi, aux, ch, cfg), all_phi_forms(s.w_mat, aux, ch, cfg), rng


@pytest.mark.parametrize("zeta", [1.25, 40.0, 500.0])
def test_w_surrogate_minorizes_and_touches(zeta):
    cfg, s, wf, _, rng = _instance(1, zeta)
    sur = surrogate_w_params(wf, s.w_vec, zeta, cfg.p_max)
    f = lambda x: smoothed_min([q(x) for q in wf], zeta)  # noqa: E731
    assert sur.alpha_bar <= 0
    assert sur(s.w_vec) == pytest.approx(f(s.w_vec), abs=1e-9)
    for _ in range(200):
        x = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        x *= np.sqrt(cfg.p_max) * rng.uniform() ** 0.5 / np.linalg.norm(x)
        assert sur(x) <= f(x) + 1e-9
    # v_bar / c_bar form agrees with the centred evaluation
    x = s.w_vec * 0.3
    alt = sur.alpha_bar * np.vdot(x, x).real + 2 * np.real(np.vdot(sur.v_bar, x)) + sur.c_bar
    assert alt == pytest.approx(sur(x), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("zeta", [1.25, 40.0, 500.0])
def test_phi_surrogate_minorizes_and_touches(zeta):
    _, s, _, pf, rng = _instance(2, zeta)
    sur = surrogate_phi_params(pf, s.phi, zeta)
    f = lambda x: smoothed_min([q(x) for q in pf], zeta)  # noqa: E731
    assert sur.beta_bar <= 0
    assert sur(s.phi) == pytest.approx(f(s.phi), abs=1e-9)
    for _ in range(200):
        x = np.exp(1j * rng.uniform(0, 2 * np.pi, 6))
        assert sur(x) <= f(x) + 1e-9
        alt = 2 * np.real(np.vdot(sur.v_bar, x)) + sur.c_bar
        assert alt == pytest.approx(sur(x), rel=1e-8, abs=1e-8)


def test_surrogate_steps_ascend():
    cfg, s, wf, pf, _ = _instance(3, 5.0)
    sw = surrogate_w_params(wf, s.w_vec, 5.0, cfg.p_max)
    assert sw(mm_w_step(sw, cfg.p_max)) >= sw(s.w_vec) - 1e-12
    sp = surrogate_phi_params(pf, s.phi, 5.0)
    assert sp(mm_phi_step(sp)) >= sp(s.phi) - 1e-12


def test_squarem_identity_map():
    x = np.array([1.0, 2.0])
    assert np.array_equal(squarem_accelerate(x, lambda y: y, lambda y: y, lambda y: 0.0), x)


def test_squarem_linear_contraction():
    x0 = np.array([1.0])
    out = squarem_accelerate(x0, lambda y: 0.5 * y, lambda y: y, lambda y: -float(y @ y))
    assert abs(out[0]) < 0.25


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_squarem_never_below_plain_step(seed):
    rng = np.random.default_rng(seed)
    n = 3
    a = rng.standard_normal((n, n))
    q = a @ a.T + 0.1 * np.eye(n)
    c = rng.standard_normal(n)
    obj = lambda y: float(-y @ q @ y + 2 * c @ y)  # noqa: E731
    step = 1.0 / np.linalg.eigvalsh(q).max()
    fmap = lambda y: y + step * (c - q @ y)  # noqa: E731
    x = rng.standard_normal(n) * 3
    out = squarem_accelerate(x, fmap, lambda y: y, obj)
    assert obj(out) >= obj(fmap(fmap(x))) - 1e-12


def test_bcd_mm_single_iteration_with_huge_eps():
    cfg = SystemConfig(n_tx=3, m_ris=4, k_users=2, algo=AlgoParams(eps=math.inf))
    ch = generate_channels(cfg, 0)
    s = random_state(np.random.default_rng(0), 3, 2, 4)
    out, trace = bcd_mm(cfg, ch, s)
    assert trace.iterations == 1 and trace.status == "converged"
    assert out.power == pytest.approx(cfg.p_max) and np.allclose(np.abs(out.phi), 1.0)


@pytest.mark.parametrize("squarem", [True, False])
def test_bcd_mm_block_monotone(squarem):
    cfg = SystemConfig(n_tx=3, m_ris=5, k_users=2, algo=AlgoParams(n_max=40, squarem=squarem))
    ch = generate_channels(cfg, 7)
    s = random_state(np.random.default_rng(7), 3, 2, 5)
    _, trace = bcd_mm(cfg, ch, s)
    assert all(after >= before - 1e-9 for _, _, before, after in trace.blocks)
    wall = [r.wall_ms for r in trace.rows]
    assert all(b >= a >= 0 for a, b in zip(wall, wall[1:]))
    assert [r.zeta for r in trace.rows][:2] == [1.25, pytest.approx(1.25**1.02)]


def test_bcd_mm_without_ris():
    cfg = SystemConfig(n_tx=3, m_ris=0, k_users=2, algo=AlgoParams(n_max=20))
    ch = generate_channels(cfg, 1)
    s = random_state(np.random.default_rng(1), 3, 2, 0)
    out, trace = bcd_mm(cfg, ch, s)
    assert out.phi.size == 0 and {b[1] for b in trace.blocks} == {"w"}


def test_bcd_mm_freezes_phi():
    cfg = SystemConfig(n_tx=3, m_ris=4, k_users=2, algo=AlgoParams(n_max=10))
    ch = generate_channels(cfg, 2)
    s = random_state(np.random.default_rng(2), 3, 2, 4)
    out, _ = bcd_mm(cfg, ch, s, optimize_phi=False)
    assert np.array_equal(out.phi, s.phi)


def test_bcd_mm_nan_aborts(monkeypatch):
    import rissec.mm as mm_mod

    real = mm_mod.all_w_forms

    def poisoned(*args):
        return [QuadraticForm(f.c_mat, f.b_vec * np.nan, f.c_scalar) for f in real(*args)]

    monkeypatch.setattr(mm_mod, "all_w_forms", poisoned)
    cfg = SystemConfig(n_tx=2, m_ris=2, k_users=1)
    ch = generate_channels(cfg, 0)
    s = random_state(np.random.default_rng(0), 2, 1, 2)
    with pytest.raises(FloatingPointError, match="precoder step at iteration 1"):
        with np.errstate(invalid="ignore"):
            bcd_mm(cfg, ch, s)


def _fd_check(form_list, surrogate, x, rng, zeta):
    f = lambda y: smoothed_min([q(y) for q in form_list], zeta)  # noqa: E731
    h = 1e-6
    for _ in range(5):
        eta = rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size)
        eta /= np.linalg.norm(eta)
        d_f = (f(x + h * eta) - f(x - h * eta)) / (2 * h)
        d_s = (surrogate(x + h * eta) - surrogate(x - h * eta)) / (2 * h)
        assert d_s == pytest.approx(d_f, rel=1e-4, abs=1e-10)


def test_first_order_match():
    cfg, s, wf, pf, rng = _instance(4, 3.0)
    _fd_check(wf, surrogate_w_params(wf, s.w_vec, 3.0, cfg.p_max), s.w_vec, rng, 3.0)
    _fd_check(pf, surrogate_phi_params(pf, s.phi, 3.0), s.phi, rng, 3.0)
