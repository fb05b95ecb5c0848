import numpy as np
import pytest

from rissec.himodel import effective_channel, EVE
from rissec.rate import (
    BeamState,
    distortion_covariance,
    eve_rate,
    receiver_distortion,
    secrecy_rate,
    secrecy_rates,
    unclamped_objective,
    user_sinr,
    wmsr,
    wmsr_detail,
)
from rissec.scenario import SystemConfig, generate_channels

from conftest import random_state


def _sinr_direct(state, ch, cfg, k):
    """SINR from explicit covariances (independent of the vectorized code)."""
    effs = [effective_channel(state.phi, ch, j) for j in range(ch.k_users)]
    hb = effs[k].stacked
    w = state.w_mat
    ups = distortion_covariance(w, cfg.kappa_t)
    g = hb @ hb.conj().T
    sig = np.real(w[:, k].conj() @ g @ w[:, k])
    interf = sum(np.real(w[:, j].conj() @ g @ w[:, j]) for j in range(w.shape[1]) if j != k)
    dist = np.real(np.trace(ups @ g))
    return sig / (interf + dist + receiver_distortion(w, effs[k], cfg.kappa_t, cfg.kappa_r) + cfg.noise_user)


def test_sinr_matches_covariance_form(instance):
    cfg, ch, st = instance
    for k in range(2):
        assert user_sinr(st, ch, k, cfg) == pytest.approx(_sinr_direct(st, ch, cfg, k), rel=1e-12)


def test_eve_rate_direct(instance):
    cfg, ch, st = instance
    he = effective_channel(st.phi, ch, EVE).stacked
    g = he @ he.conj().T
    ups = distortion_covariance(st.w_mat, cfg.kappa_t)
    w0 = st.w_mat[:, 0]
    snr = np.real(w0.conj() @ g @ w0) / (np.real(np.trace(ups @ g)) + cfg.noise_eve)
    assert eve_rate(st, ch, 0, cfg) == pytest.approx(np.log1p(snr), rel=1e-12)


def test_secrecy_clamped_and_consistent(instance):
    cfg, ch, st = instance
    raw = secrecy_rates(st, ch, cfg, clamp=False)
    assert np.allclose(secrecy_rates(st, ch, cfg), np.maximum(raw, 0))
    for k in range(2):
        assert secrecy_rate(st, ch, k, cfg) == pytest.approx(max(raw[k], 0.0), abs=1e-14)
    assert wmsr(st, ch, cfg) >= 0
    assert unclamped_objective(st, ch, cfg) == pytest.approx(raw.min())


def test_weights_scale_objective():
    cfg = SystemConfig(n_tx=3, m_ris=4, k_users=2, weights=(2.0, 0.5))
    ch = generate_channels(cfg, 2)
    st = random_state(np.random.default_rng(2), 3, 2, 4)
    vals = cfg.omega * secrecy_rates(st, ch, cfg)
    v, k = wmsr_detail(st, ch, cfg)
    assert v == pytest.approx(vals.min()) and k == int(np.argmin(vals))


def test_ideal_hardware_no_distortion(instance):
    cfg, ch, st = instance
    cfg0 = cfg.with_(kappa_t=0.0, kappa_r=0.0)
    eff = effective_channel(st.phi, ch, 0)
    assert receiver_distortion(st.w_mat, eff, 0.0, 0.0) == 0.0
    assert user_sinr(st, ch, 0, cfg0) >= user_sinr(st, ch, 0, cfg)


def test_beamstate_validation():
    w = np.ones((2, 2))
    with pytest.raises(ValueError):
        BeamState(w, np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        BeamState(w, np.ones(2), w_vec=np.zeros(4))
    st = BeamState(w, np.ones(3))
    assert np.array_equal(st.w_vec, w.reshape(-1, order="F"))
    assert st.power == pytest.approx(4.0) and not st.is_feasible(1.0)
    with pytest.raises(ValueError):
        st.w_mat[0, 0] = 5


def test_from_vec_round_trip():
    rng = np.random.default_rng(0)
    st = random_state(rng, 3, 2, 4)
    again = BeamState.from_vec(st.w_vec, 3, st.phi)
    assert np.array_equal(again.w_mat, st.w_mat)
