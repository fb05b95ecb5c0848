import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rissec.scenario import (
    Geometry,
    GeometryError,
    SystemConfig,
    dbm_to_watt,
    generate_channels,
    los_component,
    make_rng,
    noise_power_w,
    path_loss_db,
    watt_to_dbm,
)


def test_path_loss_reference_distance():
    assert path_loss_db(1.0, 2.0) == -30.0


def test_path_loss_100m():
    assert path_loss_db(100.0, 2.0) == pytest.approx(-70.0, abs=1e-12)


def test_path_loss_300m_alpha4():
    # -30 - 40*log10(300), evaluated independently with math
    assert path_loss_db(300.0, 4.0) == pytest.approx(-129.0849, abs=1e-4)
    assert path_loss_db(300.0, 4.0) == pytest.approx(-30.0 - 40.0 * math.log10(300.0), abs=1e-12)


def test_path_loss_rejects_short_distance():
    with pytest.raises(ValueError):
        path_loss_db(0.5, 2.0)


@given(st.floats(1.01, 1e4), st.floats(1.01, 1e4), st.floats(1.0, 5.0))
def test_path_loss_decreasing_in_distance(d1, d2, alpha):
    lo, hi = sorted((d1, d2))
    if hi > lo:
        assert path_loss_db(hi, alpha) < path_loss_db(lo, alpha)


@given(st.floats(1.01, 1e4), st.floats(1.0, 5.0), st.floats(1.0, 5.0))
def test_path_loss_decreasing_in_alpha(d, a1, a2):
    lo, hi = sorted((a1, a2))
    if hi > lo:
        assert path_loss_db(d, hi) < path_loss_db(d, lo)


def test_noise_power_default():
    # -174 dBm/Hz over 10 MHz = -104 dBm
    assert noise_power_w() == pytest.approx(10 ** (-104 / 10) * 1e-3, rel=1e-12)
    assert noise_power_w() == pytest.approx(3.981e-14, rel=1e-3)


def test_dbm_round_trip():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert watt_to_dbm(dbm_to_watt(17.3)) == pytest.approx(17.3)


def test_los_scalar_unit_modulus():
    a = los_component((0, 0, 0), (10, 3, 0), 1, 1)
    assert a.shape == (1, 1) and abs(abs(a[0, 0]) - 1) < 1e-15


@pytest.mark.parametrize("m,n", [(1, 4), (8, 4), (16, 2), (5, 7)])
def test_los_unit_modulus_rank_one(m, n):
    a = los_component((0, 0, 30), (50, 7, 10), m, n)
    assert np.allclose(np.abs(a), 1.0, atol=1e-14)
    assert np.linalg.matrix_rank(a, tol=1e-9) == 1
    assert np.linalg.norm(a) == pytest.approx(math.sqrt(m * n), rel=1e-13)


def test_los_boresight_all_ones():
    # link along the x axis: zero azimuth at both ends
    a = los_component((0, 0, 0), (20, 0, 0), 3, 4)
    assert np.allclose(a, np.ones((3, 4)), atol=1e-12)


def test_los_coincident_endpoints():
    with pytest.raises(GeometryError):
        los_component((1, 2, 3), (1, 2, 3), 2, 2)


def test_generate_shapes_and_finite():
    cfg = SystemConfig(n_tx=3, m_ris=6, k_users=2)
    ch = generate_channels(cfg, 5)
    assert ch.h_bu.shape == (2, 3) and ch.h_be.shape == (3,)
    assert ch.h_br.shape == (6, 3) and ch.h_ru.shape == (2, 6) and ch.h_re.shape == (6,)
    for arr in (ch.h_bu, ch.h_be, ch.h_br, ch.h_ru, ch.h_re):
        assert np.all(np.isfinite(arr))


def test_generate_deterministic():
    cfg = SystemConfig()
    a, b = generate_channels(cfg, 123), generate_channels(cfg, 123)
    for x, y in zip((a.h_bu, a.h_be, a.h_br, a.h_ru, a.h_re), (b.h_bu, b.h_be, b.h_br, b.h_ru, b.h_re)):
        assert np.array_equal(x, y)


def test_generate_without_ris():
    ch = generate_channels(SystemConfig(m_ris=0), 1)
    assert ch.h_br.shape == (0, 4) and ch.h_ru.shape == (3, 0) and ch.h_re.shape == (0,)


def test_channels_read_only():
    ch = generate_channels(SystemConfig(), 1)
    with pytest.raises(ValueError):
        ch.h_bu[0, 0] = 0


def test_rician_limit_is_los():
    geo = Geometry()
    cfg = SystemConfig(rician_k=1e12, geometry=Geometry(user_positions=(300.0, 10.0, 1.5)), k_users=1)
    ch = generate_channels(cfg, 3)
    gain = 10 ** (path_loss_db(math.dist(geo.bs, geo.ris), 2.0) / 10)
    los = math.sqrt(gain) * los_component(geo.bs, geo.ris, 16, 4)
    assert np.linalg.norm(ch.h_br - los) / np.linalg.norm(los) <= 1e-5


def test_direct_link_variance_large_sample():
    pos = (300.0, 10.0, 1.5)
    cfg = SystemConfig(n_tx=50, k_users=1, m_ris=0, geometry=Geometry(user_positions=pos))
    gain = 10 ** (path_loss_db(math.dist((0, 0, 30), pos), 4.0) / 10)
    h = np.concatenate([generate_channels(cfg, s).h_bu[0] for s in range(2000)])
    assert h.size == 100_000
    assert np.mean(np.abs(h) ** 2) == pytest.approx(gain, rel=0.03)
    assert abs(np.mean(h)) / math.sqrt(gain) < 0.02


def test_disjoint_seeds_uncorrelated():
    cfg = SystemConfig(n_tx=1, k_users=1, m_ris=0, geometry=Geometry(user_positions=(300.0, 10.0, 1.5)))
    a = np.array([generate_channels(cfg, 2 * s).h_bu[0, 0] for s in range(10_000)])
    b = np.array([generate_channels(cfg, 2 * s + 1).h_bu[0, 0] for s in range(10_000)])
    corr = abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    assert corr <= 0.05


def test_user_positions_in_square():
    cfg = SystemConfig(k_users=5)
    rng = make_rng(0)
    from rissec.scenario import draw_user_positions

    pos = draw_user_positions(cfg.geometry, 5, rng)
    c = np.array(cfg.geometry.user_center)
    assert np.all(np.abs(pos[:, :2] - c[:2]) <= 5.0)


@pytest.mark.parametrize(
    "kw",
    [dict(p_max=0.0), dict(noise_user=0.0), dict(weights=(1.0, -1.0, 1.0)), dict(kappa_t=-0.1), dict(n_tx=0)],
)
def test_config_invariants(kw):
    with pytest.raises(ValueError):
        SystemConfig(**kw)
