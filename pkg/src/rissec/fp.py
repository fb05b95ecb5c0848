"""Fractional-programming auxiliaries and the resulting rate lower bound.

The unclamped secrecy rate splits as ``f1 + f2 + f3`` where

* ``f1 = ln(1 + SINR_k)``,
* ``f2 = -ln(1 + (|Hbar_E^H w_k|^2 + Tr[Ups Hbar_E Hbar_E^H]) / noise_E)``,
* ``f3 = ln(1 + Tr[Ups Hbar_E Hbar_E^H] / noise_E)``.

Each piece has a concave-in-block minorant (quadratic transform for f1,
Lagrangian dual for f2, dual plus quadratic transform for f3) that is
tight when the auxiliaries take their closed-form values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rate import BeamState, _distortion_term, eve_channel, row_power, user_channels
from .scenario import ChannelSet, SystemConfig

W_CASE = "w"
PHI_CASE = "phi"


@dataclass(frozen=True)
class AuxState:
    u: np.ndarray  # K x (M+1)
    v: np.ndarray  # K
    d: np.ndarray  # K
    p_w: float
    q_w: np.ndarray  # NK
    p_phi: float
    q_phi_mat: np.ndarray  # N x (M+1)

    def replace(self, **kw) -> "AuxState":
        vals = dict(self.__dict__)
        vals.update(kw)
        return AuxState(**vals)


def _weighted_load(w_mat: np.ndarray, stacked: np.ndarray, kappa_t: float) -> float:
    """Tr[(W W^H + kappa_t diag(W W^H)) Hbar Hbar^H]."""
    return float(np.sum(np.abs(stacked.conj().T @ w_mat) ** 2) + _distortion_term(w_mat, stacked, kappa_t))


def update_user_aux(state: BeamState, channels: ChannelSet, config: SystemConfig):
    """Optimal (u_k, v_k) of the quadratic transform, all users."""
    effs = user_channels(state, channels, config)
    u, v = [], []
    for k, eff in enumerate(effs):
        st = eff.stacked
        y = st.conj().T @ state.w_mat[:, k]
        load = _weighted_load(state.w_mat, st, config.kappa_t)
        denom = (1.0 + config.kappa_r) * load + config.noise_user
        sig = float(np.real(np.vdot(y, y)))
        vk = sig / (denom - sig)
        v.append(vk)
        u.append(np.sqrt(1.0 + vk) * y / denom)
    return np.array(u), np.array(v)


def _eve_ratio(state: BeamState, channels: ChannelSet, config: SystemConfig):
    st = eve_channel(state, channels, config).stacked
    sig = np.sum(np.abs(st.conj().T @ state.w_mat) ** 2, axis=0)
    ups = _distortion_term(state.w_mat, st, config.kappa_t)
    return sig, ups, st


def update_eve_aux(state: BeamState, channels: ChannelSet, config: SystemConfig) -> np.ndarray:
    sig, ups, _ = _eve_ratio(state, channels, config)
    return 1.0 / (1.0 + (sig + ups) / config.noise_eve)


def _l_diag(st_e: np.ndarray, kappa_t: float, k_users: int) -> np.ndarray:
    """Diagonal of L (L L^T = kappa_t I_K kron diag(Hbar_E Hbar_E^H))."""
    per_ant = np.sqrt(kappa_t * np.sum(np.abs(st_e) ** 2, axis=1))
    return np.tile(per_ant, k_users)


def update_f3_aux_w(state: BeamState, channels: ChannelSet, config: SystemConfig):
    _, ups, st = _eve_ratio(state, channels, config)
    p = 1.0 + ups / config.noise_eve
    lw = _l_diag(st, config.kappa_t, state.w_mat.shape[1]) * state.w_vec
    q = lw / (np.real(np.vdot(lw, lw)) + config.noise_eve)
    return float(p), q


def _j_diag(w_mat: np.ndarray, kappa_t: float) -> np.ndarray:
    """Elementwise square root of the diagonal distortion covariance."""
    return np.sqrt(kappa_t * row_power(w_mat))


def update_f3_aux_phi(state: BeamState, channels: ChannelSet, config: SystemConfig):
    _, ups, st = _eve_ratio(state, channels, config)
    p = 1.0 + ups / config.noise_eve
    jh = _j_diag(state.w_mat, config.kappa_t)[:, None] * st
    q = jh / (np.sum(np.abs(jh) ** 2) + config.noise_eve)
    return float(p), q


def update_aux(state: BeamState, channels: ChannelSet, config: SystemConfig) -> AuxState:
    """All auxiliaries at their optimum for ``state``."""
    u, v = update_user_aux(state, channels, config)
    d = update_eve_aux(state, channels, config)
    p_w, q_w = update_f3_aux_w(state, channels, config)
    p_phi, q_phi = update_f3_aux_phi(state, channels, config)
    return AuxState(u=u, v=v, d=d, p_w=p_w, q_w=q_w, p_phi=p_phi, q_phi_mat=q_phi)


# ---- minorants ---------------------------------------------------------


def f1_exact(state: BeamState, channels: ChannelSet, k: int, config: SystemConfig) -> float:
    st = user_channels(state, channels, config)[k].stacked
    y = st.conj().T @ state.w_mat[:, k]
    sig = float(np.real(np.vdot(y, y)))
    load = _weighted_load(state.w_mat, st, config.kappa_t)
    return float(np.log1p(sig / ((1.0 + config.kappa_r) * load + config.noise_user - sig)))


def f2_exact(state: BeamState, channels: ChannelSet, k: int, config: SystemConfig) -> float:
    sig, ups, _ = _eve_ratio(state, channels, config)
    return float(-np.log1p((sig[k] + ups) / config.noise_eve))


def f3_exact(state: BeamState, channels: ChannelSet, config: SystemConfig) -> float:
    _, ups, _ = _eve_ratio(state, channels, config)
    return float(np.log1p(ups / config.noise_eve))


def f1_tilde(state: BeamState, channels: ChannelSet, k: int, u_k: np.ndarray, v_k: float, config: SystemConfig) -> float:
    st = user_channels(state, channels, config)[k].stacked
    uu = float(np.real(np.vdot(u_k, u_k)))
    load = _weighted_load(state.w_mat, st, config.kappa_t)
    cross = np.real(np.vdot(u_k, st.conj().T @ state.w_mat[:, k]))
    return float(
        np.log1p(v_k) - v_k - config.noise_user * uu - (1.0 + config.kappa_r) * uu * load
        + 2.0 * np.sqrt(1.0 + v_k) * cross
    )


def f2_tilde(state: BeamState, channels: ChannelSet, k: int, d_k: float, config: SystemConfig) -> float:
    sig, ups, _ = _eve_ratio(state, channels, config)
    x = 1.0 + (sig[k] + ups) / config.noise_eve
    return float(-d_k * x + np.log(d_k) + 1.0)


def f3_tilde_w(state: BeamState, channels: ChannelSet, p: float, q: np.ndarray, config: SystemConfig) -> float:
    _, _, st = _eve_ratio(state, channels, config)
    lw = _l_diag(st, config.kappa_t, state.w_mat.shape[1]) * state.w_vec
    nq = float(np.real(np.vdot(q, q)))
    inner = (np.real(np.vdot(lw, lw)) + config.noise_eve) * nq - 2.0 * np.real(np.vdot(q, lw)) + 1.0
    return float(-p * inner + np.log(p) + 1.0)


def f3_tilde_phi(state: BeamState, channels: ChannelSet, p: float, q_mat: np.ndarray, config: SystemConfig) -> float:
    _, _, st = _eve_ratio(state, channels, config)
    jh = _j_diag(state.w_mat, config.kappa_t)[:, None] * st
    nq = float(np.sum(np.abs(q_mat) ** 2))
    inner = (np.sum(np.abs(jh) ** 2) + config.noise_eve) * nq - 2.0 * np.real(np.vdot(q_mat, jh)) + 1.0
    return float(-p * inner + np.log(p) + 1.0)


def lower_bound_rate(state: BeamState, aux: AuxState, channels: ChannelSet, k: int, mode: str, config: SystemConfig) -> float:
    """Minorant of the unclamped secrecy rate of user k (nats, unweighted)."""
    val = f1_tilde(state, channels, k, aux.u[k], aux.v[k], config)
    val += f2_tilde(state, channels, k, aux.d[k], config)
    if mode == W_CASE:
        val += f3_tilde_w(state, channels, aux.p_w, aux.q_w, config)
    elif mode == PHI_CASE:
        val += f3_tilde_phi(state, channels, aux.p_phi, aux.q_phi_mat, config)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return float(val)
