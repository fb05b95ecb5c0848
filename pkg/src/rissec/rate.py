"""SINRs, secrecy rates and the weighted minimum secrecy rate (nats)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .himodel import EVE, EffectiveChannel, check_unit_modulus, model_channel
from .scenario import ChannelSet, SystemConfig


@dataclass(frozen=True)
class BeamState:
    """Precoder W (N x K) and reflection vector phi (length M).

    ``w_vec`` is the column-major stacking of ``w_mat``; it is derived when
    omitted and validated when supplied.
    """

    w_mat: np.ndarray
    phi: np.ndarray
    w_vec: Optional[np.ndarray] = None

    def __post_init__(self):
        w = np.array(self.w_mat, dtype=complex)
        if w.ndim != 2:
            raise ValueError("w_mat must be N x K")
        phi = check_unit_modulus(np.array(self.phi, dtype=complex).ravel())
        vec = w.reshape(-1, order="F")
        if self.w_vec is not None and not np.array_equal(np.asarray(self.w_vec, complex), vec):
            raise ValueError("w_vec is not the column stacking of w_mat")
        for arr in (w, phi, vec):
            arr.setflags(write=False)
        object.__setattr__(self, "w_mat", w)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "w_vec", vec)

    @classmethod
    def from_vec(cls, w_vec: np.ndarray, n_tx: int, phi: np.ndarray) -> "BeamState":
        w_vec = np.asarray(w_vec, complex)
        return cls(w_vec.reshape(n_tx, -1, order="F"), phi)

    @property
    def power(self) -> float:
        return float(np.real(np.vdot(self.w_vec, self.w_vec)))

    def is_feasible(self, p_max: float, tol: float = 1e-9) -> bool:
        return self.power <= p_max + tol

    def with_w(self, w_mat: np.ndarray) -> "BeamState":
        return BeamState(w_mat, self.phi)

    def with_phi(self, phi: np.ndarray) -> "BeamState":
        return BeamState(self.w_mat, phi)


def distortion_covariance(w_mat: np.ndarray, kappa_t: float) -> np.ndarray:
    """Transmit distortion covariance kappa_t * diag(W W^H)."""
    return np.diag(kappa_t * row_power(w_mat)).astype(complex)


def row_power(w_mat: np.ndarray) -> np.ndarray:
    """Per-antenna transmit power, i.e. diag(W W^H) as a real vector."""
    return np.sum(np.abs(np.asarray(w_mat)) ** 2, axis=1)


def receiver_distortion(w_mat: np.ndarray, eff: EffectiveChannel, kappa_t: float, kappa_r: float) -> float:
    """kappa_r * Tr[(W W^H + kappa_t diag(W W^H)) Hbar Hbar^H]."""
    g = eff.gram
    total = np.sum(np.abs(eff.stacked.conj().T @ w_mat) ** 2)
    total += kappa_t * np.dot(row_power(w_mat), np.real(np.diag(g)))
    return float(kappa_r * total)


def _distortion_term(w_mat: np.ndarray, stacked: np.ndarray, kappa_t: float) -> float:
    # Tr[Upsilon Hbar Hbar^H] = kappa_t * sum_n rowpow_n * ||Hbar[n, :]||^2
    return float(kappa_t * np.dot(row_power(w_mat), np.sum(np.abs(stacked) ** 2, axis=1)))


def user_channels(state: BeamState, channels: ChannelSet, config: SystemConfig):
    return [model_channel(state.phi, channels, k, config.phase_noise) for k in range(channels.k_users)]


def eve_channel(state: BeamState, channels: ChannelSet, config: SystemConfig) -> EffectiveChannel:
    return model_channel(state.phi, channels, EVE, config.phase_noise)


def _sinr_from(stacked: np.ndarray, w_mat: np.ndarray, k: int, config: SystemConfig) -> float:
    powers = np.sum(np.abs(stacked.conj().T @ w_mat) ** 2, axis=0)
    ups = _distortion_term(w_mat, stacked, config.kappa_t)
    gamma_r = config.kappa_r * (powers.sum() + ups)
    denom = powers.sum() - powers[k] + ups + gamma_r + config.noise_user
    return float(powers[k] / denom)


def user_sinr(state: BeamState, channels: ChannelSet, k: int, config: SystemConfig) -> float:
    eff = model_channel(state.phi, channels, k, config.phase_noise)
    return _sinr_from(eff.stacked, state.w_mat, k, config)


def _eve_snr_from(stacked: np.ndarray, w_mat: np.ndarray, k: int, config: SystemConfig) -> float:
    sig = np.sum(np.abs(stacked.conj().T @ w_mat[:, k]) ** 2)
    return float(sig / (_distortion_term(w_mat, stacked, config.kappa_t) + config.noise_eve))


def eve_rate(state: BeamState, channels: ChannelSet, k: int, config: SystemConfig) -> float:
    eff = eve_channel(state, channels, config)
    return float(np.log1p(_eve_snr_from(eff.stacked, state.w_mat, k, config)))


def secrecy_rates(state: BeamState, channels: ChannelSet, config: SystemConfig, clamp: bool = True) -> np.ndarray:
    """Secrecy rate of every user (unweighted)."""
    e_st = eve_channel(state, channels, config).stacked
    out = np.empty(channels.k_users)
    for k, eff in enumerate(user_channels(state, channels, config)):
        r_u = np.log1p(_sinr_from(eff.stacked, state.w_mat, k, config))
        r_e = np.log1p(_eve_snr_from(e_st, state.w_mat, k, config))
        out[k] = r_u - r_e
    return np.maximum(out, 0.0) if clamp else out


def secrecy_rate(state: BeamState, channels: ChannelSet, k: int, config: SystemConfig) -> float:
    r_u = np.log1p(user_sinr(state, channels, k, config))
    return float(max(r_u - eve_rate(state, channels, k, config), 0.0))


def wmsr_detail(state: BeamState, channels: ChannelSet, config: SystemConfig, clamp: bool = True):
    """(min_k w_k R_k, argmin) with ties resolved to the smallest index."""
    vals = config.omega * secrecy_rates(state, channels, config, clamp=clamp)
    k = int(np.argmin(vals))
    return float(vals[k]), k


def wmsr(state: BeamState, channels: ChannelSet, config: SystemConfig) -> float:
    return wmsr_detail(state, channels, config)[0]


def unclamped_objective(state: BeamState, channels: ChannelSet, config: SystemConfig) -> float:
    """min_k w_k (R_U,k - R_E,k) without the clamp; what the optimizers bound."""
    return wmsr_detail(state, channels, config, clamp=False)[0]
