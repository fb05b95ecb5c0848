"""RIS phase-noise statistics and the averaged effective channel.

Phase errors are i.i.d. uniform on [-pi/2, pi/2]. Averaging the
channel Gram matrix over them yields ``stacked @ stacked.conj().T`` with
``stacked = [h_hat, H_hat]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .scenario import ChannelSet

MEAN_FACTOR = 2.0 / np.pi
SPREAD_FACTOR = float(np.sqrt(1.0 - 4.0 / np.pi**2))

EVE = "eve"
Target = Union[int, str]


@dataclass(frozen=True)
class EffectiveChannel:
    h_hat: np.ndarray
    h_mat: np.ndarray
    stacked: np.ndarray

    @property
    def gram(self) -> np.ndarray:
        return self.stacked @ self.stacked.conj().T


def phase_noise_second_moment(m_ris: int) -> np.ndarray:
    """E{psi* psi^T}: unit diagonal, 4/pi^2 elsewhere."""
    out = np.full((m_ris, m_ris), 4.0 / np.pi**2)
    np.fill_diagonal(out, 1.0)
    return out


def phase_noise_first_moment(m_ris: int) -> np.ndarray:
    return np.full(m_ris, MEAN_FACTOR)


def sample_phase_noise(m_ris: int, draws: int, rng: np.random.Generator) -> np.ndarray:
    """``draws`` x M samples of psi = exp(j*theta), theta ~ U[-pi/2, pi/2]."""
    return np.exp(1j * rng.uniform(-np.pi / 2, np.pi / 2, size=(draws, m_ris)))


def check_unit_modulus(phi: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    phi = np.asarray(phi, dtype=complex)
    if phi.size and np.max(np.abs(np.abs(phi) - 1.0)) > tol:
        raise ValueError("phi must have unit-modulus entries")
    return phi


def target_links(channels: ChannelSet, target: Target):
    """(h_B, h_R) for user index ``target`` or the eavesdropper."""
    if isinstance(target, str):
        if target != EVE:
            raise ValueError(f"unknown target {target!r}")
        return channels.h_be, channels.h_re
    return channels.h_bu[target], channels.h_ru[target]


def effective_channel(phi: np.ndarray, channels: ChannelSet, target: Target) -> EffectiveChannel:
    """Phase-noise-averaged channel of a user (int index) or ``"eve"``."""
    phi = check_unit_modulus(phi)
    h_b, h_r = target_links(channels, target)
    if phi.shape != (channels.m_ris,):
        raise ValueError("phi length does not match the RIS size")
    # column m of H_BR^H scaled by conj(phi_m h_R,m^*) = conj(phi_m) h_R,m
    g = channels.h_br.conj().T * (phi.conj() * h_r)[None, :]
    h_hat = MEAN_FACTOR * g.sum(axis=1) + h_b
    h_mat = SPREAD_FACTOR * g
    return EffectiveChannel(h_hat=h_hat, h_mat=h_mat, stacked=np.column_stack([h_hat, h_mat]))


def ideal_effective_channel(phi: np.ndarray, channels: ChannelSet, target: Target) -> np.ndarray:
    """Cascaded channel without phase noise (column vector form of the row channel)."""
    phi = check_unit_modulus(phi)
    h_b, h_r = target_links(channels, target)
    return channels.h_br.conj().T @ (phi.conj() * h_r) + h_b


def model_channel(phi: np.ndarray, channels: ChannelSet, target: Target, phase_noise: bool = True) -> EffectiveChannel:
    """Effective channel under the selected RIS model.

    With ``phase_noise`` off the stacked matrix is just the ideal N x 1
    column, so every rate formula applies unchanged.
    """
    if phase_noise:
        return effective_channel(phi, channels, target)
    h = ideal_effective_channel(phi, channels, target)
    return EffectiveChannel(h_hat=h, h_mat=np.zeros((h.size, 0), complex), stacked=h[:, None])


def affine_in_phi(channels: ChannelSet, target: Target, g: np.ndarray, phase_noise: bool = True):
    """Write stacked^H g = A phi + a0 (affine in the reflection vector).

    Returns ``(A, a0)`` with A of shape (M+1) x M (or 1 x M for the ideal
    model).
    """
    h_b, h_r = target_links(channels, target)
    z = h_r.conj() * (channels.h_br @ g)
    head = MEAN_FACTOR if phase_noise else 1.0
    rows = [head * z[None, :]]
    if phase_noise:
        rows.append(SPREAD_FACTOR * np.diag(z))
    a_mat = np.vstack(rows)
    a0 = np.zeros(a_mat.shape[0], complex)
    a0[0] = np.vdot(h_b, g)
    return a_mat, a0


def gram_in_phi(channels: ChannelSet, target: Target, x: np.ndarray, phase_noise: bool = True):
    """Tr[stacked^H X stacked] = phi^H C phi + 2 Re{b^H phi} + c for Hermitian X.

    Returns ``(C, b, c)``; C is the Hadamard product of the reflection
    covariance with (H_BR X H_BR^H)^T.
    """
    h_b, h_r = target_links(channels, target)
    hbr = channels.h_br
    head = MEAN_FACTOR if phase_noise else 1.0
    cov = head**2 * np.outer(h_r, h_r.conj())
    if phase_noise:
        cov = cov + SPREAD_FACTOR**2 * np.diag(np.abs(h_r) ** 2)
    c_mat = cov * (hbr @ x @ hbr.conj().T).T
    b_vec = head * h_r * (hbr @ x @ h_b).conj()
    c0 = float(np.real(np.vdot(h_b, x @ h_b)))
    return c_mat, b_vec, c0
