"""Per-user quadratic forms of the weighted rate minorant.

With the auxiliaries frozen, the minorant of user k is a concave
quadratic in either block: ``r(x) = -x^H C x + 2 Re{b^H x} + c``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fp import AuxState, _j_diag, _l_diag
from .himodel import EVE, affine_in_phi, gram_in_phi, model_channel
from .rate import row_power
from .scenario import ChannelSet, SystemConfig


@dataclass(frozen=True)
class QuadraticForm:
    c_mat: np.ndarray
    b_vec: np.ndarray
    c_scalar: float

    @property
    def dim(self) -> int:
        return self.b_vec.size

    def __call__(self, x: np.ndarray) -> float:
        x = np.asarray(x, complex)
        return float(-np.real(np.vdot(x, self.c_mat @ x)) + 2.0 * np.real(np.vdot(self.b_vec, x)) + self.c_scalar)

    def gradient_term(self, x: np.ndarray) -> np.ndarray:
        """b - C^H x; the Wirtinger ascent direction is twice this."""
        return self.b_vec - self.c_mat.conj().T @ x

    def scaled(self, s: float) -> "QuadraticForm":
        return QuadraticForm(s * self.c_mat, s * self.b_vec, s * self.c_scalar)


def _form(c_mat, b_vec, c_scalar, omega) -> QuadraticForm:
    c_mat = 0.5 * (c_mat + c_mat.conj().T)
    return QuadraticForm(omega * c_mat, omega * np.asarray(b_vec, complex), float(omega * c_scalar))


def w_quadratic(k: int, phi: np.ndarray, aux: AuxState, channels: ChannelSet, config: SystemConfig) -> QuadraticForm:
    """Form in the stacked precoder vec(W) (length NK), phi fixed."""
    n, kk = channels.n_tx, channels.k_users
    st = model_channel(phi, channels, k, config.phase_noise).stacked
    st_e = model_channel(phi, channels, EVE, config.phase_noise).stacked
    g = st @ st.conj().T
    g_e = st_e @ st_e.conj().T
    u, v, d = aux.u[k], aux.v[k], aux.d[k]
    uu = float(np.real(np.vdot(u, u)))
    de2 = config.noise_eve

    blk = (1.0 + config.kappa_r) * uu * (g + config.kappa_t * np.diag(np.real(np.diag(g))))
    blk = blk + (d / de2) * config.kappa_t * np.diag(np.real(np.diag(g_e)))
    c_mat = np.kron(np.eye(kk), blk)
    c_mat[k * n:(k + 1) * n, k * n:(k + 1) * n] += (d / de2) * g_e
    ell = _l_diag(st_e, config.kappa_t, kk)
    qq = float(np.real(np.vdot(aux.q_w, aux.q_w)))
    c_mat += np.diag(aux.p_w * qq * ell**2)

    b_vec = aux.p_w * ell * aux.q_w
    b_vec[k * n:(k + 1) * n] += np.sqrt(1.0 + v) * (st @ u)

    c1 = np.log1p(v) - v - config.noise_user * uu
    c2 = np.log(d) + 1.0 - d
    c3 = -aux.p_w * qq * de2 - aux.p_w + np.log(aux.p_w) + 1.0
    return _form(c_mat, b_vec, c1 + c2 + c3, config.omega[k])


def phi_quadratic(k: int, w_mat: np.ndarray, aux: AuxState, channels: ChannelSet, config: SystemConfig) -> QuadraticForm:
    """Form in the reflection vector phi (length M), W fixed."""
    pn = config.phase_noise
    w_mat = np.asarray(w_mat, complex)
    u, v, d = aux.u[k], aux.v[k], aux.d[k]
    uu = float(np.real(np.vdot(u, u)))
    rp = row_power(w_mat)
    de2 = config.noise_eve

    # f1: -Tr[Hbar^H A1 Hbar] + 2 sqrt(1+v) Re{u^H Hbar^H w_k}
    a1 = (1.0 + config.kappa_r) * uu * (w_mat @ w_mat.conj().T + config.kappa_t * np.diag(rp))
    c_a1, b_a1, k_a1 = gram_in_phi(channels, k, a1, pn)
    lin, lin0 = affine_in_phi(channels, k, w_mat[:, k], pn)
    sv = np.sqrt(1.0 + v)
    c_mat = c_a1.copy()
    b_vec = sv * (lin.conj().T @ u) - b_a1
    c_sc = np.log1p(v) - v - config.noise_user * uu - k_a1 + 2.0 * sv * np.real(np.vdot(u, lin0))

    # f2: -(d / noise_E) Tr[Hbar_E^H A2 Hbar_E] - d + ln d + 1
    a2 = np.outer(w_mat[:, k], w_mat[:, k].conj()) + config.kappa_t * np.diag(rp)
    c_a2, b_a2, k_a2 = gram_in_phi(channels, EVE, a2, pn)
    s2 = d / de2
    c_mat += s2 * c_a2
    b_vec -= s2 * b_a2
    c_sc += -s2 * k_a2 - d + np.log(d) + 1.0

    # f3: -p[(|J Hbar_E|^2 + noise_E)|Q|^2 - 2 Re Tr(Q^H J Hbar_E) + 1] + ln p + 1
    p, q_mat = aux.p_phi, aux.q_phi_mat
    qq = float(np.sum(np.abs(q_mat) ** 2))
    jd = _j_diag(w_mat, config.kappa_t)
    c_u, b_u, k_u = gram_in_phi(channels, EVE, np.diag(jd**2).astype(complex), pn)
    row = np.zeros(channels.m_ris, complex)
    const = 0.0
    for i in range(q_mat.shape[1]):
        a_i, a0_i = affine_in_phi(channels, EVE, jd * q_mat[:, i], pn)
        row += a_i[i]
        const += a0_i[i]
    c_mat += p * qq * c_u
    b_vec += p * row.conj() - p * qq * b_u
    c_sc += -p * qq * (k_u + de2) + 2.0 * p * np.real(const) - p + np.log(p) + 1.0
    return _form(c_mat, b_vec, c_sc, config.omega[k])


def all_w_forms(phi, aux, channels, config):
    return [w_quadratic(k, phi, aux, channels, config) for k in range(channels.k_users)]


def all_phi_forms(w_mat, aux, channels, config):
    return [phi_quadratic(k, w_mat, aux, channels, config) for k in range(channels.k_users)]
