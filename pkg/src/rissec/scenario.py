"""Scenario geometry, path loss and seeded channel generation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised for degenerate node placements."""


def noise_power_w(psd_dbm_hz: float = -174.0, bandwidth_hz: float = 10e6) -> float:
    """Thermal noise power in watts for a PSD (dBm/Hz) over a bandwidth."""
    dbm = psd_dbm_hz + 10.0 * np.log10(bandwidth_hz)
    return float(10.0 ** ((dbm - 30.0) / 10.0))


def dbm_to_watt(p_dbm: float) -> float:
    return float(10.0 ** ((p_dbm - 30.0) / 10.0))


def watt_to_dbm(p_w: float) -> float:
    return float(10.0 * np.log10(p_w) + 30.0)


@dataclass(frozen=True)
class Geometry:
    """Node coordinates in meters.

    Users are dropped uniformly in an axis-aligned square of side
    ``user_side`` centred at ``user_center``, unless ``user_positions``
    pins them.
    """

    bs: tuple = (0.0, 0.0, 30.0)
    ris: tuple = (50.0, 0.0, 10.0)
    user_center: tuple = (300.0, 10.0, 1.5)
    user_side: float = 10.0
    eve: tuple = (300.0, 10.0, 1.5)
    user_positions: Optional[tuple] = None


@dataclass(frozen=True)
class PathLossExponents:
    bu: float = 4.0
    be: float = 4.0
    br: float = 2.0
    ru: float = 2.0
    re: float = 2.0


@dataclass(frozen=True)
class CcpParams:
    """Penalty schedule and stopping rule of the phase-shift CCP loop."""

    lambda_init: float = 1e-3
    gamma: float = 5.0
    lambda_max: float = 1e4
    eps1: float = 1e-4
    eps2: float = 1e-4
    t_max: int = 30

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError("ccp gamma must exceed 1")
        if not (self.lambda_init > 0.0 and self.lambda_max >= self.lambda_init):
            raise ValueError("ccp requires lambda_max >= lambda_init > 0")
        if not (self.eps1 > 0.0 and self.eps2 > 0.0):
            raise ValueError("ccp tolerances must be positive")
        if self.t_max < 1:
            raise ValueError("ccp t_max must be >= 1")


@dataclass(frozen=True)
class AlgoParams:
    zeta: float = 1.25
    iota: float = 1.02
    zeta_max: float = 500.0
    eps: float = 1e-5
    n_max: int = 200
    squarem: bool = True
    refresh_aux: bool = True
    refit_2bit: bool = True
    refit_iterations: int = 50

    def __post_init__(self):
        if not self.zeta > 0.0:
            raise ValueError("zeta must be positive")
        if not self.iota >= 1.0:
            raise ValueError("iota must be >= 1")
        if not self.zeta_max >= self.zeta:
            raise ValueError("zeta_max must be >= zeta")
        if not self.eps > 0.0:
            raise ValueError("eps must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")


@dataclass(frozen=True)
class SystemConfig:
    """Every scenario, impairment and algorithm parameter of one run.

    ``phase_noise`` selects the averaged (impaired) RIS model; turning it
    off gives the ideal reflection model used by the non-robust design.
    """

    n_tx: int = 4
    m_ris: int = 16
    k_users: int = 3
    p_max: float = 1.0
    kappa_t: float = 0.01
    kappa_r: float = 0.01
    noise_user: float = field(default_factory=noise_power_w)
    noise_eve: float = field(default_factory=noise_power_w)
    weights: Optional[tuple] = None
    geometry: Geometry = field(default_factory=Geometry)
    rician_k: float = 10.0
    pathloss: PathLossExponents = field(default_factory=PathLossExponents)
    algo: AlgoParams = field(default_factory=AlgoParams)
    ccp: CcpParams = field(default_factory=CcpParams)
    phase_noise: bool = True

    def __post_init__(self):
        if self.weights is None:
            object.__setattr__(self, "weights", (1.0,) * self.k_users)
        else:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.n_tx < 1 or self.k_users < 1 or self.m_ris < 0:
            raise ValueError("need n_tx >= 1, k_users >= 1, m_ris >= 0")
        if not self.p_max > 0.0:
            raise ValueError("p_max must be positive")
        if not (self.noise_user > 0.0 and self.noise_eve > 0.0):
            raise ValueError("noise powers must be positive")
        if len(self.weights) != self.k_users or min(self.weights) <= 0.0:
            raise ValueError("need one positive weight per user")
        if self.kappa_t < 0.0 or self.kappa_r < 0.0:
            raise ValueError("impairment ratios must be nonnegative")
        if self.rician_k < 0.0:
            raise ValueError("rician_k must be nonnegative")

    @property
    def omega(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    def with_(self, **kw) -> "SystemConfig":
        """Copy with fields replaced; weights reset if K changes."""
        if "k_users" in kw and "weights" not in kw and kw["k_users"] != self.k_users:
            kw["weights"] = None
        return replace(self, **kw)


@dataclass(frozen=True)
class ChannelSet:
    """One realization of the five links (read-only arrays).

    ``h_bu`` is K x N, ``h_br`` is M x N, ``h_ru`` is K x M.
    """

    h_bu: np.ndarray
    h_be: np.ndarray
    h_br: np.ndarray
    h_ru: np.ndarray
    h_re: np.ndarray

    def __post_init__(self):
        for name in ("h_bu", "h_be", "h_br", "h_ru", "h_re"):
            arr = np.array(getattr(self, name), dtype=complex)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        k, n = self.h_bu.shape
        m = self.h_br.shape[0]
        if self.h_be.shape != (n,) or self.h_br.shape != (m, n):
            raise ValueError("inconsistent BS-side channel dimensions")
        if self.h_ru.shape != (k, m) or self.h_re.shape != (m,):
            raise ValueError("inconsistent RIS-side channel dimensions")

    @property
    def n_tx(self) -> int:
        return self.h_bu.shape[1]

    @property
    def k_users(self) -> int:
        return self.h_bu.shape[0]

    @property
    def m_ris(self) -> int:
        return self.h_br.shape[0]

    def without_ris(self) -> "ChannelSet":
        n, k = self.n_tx, self.k_users
        return ChannelSet(self.h_bu, self.h_be, np.zeros((0, n)), np.zeros((k, 0)), np.zeros(0))


def make_rng(seed: int) -> np.random.Generator:
    """Philox4x64 counter-based generator keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def path_loss_db(distance: float, alpha: float) -> float:
    """Large-scale attenuation in dB with a 1 m reference distance."""
    if not distance >= 1.0:
        raise ValueError(f"distance {distance} m is below the 1 m reference")
    return -30.0 - 10.0 * alpha * np.log10(distance)


def _steering(n: int, theta: float) -> np.ndarray:
    return np.exp(1j * np.pi * np.arange(n) * np.sin(theta))


def los_component(tx_pos: Sequence[float], rx_pos: Sequence[float], n_rx: int, n_tx: int) -> np.ndarray:
    """Rank-one LoS matrix a_rx a_tx^H between two half-wavelength ULAs.

    Both arrays lie along the y axis; angles are azimuths of the link
    direction seen from each end.
    """
    tx = np.asarray(tx_pos, dtype=float)
    rx = np.asarray(rx_pos, dtype=float)
    d = rx - tx
    if np.linalg.norm(d) == 0.0:
        raise GeometryError("coincident endpoints")
    theta_tx = np.arctan2(d[1], d[0])
    theta_rx = np.arctan2(-d[1], -d[0])
    return np.outer(_steering(n_rx, theta_rx), _steering(n_tx, theta_tx).conj())


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _distance(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))


def _gain(a, b, alpha) -> float:
    return 10.0 ** (path_loss_db(_distance(a, b), alpha) / 10.0)


def draw_user_positions(geometry: Geometry, k_users: int, rng: np.random.Generator) -> np.ndarray:
    c = np.asarray(geometry.user_center, dtype=float)
    off = rng.uniform(-0.5, 0.5, size=(k_users, 2)) * geometry.user_side
    pos = np.tile(c, (k_users, 1))
    pos[:, :2] += off
    return pos


def generate_channels(config: SystemConfig, seed: int) -> ChannelSet:
    """Draw all links for one trial.

    Direct links are Rayleigh; RIS links are Rician with factor
    ``config.rician_k``. Draw order is fixed so a seed pins the result.
    """
    rng = make_rng(seed)
    g = config.geometry
    n, m, k = config.n_tx, config.m_ris, config.k_users
    if g.user_positions is not None:
        users = np.asarray(g.user_positions, dtype=float).reshape(k, 3)
        rng.uniform(size=(k, 2))  # keep the stream aligned with the redraw case
    else:
        users = draw_user_positions(g, k, rng)
    pl = config.pathloss

    h_bu = np.stack([np.sqrt(_gain(g.bs, u, pl.bu)) * _cn(rng, n) for u in users])
    h_be = np.sqrt(_gain(g.bs, g.eve, pl.be)) * _cn(rng, n)

    kr = config.rician_k
    if np.isinf(kr):
        a_los, a_nlos = 1.0, 0.0
    else:
        a_los, a_nlos = np.sqrt(kr / (kr + 1.0)), np.sqrt(1.0 / (kr + 1.0))

    def rician(tx, rx, n_rx, n_tx, alpha):
        los = los_component(tx, rx, n_rx, n_tx)
        return np.sqrt(_gain(tx, rx, alpha)) * (a_los * los + a_nlos * _cn(rng, (n_rx, n_tx)))

    if m > 0:
        h_br = rician(g.bs, g.ris, m, n, pl.br)
        # h_ru[k]^H is the 1 x M row RIS -> user, so store the conjugate row.
        h_ru = np.stack([rician(g.ris, u, 1, m, pl.ru)[0].conj() for u in users])
        h_re = rician(g.ris, g.eve, 1, m, pl.re)[0].conj()
    else:
        h_br = np.zeros((0, n), complex)
        h_ru = np.zeros((k, 0), complex)
        h_re = np.zeros(0, complex)
    return ChannelSet(h_bu=h_bu, h_be=h_be, h_br=h_br, h_ru=h_ru, h_re=h_re)
