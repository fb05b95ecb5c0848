"""Minorize-maximize route: log-sum-exp smoothing, closed-form steps, SQUAREM.

The max-min objective is replaced by ``-(1/zeta) ln sum exp(-zeta r_k)``.
Around the current point it is minorized by an isotropic quadratic whose
curvature comes from closed-form bounds, so each block update is a
projection: a rescale onto the power sphere for the precoder, a phase
alignment for the reflection vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import fp
from .quadform import QuadraticForm, all_phi_forms, all_w_forms
from .rate import BeamState, unclamped_objective, wmsr
from .scenario import ChannelSet, SystemConfig
from .trace import RunTrace


def smoothed_min(values: Sequence[float], zeta: float) -> float:
    r = np.asarray(values, float)
    lo = r.min()
    return float(lo - np.log(np.sum(np.exp(-zeta * (r - lo)))) / zeta)


def mm_weights(values: Sequence[float], zeta: float) -> np.ndarray:
    r = np.asarray(values, float)
    e = np.exp(-zeta * (r - r.min()))
    return e / e.sum()


def lambda_max(mat: np.ndarray, tol: float = 1e-8, max_iter: int = 500) -> float:
    """Largest eigenvalue of a Hermitian PSD matrix by power iteration.

    Returns the Rayleigh quotient plus the residual norm, which keeps the
    estimate from landing below the true value by more than roundoff.
    """
    a = 0.5 * (mat + mat.conj().T)
    n = a.shape[0]
    if n == 0:
        return 0.0
    rng = np.random.default_rng(0)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    rho = 0.0
    for _ in range(max_iter):
        y = a @ x
        rho_new = float(np.real(np.vdot(x, y)))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        if abs(rho_new - rho) <= tol * max(abs(rho_new), 1e-300):
            rho = rho_new
            break
        rho = rho_new
        x = y / ny
    return float(rho + np.linalg.norm(a @ x - rho * x))


@dataclass(frozen=True)
class SurrogateW:
    v_bar: np.ndarray
    alpha_bar: float
    c_bar: float
    anchor: np.ndarray
    f_anchor: float
    grad: np.ndarray

    def __call__(self, w: np.ndarray) -> float:
        """Surrogate value, evaluated around the anchor to avoid cancellation."""
        d = np.asarray(w, complex) - self.anchor
        return float(self.f_anchor + 2.0 * np.real(np.vdot(self.grad, d)) + self.alpha_bar * np.real(np.vdot(d, d)))


@dataclass(frozen=True)
class SurrogatePhi:
    v_bar: np.ndarray
    beta_bar: float
    c_bar: float
    anchor: np.ndarray
    f_anchor: float
    grad: np.ndarray

    def __call__(self, phi: np.ndarray) -> float:
        d = np.asarray(phi, complex) - self.anchor
        return float(self.f_anchor + 2.0 * np.real(np.vdot(self.grad, d)) + self.beta_bar * np.real(np.vdot(d, d)))


def alpha_bar(forms: Sequence[QuadraticForm], zeta: float, p_max: float) -> float:
    """Curvature bound for the precoder surrogate (trace-based)."""
    tr = max(float(np.real(np.trace(f.c_mat))) for f in forms)
    o = max(
        p_max * float(np.real(np.sum(np.abs(f.c_mat) ** 2)))
        + float(np.real(np.vdot(f.b_vec, f.b_vec)))
        + 2.0 * np.sqrt(p_max) * float(np.linalg.norm(f.c_mat @ f.b_vec))
        for f in forms
    )
    return -tr - 2.0 * zeta * o


def beta_bar(forms: Sequence[QuadraticForm], zeta: float) -> float:
    """Curvature bound for the phase surrogate; lambda_max(C C^H) = lambda_max(C)^2."""
    m = forms[0].dim
    lams = [lambda_max(f.c_mat) for f in forms]
    o = max(
        float(np.real(np.vdot(f.b_vec, f.b_vec))) + m * lam**2 + 2.0 * float(np.sum(np.abs(f.c_mat @ f.b_vec)))
        for f, lam in zip(forms, lams)
    )
    return -max(lams) - 2.0 * zeta * o


def _gradient(forms, x, zeta):
    vals = [f(x) for f in forms]
    h = mm_weights(vals, zeta)
    g = sum(hk * f.gradient_term(x) for hk, f in zip(h, forms))
    return smoothed_min(vals, zeta), g


def surrogate_w_params(forms: Sequence[QuadraticForm], w_cur: np.ndarray, zeta: float, p_max: float,
                       curvature: Optional[float] = None) -> SurrogateW:
    w_cur = np.asarray(w_cur, complex)
    a = alpha_bar(forms, zeta, p_max) if curvature is None else curvature
    f0, g = _gradient(forms, w_cur, zeta)
    c_bar = f0 + a * float(np.real(np.vdot(w_cur, w_cur))) - 2.0 * float(np.real(np.vdot(g, w_cur)))
    return SurrogateW(g - a * w_cur, a, c_bar, w_cur, f0, g)


def mm_w_step(surr: SurrogateW, p_max: float) -> np.ndarray:
    """Maximize the surrogate on the power sphere: w = sqrt(P) v / |v|."""
    nv = np.linalg.norm(surr.v_bar)
    if nv == 0.0:
        return surr.anchor.copy()
    return np.sqrt(p_max) * surr.v_bar / nv


def surrogate_phi_params(forms: Sequence[QuadraticForm], phi_cur: np.ndarray, zeta: float,
                         curvature: Optional[float] = None) -> SurrogatePhi:
    phi_cur = np.asarray(phi_cur, complex)
    b = beta_bar(forms, zeta) if curvature is None else curvature
    f0, g = _gradient(forms, phi_cur, zeta)
    c_bar = f0 + 2.0 * phi_cur.size * b - 2.0 * float(np.real(np.vdot(g, phi_cur)))
    return SurrogatePhi(g - b * phi_cur, b, c_bar, phi_cur, f0, g)


def mm_phi_step(surr: SurrogatePhi) -> np.ndarray:
    v = surr.v_bar
    keep = np.abs(v) == 0.0
    out = np.exp(1j * np.angle(v))
    out[keep] = surr.anchor[keep] / np.abs(surr.anchor[keep])
    return out


def project_power(w: np.ndarray, p_max: float) -> np.ndarray:
    """Rescale onto the sphere |w|^2 = P, where the MM iterates live."""
    nw = np.linalg.norm(w)
    return w if nw == 0.0 else np.sqrt(p_max) * w / nw


def project_torus(phi: np.ndarray) -> np.ndarray:
    mag = np.abs(phi)
    return np.where(mag > 0, phi / np.where(mag > 0, mag, 1.0), 1.0 + 0j)


def squarem_accelerate(x_cur: np.ndarray, fixed_point_map: Callable, feasibility_projector: Callable,
                       objective: Callable, max_halvings: int = 20) -> np.ndarray:
    """One squared-extrapolation step with ascent-preserving backtracking."""
    x1 = fixed_point_map(x_cur)
    x2 = fixed_point_map(x1)
    j1 = x1 - x_cur
    j2 = x2 - x1 - j1
    n2 = np.linalg.norm(j2)
    if n2 == 0.0:
        return x2
    alpha = -np.linalg.norm(j1) / n2
    target = objective(x2)
    for _ in range(max_halvings):
        cand = feasibility_projector(x_cur - 2.0 * alpha * j1 + alpha**2 * j2)
        if objective(cand) >= target:
            return cand
        alpha = (alpha - 1.0) / 2.0
    return x2


def _check_finite(value, step: str, iteration: int):
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite value in {step} at iteration {iteration}")


def _w_block(forms, w, zeta, p_max, accelerate):
    a = alpha_bar(forms, zeta, p_max)

    def fmap(x):
        return mm_w_step(surrogate_w_params(forms, x, zeta, p_max, curvature=a), p_max)

    def obj(x):
        return smoothed_min([f(x) for f in forms], zeta)

    if accelerate:
        return squarem_accelerate(w, fmap, lambda x: project_power(x, p_max), obj), obj
    return fmap(w), obj


def _phi_block(forms, phi, zeta, accelerate):
    b = beta_bar(forms, zeta)

    def fmap(x):
        return mm_phi_step(surrogate_phi_params(forms, x, zeta, curvature=b))

    def obj(x):
        return smoothed_min([f(x) for f in forms], zeta)

    if accelerate:
        return squarem_accelerate(phi, fmap, project_torus, obj), obj
    return fmap(phi), obj


def bcd_mm(config: SystemConfig, channels: ChannelSet, init: BeamState, optimize_phi: bool = True):
    """Block MM ascent with a growing smoothing parameter.

    ``optimize_phi=False`` freezes the reflection vector (precoder-only runs).
    """
    ap = config.algo
    state = init
    trace = RunTrace()
    zeta = ap.zeta
    prev = unclamped_objective(state, channels, config)
    do_phi = optimize_phi and channels.m_ris > 0
    for it in range(1, ap.n_max + 1):
        aux = fp.update_aux(state, channels, config)
        w_forms = all_w_forms(state.phi, aux, channels, config)
        w_new, obj_w = _w_block(w_forms, state.w_vec, zeta, config.p_max, ap.squarem)
        _check_finite(w_new, "precoder step", it)
        trace.blocks.append((it, "w", obj_w(state.w_vec), obj_w(w_new)))
        state = BeamState.from_vec(w_new, channels.n_tx, state.phi)
        bound = trace.blocks[-1][3]
        if do_phi:
            if ap.refresh_aux:
                aux = fp.update_aux(state, channels, config)
            phi_forms = all_phi_forms(state.w_mat, aux, channels, config)
            phi_new, obj_p = _phi_block(phi_forms, state.phi, zeta, ap.squarem)
            _check_finite(phi_new, "phase step", it)
            trace.blocks.append((it, "phi", obj_p(state.phi), obj_p(phi_new)))
            state = state.with_phi(phi_new)
            bound = trace.blocks[-1][3]
        current = unclamped_objective(state, channels, config)
        _check_finite(current, "objective evaluation", it)
        trace.record(bound, wmsr(state, channels, config), zeta)
        if abs(current - prev) <= ap.eps * max(abs(prev), 1e-12):
            return state, trace.finish("converged")
        prev = current
        zeta = min(zeta**ap.iota, ap.zeta_max)
    return state, trace.finish("max-iter")
