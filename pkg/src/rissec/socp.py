"""Small dense SOCP solver and the conic route for both BCD blocks.

The solver is a homogeneous self-dual primal-dual interior-point method
with Nesterov-Todd scaling and a Mehrotra predictor-corrector. It targets
problems with at most a few hundred rows.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from . import fp
from .quadform import QuadraticForm, all_phi_forms, all_w_forms
from .rate import BeamState, unclamped_objective, wmsr
from .scenario import CcpParams, ChannelSet, SystemConfig
from .trace import RunTrace

OPTIMAL = "optimal"
MAX_ITER = "max-iter"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class ConicProblem:
    """minimize objective @ x  s.t.  A_i x + b_i in SOC,  A x + b >= 0.

    Each cone is a pair ``(A_i, b_i)`` whose first row is the radius row.
    ``nonneg`` is a single ``(A, b)`` pair or ``None``.
    """

    objective: np.ndarray
    cones: Tuple[Tuple[np.ndarray, np.ndarray], ...] = ()
    nonneg: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        c = np.asarray(self.objective, float).ravel()
        object.__setattr__(self, "objective", c)
        n = c.size
        cones = []
        for a, b in self.cones:
            a = np.atleast_2d(np.asarray(a, float))
            b = np.asarray(b, float).ravel()
            if a.shape != (b.size, n) or b.size < 2:
                raise ValueError("cone rows inconsistent or cone dimension < 2")
            cones.append((a, b))
        object.__setattr__(self, "cones", tuple(cones))
        if self.nonneg is not None:
            a, b = self.nonneg
            a = np.atleast_2d(np.asarray(a, float))
            b = np.asarray(b, float).ravel()
            if a.shape != (b.size, n):
                raise ValueError("nonneg rows inconsistent")
            object.__setattr__(self, "nonneg", (a, b))

    @property
    def var_dim(self) -> int:
        return self.objective.size


@dataclass(frozen=True)
class ConicSolution:
    x: np.ndarray
    objective_value: float
    status: str
    duality_gap: float
    iterations: int
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")


# ---- cone algebra -------------------------------------------------------


class _Cones:
    """Block bookkeeping for ``l`` nonneg rows followed by SOC blocks."""

    def __init__(self, l: int, socs: Sequence[int]):
        self.l = l
        self.socs = list(socs)
        self.slices = []
        off = l
        for q in self.socs:
            self.slices.append(slice(off, off + q))
            off += q
        self.m = off
        self.degree = l + len(self.socs)

    def identity(self) -> np.ndarray:
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for sl in self.slices:
            e[sl.start] = 1.0
        return e

    def min_eig(self, u: np.ndarray) -> float:
        vals = [np.inf]
        if self.l:
            vals.append(u[: self.l].min())
        for sl in self.slices:
            v = u[sl]
            vals.append(v[0] - np.linalg.norm(v[1:]))
        return float(min(vals))

    def prod(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        out = np.empty(self.m)
        out[: self.l] = u[: self.l] * v[: self.l]
        for sl in self.slices:
            a, b = u[sl], v[sl]
            out[sl.start] = a @ b
            out[sl.start + 1: sl.stop] = a[0] * b[1:] + b[0] * a[1:]
        return out

    def div(self, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Solve lam o x = d."""
        out = np.empty(self.m)
        out[: self.l] = d[: self.l] / lam[: self.l]
        for sl in self.slices:
            l0, l1 = lam[sl.start], lam[sl.start + 1: sl.stop]
            d0, d1 = d[sl.start], d[sl.start + 1: sl.stop]
            r = np.linalg.norm(l1)
            x0 = (l0 * d0 - l1 @ d1) / ((l0 - r) * (l0 + r))
            out[sl.start] = x0
            out[sl.start + 1: sl.stop] = (d1 - x0 * l1) / l0
        return out

    def max_step(self, u: np.ndarray, du: np.ndarray) -> float:
        """Largest alpha with u + alpha du still in the cone (inf if none)."""
        best = np.inf
        if self.l:
            neg = du[: self.l] < 0
            if np.any(neg):
                best = min(best, float(np.min(-u[: self.l][neg] / du[: self.l][neg])))
        for sl in self.slices:
            best = min(best, _soc_step(u[sl], du[sl]))
        return best


def _soc_step(u: np.ndarray, d: np.ndarray) -> float:
    a = d[0] ** 2 - d[1:] @ d[1:]
    b = u[0] * d[0] - u[1:] @ d[1:]
    c = max(u[0] ** 2 - u[1:] @ u[1:], 0.0)
    scale = max(abs(a), abs(b), 1e-300)
    if abs(a) <= 1e-14 * scale:
        return -c / (2.0 * b) if b < 0 else np.inf
    disc = b * b - a * c
    if a < 0:
        return max((-b - np.sqrt(max(disc, 0.0))) / a, 0.0)
    if b >= 0 or disc < 0:
        return np.inf
    return c / (-b + np.sqrt(disc))


def _soc_norm(u: np.ndarray) -> float:
    """sqrt(u0^2 - |u1|^2), factored to limit cancellation."""
    r = np.linalg.norm(u[1:])
    return float(np.sqrt(max((u[0] - r) * (u[0] + r), 1e-300)))


class _Scaling:
    """Nesterov-Todd scaling W with W z = W^{-1} s = lambda."""

    def __init__(self, cones: _Cones, s: np.ndarray, z: np.ndarray):
        self.cones = cones
        self.d = np.sqrt(s[: cones.l] / z[: cones.l])
        self.blocks = []
        for sl in cones.slices:
            ss, zz = s[sl], z[sl]
            sn, zn = _soc_norm(ss), _soc_norm(zz)
            sh, zh = ss / sn, zz / zn
            gam = np.sqrt(max((1.0 + sh @ zh) / 2.0, 1e-300))
            jz = zh.copy()
            jz[1:] *= -1.0
            wbar = (sh + jz) / (2.0 * gam)
            v = wbar.copy()
            v[0] += 1.0
            v /= np.sqrt(2.0 * (wbar[0] + 1.0))
            beta = np.sqrt(sn / zn)
            jmat = np.eye(ss.size)
            jmat[1:, 1:] *= -1.0
            jv = jmat @ v
            w = beta * (2.0 * np.outer(v, v) - jmat)
            winv = (2.0 * np.outer(jv, jv) - jmat) / beta
            self.blocks.append((w, winv))

    def apply(self, u: np.ndarray, inverse: bool = False) -> np.ndarray:
        """W u (or W^{-1} u); u may be a vector or a row-stacked matrix."""
        out = np.empty_like(u)
        l = self.cones.l
        scale = 1.0 / self.d if inverse else self.d
        out[:l] = (scale * u[:l].T).T
        for sl, (w, winv) in zip(self.cones.slices, self.blocks):
            out[sl] = (winv if inverse else w) @ u[sl]
        return out


# ---- solver ---------------------------------------------------------------


def _standard_form(problem: ConicProblem):
    gs, hs = [], []
    l = 0
    if problem.nonneg is not None:
        a, b = problem.nonneg
        gs.append(-a)
        hs.append(b)
        l = b.size
    socs = []
    for a, b in problem.cones:
        gs.append(-a)
        hs.append(b)
        socs.append(b.size)
    n = problem.var_dim
    g = np.vstack(gs) if gs else np.zeros((0, n))
    h = np.concatenate(hs) if hs else np.zeros(0)
    return g, h, _Cones(l, socs)


def _shift_into_cone(cones: _Cones, u: np.ndarray) -> np.ndarray:
    alpha = cones.min_eig(u)
    if alpha > 1e-8:
        return u
    return u + (1.0 + max(-alpha, 0.0)) * cones.identity()


def _equilibrate(g: np.ndarray, h: np.ndarray, c: np.ndarray, cones: _Cones):
    """Scale nonneg rows individually and SOC blocks as a whole to unit size.

    Positive per-block scaling preserves cone membership, so x is unchanged.
    """
    rn = np.sqrt(np.sum(g**2, axis=1) + h**2)
    scale = np.ones(h.size)
    l = cones.l
    scale[:l] = 1.0 / np.where(rn[:l] > 0, rn[:l], 1.0)
    for sl in cones.slices:
        top = rn[sl].max()
        scale[sl] = 1.0 / top if top > 0 else 1.0
    cmax = np.max(np.abs(c))
    return g * scale[:, None], h * scale, (c / cmax if cmax > 0 else c), (cmax if cmax > 0 else 1.0)


class _Kkt:
    """Solves [0 G^T; G -W^T W][dx; dz] = [r1; r2] for a fixed scaling."""

    reg = 1e-13

    def __init__(self, g: np.ndarray, scal: _Scaling):
        self.g, self.scal = g, scal
        n = g.shape[1]
        gs = scal.apply(g, inverse=True)
        # QR of the scaled G avoids squaring its condition number.
        q, r = np.linalg.qr(np.vstack([gs, np.sqrt(self.reg) * np.eye(n)]))
        self.q, self.r = q[: gs.shape[0]], r

    def _once(self, r1, r2):
        sc = self.scal
        y = sc.apply(r2, True)
        t = sla.solve_triangular(self.r, r1, trans="T", check_finite=False) + self.q.T @ y
        dx = sla.solve_triangular(self.r, t, check_finite=False)
        dz = sc.apply(sc.apply(self.g @ dx - r2, True), True)
        return dx, dz

    def solve(self, r1, r2, refine: int = 2):
        dx, dz = self._once(r1, r2)
        for _ in range(refine):
            e1 = r1 - self.g.T @ dz
            e2 = r2 - (self.g @ dx - self.scal.apply(self.scal.apply(dz)))
            cx, cz = self._once(e1, e2)
            dx, dz = dx + cx, dz + cz
        return dx, dz


def solve_socp(problem: ConicProblem, max_iter: int = 100, tol: float = 1e-8, accept: float = 1e-7) -> ConicSolution:
    """Primal-dual interior point on the homogeneous self-dual embedding.

    Iterates until residuals and relative gap fall below ``tol``. If
    progress stalls first, the best iterate seen is returned and labelled
    optimal only when it meets ``accept``.
    """
    # Diverging iterates are detected explicitly, so silence overflow noise.
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _solve_socp(problem, max_iter, tol, accept)


def _solve_socp(problem: ConicProblem, max_iter: int, tol: float, accept: float) -> ConicSolution:
    c_orig = problem.objective
    g, h, cones = _standard_form(problem)
    n, m = c_orig.size, h.size
    if m == 0:
        status = OPTIMAL if not np.any(c_orig) else UNBOUNDED
        return ConicSolution(np.zeros(n), 0.0, status, 0.0, 0)
    g, h, c, cscale = _equilibrate(g, h, c_orig, cones)
    e = cones.identity()

    # Initial point: least-squares primal and dual, shifted into the cone.
    kkt0 = _Kkt(g, _Scaling(cones, e, e))
    x, r = kkt0.solve(np.zeros(n), h)
    s = _shift_into_cone(cones, -r)
    _, zz = kkt0.solve(-c, np.zeros(m))
    z = _shift_into_cone(cones, zz)
    tau, kappa = 1.0, 1.0

    hnorm, cnorm = max(1.0, np.linalg.norm(h)), max(1.0, np.linalg.norm(c))
    status, it = MAX_ITER, 0
    best = (np.inf, x / tau, np.inf, np.inf, np.inf)
    for it in range(1, max_iter + 1):
        rx = g.T @ z + c * tau
        rz = s + g @ x - h * tau
        rt = kappa + c @ x + h @ z
        mu = (s @ z + tau * kappa) / (cones.degree + 1)

        # gap and cost in the caller's objective units
        pcost = cscale * (c @ x) / tau
        pres = np.linalg.norm(rz) / tau / hnorm
        dres = np.linalg.norm(rx) / tau / cnorm
        gap = cscale * (s @ z) / tau**2
        merit = max(pres, dres, gap / (1.0 + abs(pcost)))
        if merit < best[0]:
            best = (merit, x / tau, gap, pres, dres)
        if merit <= tol:
            status = OPTIMAL
            break
        hz, cx = h @ z, c @ x
        if hz < 0 and np.linalg.norm(g.T @ z) / (-hz) <= tol:
            status = INFEASIBLE
            break
        if cx < 0 and np.linalg.norm(g @ x + s) / (-cx) <= tol:
            status = UNBOUNDED
            break
        if not np.isfinite(merit) or (merit > 1e3 * best[0] and tau >= kappa):
            break

        scal = _Scaling(cones, s, z)
        lam = scal.apply(z)
        kkt = _Kkt(g, scal)
        x1, z1 = kkt.solve(-c, h)
        den = -kappa / tau + c @ x1 + h @ z1

        def direction(eta, ds, dk):
            lds = cones.div(lam, ds)
            x2, z2 = kkt.solve(-eta * rx, -eta * rz - scal.apply(lds))
            dtau = (-eta * rt - dk / tau - c @ x2 - h @ z2) / den
            dx, dz = x2 + dtau * x1, z2 + dtau * z1
            dsv = scal.apply(lds - scal.apply(dz))
            dkap = (dk - kappa * dtau) / tau
            return dx, dsv, dz, dtau, dkap

        def step(dsv, dz, dtau, dkap):
            a = min(cones.max_step(s, dsv), cones.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkap < 0:
                a = min(a, -kappa / dkap)
            return a

        lam2 = cones.prod(lam, lam)
        _, ds_a, dz_a, dt_a, dk_a = direction(1.0, -lam2, -tau * kappa)
        a_aff = min(1.0, step(ds_a, dz_a, dt_a, dk_a))
        sigma = float(np.clip((1.0 - a_aff) ** 3, 0.0, 1.0))
        corr = cones.prod(scal.apply(ds_a, inverse=True), scal.apply(dz_a))
        ds_c = -lam2 - corr + sigma * mu * e
        dk_c = -tau * kappa - dt_a * dk_a + sigma * mu
        dx, dsv, dz, dtau, dkap = direction(1.0 - sigma, ds_c, dk_c)
        alpha = min(1.0, 0.99 * step(dsv, dz, dtau, dkap))
        x = x + alpha * dx
        s = s + alpha * dsv
        z = z + alpha * dz
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap
        if alpha < 1e-10 or not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            break

    if status in (INFEASIBLE, UNBOUNDED):
        xs = x / tau if tau > 0 else x
        gap = pres = dres = float("nan")
    else:
        merit, xs, gap, pres, dres = best
        status = OPTIMAL if merit <= accept else MAX_ITER
    return ConicSolution(
        x=xs,
        objective_value=float(c_orig @ xs),
        status=status,
        duality_gap=float(gap),
        iterations=it,
        primal_residual=float(pres),
        dual_residual=float(dres),
    )


# ---- complex quadratic forms as cones ----------------------------------------


def realify(form: QuadraticForm):
    """Real data (Mr, qr, c) with r(x) = -x^T Mr x + 2 qr^T x + c, x = [Re; Im]."""
    cm = form.c_mat
    mr = np.block([[cm.real, -cm.imag], [cm.imag, cm.real]])
    mr = 0.5 * (mr + mr.T)
    qr = np.concatenate([form.b_vec.real, form.b_vec.imag])
    return mr, qr, form.c_scalar


def complexify(x: np.ndarray) -> np.ndarray:
    half = x.size // 2
    return x[:half] + 1j * x[half:]


def psd_factor(mat: np.ndarray, clip: float = -1e-10) -> np.ndarray:
    """F with F^T F = mat, from an eigendecomposition (tiny negatives clipped)."""
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
    if vals.size and vals.min() < clip * scale:
        raise ValueError("matrix is not positive semidefinite")
    keep = vals > 1e-14 * scale
    return np.sqrt(vals[keep])[:, None] * vecs[:, keep].T


def quadratic_cone(mr: np.ndarray, qr: np.ndarray, c: float, n_var: int, x_cols: slice, delta_col: int):
    """Cone rows for -x^T Mr x + 2 qr^T x + c >= delta.

    Uses || [2 F x ; 1 - t] || <= 1 + t with t = 2 qr^T x + c - delta.
    """
    f = psd_factor(mr)
    rows = f.shape[0] + 2
    a = np.zeros((rows, n_var))
    b = np.zeros(rows)
    a[0, x_cols] = 2.0 * qr
    a[0, delta_col] = -1.0
    b[0] = 1.0 + c
    a[1:-1, x_cols] = 2.0 * f
    a[-1, x_cols] = -2.0 * qr
    a[-1, delta_col] = 1.0
    b[-1] = 1.0 - c
    return a, b


@dataclass
class BlockResult:
    value: np.ndarray
    ok: bool
    status: str
    flags: List[str] = field(default_factory=list)


def _min_value(forms: Sequence[QuadraticForm], x: np.ndarray) -> float:
    return min(f(x) for f in forms)


def solve_w_subproblem(forms: Sequence[QuadraticForm], p_max: float, w_incumbent: Optional[np.ndarray] = None) -> BlockResult:
    """Epigraph SOCP: maximize min_k r_k(w) subject to ||w||^2 <= P.

    With an incumbent, a non-optimal solve or a worse point returns the
    incumbent unchanged and flags it.
    """
    dim = forms[0].dim
    nv = 2 * dim + 1
    xs = slice(0, 2 * dim)
    cones = []
    for f in forms:
        mr, qr, c = realify(f)
        cones.append(quadratic_cone(mr, qr, c, nv, xs, 2 * dim))
    a = np.zeros((2 * dim + 1, nv))
    a[1:, xs] = np.eye(2 * dim)
    b = np.zeros(2 * dim + 1)
    b[0] = np.sqrt(p_max)
    cones.append((a, b))
    obj = np.zeros(nv)
    obj[-1] = -1.0
    sol = solve_socp(ConicProblem(obj, tuple(cones)))
    w = complexify(sol.x[xs])
    pw = np.real(np.vdot(w, w))
    if pw > p_max:
        w = w * np.sqrt(p_max / pw)
    if w_incumbent is None:
        ok = sol.status == OPTIMAL
        return BlockResult(w, ok, sol.status, [] if ok else [f"w-subproblem {sol.status}"])
    if sol.status != OPTIMAL or _min_value(forms, w) < _min_value(forms, w_incumbent) - 1e-8:
        msg = f"w-subproblem {sol.status}; kept incumbent"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        return BlockResult(np.asarray(w_incumbent, complex), False, sol.status, [msg])
    return BlockResult(w, True, sol.status)


def _ccp_problem(forms: Sequence[QuadraticForm], phi_t: np.ndarray, lam: float) -> ConicProblem:
    """Convexified phase problem; variables [Re phi, Im phi, delta, b_1..b_2M]."""
    m = phi_t.size
    nv = 4 * m + 1
    xs = slice(0, 2 * m)
    dcol = 2 * m
    bcol = 2 * m + 1
    cones = []
    for f in forms:
        mr, qr, c = realify(f)
        cones.append(quadratic_cone(mr, qr, c, nv, xs, dcol))
    for i in range(m):
        # |phi_i|^2 <= 1 + b_{M+i}  as  ||[2 phi_i ; -b]|| <= 2 + b
        a = np.zeros((4, nv))
        a[0, bcol + m + i] = 1.0
        a[1, i] = 2.0
        a[2, m + i] = 2.0
        a[3, bcol + m + i] = -1.0
        cones.append((a, np.array([2.0, 0.0, 0.0, 0.0])))
    lin = np.zeros((3 * m, nv))
    off = np.zeros(3 * m)
    for i in range(m):
        # b_i - 1 - |phi_t|^2 + 2 Re(conj(phi_t) phi) >= 0
        lin[i, bcol + i] = 1.0
        lin[i, i] = 2.0 * phi_t[i].real
        lin[i, m + i] = 2.0 * phi_t[i].imag
        off[i] = -1.0 - abs(phi_t[i]) ** 2
    lin[m:, bcol:] = np.eye(2 * m)
    obj = np.zeros(nv)
    obj[dcol] = -1.0
    obj[bcol:] = lam
    return ConicProblem(obj, tuple(cones), (lin, off))


def _unit(phi: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    mag = np.abs(phi)
    return np.where(mag > 0, phi / np.where(mag > 0, mag, 1.0), fallback)


def solve_phi_subproblem_ccp(forms: Sequence[QuadraticForm], phi_init: np.ndarray, params: CcpParams = CcpParams()) -> BlockResult:
    """Penalty convex-concave procedure for the unit-modulus phase block.

    Returns the best unit-modulus point seen (after normalization), so the
    result never scores below ``phi_init``.
    """
    phi_init = np.asarray(phi_init, complex)
    m = phi_init.size
    best, best_val = phi_init, _min_value(forms, phi_init)
    phi_t, lam = phi_init, params.lambda_init
    flags: List[str] = []
    converged = False
    slack = np.inf
    for _ in range(params.t_max):
        sol = solve_socp(_ccp_problem(forms, phi_t, lam))
        if sol.status != OPTIMAL:
            note = f"ccp inner solve {sol.status}"
            if note not in flags:
                flags.append(note)
            if sol.status != MAX_ITER or not np.all(np.isfinite(sol.x)):
                break
        phi_new = complexify(sol.x[: 2 * m])
        slack = float(np.sum(np.abs(sol.x[2 * m + 1:])))
        cand = _unit(phi_new, phi_t)
        val = _min_value(forms, cand)
        if val > best_val:
            best, best_val = cand, val
        step = float(np.sum(np.abs(phi_new - phi_t)))
        phi_t = phi_new
        lam = min(params.gamma * lam, params.lambda_max)
        if step <= params.eps1 and slack <= params.eps2:
            converged = True
            break
    if not converged and slack > params.eps2:
        flags.append("ccp stopped with slack above eps2")
    return BlockResult(best, converged, OPTIMAL if converged else MAX_ITER, flags)


def bcd_socp(config: SystemConfig, channels: ChannelSet, init: BeamState):
    """Alternate aux updates, the w SOCP and the CCP phase block."""
    state = init
    trace = RunTrace()
    eps, n_max = config.algo.eps, config.algo.n_max
    prev = unclamped_objective(state, channels, config)
    has_ris = channels.m_ris > 0
    for _ in range(n_max):
        aux = fp.update_aux(state, channels, config)
        w_forms = all_w_forms(state.phi, aux, channels, config)
        wres = solve_w_subproblem(w_forms, config.p_max, state.w_vec)
        trace.flags.extend(wres.flags)
        state = BeamState.from_vec(wres.value, channels.n_tx, state.phi)
        if has_ris:
            if config.algo.refresh_aux:
                aux = fp.update_aux(state, channels, config)
            forms = all_phi_forms(state.w_mat, aux, channels, config)
            pres = solve_phi_subproblem_ccp(forms, state.phi, config.ccp)
            trace.flags.extend(pres.flags)
            state = state.with_phi(pres.value)
            bound = _min_value(forms, state.phi)
        else:
            bound = _min_value(w_forms, state.w_vec)
        trace.record(bound, wmsr(state, channels, config), float("nan"))
        if abs(bound - prev) <= eps * max(abs(prev), 1e-12):
            return state, trace.finish("converged")
        prev = bound
    return state, trace.finish("max-iter")
