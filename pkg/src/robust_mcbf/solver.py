"""Homogeneous self-dual interior-point solver for small conic programs.

Solves the primal/dual pair

    minimize    c'x                 maximize    b'y
    subject to  A x = b             subject to  A'y + z = c
                x in K                          z in K

where K is a product of nonnegative orthants and real symmetric PSD cones.
PSD blocks are stored in svec form: the upper triangle in row-major order
with off-diagonal entries multiplied by sqrt(2), so that svec(U)'svec(V)
equals tr(UV).

The iteration is the usual HSD predictor-corrector with Nesterov-Todd
scaling.  Every search direction is obtained from a dense Cholesky
factorization of the m x m Schur complement A D A', which is cheap for the
problems this package builds (m is the number of design variables, a few
hundred at most).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
PRIMAL_INFEASIBLE = "primal-infeasible"
DUAL_INFEASIBLE = "dual-infeasible"
NUMERICAL_FAILURE = "numerical-failure"
ITERATION_LIMIT = "iteration-limit"

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class NonNeg:
    size: int

    @property
    def dim(self) -> int:
        return self.size


@dataclass(frozen=True)
class Psd:
    side: int

    @property
    def dim(self) -> int:
        return self.side * (self.side + 1) // 2


Cone = Union[NonNeg, Psd]


class SolverError(Exception):
    """Raised for malformed conic problems."""


@dataclass
class ConicProblem:
    """Standard-form conic program ``min c'x s.t. Ax = b, x in K``.

    ``layout`` is an opaque slot for builders that need to map the solution
    back to their own variables; the solver ignores it.
    """

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: tuple
    layout: Any = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.cones = tuple(self.cones)
        n = sum(cone.dim for cone in self.cones)
        if self.c.size != n:
            raise SolverError(f"c has {self.c.size} entries, cones need {n}")
        if self.A.shape != (self.b.size, n):
            raise SolverError(
                f"A has shape {self.A.shape}, expected ({self.b.size}, {n})")
        for cone in self.cones:
            if not isinstance(cone, (NonNeg, Psd)) or cone.dim < 1:
                raise SolverError(f"bad cone {cone!r}")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b))
                and np.all(np.isfinite(self.A.data))):
            raise SolverError("non-finite problem data")

    @property
    def num_vars(self) -> int:
        return self.c.size

    @property
    def num_constraints(self) -> int:
        return self.b.size


@dataclass
class SolverOptions:
    feastol: float = 1e-7
    gaptol: float = 1e-7
    inftol: float = 1e-8
    max_iter: int = 200
    step_fraction: float = 0.99
    regularization: float = 1e-9
    retry_regularization: float = 1e-7
    min_step: float = 1e-10
    refinement: int = 5
    # keep iterating past acceptance until these tighter targets are met
    # (None: stop at acceptance); on a stall the best accepted iterate wins
    polish_feastol: Optional[float] = None
    polish_gaptol: Optional[float] = None
    keep_history: bool = False


@dataclass
class ConicSolution:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    status: str
    residuals: tuple
    iterations: int
    history: list = field(default_factory=list)


# -- svec helpers ---------------------------------------------------------

_SVEC_CACHE: dict = {}


def _svec_index(m: int):
    if m not in _SVEC_CACHE:
        rows, cols = np.triu_indices(m)
        weight = np.where(rows == cols, 1.0, _SQRT2)
        _SVEC_CACHE[m] = (rows, cols, weight)
    return _SVEC_CACHE[m]


def svec(U: np.ndarray) -> np.ndarray:
    """svec of a symmetric matrix, or of a stack ``(..., m, m)``."""
    U = np.asarray(U, dtype=float)
    rows, cols, weight = _svec_index(U.shape[-1])
    return U[..., rows, cols] * weight


def smat(v: np.ndarray, m: Optional[int] = None) -> np.ndarray:
    """Inverse of :func:`svec`; works on stacks along leading axes."""
    v = np.asarray(v, dtype=float)
    if m is None:
        m = int(round((np.sqrt(8 * v.shape[-1] + 1) - 1) / 2))
    rows, cols, weight = _svec_index(m)
    out = np.zeros(v.shape[:-1] + (m, m))
    vals = v / weight
    out[..., rows, cols] = vals
    out[..., cols, rows] = vals
    return out


def cone_identity(cones: Sequence[Cone]) -> np.ndarray:
    parts = []
    for cone in cones:
        if isinstance(cone, NonNeg):
            parts.append(np.ones(cone.size))
        else:
            parts.append(svec(np.eye(cone.side)))
    return np.concatenate(parts) if parts else np.zeros(0)


def cone_min_eig(v: np.ndarray, cones: Sequence[Cone]) -> float:
    """Smallest 'eigenvalue' of v over all cone blocks (min entry for LP)."""
    out = np.inf
    pos = 0
    for cone in cones:
        block = v[pos:pos + cone.dim]
        pos += cone.dim
        if isinstance(cone, NonNeg):
            out = min(out, float(block.min()))
        else:
            out = min(out, float(np.linalg.eigvalsh(smat(block, cone.side))[0]))
    return out


def residuals(problem: ConicProblem, x, y, z) -> tuple:
    """Relative primal, dual and gap residuals of a candidate point."""
    c, A, b = problem.c, problem.A, problem.b
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    pres = np.linalg.norm(A @ x - b) / (1.0 + np.linalg.norm(b))
    dres = np.linalg.norm(A.T @ y + z - c) / (1.0 + np.linalg.norm(c))
    pobj = float(c @ x)
    dobj = float(b @ y)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    return float(pres), float(dres), float(gap)


# -- cone bookkeeping -----------------------------------------------------

class _Layout:
    """Index arrays that group the cone blocks for batched linear algebra."""

    def __init__(self, cones):
        lp = []
        groups: dict = {}
        pos = 0
        for cone in cones:
            idx = np.arange(pos, pos + cone.dim)
            pos += cone.dim
            if isinstance(cone, NonNeg):
                lp.append(idx)
            else:
                groups.setdefault(cone.side, []).append(idx)
        self.n = pos
        self.lp = np.concatenate(lp) if lp else np.zeros(0, dtype=int)
        self.psd = [(side, np.vstack(idx)) for side, idx in sorted(groups.items())]
        self.degree = self.lp.size + sum(side * idx.shape[0] for side, idx in self.psd)


@dataclass
class _Scaling:
    lp_d: np.ndarray          # W = diag(lp_d) on LP coordinates
    lp_lam: np.ndarray
    R: list                   # per PSD group, stack of R with X = R L R', Z = R^-T L R^-1
    Rinv: list
    lam: list                 # per PSD group, stack of diagonal lambda vectors


def _nt_scaling(x, z, lay: _Layout) -> _Scaling:
    lp_x, lp_z = x[lay.lp], z[lay.lp]
    lp_d = np.sqrt(lp_x / lp_z)
    lp_lam = np.sqrt(lp_x * lp_z)
    Rs, Rinvs, lams = [], [], []
    for side, idx in lay.psd:
        X = smat(x[idx], side)
        Z = smat(z[idx], side)
        Lx = np.linalg.cholesky(X)
        Lz = np.linalg.cholesky(Z)
        U, s, Vt = np.linalg.svd(np.swapaxes(Lz, -1, -2) @ Lx)
        isq = 1.0 / np.sqrt(s)
        R = Lx @ np.swapaxes(Vt, -1, -2) * isq[:, None, :]
        Rinv = (isq[:, :, None] * np.swapaxes(U, -1, -2)) @ np.swapaxes(Lz, -1, -2)
        Rs.append(R)
        Rinvs.append(Rinv)
        lams.append(s)
    return _Scaling(lp_d, lp_lam, Rs, Rinvs, lams)


def _T(M):
    return np.swapaxes(M, -1, -2)


class _Ops:
    """Scaled-space operations for the current NT scaling point."""

    def __init__(self, lay: _Layout, sc: _Scaling):
        self.lay = lay
        self.sc = sc

    def apply_W(self, v):
        """W(v): scaled space -> primal space."""
        out = np.empty(self.lay.n)
        out[self.lay.lp] = self.sc.lp_d * v[self.lay.lp]
        for g, (side, idx) in enumerate(self.lay.psd):
            R = self.sc.R[g]
            out[idx] = svec(R @ smat(v[idx], side) @ _T(R))
        return out

    def apply_Winv(self, v):
        out = np.empty(self.lay.n)
        out[self.lay.lp] = v[self.lay.lp] / self.sc.lp_d
        for g, (side, idx) in enumerate(self.lay.psd):
            Ri = self.sc.Rinv[g]
            out[idx] = svec(Ri @ smat(v[idx], side) @ _T(Ri))
        return out

    def apply_Wt(self, v):
        """W*(v) = R' V R: dual space -> scaled space."""
        out = np.empty(self.lay.n)
        out[self.lay.lp] = self.sc.lp_d * v[self.lay.lp]
        for g, (side, idx) in enumerate(self.lay.psd):
            R = self.sc.R[g]
            out[idx] = svec(_T(R) @ smat(v[idx], side) @ R)
        return out

    def apply_D(self, v):
        """D = W W*, maps dual space to primal space."""
        out = np.empty(self.lay.n)
        out[self.lay.lp] = self.sc.lp_d ** 2 * v[self.lay.lp]
        for g, (side, idx) in enumerate(self.lay.psd):
            R = self.sc.R[g]
            G = R @ _T(R)
            out[idx] = svec(G @ smat(v[idx], side) @ G)
        return out

    def lam(self):
        out = np.empty(self.lay.n)
        out[self.lay.lp] = self.sc.lp_lam
        for g, (side, idx) in enumerate(self.lay.psd):
            out[idx] = svec(_diag_stack(self.sc.lam[g]))
        return out

    def jordan(self, u, v):
        """Jordan product u o v (elementwise / symmetrized matrix product)."""
        out = np.empty(self.lay.n)
        out[self.lay.lp] = u[self.lay.lp] * v[self.lay.lp]
        for side, idx in self.lay.psd:
            U = smat(u[idx], side)
            V = smat(v[idx], side)
            P = U @ V
            out[idx] = svec(0.5 * (P + _T(P)))
        return out

    def lam_div(self, r):
        """Solve lambda o u = r for u (lambda is diagonal in scaled space)."""
        out = np.empty(self.lay.n)
        out[self.lay.lp] = r[self.lay.lp] / self.sc.lp_lam
        for g, (side, idx) in enumerate(self.lay.psd):
            lam = self.sc.lam[g]
            denom = lam[:, :, None] + lam[:, None, :]
            out[idx] = svec(2.0 * smat(r[idx], side) / denom)
        return out

    def max_step(self, v):
        """Largest a with lambda + a v in the cone (inf if unbounded)."""
        amax = np.inf
        lam_lp = self.sc.lp_lam
        vl = v[self.lay.lp]
        neg = vl < 0
        if np.any(neg):
            amax = min(amax, float(np.min(-lam_lp[neg] / vl[neg])))
        for g, (side, idx) in enumerate(self.lay.psd):
            isq = 1.0 / np.sqrt(self.sc.lam[g])
            V = smat(v[idx], side) * isq[:, :, None] * isq[:, None, :]
            emin = float(np.linalg.eigvalsh(V)[:, 0].min())
            if emin < 0:
                amax = min(amax, -1.0 / emin)
        return amax


def _diag_stack(lam):
    nb, m = lam.shape
    out = np.zeros((nb, m, m))
    out[:, np.arange(m), np.arange(m)] = lam
    return out


def _skron_matrix(G, side):
    """Matrix of U -> G U G in svec coordinates, for a stack of G."""
    rows, cols, weight = _svec_index(side)
    kappa = np.where(rows == cols, 0.5, 1.0 / _SQRT2)
    Ga_c = G[:, rows[:, None], rows[None, :]]
    Gb_d = G[:, cols[:, None], cols[None, :]]
    Ga_d = G[:, rows[:, None], cols[None, :]]
    Gb_c = G[:, cols[:, None], rows[None, :]]
    return weight[None, :, None] * kappa[None, None, :] * (Ga_c * Gb_d + Ga_d * Gb_c)


class _SchurPlan:
    """Per PSD group, the rows of A each block touches (zero-padded)."""

    def __init__(self, Ad, lay: _Layout):
        self.m = Ad.shape[0]
        self.groups = []
        for side, idx in lay.psd:
            touched = [np.flatnonzero(np.any(Ad[:, blk] != 0, axis=1)) for blk in idx]
            r = max(1, max(t.size for t in touched))
            rows = np.zeros((len(touched), r), dtype=int)
            mask = np.zeros((len(touched), r), dtype=bool)
            for bi, t in enumerate(touched):
                rows[bi, :t.size] = t
                mask[bi, :t.size] = True
            sub = Ad[rows[:, :, None], idx[:, None, :]] * mask[:, :, None]   # (nb, r, s)
            flat = (rows[:, :, None] * self.m + rows[:, None, :]).ravel()
            self.groups.append((sub, flat))


def _schur(plan: _SchurPlan, Ad, lay: _Layout, sc: _Scaling):
    """Form M = A D A' with D = W W*."""
    A_lp = Ad[:, lay.lp]
    M = (A_lp * sc.lp_d ** 2) @ A_lp.T
    flat_m = M.ravel()
    for g, (side, idx) in enumerate(lay.psd):
        R = sc.R[g]
        G = R @ _T(R)
        K = _skron_matrix(G, side)                  # (nb, s, s)
        sub, flat = plan.groups[g]
        blocks = (sub @ K) @ _T(sub)                # (nb, r, r)
        flat_m += np.bincount(flat, weights=blocks.ravel(), minlength=flat_m.size)
    return 0.5 * (M + M.T)


def _presolve_rows(Ad, b, tol=1e-10):
    """Drop linearly dependent rows of A; returns kept indices or raises."""
    m = Ad.shape[0]
    if m == 0:
        return np.arange(0), True
    gram = Ad @ Ad.T
    try:
        L = np.linalg.cholesky(gram)
        d = np.diag(L)
        if d.min() > tol * max(1.0, d.max()):
            return np.arange(m), True
    except np.linalg.LinAlgError:
        pass
    _, R, piv = sla.qr(Ad.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(1.0, diag[0])))
    keep = np.sort(piv[:rank])
    drop = np.setdiff1d(np.arange(m), keep)
    coef, *_ = np.linalg.lstsq(Ad[keep].T, Ad[drop].T, rcond=None)
    consistent = np.allclose(coef.T @ b[keep], b[drop],
                             atol=1e-9 * (1 + np.abs(b).max()))
    return keep, consistent


def solve(problem: ConicProblem, opts: Optional[SolverOptions] = None) -> ConicSolution:
    """Solve a conic program with the homogeneous self-dual method."""
    opts = opts or SolverOptions()
    lay = _Layout(problem.cones)
    c0 = problem.c
    b0 = problem.b
    A0 = problem.A.toarray()
    m_full = b0.size

    # row equilibration (a change of variables y -> diag(s) y)
    rnorm = np.linalg.norm(A0, axis=1)
    rnorm[rnorm == 0] = 1.0
    keep, consistent = _presolve_rows(A0 / rnorm[:, None], b0 / rnorm)
    if not consistent:
        # inconsistent equalities: a certificate lives in the null space of A'
        logger.debug("presolve: inconsistent equality rows")
        return _inconsistent_certificate(problem, A0, b0, lay)
    rscale = 1.0 / rnorm[keep]
    A = A0[keep] * rscale[:, None]
    b = b0[keep] * rscale
    c = c0
    m = b.size

    plan = _SchurPlan(A, lay)
    x = cone_identity(problem.cones)
    z = x.copy()
    y = np.zeros(m)
    tau = kappa = 1.0
    nu = lay.degree + 1

    bnorm0 = 1.0 + np.linalg.norm(b0)
    cnorm0 = 1.0 + np.linalg.norm(c0)
    history = []
    status = ITERATION_LIMIT
    small_steps = 0
    res = (np.inf, np.inf, np.inf)
    it = 0
    best = None
    target_feas = min(opts.feastol, opts.polish_feastol or opts.feastol)
    target_gap = min(opts.gaptol, opts.polish_gaptol or opts.gaptol)

    def full_y(yv):
        out = np.zeros(m_full)
        out[keep] = yv * rscale
        return out

    for it in range(opts.max_iter + 1):
        # residuals of the HSD system
        Ax = A @ x
        Aty = A.T @ y
        F1 = Ax - b * tau
        F2 = Aty + z - c * tau
        cx = float(c @ x)
        by = float(b @ y)
        F3 = cx - by + kappa
        mu = (float(x @ z) + tau * kappa) / nu

        # termination tests on the original data
        yo = full_y(y)
        pres = np.linalg.norm(A0 @ x / tau - b0) / bnorm0
        dres = np.linalg.norm(A0.T @ yo / tau + z / tau - c0) / cnorm0
        pobj, dobj = cx / tau, by / tau
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        res = (float(pres), float(dres), float(gap))
        if opts.keep_history:
            history.append({"iter": it, "pres": pres, "dres": dres, "gap": gap,
                            "tau": tau, "kappa": kappa, "mu": mu,
                            "min_x": cone_min_eig(x, problem.cones),
                            "min_z": cone_min_eig(z, problem.cones)})
        if pres <= opts.feastol and dres <= opts.feastol and gap <= opts.gaptol:
            score = max(pres / target_feas, dres / target_feas, gap / target_gap)
            if best is None or score <= best[0]:
                best = (score, x, y, z, tau, it, res)
            if score <= 1.0:
                break
        elif best is not None:
            # polishing has lost accuracy
            break
        if by > 0:
            pinf = np.linalg.norm(A0.T @ yo + z) / by
            if pinf <= opts.inftol:
                status = PRIMAL_INFEASIBLE
                break
        if cx < 0:
            dinf = np.linalg.norm(A0 @ x) / (-cx)
            if dinf <= opts.inftol:
                status = DUAL_INFEASIBLE
                break
        if it == opts.max_iter:
            break
        if best is not None and it - best[5] >= 5:
            break

        # Newton system
        try:
            sc = _nt_scaling(x, z, lay)
        except np.linalg.LinAlgError:
            status = NUMERICAL_FAILURE
            break
        ops = _Ops(lay, sc)
        M = _schur(plan, A, lay, sc)
        factor = _factor(M, opts)
        if factor is None:
            status = NUMERICAL_FAILURE
            break
        Dc = ops.apply_D(c)
        p1 = _cho_solve_refined(factor, M, A @ Dc)
        p2 = _cho_solve_refined(factor, M, b)
        q = p1 + p2
        lam = ops.lam()
        lamsq = ops.jordan(lam, lam)
        e = cone_identity(problem.cones)

        # c'Dc - (ADc)'M^-1(ADc) equals v'Dv with v = c - A'p1; the product
        # form avoids cancelling two O(1/mu) numbers late in the run
        v = c - A.T @ p1
        g = A @ Dc - b
        denom = -float(v @ ops.apply_D(v)) - float(b @ p2) - kappa / tau

        def newton(rhs1, rhs2, rhs3, rc, rtau):
            u = ops.apply_W(ops.lam_div(rc))
            w = u - ops.apply_D(rhs2)
            p = _cho_solve_refined(factor, M, rhs1 - A @ w)
            num = rhs3 - float(c @ w) - float(g @ p) - rtau / tau
            dtau = num / denom
            dy = p + q * dtau
            dz = rhs2 - A.T @ dy + c * dtau
            dx = u - ops.apply_D(dz)
            dkappa = (rtau - kappa * dtau) / tau
            return dx, dy, dz, dtau, dkappa

        def system_residual(rhs, d):
            dx, dy, dz, dtau, dkappa = d
            dxs = ops.apply_Winv(dx)
            dzs = ops.apply_Wt(dz)
            res = (rhs[0] - (A @ dx - b * dtau),
                   rhs[1] - (A.T @ dy + dz - c * dtau),
                   rhs[2] - (float(c @ dx) - float(b @ dy) + dkappa),
                   rhs[3] - ops.jordan(lam, dxs + dzs),
                   rhs[4] - (kappa * dtau + tau * dkappa))
            size = sum(float(np.linalg.norm(r) / (1.0 + np.linalg.norm(h)))
                       for r, h in zip(res, rhs))
            return res, size

        def direction(eta, rc, rtau, refine=opts.refinement):
            rhs = (-eta * F1, -eta * F2, -eta * F3, rc, rtau)
            d = newton(*rhs)
            res, size = system_residual(rhs, d)
            # refine while it helps; late systems are too ill-conditioned
            # for a fixed number of rounds to be safe
            for _ in range(refine):
                corr = newton(*res)
                trial = tuple(a + b_ for a, b_ in zip(d, corr))
                trial_res, trial_size = system_residual(rhs, trial)
                if not trial_size < 0.5 * size:
                    break
                d, res, size = trial, trial_res, trial_size
            dx, dy, dz, dtau, dkappa = d
            return dx, dy, dz, dtau, dkappa, ops.apply_Winv(dx), ops.apply_Wt(dz)

        def step_length(dxs, dzs, dtau, dkappa):
            a = min(ops.max_step(dxs), ops.max_step(dzs))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        # predictor
        aff = direction(1.0, -lamsq, -tau * kappa)
        a_aff = min(1.0, step_length(aff[5], aff[6], aff[3], aff[4]))
        sigma = (1.0 - a_aff) ** 3
        # corrector
        rc = sigma * mu * e - lamsq - ops.jordan(aff[5], aff[6])
        rtau = sigma * mu - tau * kappa - aff[3] * aff[4]
        dx, dy, dz, dtau, dkappa, dxs, dzs = direction(1.0 - sigma, rc, rtau)
        alpha = min(1.0, opts.step_fraction * step_length(dxs, dzs, dtau, dkappa))
        if opts.keep_history:
            history[-1].update(alpha=alpha, sigma=sigma, alpha_aff=a_aff)

        if not np.isfinite(alpha) or alpha < opts.min_step:
            small_steps += 1
            if small_steps >= 2:
                status = NUMERICAL_FAILURE
                break
        else:
            small_steps = 0
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    if best is not None:
        _, x, y, z, tau, _, res = best
        status = OPTIMAL
    yo = full_y(y)
    if status == OPTIMAL:
        xs, ys, zs = x / tau, yo / tau, z / tau
        res = residuals(problem, xs, ys, zs)
    elif status == PRIMAL_INFEASIBLE:
        scale = float(b0 @ yo)
        xs, ys, zs = np.zeros_like(x), yo / scale, z / scale
    elif status == DUAL_INFEASIBLE:
        scale = -float(c0 @ x)
        xs, ys, zs = x / scale, np.zeros_like(yo), np.zeros_like(z)
    else:
        xs, ys, zs = x / tau, yo / tau, z / tau
    logger.debug("conic solve: %s after %d iterations, residuals %s",
                 status, it, res)
    return ConicSolution(xs, ys, zs, status, res, it, history)


def _factor(M, opts: SolverOptions):
    # Jacobi-scale M to unit diagonal; the static shifts are fallbacks only,
    # since even 1e-9 biases the late, badly conditioned systems
    d = np.sqrt(np.maximum(np.diag(M), np.finfo(float).tiny))
    Ms = M / d[:, None] / d[None, :]
    eye = np.eye(M.shape[0])
    for reg in (0.0, opts.regularization, opts.retry_regularization):
        try:
            return sla.cho_factor(Ms + reg * eye, lower=True, check_finite=False), d
        except (np.linalg.LinAlgError, ValueError):
            continue
    return None


def _cho_solve_refined(factor, M, r, steps=2):
    cho, d = factor
    solve = lambda v: sla.cho_solve(cho, v / d, check_finite=False) / d
    sol = solve(r)
    for _ in range(steps):
        sol = sol + solve(r - M @ sol)
    return sol


def _inconsistent_certificate(problem, A0, b0, lay):
    # y in null(A') with b'y > 0 proves Ax = b has no solution at all
    ns = sla.null_space(A0.T)
    proj = ns @ (ns.T @ b0)
    scale = float(b0 @ proj)
    y = proj / scale
    n = problem.num_vars
    return ConicSolution(np.zeros(n), y, np.zeros(n), PRIMAL_INFEASIBLE,
                         (np.inf, np.inf, np.inf), 0, [])


def dump_problem(problem: ConicProblem, fh) -> None:
    """Write the problem in a plain-text triplet format.

    Layout::

        CONIC 1
        ROWS <m> COLS <n>
        CONES <count>
        L <size>          (one line per cone, in order)
        S <side>
        C
        <n values, one per line>
        B
        <m values>
        A <nnz>
        <row> <col> <value>   (0-based)
    """
    A = problem.A.tocoo()
    fh.write("CONIC 1\n")
    fh.write(f"ROWS {problem.num_constraints} COLS {problem.num_vars}\n")
    fh.write(f"CONES {len(problem.cones)}\n")
    for cone in problem.cones:
        if isinstance(cone, NonNeg):
            fh.write(f"L {cone.size}\n")
        else:
            fh.write(f"S {cone.side}\n")
    fh.write("C\n")
    for v in problem.c:
        fh.write(f"{float(v)!r}\n")
    fh.write("B\n")
    for v in problem.b:
        fh.write(f"{float(v)!r}\n")
    fh.write(f"A {A.nnz}\n")
    for r, col, v in zip(A.row, A.col, A.data):
        fh.write(f"{r} {col} {float(v)!r}\n")


def load_problem(fh) -> ConicProblem:
    """Read a problem written by :func:`dump_problem`."""
    lines = iter(line.strip() for line in fh if line.strip())
    if next(lines) != "CONIC 1":
        raise SolverError("not a conic dump")
    _, m, _, n = next(lines).split()
    m, n = int(m), int(n)
    ncones = int(next(lines).split()[1])
    cones = []
    for _ in range(ncones):
        kind, size = next(lines).split()
        cones.append(NonNeg(int(size)) if kind == "L" else Psd(int(size)))
    assert next(lines) == "C"
    c = np.array([float(next(lines)) for _ in range(n)])
    assert next(lines) == "B"
    b = np.array([float(next(lines)) for _ in range(m)])
    nnz = int(next(lines).split()[1])
    rows, cols, vals = np.zeros(nnz, int), np.zeros(nnz, int), np.zeros(nnz)
    for t in range(nnz):
        r, col, v = next(lines).split()
        rows[t], cols[t], vals[t] = int(r), int(col), float(v)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    return ConicProblem(c, A, b, tuple(cones))
