"""The four beamforming designs as conic programs, and beamformer recovery.

Each design is written in LMI ("dual") form: the design variables are the
free vector ``y`` of the standard-form pair solved by :mod:`.solver`, and
every LMI ``F0 + sum_r y_r F_r >= 0`` becomes one cone block with
``c = svec(F0)`` and rows ``-svec(F_r)`` of ``A``.  The power objective is
``-b'y``.  An infeasible design therefore shows up as a *dual-infeasible*
conic program.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import solver as cs
from .lmi import (LmiBlock, build_phi, build_psi, complex_to_real, from_hermitian_coords,
                  hermitian_basis)
from .model import (BeamformerSet, ChannelSet, ErrorEllipsoid, InvalidInputError,
                    SystemConfig, sample_errors, sinr_all)

logger = logging.getLogger(__name__)

RANK_ONE_TOL = 1e-6


class DesignKind(str, enum.Enum):
    NOMINAL_MCBF = "NominalMcbf"
    NOMINAL_SBF = "NominalSbf"
    ROBUST_MCBF = "RobustMcbf"
    ROBUST_SBF = "RobustSbf"

    @property
    def robust(self) -> bool:
        return self in (DesignKind.ROBUST_MCBF, DesignKind.ROBUST_SBF)

    @property
    def coordinated(self) -> bool:
        return self in (DesignKind.NOMINAL_MCBF, DesignKind.ROBUST_MCBF)


class ExtractionError(RuntimeError):
    """No feasible rank-one point could be recovered."""


@dataclass
class DesignLayout:
    """Where each design variable lives in the conic ``y`` vector."""

    kind: DesignKind
    num_antennas: int
    w_index: dict = field(default_factory=dict)       # (i, k) -> slice of y
    scalar_index: dict = field(default_factory=dict)  # id -> position in y
    blocks: list = field(default_factory=list)        # (label, LmiBlock) in original form
    units: dict = field(default_factory=dict)         # variable -> physical unit of y
    cells: tuple = ()


class _Assembler:
    """Collects variables and cone blocks, then emits a ConicProblem."""

    def __init__(self, layout: DesignLayout):
        self.layout = layout
        self.nvars = 0
        self.var_pos: dict = {}
        self.var_unit: dict = {}
        self.objective: dict = {}
        self.cones: list = []
        self.c_parts: list = []
        self.a_parts: list = []     # (rows, cols_local, vals, ncols)

    def add_matrix(self, key, n, weight, unit=1.0):
        """Matrix variable ``unit * W'`` with ``n*n`` real coordinates."""
        start = self.nvars
        for r in range(n * n):
            self.var_pos[(key, r)] = start + r
            self.var_unit[(key, r)] = unit
        for r in range(n):
            self.objective[start + r] = weight * unit
        self.nvars += n * n
        self.layout.w_index[key] = slice(start, start + n * n)
        self.layout.units[key] = unit

    def add_scalar(self, key, unit=1.0):
        self.var_pos[key] = self.nvars
        self.var_unit[key] = unit
        self.layout.scalar_index[key] = self.nvars
        self.layout.units[key] = unit
        self.nvars += 1

    def _emit(self, cone, c_vec, var_ids, coeff_vecs, scaled=True):
        if scaled:
            units = np.array([self.var_unit[v] for v in var_ids])
            coeff_vecs = coeff_vecs * units[:, None]
        rows = np.repeat([self.var_pos[v] for v in var_ids], coeff_vecs.shape[1])
        cols = np.tile(np.arange(coeff_vecs.shape[1]), len(var_ids))
        vals = -coeff_vecs.ravel()
        nz = vals != 0
        self.cones.append(cone)
        self.c_parts.append(c_vec)
        self.a_parts.append((rows[nz], cols[nz], vals[nz], c_vec.size))

    def add_lmi(self, block: LmiBlock, scaled=True):
        if block.size == 1:
            self._emit(cs.NonNeg(1), block.constant_part.real.reshape(1),
                       block.var_ids, block.coeffs.real.reshape(-1, 1), scaled)
            return
        real = complex_to_real(block)
        self._emit(cs.Psd(real.size), cs.svec(real.constant_part), real.var_ids,
                   cs.svec(real.coeffs), scaled)

    def add_nonneg(self, keys):
        keys = list(keys)
        if not keys:
            return
        # one orthant block for all listed scalars; units dropped as above
        rows = np.array([self.var_pos[k] for k in keys])
        cols = np.arange(len(keys))
        self.cones.append(cs.NonNeg(len(keys)))
        self.c_parts.append(np.zeros(len(keys)))
        self.a_parts.append((rows, cols, -np.ones(len(keys)), len(keys)))

    def add_psd_matrix(self, key, n):
        ids = [(key, r) for r in range(n * n)]
        block = LmiBlock(np.zeros((n, n)), tuple(ids), hermitian_basis(n))
        # a positive multiple of a PSD block is PSD: units can be dropped
        self.add_lmi(block, scaled=False)

    def build(self) -> cs.ConicProblem:
        offset = 0
        rows, cols, vals = [], [], []
        for r, cl, v, size in self.a_parts:
            rows.append(r)
            cols.append(cl + offset)
            vals.append(v)
            offset += size
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.nvars, offset))
        b = np.zeros(self.nvars)
        for pos, w in self.objective.items():
            b[pos] = -w
        # Equilibrate rows by rescaling units, one factor per variable so
        # that the W >= 0 blocks stay positive multiples of themselves.
        norms = np.sqrt(np.asarray(A.multiply(A).sum(axis=1)).ravel())
        factor = np.ones(self.nvars)
        for key, sl in self.layout.w_index.items():
            f = 1.0 / max(norms[sl].max(), 1e-300)
            factor[sl] = f
            self.layout.units[key] *= f
        for key, pos in self.layout.scalar_index.items():
            f = 1.0 / max(norms[pos], 1e-300)
            factor[pos] = f
            self.layout.units[key] *= f
        A = sp.diags(factor) @ A
        b = factor * b
        # the objective scale is free; the power is recomputed from W
        b /= max(np.abs(b).max(), 1e-300)
        return cs.ConicProblem(np.concatenate(self.c_parts), A, b, tuple(self.cones),
                               layout=self.layout)


def _scaled(block: LmiBlock, ellipsoid: ErrorEllipsoid, scale: float) -> LmiBlock:
    """Whiten the error coordinates and normalize by ``scale``.

    The congruence with ``diag(C^{-1/2}, 1)`` is invertible, so feasibility is
    unchanged; it only improves the conditioning of the conic data.
    """
    if block.size == 1:
        return block.congruence(np.eye(1), scale)
    n = ellipsoid.dim
    T = np.eye(n + 1, dtype=complex)
    T[:n, :n] = ellipsoid.whitener()
    return block.congruence(T, scale)


def _w_id(i, k):
    return ("W", i, k)


def _power_unit(channels, cfg, i, k):
    """Matched-filter power for unit SINR on the serving link."""
    gain = float(np.linalg.norm(channels.nominal[i, i, k]) ** 2)
    sigma2 = float(cfg.noise_powers[i, k])
    return sigma2 / gain if gain > 0 else sigma2


def build_robust_mcbf(channels: ChannelSet, cfg: SystemConfig) -> cs.ConicProblem:
    """Robust coordinated design: one Phi block per user and one Psi block
    per (interfering BS, user); zero-radius links fall back to scalar
    nominal constraints."""
    channels.check(cfg)
    nc, K, nt = cfg.num_cells, cfg.users_per_cell, cfg.num_antennas
    kind = DesignKind.ROBUST_MCBF
    layout = DesignLayout(kind, nt, cells=tuple(range(nc)))
    asm = _Assembler(layout)
    for i in range(nc):
        for k in range(K):
            asm.add_matrix(_w_id(i, k), nt, cfg.power_weights[i],
                           _power_unit(channels, cfg, i, k))
    lam_ids, t_ids = [], []
    for i in range(nc):
        for k in range(K):
            sigma2 = cfg.noise_powers[i, k]
            for j in range(nc):
                if not channels.ellipsoid(j, i, k).is_degenerate:
                    asm.add_scalar(("lambda", j, i, k), sigma2)
                    lam_ids.append(("lambda", j, i, k))
            for j in range(nc):
                if j != i:
                    asm.add_scalar(("t", j, i, k), sigma2)
                    t_ids.append(("t", j, i, k))
    for i in range(nc):
        for k in range(K):
            asm.add_psd_matrix(_w_id(i, k), nt)
    for i in range(nc):
        for k in range(K):
            sigma2 = cfg.noise_powers[i, k]
            ell = channels.ellipsoid(i, i, k)
            phi = build_phi(channels.nominal[i, i, k], cfg.sinr_targets[i, k], ell,
                            _w_id(i, k), [_w_id(i, l) for l in range(K) if l != k],
                            [("t", j, i, k) for j in range(nc) if j != i], sigma2,
                            ("lambda", i, i, k))
            layout.blocks.append((("phi", i, k), phi))
            asm.add_lmi(_scaled(phi, ell, 1.0 / sigma2))
            for j in range(nc):
                if j == i:
                    continue
                ell = channels.ellipsoid(j, i, k)
                psi = build_psi(channels.nominal[j, i, k], ell,
                                [_w_id(j, l) for l in range(K)], ("t", j, i, k),
                                ("lambda", j, i, k))
                layout.blocks.append((("psi", j, i, k), psi))
                asm.add_lmi(_scaled(psi, ell, 1.0 / sigma2))
    asm.add_nonneg(t_ids + lam_ids)
    return asm.build()


def build_robust_sbf(channels: ChannelSet, cfg: SystemConfig,
                     cell: Optional[int] = None) -> cs.ConicProblem:
    """Robust single-cell design of ``cell``; with ``cell=None`` the
    independent per-cell problems are stacked into one program."""
    channels.check(cfg)
    if cfg.interference_caps is None:
        raise InvalidInputError("single-cell designs need interference caps")
    nc, K, nt = cfg.num_cells, cfg.users_per_cell, cfg.num_antennas
    cells = tuple(range(nc)) if cell is None else (int(cell),)
    layout = DesignLayout(DesignKind.ROBUST_SBF, nt, cells=cells)
    asm = _Assembler(layout)
    xi = cfg.interference_caps
    for i in cells:
        for k in range(K):
            asm.add_matrix(_w_id(i, k), nt, cfg.power_weights[i] if cell is None else 1.0,
                           _power_unit(channels, cfg, i, k))
    lam_ids = []
    for i in cells:
        for k in range(K):
            if not channels.ellipsoid(i, i, k).is_degenerate:
                lam_ids.append(("lambda", i, i, k))
                asm.add_scalar(lam_ids[-1], cfg.noise_powers[i, k])
        for j in range(nc):
            if j == i:
                continue
            for l in range(K):
                if not channels.ellipsoid(i, j, l).is_degenerate:
                    lam_ids.append(("lambda", i, j, l))
                    asm.add_scalar(lam_ids[-1], xi[i, j, l])
    for i in cells:
        for k in range(K):
            asm.add_psd_matrix(_w_id(i, k), nt)
    for i in cells:
        for k in range(K):
            sigma2 = cfg.noise_powers[i, k]
            fixed = float(sum(xi[j, i, k] for j in range(nc) if j != i))
            ell = channels.ellipsoid(i, i, k)
            phi = build_phi(channels.nominal[i, i, k], cfg.sinr_targets[i, k], ell,
                            _w_id(i, k), [_w_id(i, l) for l in range(K) if l != k],
                            [], sigma2, ("lambda", i, i, k), fixed_interference=fixed)
            layout.blocks.append((("phi", i, k), phi))
            asm.add_lmi(_scaled(phi, ell, 1.0 / sigma2))
        for j in range(nc):
            if j == i:
                continue
            for l in range(K):
                ell = channels.ellipsoid(i, j, l)
                cap = float(xi[i, j, l])
                leak = build_psi(channels.nominal[i, j, l], ell,
                                 [_w_id(i, k) for k in range(K)], None,
                                 ("lambda", i, j, l), cap=cap)
                layout.blocks.append((("leak", i, j, l), leak))
                asm.add_lmi(_scaled(leak, ell, 1.0 / cap))
    asm.add_nonneg(lam_ids)
    return asm.build()


def nominal_channels(channels: ChannelSet) -> ChannelSet:
    """Same nominal channels with every error ball collapsed to a point."""
    nt = channels.num_antennas
    zero = ErrorEllipsoid.sphere(0.0, nt)
    return ChannelSet(channels.nominal, zero, channels.large_scale_gains)


def build_nominal(kind: DesignKind, channels: ChannelSet, cfg: SystemConfig,
                  cell: Optional[int] = None) -> cs.ConicProblem:
    """Semidefinite relaxation of a non-robust design (errors ignored)."""
    kind = DesignKind(kind)
    flat = nominal_channels(channels)
    if kind == DesignKind.NOMINAL_MCBF:
        problem = build_robust_mcbf(flat, cfg)
    elif kind == DesignKind.NOMINAL_SBF:
        problem = build_robust_sbf(flat, cfg, cell)
    else:
        raise InvalidInputError(f"{kind.value} is not a nominal design")
    problem.layout.kind = kind
    return problem


def build_design(kind: DesignKind, channels: ChannelSet, cfg: SystemConfig) -> cs.ConicProblem:
    kind = DesignKind(kind)
    if kind == DesignKind.ROBUST_MCBF:
        return build_robust_mcbf(channels, cfg)
    if kind == DesignKind.ROBUST_SBF:
        return build_robust_sbf(channels, cfg)
    return build_nominal(kind, channels, cfg)


# -- solutions ---------------------------------------------------------------

@dataclass
class SdrSolution:
    kind: DesignKind
    status: str
    covariances: Optional[np.ndarray]        # (Nc, K, Nt, Nt)
    multipliers: dict
    slacks: dict
    objective: float
    rank_one_gap: Optional[np.ndarray]       # (Nc, K)
    conic_status: str = ""
    iterations: int = 0
    residuals: tuple = ()
    certificate: dict = field(default_factory=dict)
    solve_time_ms: float = 0.0

    @property
    def is_optimal(self) -> bool:
        return self.status == cs.OPTIMAL

    def is_rank_one(self, tol: float = RANK_ONE_TOL) -> bool:
        return self.rank_one_gap is not None and bool(np.all(self.rank_one_gap <= tol))

    def values(self) -> dict:
        """All variable values keyed by id; covariances keyed by ("W", i, k)."""
        out = dict(self.multipliers)
        out.update(self.slacks)
        nc, K = self.covariances.shape[:2]
        for i in range(nc):
            for k in range(K):
                out[_w_id(i, k)] = self.covariances[i, k]
        return out


_STATUS_MAP = {
    cs.OPTIMAL: cs.OPTIMAL,
    cs.DUAL_INFEASIBLE: "primal-infeasible",
    cs.PRIMAL_INFEASIBLE: "dual-infeasible",
    cs.NUMERICAL_FAILURE: "numerical-failure",
    cs.ITERATION_LIMIT: "numerical-failure",
}


def rank_one_gaps(W: np.ndarray) -> np.ndarray:
    """Ratio of the second-largest to the largest eigenvalue per matrix."""
    vals = np.linalg.eigvalsh(W)
    top = vals[..., -1]
    second = np.maximum(vals[..., -2], 0.0) if W.shape[-1] > 1 else np.zeros_like(top)
    with np.errstate(invalid="ignore", divide="ignore"):
        gap = np.where(top > 0, second / np.where(top > 0, top, 1.0), 0.0)
    return gap


def _design_opts(opts: Optional[cs.SolverOptions]) -> cs.SolverOptions:
    return opts or cs.SolverOptions(polish_feastol=1e-9, polish_gaptol=1e-13)


def _rescaled(problem: cs.ConicProblem, sol: cs.ConicSolution) -> cs.ConicProblem:
    """Same program with each variable's unit set to its size in a failed
    iterate.

    The iterate is rough, but it shows which variables sit orders of
    magnitude away from one; some users need thousands of times their
    matched-filter power.
    """
    layout: DesignLayout = problem.layout
    mag = np.abs(np.nan_to_num(sol.y))
    factor = np.ones(problem.b.size)
    sizes = [mag[sl].max() for sl in layout.w_index.values()]
    floor = 1e-3 * max(sizes) if sizes else 1e-3
    units = dict(layout.units)
    for key, sl in layout.w_index.items():
        factor[sl] = max(mag[sl].max(), floor)
        units[key] *= factor[sl.start]
    for key, pos in layout.scalar_index.items():
        factor[pos] = max(mag[pos], floor)
        units[key] *= factor[pos]
    b = factor * problem.b
    b /= max(np.abs(b).max(), 1e-300)
    new_layout = DesignLayout(layout.kind, layout.num_antennas, layout.w_index,
                              layout.scalar_index, layout.blocks, units, layout.cells)
    return cs.ConicProblem(problem.c, sp.diags(factor) @ problem.A, b, problem.cones,
                           layout=new_layout)


def solve_problem(problem: cs.ConicProblem, cfg: SystemConfig,
                  opts: Optional[cs.SolverOptions] = None) -> SdrSolution:
    """Solve a built design program and map the result back to W, t, lambda.

    A numerical failure gets one retry with units taken from the failed
    iterate.
    """
    t0 = time.perf_counter()
    sol = cs.solve(problem, _design_opts(opts))
    if sol.status == cs.NUMERICAL_FAILURE and np.all(np.isfinite(sol.y)):
        retry_problem = _rescaled(problem, sol)
        retry = cs.solve(retry_problem, _design_opts(opts))
        logger.debug("%s: retry after numerical failure gave %s",
                     problem.layout.kind.value, retry.status)
        if retry.status != cs.NUMERICAL_FAILURE:
            problem, sol = retry_problem, retry
    layout: DesignLayout = problem.layout
    elapsed = 1e3 * (time.perf_counter() - t0)
    status = _STATUS_MAP[sol.status]
    nc, K, nt = cfg.num_cells, cfg.users_per_cell, cfg.num_antennas
    if status != cs.OPTIMAL:
        cert = {}
        if sol.status == cs.DUAL_INFEASIBLE:
            cert = {"farkas_residual": float(np.linalg.norm(problem.A @ sol.x)),
                    "farkas_objective": float(problem.c @ sol.x)}
        logger.debug("%s: %s", layout.kind.value, status)
        return SdrSolution(layout.kind, status, None, {}, {}, float("nan"), None,
                           sol.status, sol.iterations, sol.residuals, cert, elapsed)
    y = sol.y
    W = np.zeros((nc, K, nt, nt), dtype=complex)
    for key, sl in layout.w_index.items():
        _, i, k = key
        W[i, k] = layout.units[key] * from_hermitian_coords(y[sl], nt)
    mult, slack = {}, {}
    for key, pos in layout.scalar_index.items():
        (mult if key[0] == "lambda" else slack)[key] = layout.units[key] * float(y[pos])
    cells = list(layout.cells)
    alpha = cfg.power_weights
    objective = float(sum(alpha[i] * np.trace(W[i, k]).real for i in cells for k in range(K)))
    gaps = rank_one_gaps(W)
    return SdrSolution(layout.kind, status, W, mult, slack, objective, gaps,
                       sol.status, sol.iterations, sol.residuals, {}, elapsed)


def solve_design(kind: DesignKind, channels: ChannelSet, cfg: SystemConfig,
                 solver_opts: Optional[cs.SolverOptions] = None) -> SdrSolution:
    problem = build_design(kind, channels, cfg)
    return solve_problem(problem, cfg, solver_opts)


def certificate_min_eigs(problem: cs.ConicProblem, sol: SdrSolution) -> list:
    """``(label, min eigenvalue, block norm)`` for every LMI at the solution."""
    values = sol.values()
    out = []
    for label, block in problem.layout.blocks:
        F = block.evaluate(values)
        out.append((label, float(np.linalg.eigvalsh(F)[0]), float(np.linalg.norm(F, 2))))
    return out


# -- beamformer extraction ----------------------------------------------------

@dataclass
class ExtractionReport:
    randomized: bool
    rank_one_gap: np.ndarray
    power: float
    power_ratio: float              # extracted power / relaxation objective
    verification: str               # "rank-one" or "sampled-feasible"
    trials_used: int = 0


def principal_beamformer(W: np.ndarray) -> np.ndarray:
    """sqrt(top eigenvalue) times the top eigenvector, phase-normalized so
    the first nonzero entry is real and nonnegative."""
    vals, vecs = np.linalg.eigh(W)
    v = vecs[:, -1]
    nz = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())
    if nz.size:
        a = v[nz[0]]
        v = v * (abs(a) / a)
    return np.sqrt(max(vals[-1], 0.0)) * v


def _scale_to_targets(w, nominal, errors, cfg, lo_tol=1e-9):
    """Smallest common scale s with every sampled SINR >= target, or None."""
    gamma = cfg.sinr_targets
    realized = nominal[None] + errors
    # SINR(s w) = s^2 S / (s^2 I + sigma^2) is increasing in s
    big = sinr_all(realized, BeamformerSet(w * 1e6), cfg)
    if np.any(big.min(axis=0) < gamma):
        # noise-free limit still misses a target
        return None
    lo, hi = 0.0, 1.0
    while np.any(sinr_all(realized, BeamformerSet(w * hi), cfg).min(axis=0) < gamma):
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            return None
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.any(sinr_all(realized, BeamformerSet(w * mid), cfg).min(axis=0) < gamma):
            lo = mid
        else:
            hi = mid
        if hi - lo <= lo_tol * hi:
            break
    return hi


def extract_beamformers(sol: SdrSolution, channels: ChannelSet, cfg: SystemConfig,
                        randomization_trials: int = 100, seed: int = 0,
                        error_samples: int = 1000, tol: float = RANK_ONE_TOL):
    """Recover rank-one beamformers from a relaxed solution.

    Rank-one covariances are factored directly.  Otherwise Gaussian
    randomization draws ``w ~ CN(0, W)`` per user, rescales all users by
    the smallest common factor passing every target on sampled errors, and
    keeps the cheapest candidate.
    """
    if not sol.is_optimal:
        raise InvalidInputError("extraction needs an optimal relaxed solution")
    W = sol.covariances
    nc, K, nt = W.shape[:3]
    gaps = sol.rank_one_gap
    if np.all(gaps <= tol):
        w = np.array([[principal_beamformer(W[i, k]) for k in range(K)] for i in range(nc)])
        beams = BeamformerSet(w)
        power = beams.total_power(cfg)
        ratio = power / sol.objective if sol.objective > 0 else 1.0
        return beams, ExtractionReport(False, gaps, power, ratio, "rank-one")

    rng = np.random.default_rng(seed)
    n_err = error_samples if sol.kind.robust else 1
    errors = sample_errors(channels, n_err, rng)
    vals, vecs = np.linalg.eigh(W)
    roots = vecs * np.sqrt(np.maximum(vals, 0.0))[..., None, :]
    best, best_power = None, np.inf
    for _ in range(randomization_trials):
        g = (rng.standard_normal((nc, K, nt)) + 1j * rng.standard_normal((nc, K, nt))) / np.sqrt(2)
        cand = np.einsum("ikab,ikb->ika", roots, g)
        s = _scale_to_targets(cand, channels.nominal, errors, cfg)
        if s is None:
            continue
        power = BeamformerSet(cand * s).total_power(cfg)
        if power < best_power:
            best, best_power = cand * s, power
    if best is None:
        raise ExtractionError("no feasible candidate after randomization")
    ratio = best_power / sol.objective if sol.objective > 0 else np.inf
    return BeamformerSet(best), ExtractionReport(True, gaps, best_power, ratio,
                                                 "sampled-feasible", randomization_trials)
