"""S-procedure LMIs for robust quadratic constraints.

An :class:`LmiBlock` is an affine Hermitian matrix function

    F(v) = F0 + sum_r v_r F_r

of real scalar decision variables.  Matrix-valued variables (the covariance
matrices ``W``) enter through their real Hermitian coordinates, see
:func:`hermitian_basis`; the scalar id of coordinate ``r`` of matrix ``name``
is the tuple ``(name, r)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import solver as cs
from .model import ErrorEllipsoid, InvalidInputError

HERMITIAN_TOL = 1e-12


def _hermitize(M, what="matrix"):
    M = np.asarray(M, dtype=complex)
    dev = np.abs(M - M.conj().swapaxes(-1, -2)).max() if M.size else 0.0
    if dev > HERMITIAN_TOL * max(1.0, np.abs(M).max()):
        raise InvalidInputError(f"{what} is not Hermitian (deviation {dev:.3g})")
    return 0.5 * (M + M.conj().swapaxes(-1, -2))


@lru_cache(maxsize=None)
def hermitian_basis(n: int) -> np.ndarray:
    """Real basis of n x n Hermitian matrices, shape (n*n, n, n).

    Order: the n diagonal units, then for each p < q the real pair
    ``e_p e_q' + e_q e_p'`` followed by the imaginary pair
    ``i e_p e_q' - i e_q e_p'``.
    """
    out = np.zeros((n * n, n, n), dtype=complex)
    for p in range(n):
        out[p, p, p] = 1.0
    r = n
    for p in range(n):
        for q in range(p + 1, n):
            out[r, p, q] = out[r, q, p] = 1.0
            out[r + 1, p, q] = 1j
            out[r + 1, q, p] = -1j
            r += 2
    out.setflags(write=False)
    return out


def hermitian_coords(W: np.ndarray) -> np.ndarray:
    """Coordinates of a Hermitian matrix in :func:`hermitian_basis`."""
    W = np.asarray(W, dtype=complex)
    n = W.shape[-1]
    p, q = np.triu_indices(n, 1)
    out = np.empty(W.shape[:-2] + (n * n,))
    out[..., :n] = np.real(np.diagonal(W, axis1=-2, axis2=-1))
    out[..., n::2] = W[..., p, q].real
    out[..., n + 1::2] = W[..., p, q].imag
    return out


def from_hermitian_coords(v: np.ndarray, n: int) -> np.ndarray:
    return np.einsum("...r,rab->...ab", np.asarray(v, float), hermitian_basis(n))


@dataclass(frozen=True)
class RobustQuadratic:
    """``e^H A e + 2 Re(b^H e) + c >= 0`` for all ``e^H C e <= 1``."""

    a_matrix: np.ndarray
    b_vector: np.ndarray
    c_scalar: float
    shape_matrix: np.ndarray

    def __post_init__(self):
        A = _hermitize(self.a_matrix, "A")
        C = _hermitize(self.shape_matrix, "C")
        if np.linalg.eigvalsh(C)[0] <= 0:
            raise InvalidInputError("C must be positive definite")
        b = np.asarray(self.b_vector, dtype=complex).ravel()
        if A.shape != C.shape or b.size != A.shape[0]:
            raise InvalidInputError("inconsistent dimensions")
        object.__setattr__(self, "a_matrix", A)
        object.__setattr__(self, "shape_matrix", C)
        object.__setattr__(self, "b_vector", b)
        object.__setattr__(self, "c_scalar", float(np.real(self.c_scalar)))

    def value(self, e: np.ndarray) -> np.ndarray:
        """The quadratic at one error vector or a stack of them."""
        e = np.asarray(e, dtype=complex)
        quad = np.einsum("...a,ab,...b->...", e.conj(), self.a_matrix, e).real
        lin = 2 * np.real(e @ self.b_vector.conj())
        return quad + lin + self.c_scalar


@dataclass(frozen=True)
class LmiBlock:
    constant_part: np.ndarray
    var_ids: tuple
    coeffs: np.ndarray              # (len(var_ids), n, n)
    multiplier_id: Optional[Hashable] = None

    def __post_init__(self):
        F0 = _hermitize(self.constant_part, "constant part")
        n = F0.shape[0]
        coeffs = np.asarray(self.coeffs, dtype=complex).reshape(-1, n, n)
        if coeffs.shape[0] != len(self.var_ids):
            raise InvalidInputError("one coefficient matrix per variable id")
        if len(set(self.var_ids)) != len(self.var_ids):
            raise InvalidInputError("duplicate variable ids")
        object.__setattr__(self, "constant_part", F0)
        object.__setattr__(self, "coeffs", _hermitize(coeffs, "coefficient"))
        object.__setattr__(self, "var_ids", tuple(self.var_ids))

    @property
    def size(self) -> int:
        return self.constant_part.shape[0]

    @property
    def linear_parts(self) -> dict:
        return dict(zip(self.var_ids, self.coeffs))

    def evaluate(self, values: Mapping) -> np.ndarray:
        """Numeric block; ``values`` maps scalar ids (or matrix names) to values.

        A matrix name maps to the whole Hermitian matrix; its coordinates are
        taken with :func:`hermitian_coords`.
        """
        v = np.array([_lookup(values, vid) for vid in self.var_ids])
        return self.constant_part + np.einsum("r,rab->ab", v, self.coeffs)

    def congruence(self, T: np.ndarray, scale: float = 1.0) -> "LmiBlock":
        """Block ``scale * T^H F(v) T``; PSD-equivalent for invertible T."""
        T = np.asarray(T, dtype=complex)
        Th = T.conj().T
        return LmiBlock(scale * Th @ self.constant_part @ T, self.var_ids,
                        scale * Th @ self.coeffs @ T, self.multiplier_id)


def _lookup(values, vid):
    if vid in values:
        return float(values[vid])
    if isinstance(vid, tuple) and len(vid) == 2 and vid[0] in values:
        W = np.asarray(values[vid[0]])
        return float(hermitian_coords(W)[vid[1]])
    raise KeyError(vid)


@dataclass(frozen=True)
class RealLmiBlock:
    """Real symmetric embedding of an :class:`LmiBlock`.

    ``scale`` records that traces double under the embedding.
    """

    constant_part: np.ndarray
    var_ids: tuple
    coeffs: np.ndarray
    multiplier_id: Optional[Hashable] = None
    scale: float = 2.0

    @property
    def size(self) -> int:
        return self.constant_part.shape[0]


def embed(M: np.ndarray) -> np.ndarray:
    """``[[Re M, -Im M], [Im M, Re M]]`` for a matrix or a stack."""
    M = np.asarray(M, dtype=complex)
    re, im = M.real, M.imag
    top = np.concatenate([re, -im], axis=-1)
    bot = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def complex_to_real(block: LmiBlock) -> RealLmiBlock:
    return RealLmiBlock(embed(block.constant_part), block.var_ids,
                        embed(block.coeffs), block.multiplier_id, 2.0)


def s_procedure(rq: RobustQuadratic, multiplier_id: Hashable = "lambda") -> LmiBlock:
    """``[[A + lam C, b], [b^H, c - lam]] >= 0`` with a fresh ``lam >= 0``."""
    n = rq.a_matrix.shape[0]
    F0 = np.zeros((n + 1, n + 1), dtype=complex)
    F0[:n, :n] = rq.a_matrix
    F0[:n, n] = rq.b_vector
    F0[n, :n] = rq.b_vector.conj()
    F0[n, n] = rq.c_scalar
    F1 = np.zeros_like(F0)
    F1[:n, :n] = rq.shape_matrix
    F1[n, n] = -1.0
    return LmiBlock(F0, (multiplier_id,), F1[None], multiplier_id)


def _bordered(h: np.ndarray) -> np.ndarray:
    """``[I; h^H]``, shape (n+1, n)."""
    n = h.size
    return np.vstack([np.eye(n), h.conj()[None, :]])


def _w_coeffs(h, names_signs, n):
    B = _bordered(h)
    basis = B @ hermitian_basis(n) @ B.conj().T      # (n*n, n+1, n+1)
    ids, mats = [], []
    for name, sign in names_signs:
        ids.extend((name, r) for r in range(n * n))
        mats.append(sign * basis)
    return ids, mats


def _corner(n, value):
    M = np.zeros((n + 1, n + 1), dtype=complex)
    M[n, n] = value
    return M


def _robust_quadratic_block(h, ellipsoid: ErrorEllipsoid, w_terms, scalar_terms,
                            constant, multiplier_id):
    """Quadratic ``(h+e)^H (sum sign W) (h+e) + sum coef*s + constant >= 0``
    for all e in the ellipsoid, as an S-procedure LMI (or a 1x1 block when
    the ellipsoid is the single point 0)."""
    h = np.asarray(h, dtype=complex).ravel()
    n = h.size
    if ellipsoid.dim != n:
        raise InvalidInputError("ellipsoid dimension must match the channel")
    ids, mats = _w_coeffs(h, w_terms, n)
    for sid, coef in scalar_terms:
        ids.append(sid)
        mats.append(_corner(n, coef)[None])
    F0 = _corner(n, constant)
    if ellipsoid.is_degenerate:
        coeffs = np.concatenate(mats)[:, n:, n:]
        return LmiBlock(F0[n:, n:], tuple(ids), coeffs, None)
    if multiplier_id is None:
        raise InvalidInputError("missing multiplier id")
    lam = np.zeros((n + 1, n + 1), dtype=complex)
    lam[:n, :n] = ellipsoid.shape_matrix
    lam[n, n] = -1.0
    ids.append(multiplier_id)
    mats.append(lam[None])
    return LmiBlock(F0, tuple(ids), np.concatenate(mats), multiplier_id)


def build_phi(h_bar, gamma: float, ellipsoid: ErrorEllipsoid, own_id: Hashable,
              other_ids: Sequence[Hashable], t_ids: Sequence[Hashable],
              noise: float, multiplier_id: Hashable,
              fixed_interference: float = 0.0) -> LmiBlock:
    """Robust SINR block of one user.

    Encodes, for all errors on the serving link,
    ``(h+e)^H (W_own/gamma - sum W_other) (h+e) >= sum t + noise + fixed``.
    ``fixed_interference`` carries constant caps when the intercell terms
    are not optimization variables.
    """
    if not gamma > 0:
        raise InvalidInputError("gamma must be positive")
    w_terms = [(own_id, 1.0 / gamma)] + [(oid, -1.0) for oid in other_ids]
    scalar_terms = [(tid, -1.0) for tid in t_ids]
    return _robust_quadratic_block(h_bar, ellipsoid, w_terms, scalar_terms,
                                   -(noise + fixed_interference), multiplier_id)


def build_psi(h_bar, ellipsoid: ErrorEllipsoid, w_ids: Sequence[Hashable],
              t_id: Optional[Hashable], multiplier_id: Hashable,
              cap: Optional[float] = None, same_cell: bool = False) -> LmiBlock:
    """Robust interference bound ``(h+e)^H (sum W) (h+e) <= t`` on a
    cross-cell link; with ``t_id=None`` the bound is the constant ``cap``."""
    if same_cell:
        raise InvalidInputError("interference blocks need j != i")
    w_terms = [(wid, -1.0) for wid in w_ids]
    if t_id is None:
        if cap is None:
            raise InvalidInputError("need either a slack id or a constant cap")
        return _robust_quadratic_block(h_bar, ellipsoid, w_terms, [], float(cap),
                                       multiplier_id)
    return _robust_quadratic_block(h_bar, ellipsoid, w_terms, [(t_id, 1.0)], 0.0,
                                   multiplier_id)


def multiplier_margin(block: LmiBlock, opts: Optional[cs.SolverOptions] = None):
    """Largest ``s`` with ``F(lam) - s I >= 0`` for some ``lam >= 0``.

    Only for blocks whose sole variable is the S-procedure multiplier.  The
    block is feasible iff the margin is nonnegative.  Returns ``(margin,
    lam, status)``; the margin is NaN unless the solve is optimal.
    """
    if block.var_ids != (block.multiplier_id,) or block.multiplier_id is None:
        raise InvalidInputError("margin needs a block whose only variable is its multiplier")
    real = complex_to_real(block)
    m = real.size
    # dual-form variables y = (lam, s); maximize s
    psd_rows = np.vstack([-cs.svec(real.coeffs[0]), cs.svec(np.eye(m))])
    A = sp.csr_matrix(np.hstack([psd_rows, np.array([[-1.0], [0.0]])]))
    c = np.concatenate([cs.svec(real.constant_part), [0.0]])
    problem = cs.ConicProblem(c, A, np.array([0.0, 1.0]), (cs.Psd(m), cs.NonNeg(1)))
    sol = cs.solve(problem, opts)
    if sol.status != cs.OPTIMAL:
        return float("nan"), float("nan"), sol.status
    # the embedding doubles each eigenvalue but leaves their values alone
    return float(sol.y[1]), float(sol.y[0]), sol.status
