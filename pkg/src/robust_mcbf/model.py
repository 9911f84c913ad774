"""System description, SINR evaluation and the sampling worst-case oracle.

Channels are indexed ``[j, i, k]``: the link from base station ``j`` to
user ``k`` of cell ``i``.  Beamformers are indexed ``[i, k]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class InvalidInputError(ValueError):
    """Raised when inputs violate the documented shapes or invariants."""


def _positive(name, arr):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise InvalidInputError(f"{name} must be finite and strictly positive")
    return arr


@dataclass(frozen=True)
class SystemConfig:
    """Cell counts, SINR targets (linear), noise powers (W) and power weights.

    ``interference_caps[j, i, k]`` bounds the interference from BS ``j`` to
    user ``k`` of cell ``i``; diagonal entries (``j == i``) are ignored.
    """

    num_cells: int
    users_per_cell: int
    num_antennas: int
    power_weights: np.ndarray
    sinr_targets: np.ndarray
    noise_powers: np.ndarray
    interference_caps: Optional[np.ndarray] = None

    def __post_init__(self):
        nc, K, nt = self.num_cells, self.users_per_cell, self.num_antennas
        for name, v in (("num_cells", nc), ("users_per_cell", K), ("num_antennas", nt)):
            if int(v) != v or v < 1:
                raise InvalidInputError(f"{name} must be an integer >= 1")
        alpha = _positive("power_weights", np.broadcast_to(self.power_weights, (nc,)))
        gamma = _positive("sinr_targets", np.asarray(self.sinr_targets, dtype=float))
        sigma2 = _positive("noise_powers", np.asarray(self.noise_powers, dtype=float))
        if gamma.size != nc * K or sigma2.size != nc * K:
            raise InvalidInputError("sinr_targets and noise_powers need num_cells*users_per_cell entries")
        object.__setattr__(self, "power_weights", alpha.copy())
        object.__setattr__(self, "sinr_targets", gamma.reshape(nc, K).copy())
        object.__setattr__(self, "noise_powers", sigma2.reshape(nc, K).copy())
        if self.interference_caps is not None:
            xi = np.array(self.interference_caps, dtype=float)
            if xi.shape == (nc * (nc - 1) * K,):
                full = np.full((nc, nc, K), np.nan)
                off = ~np.eye(nc, dtype=bool)
                full[off] = xi.reshape(nc * (nc - 1), K)
                xi = full
            if xi.shape != (nc, nc, K):
                raise InvalidInputError("interference_caps must have shape (Nc, Nc, K)")
            off = ~np.eye(nc, dtype=bool)
            _positive("interference_caps", xi[off])
            xi[~off] = np.nan
            object.__setattr__(self, "interference_caps", xi)

    @classmethod
    def uniform(cls, num_cells, users_per_cell, num_antennas, sinr_target,
                noise_power, interference_cap=None, power_weight=1.0):
        """Same target, noise and cap for every user."""
        n = num_cells * users_per_cell
        caps = None
        if interference_cap is not None:
            caps = np.full((num_cells, num_cells, users_per_cell), float(interference_cap))
        return cls(num_cells, users_per_cell, num_antennas,
                   np.full(num_cells, float(power_weight)),
                   np.full(n, float(sinr_target)), np.full(n, float(noise_power)),
                   caps)

    def with_targets(self, sinr_target) -> "SystemConfig":
        return SystemConfig(self.num_cells, self.users_per_cell, self.num_antennas,
                            self.power_weights,
                            np.broadcast_to(np.asarray(sinr_target, float),
                                            (self.num_cells, self.users_per_cell)).ravel(),
                            self.noise_powers.ravel(), self.interference_caps)


@dataclass(frozen=True)
class ErrorEllipsoid:
    """The set ``{e : e^H C e <= 1}``.

    Build with ``ErrorEllipsoid.sphere(radius, n)`` for ``C = I / radius**2``.
    A zero radius is the degenerate ball ``{0}``; it has no shape matrix.
    """

    shape_matrix: Optional[np.ndarray]
    radius: Optional[float] = None
    dim: int = 0

    def __post_init__(self):
        if self.shape_matrix is None:
            if self.radius is None or self.radius != 0.0:
                raise InvalidInputError("only the zero-radius ellipsoid may omit C")
            if self.dim < 1:
                raise InvalidInputError("degenerate ellipsoid needs a dimension")
            return
        C = np.array(self.shape_matrix, dtype=complex)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise InvalidInputError("shape matrix must be square")
        if np.abs(C - C.conj().T).max() > 1e-12 * max(1.0, np.abs(C).max()):
            raise InvalidInputError("shape matrix must be Hermitian")
        C = 0.5 * (C + C.conj().T)
        if np.linalg.eigvalsh(C)[0] <= 0:
            raise InvalidInputError("shape matrix must be positive definite")
        object.__setattr__(self, "shape_matrix", C)
        object.__setattr__(self, "dim", C.shape[0])

    @classmethod
    def sphere(cls, radius: float, dim: int) -> "ErrorEllipsoid":
        radius = float(radius)
        if not np.isfinite(radius) or radius < 0:
            raise InvalidInputError("radius must be >= 0")
        if radius == 0.0:
            return cls(None, 0.0, int(dim))
        return cls(np.eye(dim) / radius ** 2, radius, int(dim))

    @property
    def is_degenerate(self) -> bool:
        return self.shape_matrix is None

    @property
    def spherical_radius(self) -> Optional[float]:
        """Radius if C is a multiple of the identity, else None."""
        if self.is_degenerate:
            return 0.0
        if self.radius is not None:
            return self.radius
        C = self.shape_matrix
        d = C[0, 0].real
        if np.allclose(C, d * np.eye(self.dim), rtol=0, atol=1e-12 * d):
            return float(1.0 / np.sqrt(d))
        return None

    def whitener(self) -> np.ndarray:
        """``C^{-1/2}``: maps the unit ball onto the ellipsoid."""
        if self.is_degenerate:
            return np.zeros((self.dim, self.dim))
        if self.radius is not None:
            return self.radius * np.eye(self.dim)
        vals, vecs = np.linalg.eigh(self.shape_matrix)
        return (vecs / np.sqrt(vals)) @ vecs.conj().T

    def contains(self, e: np.ndarray, slack: float = 0.0) -> bool:
        e = np.asarray(e, dtype=complex)
        if self.is_degenerate:
            return bool(np.all(e == 0))
        return float(np.real(e.conj() @ self.shape_matrix @ e)) <= 1.0 + slack


@dataclass(frozen=True)
class ChannelSet:
    """Nominal channels ``nominal[j, i, k]`` with one ellipsoid per link."""

    nominal: np.ndarray
    ellipsoids: tuple
    large_scale_gains: Optional[np.ndarray] = None

    def __post_init__(self):
        h = np.array(self.nominal, dtype=complex)
        if h.ndim != 4 or h.shape[0] != h.shape[1]:
            raise InvalidInputError("nominal must have shape (Nc, Nc, K, Nt)")
        if not np.all(np.isfinite(h)):
            raise InvalidInputError("nominal channels must be finite")
        nc, _, K, nt = h.shape
        ell = self.ellipsoids
        if isinstance(ell, ErrorEllipsoid):
            ell = [[[ell] * K for _ in range(nc)] for _ in range(nc)]
        ell = tuple(tuple(tuple(row) for row in plane) for plane in ell)
        if len(ell) != nc or any(len(p) != nc for p in ell) or any(
                len(r) != K for p in ell for r in p):
            raise InvalidInputError("one ellipsoid per link is required")
        for p in ell:
            for r in p:
                for e in r:
                    if e.dim != nt:
                        raise InvalidInputError("ellipsoid dimension must equal Nt")
        g = self.large_scale_gains
        g = np.ones((nc, nc, K)) if g is None else np.array(g, dtype=float)
        if g.shape != (nc, nc, K):
            raise InvalidInputError("large_scale_gains must have shape (Nc, Nc, K)")
        h.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "nominal", h)
        object.__setattr__(self, "ellipsoids", ell)
        object.__setattr__(self, "large_scale_gains", g)

    @property
    def num_cells(self) -> int:
        return self.nominal.shape[0]

    @property
    def users_per_cell(self) -> int:
        return self.nominal.shape[2]

    @property
    def num_antennas(self) -> int:
        return self.nominal.shape[3]

    def ellipsoid(self, j, i, k) -> ErrorEllipsoid:
        return self.ellipsoids[j][i][k]

    def whiteners(self) -> np.ndarray:
        """Stack of ``C^{-1/2}`` per link, shape (Nc, Nc, K, Nt, Nt)."""
        nc, K, nt = self.num_cells, self.users_per_cell, self.num_antennas
        out = np.zeros((nc, nc, K, nt, nt), dtype=complex)
        for j in range(nc):
            for i in range(nc):
                for k in range(K):
                    out[j, i, k] = self.ellipsoids[j][i][k].whitener()
        return out

    def check(self, cfg: SystemConfig) -> None:
        if (self.num_cells, self.users_per_cell, self.num_antennas) != (
                cfg.num_cells, cfg.users_per_cell, cfg.num_antennas):
            raise InvalidInputError("channel dimensions do not match the system config")


@dataclass(frozen=True)
class BeamformerSet:
    """Beamforming vectors ``vectors[i, k]`` of length Nt."""

    vectors: np.ndarray

    def __post_init__(self):
        w = np.array(self.vectors, dtype=complex)
        if w.ndim != 3:
            raise InvalidInputError("vectors must have shape (Nc, K, Nt)")
        if not np.all(np.isfinite(w)):
            raise InvalidInputError("beamformers must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "vectors", w)

    def total_power(self, cfg: Optional[SystemConfig] = None) -> float:
        per_cell = np.sum(np.abs(self.vectors) ** 2, axis=(1, 2))
        alpha = np.ones_like(per_cell) if cfg is None else cfg.power_weights
        return float(alpha @ per_cell)


def compute_sinr(channels: np.ndarray, beams: BeamformerSet, cfg: SystemConfig,
                 user: Sequence[int]) -> float:
    """SINR of user ``(i, k)`` for realized channels ``channels[j]`` (j = BS).

    ``channels`` may also be the full ``(Nc, Nc, K, Nt)`` array of links, in
    which case the user's slice is taken.
    """
    i, k = user
    w = beams.vectors
    h = np.asarray(channels, dtype=complex)
    if h.ndim == 4:
        h = h[:, i, k, :]
    nc, K, nt = w.shape
    if h.shape != (nc, nt):
        raise InvalidInputError(
            f"channel shape {h.shape} does not match beamformers {(nc, nt)}")
    if not (0 <= i < nc and 0 <= k < K):
        raise InvalidInputError("user index out of range")
    gains = np.abs(np.einsum("jn,jln->jl", h.conj(), w)) ** 2
    signal = gains[i, k]
    interference = gains.sum() - signal
    return float(signal / (interference + cfg.noise_powers[i, k]))


def sinr_all(realized: np.ndarray, beams: BeamformerSet, cfg: SystemConfig) -> np.ndarray:
    """SINR of every user for one or many channel realizations.

    ``realized`` has shape ``(..., Nc, Nc, K, Nt)``; the result has shape
    ``(..., Nc, K)``.
    """
    w = beams.vectors
    h = np.asarray(realized, dtype=complex)
    if h.shape[-4:] != (w.shape[0], w.shape[0], w.shape[1], w.shape[2]):
        raise InvalidInputError("realized channels do not match the beamformers")
    # gains[..., j, i, k, l] = |h_jik^H w_jl|^2
    gains = np.abs(np.einsum("...jikn,jln->...jikl", h.conj(), w)) ** 2
    nc, K = w.shape[:2]
    total = gains.sum(axis=(-4, -1))                   # (..., i, k)
    idx_i = np.arange(nc)[:, None]
    idx_k = np.arange(K)[None, :]
    signal = gains[..., idx_i, idx_i, idx_k, idx_k]
    return signal / (total - signal + cfg.noise_powers)


def perturb(channels: ChannelSet, errors: np.ndarray, slack: float = 1e-12) -> np.ndarray:
    """Realized channels ``nominal + errors`` after checking every ellipsoid."""
    e = np.asarray(errors, dtype=complex)
    if e.shape != channels.nominal.shape:
        raise InvalidInputError("errors must match the nominal channel shape")
    nc, K = channels.num_cells, channels.users_per_cell
    for j in range(nc):
        for i in range(nc):
            for k in range(K):
                if not channels.ellipsoid(j, i, k).contains(e[j, i, k], slack):
                    raise InvalidInputError(
                        f"error on link (j={j}, i={i}, k={k}) lies outside its ellipsoid")
    return channels.nominal + e


def sample_errors(channels: ChannelSet, num_samples: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Uniform draws from every link's ellipsoid; sample 0 is all zeros.

    Returns an array of shape ``(num_samples, Nc, Nc, K, Nt)``.
    """
    if num_samples < 1:
        raise InvalidInputError("num_samples must be >= 1")
    nc, K, nt = channels.num_cells, channels.users_per_cell, channels.num_antennas
    out = np.zeros((num_samples,) + channels.nominal.shape, dtype=complex)
    if num_samples == 1:
        return out
    n = num_samples - 1
    shape = (n, nc, nc, K)
    g = rng.standard_normal(shape + (nt,)) + 1j * rng.standard_normal(shape + (nt,))
    g /= np.linalg.norm(g, axis=-1, keepdims=True)
    radius = rng.random(shape) ** (1.0 / (2 * nt))
    u = g * radius[..., None]
    out[1:] = np.einsum("jikab,sjikb->sjika", channels.whiteners(), u)
    return out


def sampled_worst_sinr(channels: ChannelSet, beams: BeamformerSet, cfg: SystemConfig,
                       user: Sequence[int], num_samples: int, seed: int) -> float:
    """Minimum SINR of ``user`` over in-ellipsoid error draws.

    The zero perturbation is always the first sample, so the result never
    exceeds the nominal SINR.  This is an upper bound on the true worst case.
    """
    i, k = user
    errors = sample_errors(channels, num_samples, np.random.default_rng(seed))
    sinr = sinr_all(channels.nominal[None] + errors, beams, cfg)
    return float(sinr[:, i, k].min())


def to_db(x):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(x)


def from_db(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)
