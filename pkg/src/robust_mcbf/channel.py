"""Random cell layouts and LTE-style channels for Monte Carlo trials."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ChannelSet, ErrorEllipsoid, InvalidInputError


@dataclass(frozen=True)
class ScenarioConfig:
    inter_bs_distance: float = 500.0
    min_bs_ms_distance: float = 35.0
    shadowing_std_db: float = 8.0
    antenna_gain_dbi: float = 5.0
    error_radius: float = 0.1
    noise_power_dbm: float = -106.27
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.inter_bs_distance > self.min_bs_ms_distance > 0):
            raise InvalidInputError("need inter_bs_distance > min_bs_ms_distance > 0")
        if self.shadowing_std_db < 0:
            raise InvalidInputError("shadowing_std_db must be >= 0")
        if self.error_radius < 0:
            raise InvalidInputError("error_radius must be >= 0")

    @property
    def cell_radius(self) -> float:
        return self.inter_bs_distance / np.sqrt(3.0)


@dataclass(frozen=True)
class Layout:
    bs_positions: np.ndarray        # (Nc, 2)
    ms_positions: np.ndarray        # (Nc, K, 2)

    def distances(self) -> np.ndarray:
        """``d[j, i, k]``: distance from BS j to user k of cell i, meters."""
        diff = self.ms_positions[None, :, :, :] - self.bs_positions[:, None, None, :]
        return np.linalg.norm(diff, axis=-1)


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_w):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(p_w) + 30.0


def large_scale_gain(distance_m, shadow_db=0.0, gain_dbi=0.0):
    """Amplitude gain: path loss 34.6 + 35 log10(d) dB, shadowing, antenna gain."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(~(d > 0)):
        raise InvalidInputError("distance must be positive")
    path_db = 34.6 + 35.0 * np.log10(d)
    out = 10.0 ** (path_db / -20.0) * 10.0 ** (np.asarray(shadow_db) / 20.0) \
        * 10.0 ** (np.asarray(gain_dbi) / 20.0)
    return out if out.ndim else float(out)


def generate_layout(cfg: ScenarioConfig, num_cells: int, users_per_cell: int,
                    seed: int) -> Layout:
    """BSs on an equilateral triangle (or a single BS at the origin); users
    uniform in a disk of radius ``inter_bs_distance / sqrt(3)`` around their
    serving BS, redrawn until at least ``min_bs_ms_distance`` away."""
    if num_cells not in (1, 3):
        raise InvalidInputError("only 1 or 3 cells are supported")
    r_max = cfg.cell_radius
    r_min = cfg.min_bs_ms_distance
    if r_min >= r_max:
        raise InvalidInputError("minimum BS-MS distance must be below the cell radius")
    if num_cells == 1:
        bs = np.zeros((1, 2))
    else:
        angles = np.pi / 2 + 2 * np.pi * np.arange(3) / 3
        bs = r_max * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    rng = np.random.default_rng(seed)
    ms = np.empty((num_cells, users_per_cell, 2))
    for i in range(num_cells):
        for k in range(users_per_cell):
            while True:
                # uniform in the disk
                r = r_max * np.sqrt(rng.random())
                theta = 2 * np.pi * rng.random()
                if r >= r_min:
                    break
            ms[i, k] = bs[i] + r * np.array([np.cos(theta), np.sin(theta)])
    return Layout(bs, ms)


def generate_channels(layout: Layout, cfg: ScenarioConfig, seed: int,
                      num_antennas: int = 5) -> ChannelSet:
    """Nominal channels scaled by their large-scale gain.

    The error ball of each link is scaled by the same gain, so the stored
    ellipsoid is spherical with radius ``error_radius * gain``.
    """
    rng = np.random.default_rng(seed)
    d = layout.distances()
    nc, _, K = d.shape
    shadow_db = cfg.shadowing_std_db * rng.standard_normal(d.shape)
    gain = large_scale_gain(d, shadow_db, cfg.antenna_gain_dbi)
    small = (rng.standard_normal(d.shape + (num_antennas,))
             + 1j * rng.standard_normal(d.shape + (num_antennas,))) / np.sqrt(2.0)
    nominal = gain[..., None] * small
    ell = [[[ErrorEllipsoid.sphere(cfg.error_radius * gain[j, i, k], num_antennas)
             for k in range(K)] for i in range(nc)] for j in range(nc)]
    return ChannelSet(nominal, ell, gain)
