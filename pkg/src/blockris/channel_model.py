"""Geometry, Rician link matrices, blockage states and the effective channel.

All panels, users and antennas are indexed from 0. Links are normalized to
unit average entry power; there is no large-scale path loss, so SNR is set
entirely by the transmit power over the noise variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from blockris.errors import InvalidParameterError


@dataclass(frozen=True)
class SystemDims:
    K: int = 5
    M: int = 10
    Nt: int = 16
    Nr: int = 4
    Ni: int = 16

    def __post_init__(self):
        for name in ("K", "Nt", "Nr", "Ni"):
            if int(getattr(self, name)) < 1:
                raise InvalidParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.M < 0:
            raise InvalidParameterError(f"M must be >= 0, got {self.M}")


@dataclass(frozen=True)
class Geometry:
    """Node positions in meters; ``ris_pos`` is (M, 2), ``ue_pos`` is (K, 2)."""

    area_side: float
    bs_pos: np.ndarray
    ris_pos: np.ndarray
    ue_pos: np.ndarray

    def __post_init__(self):
        for name in ("bs_pos", "ris_pos", "ue_pos"):
            pts = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            if name != "bs_pos" and pts.size == 0:
                pts = pts.reshape(0, 2)
            if np.any(pts < 0) or np.any(pts > self.area_side):
                raise InvalidParameterError(f"{name} has points outside [0, {self.area_side}]^2")
            object.__setattr__(self, name, pts[0] if name == "bs_pos" else pts)


def random_geometry(dims: SystemDims, area_side: float, rng: np.random.Generator) -> Geometry:
    """BS at the center, RIS panels and UEs uniform in the square."""
    ris = rng.uniform(0.0, area_side, size=(dims.M, 2))
    ue = rng.uniform(0.0, area_side, size=(dims.K, 2))
    bs = np.array([area_side / 2, area_side / 2])
    return Geometry(area_side, bs, ris, ue)


def steering_vector(angle: float, n: int) -> np.ndarray:
    """Half-wavelength ULA response, shape (n, 1)."""
    if n < 1:
        raise InvalidParameterError(f"antenna count must be >= 1, got {n}")
    m = np.arange(n)
    return np.exp(1j * np.pi * m * np.sin(angle)).reshape(n, 1)


def link_angle(src: np.ndarray, dst: np.ndarray) -> float:
    """Azimuth of ``dst`` seen from ``src``, measured from the array broadside (x axis)."""
    d = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    return float(np.arctan2(d[1], d[0]))


def los_matrix(tx_pos, rx_pos, n_tx: int, n_rx: int) -> np.ndarray:
    """Rank-one LoS matrix a_rx(theta_arrival) a_tx(theta_departure)^H, shape (n_rx, n_tx)."""
    a_tx = steering_vector(link_angle(tx_pos, rx_pos), n_tx)
    a_rx = steering_vector(link_angle(rx_pos, tx_pos), n_rx)
    return a_rx @ a_tx.conj().T


def rician_link(los: np.ndarray, k_factor: float, rng: np.random.Generator) -> np.ndarray:
    """Mix a LoS matrix with i.i.d. CN(0, 1) scattering at Rician factor ``k_factor``.

    ``k_factor = inf`` returns ``los`` itself (no random draw is consumed).
    """
    if not k_factor >= 0:
        raise InvalidParameterError(f"k_factor must be >= 0, got {k_factor}")
    los = np.asarray(los, dtype=complex)
    if np.isinf(k_factor):
        return los.copy()
    nlos = (rng.standard_normal(los.shape) + 1j * rng.standard_normal(los.shape)) / np.sqrt(2)
    return np.sqrt(k_factor / (k_factor + 1)) * los + np.sqrt(1 / (k_factor + 1)) * nlos


@dataclass(frozen=True)
class BlockageState:
    """``blocked[i, k]`` is True when the BS -> RIS-i -> UE-k path is blocked."""

    blocked: np.ndarray

    def __post_init__(self):
        b = np.array(self.blocked, dtype=bool, ndmin=2)
        b.setflags(write=False)
        object.__setattr__(self, "blocked", b)

    def true_sets(self) -> list[frozenset[int]]:
        M, K = self.blocked.shape
        return [frozenset(int(i) for i in np.flatnonzero(~self.blocked[:, k])) for k in range(K)]

    @classmethod
    def from_sets(cls, sets: Sequence[Iterable[int]], M: int) -> "BlockageState":
        blocked = np.ones((M, len(sets)), dtype=bool)
        for k, s in enumerate(sets):
            for i in s:
                blocked[i, k] = False
        return cls(blocked)


@dataclass(frozen=True)
class ChannelSet:
    """All link matrices of one realization.

    Shapes: ``h_direct`` (K, Nr, Nt), ``g_bs_ris`` (M, Ni, Nt),
    ``h_ris_ue`` (M, K, Nr, Ni). Blocked paths keep their matrices; blockage
    only enters through the active sets used at assembly time.
    """

    h_direct: np.ndarray
    g_bs_ris: np.ndarray
    h_ris_ue: np.ndarray
    blockage: BlockageState
    geometry: Geometry | None = field(default=None, compare=False)

    def __post_init__(self):
        K, Nr, Nt = self.h_direct.shape
        M = self.g_bs_ris.shape[0]
        if self.g_bs_ris.shape[2] != Nt or self.h_ris_ue.shape[:3] != (M, K, Nr):
            raise InvalidParameterError("inconsistent link matrix shapes")
        if M and self.h_ris_ue.shape[3] != self.g_bs_ris.shape[1]:
            raise InvalidParameterError("RIS element counts disagree between G and H_r")
        if self.blockage.blocked.shape != (M, K):
            raise InvalidParameterError(f"blockage must be ({M}, {K}), got {self.blockage.blocked.shape}")
        for name in ("h_direct", "g_bs_ris", "h_ris_ue"):
            getattr(self, name).setflags(write=False)

    @property
    def dims(self) -> SystemDims:
        K, Nr, Nt = self.h_direct.shape
        M, Ni = self.g_bs_ris.shape[:2]
        return SystemDims(K=K, M=M, Nt=Nt, Nr=Nr, Ni=max(Ni, 1))

    def true_sets(self) -> list[frozenset[int]]:
        return self.blockage.true_sets()


def generate_channels(
    dims: SystemDims,
    geometry: Geometry,
    k_factor: float,
    p_block: float,
    rng: np.random.Generator,
) -> ChannelSet:
    """Draw one Rician channel realization and an i.i.d. Bernoulli blockage pattern."""
    if not 0.0 <= p_block <= 1.0:
        raise InvalidParameterError(f"p_block must lie in [0, 1], got {p_block}")
    K, M, Nt, Nr, Ni = dims.K, dims.M, dims.Nt, dims.Nr, dims.Ni
    bs, ris, ue = geometry.bs_pos, geometry.ris_pos, geometry.ue_pos
    if ris.shape[0] != M or ue.shape[0] != K:
        raise InvalidParameterError("geometry does not match dims")

    h_d = np.empty((K, Nr, Nt), dtype=complex)
    for k in range(K):
        h_d[k] = rician_link(los_matrix(bs, ue[k], Nt, Nr), k_factor, rng)
    g = np.empty((M, Ni, Nt), dtype=complex)
    for i in range(M):
        g[i] = rician_link(los_matrix(bs, ris[i], Nt, Ni), k_factor, rng)
    h_r = np.empty((M, K, Nr, Ni), dtype=complex)
    for i in range(M):
        for k in range(K):
            h_r[i, k] = rician_link(los_matrix(ris[i], ue[k], Ni, Nr), k_factor, rng)
    blocked = rng.random((M, K)) < p_block
    return ChannelSet(h_d, g, h_r, BlockageState(blocked), geometry)


def as_phase_array(phases, M: int, Ni: int) -> np.ndarray:
    u = np.asarray(phases, dtype=complex)
    if M == 0:
        return np.zeros((0, Ni), dtype=complex)
    if u.shape != (M, Ni):
        raise InvalidParameterError(f"phases must have shape ({M}, {Ni}), got {u.shape}")
    return u


def effective_channel(channels: ChannelSet, phases, active_set: Iterable[int], k: int) -> np.ndarray:
    """H_d,k + sum over active panels of H_r,i->k diag(u_i) G_i, shape (Nr, Nt)."""
    d = channels.dims
    u = as_phase_array(phases, d.M, channels.g_bs_ris.shape[1] if d.M else d.Ni)
    h = channels.h_direct[k].copy()
    for i in active_set:
        if not 0 <= i < d.M:
            raise InvalidParameterError(f"panel index {i} out of range for M={d.M}")
        h += (channels.h_ris_ue[i, k] * u[i]) @ channels.g_bs_ris[i]
    return h


def effective_channels(channels: ChannelSet, phases, active_sets: Sequence[Iterable[int]]) -> np.ndarray:
    """Stack of effective channels for every user, shape (K, Nr, Nt)."""
    K = channels.h_direct.shape[0]
    if len(active_sets) != K:
        raise InvalidParameterError(f"need {K} active sets, got {len(active_sets)}")
    return np.stack([effective_channel(channels, phases, active_sets[k], k) for k in range(K)])


def activity_mask(active_sets: Sequence[Iterable[int]], M: int) -> np.ndarray:
    """Boolean (M, K) matrix, True where panel i is active for user k."""
    mask = np.zeros((M, len(active_sets)), dtype=bool)
    for k, s in enumerate(active_sets):
        for i in s:
            mask[i, k] = True
    return mask
