"""Per-panel indexed synchronization and energy-based blockage detection.

Each panel is tagged by a cyclic shift of one root Zadoff-Chu sequence. The BS
beams the superposed sequences toward the panels, every UE folds its antennas
into one scalar stream, matched-filters against each shift and compares the
energy to a Neyman-Pearson threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from blockris.channel_model import ChannelSet, Geometry, link_angle, steering_vector
from blockris.errors import InvalidParameterError


@dataclass(frozen=True)
class ZcConfig:
    length: int = 63
    root: int = 25
    cp_len: int = 8

    def __post_init__(self):
        if self.length < 1:
            raise InvalidParameterError(f"zc.length must be >= 1, got {self.length}")
        if not 1 <= self.root < self.length:
            raise InvalidParameterError(f"zc.root must satisfy 1 <= q < length, got {self.root}")
        if math.gcd(self.root, self.length) != 1:
            raise InvalidParameterError(
                f"zc.root={self.root} is not coprime with zc.length={self.length}"
            )
        if self.cp_len < 0:
            raise InvalidParameterError(f"zc.cp_len must be >= 0, got {self.cp_len}")

    def check_panels(self, M: int):
        if M > self.length:
            raise InvalidParameterError(f"M={M} panels need distinct shifts, but length={self.length}")


@dataclass(frozen=True)
class PilotConfig:
    """Sensing-interval power budget, false-alarm levels and noise variance.

    ``alpha`` is either one level shared by all panels or one per panel.
    """

    total_power: float
    alpha: float | tuple[float, ...] = 1e-3
    noise_var: float = 1.0

    def __post_init__(self):
        if not self.total_power > 0:
            raise InvalidParameterError(f"pilot total_power must be > 0, got {self.total_power}")
        if not self.noise_var > 0:
            raise InvalidParameterError(f"noise_var must be > 0, got {self.noise_var}")
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if np.any(a <= 0) or np.any(a > 1):
            raise InvalidParameterError(f"alpha must lie in (0, 1], got {self.alpha}")

    def alphas(self, M: int) -> np.ndarray:
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if a.size == 1:
            return np.full(M, a[0])
        if a.size != M:
            raise InvalidParameterError(f"need 1 or {M} alpha values, got {a.size}")
        return a


@dataclass(frozen=True)
class DetectionReport:
    """``z`` is (K, M) matched-filter outputs, ``tau`` (M,) thresholds."""

    z: np.ndarray
    tau: np.ndarray
    estimated_sets: list[frozenset[int]]
    jaccard: np.ndarray | None = None

    @property
    def energy(self) -> np.ndarray:
        return np.abs(self.z) ** 2


def zc_root(length: int, root: int) -> np.ndarray:
    """s[n] = exp(-j pi q n (n+1) / length)."""
    ZcConfig(length=length, root=root, cp_len=0)
    n = np.arange(length, dtype=np.int64)
    # reduce the quadratic phase modulo 2*length first to keep the argument small
    phase_num = (root * n * (n + 1)) % (2 * length)
    return np.exp(-1j * np.pi * phase_num / length)


def zc_shift(seq: np.ndarray, shift: int) -> np.ndarray:
    """s_i[n] = s[(n + shift) mod length]."""
    return np.roll(np.asarray(seq), -int(shift))


def sequence_bank(zc: ZcConfig, M: int) -> np.ndarray:
    """Indexed sequences for panels 0..M-1 (shift = panel index), shape (M, length)."""
    zc.check_panels(M)
    s = zc_root(zc.length, zc.root)
    return np.stack([zc_shift(s, i) for i in range(M)]) if M else np.zeros((0, zc.length), complex)


def pilot_precoders(geometry: Geometry, Nt: int, total_power: float) -> np.ndarray:
    """Steering beams from the BS toward each panel with equal power split, shape (M, Nt)."""
    M = geometry.ris_pos.shape[0]
    if M < 1:
        raise InvalidParameterError("pilot precoders need at least one panel")
    v = np.stack(
        [steering_vector(link_angle(geometry.bs_pos, p), Nt)[:, 0] for p in geometry.ris_pos]
    )
    return v * np.sqrt(total_power / (M * Nt))


def pilot_gains(channels: ChannelSet, precoders: np.ndarray, sensing_phases=None) -> np.ndarray:
    """Per-panel received pilot vectors H_r,i->k diag(u_i0) G_i v_i, shape (M, K, Nr)."""
    M, Ni = channels.g_bs_ris.shape[:2]
    u0 = np.ones((M, Ni), complex) if sensing_phases is None else np.asarray(sensing_phases, complex)
    gv = np.einsum("int,it->in", channels.g_bs_ris, precoders) * u0
    return np.einsum("ikrn,in->ikr", channels.h_ris_ue, gv)


def simulate_pilot_rx(
    channels: ChannelSet,
    zc: ZcConfig,
    pilot: PilotConfig,
    rng: np.random.Generator,
    sensing_phases=None,
    precoders: np.ndarray | None = None,
    draws: int | None = None,
) -> np.ndarray:
    """Received pilot samples after CP removal, shape (K, Nr, length).

    With ``draws`` set, that many independent noise realizations of the same
    channel are stacked on a new leading axis.

    Only unblocked panels contribute, and the direct path carries no pilot.
    Noise is CN(0, noise_var) per antenna and sample; ``noise_var`` of exactly
    zero is not allowed by ``PilotConfig`` so noiseless runs pass
    ``rng=None`` instead.
    """
    K, Nr, Nt = channels.h_direct.shape
    M = channels.g_bs_ris.shape[0]
    bank = sequence_bank(zc, M)
    if precoders is None:
        if channels.geometry is None:
            raise InvalidParameterError("channels carry no geometry; pass precoders explicitly")
        precoders = pilot_precoders(channels.geometry, Nt, pilot.total_power)
    gains = pilot_gains(channels, precoders, sensing_phases)
    gains = gains * (~channels.blockage.blocked)[:, :, None]
    y = np.einsum("ikr,in->krn", gains, bank)
    if draws is not None:
        if draws < 1:
            raise InvalidParameterError(f"draws must be >= 1, got {draws}")
        y = np.broadcast_to(y, (draws,) + y.shape)
    if rng is not None:
        shape = y.shape
        y = y + np.sqrt(pilot.noise_var / 2) * (
            rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        )
    return y


def scalar_observation(y: np.ndarray) -> np.ndarray:
    """Equal-weight antenna sum scaled by 1/sqrt(Nr); antenna axis is -2."""
    y = np.asarray(y)
    return y.sum(axis=-2) / np.sqrt(y.shape[-2])


def matched_filter(y_tilde: np.ndarray, seqs: np.ndarray) -> np.ndarray:
    """Z = sum_n conj(s_i[n]) y[n].

    ``y_tilde`` is (..., length) and ``seqs`` is (length,) or (M, length);
    the result drops the last axis of ``y_tilde`` and appends the panel axis
    when several sequences are given.
    """
    y_tilde = np.asarray(y_tilde)
    seqs = np.asarray(seqs)
    if y_tilde.shape[-1] != seqs.shape[-1]:
        raise InvalidParameterError(
            f"sequence length {seqs.shape[-1]} != observation length {y_tilde.shape[-1]}"
        )
    if seqs.ndim == 1:
        return y_tilde @ seqs.conj()
    return y_tilde @ seqs.conj().T


def np_threshold(alpha, noise_var: float, length: int):
    """tau = -noise_var * length * ln(alpha), so that exp(-tau / (noise_var*length)) = alpha."""
    a = np.asarray(alpha, dtype=float)
    if np.any(a <= 0) or np.any(a > 1):
        raise InvalidParameterError(f"alpha must lie in (0, 1], got {alpha}")
    tau = -noise_var * length * np.log(a)
    return float(tau) if tau.ndim == 0 else tau


def detect_sets(z: np.ndarray, tau) -> list[frozenset[int]]:
    """Panels whose matched-filter energy reaches the threshold, one set per user."""
    energy = np.abs(np.atleast_2d(z)) ** 2
    tau = np.broadcast_to(np.asarray(tau, dtype=float), energy.shape[1:])
    if np.any(tau < 0):
        raise InvalidParameterError("thresholds must be nonnegative")
    hits = energy >= tau
    return [frozenset(int(i) for i in np.flatnonzero(row)) for row in hits]


def jaccard(estimated: Iterable[int], truth: Iterable[int]) -> float:
    """|A & B| / |A | B|, with two empty sets scoring 1."""
    a, b = set(estimated), set(truth)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def detect_blockage(
    channels: ChannelSet,
    zc: ZcConfig,
    pilot: PilotConfig,
    rng: np.random.Generator | None,
    sensing_phases=None,
    precoders: np.ndarray | None = None,
) -> DetectionReport:
    """Run the whole detection chain for one sensing interval and score it."""
    M = channels.g_bs_ris.shape[0]
    y = simulate_pilot_rx(channels, zc, pilot, rng, sensing_phases, precoders)
    z = matched_filter(scalar_observation(y), sequence_bank(zc, M))
    tau = np.atleast_1d(np_threshold(pilot.alphas(M), pilot.noise_var, zc.length))
    sets = detect_sets(z, tau)
    truth = channels.true_sets()
    scores = np.array([jaccard(s, t) for s, t in zip(sets, truth)])
    return DetectionReport(z=z, tau=tau, estimated_sets=sets, jaccard=scores)


def detection_hits(
    channels: ChannelSet,
    zc: ZcConfig,
    pilot: PilotConfig,
    rng: np.random.Generator,
    draws: int,
    sensing_phases=None,
    precoders: np.ndarray | None = None,
) -> np.ndarray:
    """Threshold decisions for ``draws`` sensing intervals on one channel, shape (draws, K, M)."""
    M = channels.g_bs_ris.shape[0]
    y = simulate_pilot_rx(channels, zc, pilot, rng, sensing_phases, precoders, draws=draws)
    z = matched_filter(scalar_observation(y), sequence_bank(zc, M))
    tau = np.atleast_1d(np_threshold(pilot.alphas(M), pilot.noise_var, zc.length))
    return np.abs(z) ** 2 >= tau


def jaccard_scores(sets: Sequence[Iterable[int]], truth: Sequence[Iterable[int]]) -> np.ndarray:
    return np.array([jaccard(s, t) for s, t in zip(sets, truth)])
