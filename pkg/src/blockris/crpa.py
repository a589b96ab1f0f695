"""Joint precoder / RIS-phase optimization for weighted sum-rate.

The sum-rate problem is handled through its WMMSE reformulation and solved by
Gauss-Seidel block updates:

(A) MMSE receivers and MSE weights,
(B) the regularized precoder, with the multiplier found by bisection,
(C) per-panel phase alignment ``u <- exp(j arg(g + L u))`` guarded by a
    backtracked minorization test on the Lipschitz constant ``L``.

Rates are in nats throughout. One stream per user: receivers ``U`` are stored
as a (K, Nr) array and the weights ``W`` and MSEs ``E`` as (K,) arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from blockris.channel_model import (
    ChannelSet,
    activity_mask,
    as_phase_array,
    effective_channels,
)
from blockris.errors import InvalidParameterError, NumericError


@dataclass(frozen=True)
class CrpaConfig:
    max_iter: int = 200
    eps: float = 1e-6
    l_init: float = 1.0
    eta: float = 2.0
    bisect_tol: float = 1e-12
    bisect_max: int = 200
    backtrack_max: int = 60
    weights: tuple[float, ...] | None = None
    init_phases: str = "random"
    init_precoder: str = "rzf"
    fill_power: bool = True

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidParameterError(f"crpa.max_iter must be >= 1, got {self.max_iter}")
        if not self.eps > 0:
            raise InvalidParameterError(f"crpa.eps must be > 0, got {self.eps}")
        if not self.eta > 1:
            raise InvalidParameterError(f"crpa.eta must be > 1, got {self.eta}")
        if not self.l_init > 0:
            raise InvalidParameterError(f"crpa.l_init must be > 0, got {self.l_init}")
        if not self.bisect_tol > 0 or self.bisect_max < 1:
            raise InvalidParameterError("crpa.bisect_tol must be > 0 and crpa.bisect_max >= 1")
        if self.init_phases not in ("random", "ones"):
            raise InvalidParameterError(f"crpa.init_phases must be 'random' or 'ones', got {self.init_phases!r}")
        if self.init_precoder not in ("rzf", "matched"):
            raise InvalidParameterError(
                f"crpa.init_precoder must be 'rzf' or 'matched', got {self.init_precoder!r}"
            )
        if self.weights is not None:
            if any(not w > 0 for w in self.weights):
                raise InvalidParameterError("crpa.weights must be positive")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    def omega(self, K: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(K)
        if len(self.weights) != K:
            raise InvalidParameterError(f"crpa.weights has {len(self.weights)} entries, need {K}")
        return np.asarray(self.weights, dtype=float)


@dataclass
class OptimizerState:
    F: np.ndarray
    phases: np.ndarray
    U: np.ndarray | None = None
    W: np.ndarray | None = None
    lam: float = 0.0
    lipschitz: np.ndarray | None = None


@dataclass
class IterationTrace:
    initial_wsr: float = 0.0
    wsr: list[float] = field(default_factory=list)
    wmmse_obj: list[float] = field(default_factory=list)
    backtrack_counts: list[list[int]] = field(default_factory=list)
    converged_at: int | None = None

    @property
    def iterations(self) -> int:
        return len(self.wsr)

    def iterations_to_fraction(self, frac: float = 0.95) -> int:
        """First 1-based iteration whose WSR reaches ``frac`` of the final value."""
        if not self.wsr:
            return 0
        target = frac * self.wsr[-1]
        for t, v in enumerate(self.wsr, start=1):
            if v >= target:
                return t
        return len(self.wsr)


def _weights(omega, K):
    return np.ones(K) if omega is None else np.asarray(omega, dtype=float)


def _check_noise(noise_var):
    if not noise_var > 0:
        raise InvalidParameterError(f"noise variance must be > 0, got {noise_var}")


# ---------------------------------------------------------------------------
# kernels on a stacked effective channel H of shape (K, Nr, Nt)


def _rates(H, F, noise_var):
    K, Nr, _ = H.shape
    HF = H @ F  # (K, Nr, K): column j is H_k f_j
    cov = HF @ HF.conj().transpose(0, 2, 1) + noise_var * np.eye(Nr)
    own = HF[np.arange(K), :, np.arange(K)]
    interf = cov - own[:, :, None] * own[:, None, :].conj()
    _, ld_full = np.linalg.slogdet(cov)
    _, ld_int = np.linalg.slogdet(interf)
    return ld_full - ld_int


def _receivers(H, F, noise_var):
    K, Nr, _ = H.shape
    HF = H @ F
    cov = HF @ HF.conj().transpose(0, 2, 1) + noise_var * np.eye(Nr)
    own = HF[np.arange(K), :, np.arange(K)]
    U = np.linalg.solve(cov, own[:, :, None])[:, :, 0]
    E = 1.0 - np.einsum("kr,kr->k", own.conj(), U).real
    E = np.clip(E, np.finfo(float).tiny, 1.0)
    return U, 1.0 / E, E


def _mse_from_t(t, F, U, noise_var, users):
    """MSE of each user in ``users`` given rows t_k = U_k^H H_k, shape (n, Nt)."""
    tF = t @ F  # (n, K)
    own = tF[np.arange(len(users)), users]
    return (
        1.0
        - 2.0 * own.real
        + np.sum(np.abs(tF) ** 2, axis=1)
        + noise_var * np.sum(np.abs(U[users]) ** 2, axis=1)
    )


def _mse(H, F, U, noise_var):
    t = np.einsum("kr,krt->kt", U.conj(), H)
    return _mse_from_t(t, F, U, noise_var, np.arange(H.shape[0]))


def _objective(H, F, U, W, noise_var, omega):
    E = _mse(H, F, U, noise_var)
    return float(np.sum(omega * (W * E - np.log(W))))


def solve_precoder(A, B, power, tol=1e-12, max_iter=200):
    """Minimize tr(F^H A F) - 2 Re tr(B^H F) s.t. ||F||_F^2 <= power.

    Returns ``(F, lam)`` with ``F = (A + lam I)^+ B``. The unconstrained
    minimum-norm solution is kept with ``lam = 0`` whenever it is feasible;
    otherwise ``lam > 0`` is bisected, always returning the feasible side of
    the bracket.
    """
    if not power > 0:
        raise InvalidParameterError(f"power must be > 0, got {power}")
    Nt, K = B.shape
    if not np.any(B):
        return np.zeros((Nt, K), dtype=complex), 0.0
    d, V = np.linalg.eigh(A)
    d = np.clip(d, 0.0, None)
    VB = V.conj().T @ B
    row_pow = np.sum(np.abs(VB) ** 2, axis=1)
    keep = d > max(d.max(), 1.0) * 1e-12

    def build(lam):
        if lam == 0:
            scale = np.divide(1.0, d, out=np.zeros_like(d), where=keep)
        else:
            scale = 1.0 / (d + lam)
        return V @ (scale[:, None] * VB)

    def pwr(lam):
        if lam == 0:
            return float(np.sum(row_pow[keep] / d[keep] ** 2))
        return float(np.sum(row_pow / (d + lam) ** 2))

    if pwr(0.0) <= power:
        return build(0.0), 0.0

    lo, hi = 0.0, 1.0
    n = 0
    while pwr(hi) > power:
        lo, hi = hi, 2.0 * hi
        n += 1
        if n > max_iter or not np.isfinite(hi):
            raise NumericError(
                f"could not bracket the power multiplier after {n} doublings "
                f"(power={power}, p(hi={hi})={pwr(hi)})"
            )
    for _ in range(max_iter):
        p_hi = pwr(hi)
        if power - p_hi <= tol * power:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pwr(mid) > power:
            lo = mid
        else:
            hi = mid
    else:
        raise NumericError(
            f"bisection stalled after {max_iter} steps: lam in [{lo}, {hi}], "
            f"p(hi)={pwr(hi)}, target={power}"
        )
    return build(hi), hi


def _precoder_blocks(H, U, W, omega):
    a = np.einsum("krt,kr->kt", H.conj(), U)  # rows a_k^T where a_k = H_k^H U_k
    cw = omega * W
    A = (a.T * cw) @ a.conj()
    B = a.T * cw
    return A, B


def _gradient(channels, H, F, U, W, omega, i, users):
    """Ascent gradient of the negated WMMSE objective w.r.t. conj(u_i)."""
    Ni = channels.g_bs_ris.shape[1]
    if len(users) == 0:
        return np.zeros(Ni, dtype=complex)
    t = np.einsum("kr,krt->kt", U[users].conj(), H[users])
    r = (t @ F) @ F.conj().T - F[:, users].T.conj()  # (n, Nt)
    b = np.einsum("krm,kr->km", channels.h_ris_ue[i, users].conj(), U[users])  # H_r^H U_k
    gr = r @ channels.g_bs_ris[i].conj().T  # r_k G_i^H
    return -np.sum((omega[users] * W[users])[:, None] * b * gr, axis=0)


# ---------------------------------------------------------------------------
# public block operations


def wsr(channels: ChannelSet, phases, active_sets, F, noise_var, weights=None) -> float:
    """Weighted sum rate in nats per channel use under the given active sets."""
    _check_noise(noise_var)
    H = effective_channels(channels, phases, active_sets)
    return float(np.sum(_weights(weights, H.shape[0]) * _rates(H, np.asarray(F, complex), noise_var)))


def user_rates(channels: ChannelSet, phases, active_sets, F, noise_var) -> np.ndarray:
    _check_noise(noise_var)
    H = effective_channels(channels, phases, active_sets)
    return _rates(H, np.asarray(F, complex), noise_var)


def update_receivers_weights(channels: ChannelSet, phases, active_sets, F, noise_var):
    """MMSE receivers and weights; returns ``(U, W, E)``."""
    _check_noise(noise_var)
    H = effective_channels(channels, phases, active_sets)
    return _receivers(H, np.asarray(F, complex), noise_var)


def update_precoder(
    channels: ChannelSet,
    phases,
    active_sets,
    U,
    W,
    power,
    weights=None,
    tol=1e-12,
    max_iter=200,
):
    H = effective_channels(channels, phases, active_sets)
    A, B = _precoder_blocks(H, np.asarray(U), np.asarray(W, float), _weights(weights, H.shape[0]))
    return solve_precoder(A, B, power, tol, max_iter)


def wmmse_objective(channels: ChannelSet, phases, active_sets, F, U, W, noise_var, weights=None) -> float:
    """sum_k w_k (W_k E_k - ln W_k) for arbitrary receivers and weights."""
    H = effective_channels(channels, phases, active_sets)
    return _objective(H, np.asarray(F, complex), np.asarray(U), np.asarray(W, float), noise_var, _weights(weights, H.shape[0]))


def ris_gradient(channels: ChannelSet, phases, active_sets, F, U, W, i, weights=None) -> np.ndarray:
    """Wirtinger gradient d f / d conj(u_i) of f = -J, with (F, U, W) held fixed.

    Only users whose active set contains panel ``i`` contribute.
    """
    H = effective_channels(channels, phases, active_sets)
    K = H.shape[0]
    users = np.array([k for k in range(K) if i in active_sets[k]], dtype=int)
    return _gradient(channels, H, np.asarray(F, complex), np.asarray(U), np.asarray(W, float), _weights(weights, K), i, users)


def phase_align_update(u, g, L) -> np.ndarray:
    """Elementwise exp(j arg(g + L u)); entries where g + L u vanishes keep their phase."""
    u = np.asarray(u, dtype=complex)
    c = np.asarray(g, dtype=complex) + L * u
    mag = np.abs(c)
    out = u.copy()
    nz = mag > 0
    out[nz] = c[nz] / mag[nz]
    return out


def minorizer_gap(u_new, u, g, L) -> float:
    """Re{g^H (u_new - u)} - L/2 ||u_new - u||^2."""
    d = u_new - u
    return float(np.real(np.vdot(g, d)) - 0.5 * L * np.real(np.vdot(d, d)))


def backtrack_and_update(
    value_fn: Callable[[np.ndarray], float],
    u: np.ndarray,
    g: np.ndarray,
    L: float,
    eta: float = 2.0,
    max_tries: int = 60,
    f0: float | None = None,
    scale: float | None = None,
):
    """Grow ``L`` by ``eta`` until the tentative exp-arg step passes the minorizer test.

    Returns ``(u_new, L, retries)``. A failure at pure round-off level keeps the
    current ``u`` so the value never decreases; ``scale`` is the magnitude of
    the largest terms summed inside ``value_fn`` (defaults to ``|f0|``).
    """
    if f0 is None:
        f0 = value_fn(u)
    slack = 1e3 * np.finfo(float).eps * max(abs(f0) if scale is None else scale, 1.0)
    for count in range(max_tries + 1):
        u_new = phase_align_update(u, g, L)
        f_new = value_fn(u_new)
        gap = f_new - f0 - minorizer_gap(u_new, u, g, L)
        if gap >= 0 and f_new >= f0:
            return u_new, L, count
        if abs(f_new - f0) <= slack and gap >= -slack:
            return u.copy(), L, count
        if count < max_tries:
            L *= eta
    raise NumericError(
        f"minorizer test still failing after {max_tries} increases of L (L={L:.3e}); "
        "the gradient is probably inconsistent with the value function"
    )


def panel_users(active_sets: Sequence, M: int) -> list[np.ndarray]:
    mask = activity_mask(active_sets, M)
    return [np.flatnonzero(mask[i]) for i in range(M)]


def eigenbeam_precoder(H, power) -> np.ndarray:
    """Each column the principal right singular vector of H_k, equal power split."""
    K, _, Nt = H.shape
    F = np.empty((Nt, K), dtype=complex)
    for k in range(K):
        _, _, vh = np.linalg.svd(H[k])
        F[:, k] = vh[0].conj()
    return F * np.sqrt(power / K)


def rzf_precoder(H, power, noise_var) -> np.ndarray:
    """Regularized zero-forcing on each user's dominant receive direction, full power."""
    K, _, Nt = H.shape
    rows = np.empty((K, Nt), dtype=complex)
    for k in range(K):
        u, _, _ = np.linalg.svd(H[k])
        rows[k] = u[:, 0].conj() @ H[k]
    F = rows.conj().T @ np.linalg.inv(rows @ rows.conj().T + (K * noise_var / power) * np.eye(K))
    return F * np.sqrt(power) / np.linalg.norm(F)


def initial_state(
    channels: ChannelSet, active_sets, power, noise_var, config: CrpaConfig, rng=None
) -> OptimizerState:
    M, Ni = channels.g_bs_ris.shape[:2]
    if config.init_phases == "ones" or M == 0:
        phases = np.ones((M, Ni), dtype=complex)
    else:
        if rng is None:
            raise InvalidParameterError("random phase initialization needs an rng")
        phases = np.exp(2j * np.pi * rng.random((M, Ni)))
    H = effective_channels(channels, phases, active_sets)
    if config.init_precoder == "matched":
        F = eigenbeam_precoder(H, power)
    else:
        F = rzf_precoder(H, power, noise_var)
    return OptimizerState(F=F, phases=phases)


def stationarity_deviation(channels, active_sets, state: OptimizerState, noise_var, weights=None) -> float:
    """Largest angle between c_i = g_i + L_i u_i and u_i over all active panels (radians)."""
    M = channels.g_bs_ris.shape[0]
    H = effective_channels(channels, state.phases, active_sets)
    K = H.shape[0]
    omega = _weights(weights, K)
    U, W, _ = _receivers(H, state.F, noise_var)
    worst = 0.0
    for i, users in enumerate(panel_users(active_sets, M)):
        if len(users) == 0:
            continue
        g = _gradient(channels, H, state.F, U, W, omega, i, users)
        c = g + state.lipschitz[i] * state.phases[i]
        worst = max(worst, float(np.max(np.abs(np.angle(c * state.phases[i].conj())))))
    return worst


def crpa_run(
    channels: ChannelSet,
    active_sets: Sequence,
    power: float,
    noise_var: float,
    config: CrpaConfig = CrpaConfig(),
    state: OptimizerState | None = None,
    rng: np.random.Generator | None = None,
    optimize_phases: bool = True,
    callback: Callable[[str, OptimizerState], None] | None = None,
):
    """Run the block iteration on the given active sets.

    ``callback(stage, state)`` is invoked after block "A", "B" and "C" of every
    iteration; it must not modify ``state``. With ``optimize_phases=False``
    the phases stay at their initial values (plain WMMSE precoding).
    Returns ``(state, trace)``.
    """
    _check_noise(noise_var)
    if not power > 0:
        raise InvalidParameterError(f"power must be > 0, got {power}")
    K = channels.h_direct.shape[0]
    M, Ni = channels.g_bs_ris.shape[:2]
    active_sets = [frozenset(s) for s in active_sets]
    if len(active_sets) != K:
        raise InvalidParameterError(f"need {K} active sets, got {len(active_sets)}")
    omega = config.omega(K)
    if state is None:
        state = initial_state(channels, active_sets, power, noise_var, config, rng)
    else:
        state = OptimizerState(
            F=np.array(state.F, complex),
            phases=as_phase_array(state.phases, M, Ni).copy(),
            lam=state.lam,
            lipschitz=None if state.lipschitz is None else np.array(state.lipschitz, float),
        )
    if not np.all(np.abs(np.abs(state.phases) - 1) <= 1e-12):
        raise InvalidParameterError("initial phases are not unit modulus")
    if np.linalg.norm(state.F) ** 2 > power * (1 + 1e-9):
        raise InvalidParameterError("initial precoder violates the power constraint")
    if state.lipschitz is None:
        state.lipschitz = np.full(M, config.l_init)
    users_of = panel_users(active_sets, M)

    H = effective_channels(channels, state.phases, active_sets)
    trace = IterationTrace(initial_wsr=float(np.sum(omega * _rates(H, state.F, noise_var))))
    prev = trace.initial_wsr
    for it in range(1, config.max_iter + 1):
        H = effective_channels(channels, state.phases, active_sets)
        state.U, state.W, _ = _receivers(H, state.F, noise_var)
        if callback:
            callback("A", state)

        A, B = _precoder_blocks(H, state.U, state.W, omega)
        state.F, state.lam = solve_precoder(A, B, power, config.bisect_tol, config.bisect_max)
        if config.fill_power:
            fill_power(state, power)
        if callback:
            callback("B", state)

        counts = [0] * M
        if optimize_phases:
            for i in range(M):
                users = users_of[i]
                if len(users) == 0:
                    continue
                counts[i] = _panel_step(channels, H, state, omega, noise_var, config, i, users)
        J = _objective(H, state.F, state.U, state.W, noise_var, omega)
        if callback:
            callback("C", state)

        cur = float(np.sum(omega * _rates(H, state.F, noise_var)))
        trace.wsr.append(cur)
        trace.wmmse_obj.append(J)
        trace.backtrack_counts.append(counts)
        if (cur - prev) / max(abs(prev), 1e-300) < config.eps:
            trace.converged_at = it
            break
        prev = cur
    return state, trace


def fill_power(state: OptimizerState, power: float) -> float:
    """Scale an interior precoder up to full power, receivers down by the same factor.

    Every U_k^H H_k f_j is unchanged while the noise part of each MSE shrinks,
    so the WMMSE objective cannot increase; the MMSE sum rate cannot decrease
    because all SINRs grow with a common power scale. Returns the factor.
    """
    p = float(np.linalg.norm(state.F) ** 2)
    if p <= 0 or p >= power:
        return 1.0
    c = np.sqrt(power / p)
    state.F = state.F * c
    state.U = state.U / c
    return float(c)


def _panel_step(channels, H, state, omega, noise_var, config, i, users) -> int:
    """Backtracked phase update of panel ``i``; updates ``H`` and ``state`` in place."""
    U, W, F = state.U, state.W, state.F
    G = channels.g_bs_ris[i]
    u_old = state.phases[i]
    t_full = np.einsum("kr,krt->kt", U[users].conj(), H[users])
    b = np.einsum("kr,krm->km", U[users].conj(), channels.h_ris_ue[i, users])  # U_k^H H_r,i->k
    t_base = t_full - (b * u_old) @ G
    cw = omega[users] * W[users]
    const = np.sum(omega[users] * np.log(W[users]))

    def value(u):
        t = t_base + (b * u) @ G
        return -float(np.sum(cw * _mse_from_t(t, F, U, noise_var, users)) - const)

    tF = t_full @ F
    scale = float(np.sum(cw * (1.0 + np.sum(np.abs(tF) ** 2, axis=1) + 2 * np.abs(tF).max(axis=1))))
    g = _gradient(channels, H, F, U, W, omega, i, users)
    u_new, state.lipschitz[i], count = backtrack_and_update(
        value, u_old, g, state.lipschitz[i], config.eta, config.backtrack_max, scale=scale
    )
    delta = u_new - u_old
    if np.any(delta):
        for k in users:
            H[k] += (channels.h_ris_ue[i, k] * delta) @ G
        state.phases[i] = u_new
    return count
