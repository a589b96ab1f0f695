import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from blockris.channel_model import BlockageState, ChannelSet, Geometry, SystemDims
from blockris.errors import InvalidParameterError
from blockris.sync_detect import (
    PilotConfig,
    ZcConfig,
    detect_blockage,
    detect_sets,
    jaccard,
    matched_filter,
    np_threshold,
    pilot_precoders,
    scalar_observation,
    sequence_bank,
    simulate_pilot_rx,
    zc_root,
    zc_shift,
)

ELL, Q = 63, 25


def flat_channels(M, K=1, blocked=None, Nr=1):
    """Scalar links all equal to one; Nt = Ni = 1."""
    blocked = np.zeros((M, K), bool) if blocked is None else np.asarray(blocked, bool)
    return ChannelSet(
        np.zeros((K, Nr, 1), complex),
        np.ones((M, 1, 1), complex),
        np.ones((M, K, Nr, 1), complex),
        BlockageState(blocked),
    )


def brute_periodic_corr(a, b, lag):
    n = len(a)
    return sum(a[i] * np.conj(b[(i + lag) % n]) for i in range(n))


class TestZadoffChu:
    def test_first_sample(self):
        for ell, q in [(63, 25), (13, 4), (7, 1)]:
            assert zc_root(ell, q)[0] == 1

    def test_unit_modulus(self):
        assert np.max(np.abs(np.abs(zc_root(ELL, Q)) - 1)) < 1e-12

    def test_matches_formula(self):
        n = np.arange(ELL)
        np.testing.assert_allclose(zc_root(ELL, Q), np.exp(-1j * np.pi * Q * n * (n + 1) / ELL), atol=1e-12)

    def test_ideal_autocorrelation(self):
        s = zc_root(ELL, Q)
        worst = max(abs(brute_periodic_corr(s, s, d)) for d in range(1, ELL))
        assert worst < 1e-9

    def test_noncoprime_root_rejected(self):
        with pytest.raises(InvalidParameterError):
            zc_root(63, 21)
        with pytest.raises(InvalidParameterError):
            ZcConfig(length=63, root=63)

    def test_shift_identity(self):
        s = zc_root(ELL, Q)
        assert np.array_equal(zc_shift(s, 0), s)
        assert np.array_equal(zc_shift(s, ELL), s)

    def test_shift_definition(self):
        s = zc_root(ELL, Q)
        shifted = zc_shift(s, 5)
        assert all(shifted[n] == s[(n + 5) % ELL] for n in range(ELL))

    def test_zero_lag_cross_correlation(self):
        bank = sequence_bank(ZcConfig(ELL, Q), 20)
        for i in range(20):
            for j in range(20):
                if i != j:
                    val = sum(np.conj(bank[i, n]) * bank[j, n] for n in range(ELL))
                    assert abs(val) < 1e-9

    def test_too_many_panels(self):
        with pytest.raises(InvalidParameterError):
            sequence_bank(ZcConfig(7, 3, 0), 8)


class TestPilotPrecoders:
    def geometry(self, M):
        rng = np.random.default_rng(M)
        return Geometry(100.0, np.array([50.0, 50.0]), rng.uniform(0, 100, (M, 2)), rng.uniform(0, 100, (2, 2)))

    def test_single_panel(self):
        v = pilot_precoders(self.geometry(1), 16, 3.0)
        assert math.isclose(np.linalg.norm(v[0]) ** 2, 3.0)

    def test_equal_split(self):
        v = pilot_precoders(self.geometry(4), 16, 1.0)
        np.testing.assert_allclose(np.linalg.norm(v, axis=1) ** 2, 0.25)
        assert math.isclose(np.sum(np.abs(v) ** 2), 1.0)


class TestReception:
    cfg = ZcConfig(ELL, Q, 8)

    def test_all_blocked_noiseless(self):
        ch = flat_channels(3, K=2, blocked=np.ones((3, 2)))
        y = simulate_pilot_rx(ch, self.cfg, PilotConfig(1.0), None, precoders=np.ones((3, 1)))
        assert not np.any(y)

    def test_single_panel_exact(self):
        rng = np.random.default_rng(0)
        ch = ChannelSet(
            np.zeros((1, 2, 3), complex),
            rng.standard_normal((1, 4, 3)) + 0j,
            rng.standard_normal((1, 1, 2, 4)) + 1j * rng.standard_normal((1, 1, 2, 4)),
            BlockageState(np.zeros((1, 1), bool)),
        )
        v = rng.standard_normal((1, 3)) + 0j
        y = simulate_pilot_rx(ch, self.cfg, PilotConfig(1.0), None, precoders=v)
        s0 = sequence_bank(self.cfg, 1)[0]
        expected = (ch.h_ris_ue[0, 0] @ ch.g_bs_ris[0] @ v[0])[:, None] * s0[None, :]
        np.testing.assert_allclose(y[0], expected, atol=1e-12)

    def test_noise_variance(self):
        ch = flat_channels(1, blocked=[[True]], Nr=1)
        rng = np.random.default_rng(3)
        pilot = PilotConfig(1.0, noise_var=2.5)
        y = np.concatenate([simulate_pilot_rx(ch, self.cfg, pilot, rng, precoders=np.ones((1, 1))).ravel() for _ in range(1600)])
        assert y.size >= 100_000
        assert abs(np.var(y) / 2.5 - 1) < 0.03


class TestScalarObservation:
    def test_single_antenna_identity(self):
        y = np.arange(5.0).reshape(1, 5) + 1j
        np.testing.assert_array_equal(scalar_observation(y), y[0])

    def test_constant_vector(self):
        assert scalar_observation(np.ones((4, 1)))[0] == pytest.approx(2.0)

    def test_noise_variance_kept(self):
        rng = np.random.default_rng(5)
        y = (rng.standard_normal((4, 100_000)) + 1j * rng.standard_normal((4, 100_000))) * np.sqrt(0.7 / 2)
        assert abs(np.var(scalar_observation(y)) / 0.7 - 1) < 0.03


class TestMatchedFilter:
    cfg = ZcConfig(ELL, Q, 8)

    def test_coherent_gain(self):
        ch = flat_channels(1)
        y = simulate_pilot_rx(ch, self.cfg, PilotConfig(1.0), None, precoders=np.ones((1, 1)))
        z = matched_filter(scalar_observation(y), sequence_bank(self.cfg, 1))
        assert z[0, 0] == pytest.approx(63.0, abs=1e-10)

    def test_no_leakage(self):
        M = 6
        for j in range(M):
            blocked = np.ones((M, 1), bool)
            blocked[j] = False
            ch = flat_channels(M, blocked=blocked)
            y = simulate_pilot_rx(ch, self.cfg, PilotConfig(1.0), None, precoders=np.ones((M, 1)))
            z = matched_filter(scalar_observation(y), sequence_bank(self.cfg, M))[0]
            assert abs(z[j]) == pytest.approx(63.0, abs=1e-9)
            assert np.max(np.abs(np.delete(z, j))) < 1e-9

    def test_noise_only_energy(self):
        rng = np.random.default_rng(8)
        s2 = 0.5
        n = 100_000
        noise = np.sqrt(s2 / 2) * (rng.standard_normal((n, ELL)) + 1j * rng.standard_normal((n, ELL)))
        z = matched_filter(noise, zc_root(ELL, Q))
        assert abs(np.mean(np.abs(z) ** 2) / (s2 * ELL) - 1) < 0.03

    def test_noise_energy_is_exponential(self):
        rng = np.random.default_rng(9)
        s2 = 1.3
        noise = np.sqrt(s2 / 2) * (rng.standard_normal((10_000, ELL)) + 1j * rng.standard_normal((10_000, ELL)))
        energy = np.abs(matched_filter(noise, zc_root(ELL, Q))) ** 2
        res = stats.kstest(energy, "expon", args=(0, s2 * ELL))
        assert res.statistic < 1.628 / math.sqrt(10_000)

    def test_length_mismatch(self):
        with pytest.raises(InvalidParameterError):
            matched_filter(np.ones(10), np.ones(11))


class TestThreshold:
    def test_reference_value(self):
        assert np_threshold(0.001, 1.0, 63) == pytest.approx(63 * math.log(1000))
        assert np_threshold(0.001, 1.0, 63) == pytest.approx(435.19, abs=0.01)

    def test_monte_carlo_false_alarm(self):
        rng = np.random.default_rng(4)
        alpha = 0.01
        samples = rng.exponential(2.0 * 63, size=200_000)
        rate = np.mean(samples >= np_threshold(alpha, 2.0, 63))
        assert abs(rate - alpha) < 4 * math.sqrt(alpha * (1 - alpha) / samples.size)

    def test_degenerate_alpha(self):
        assert np_threshold(1.0, 3.0, 63) == 0.0

    def test_unit_case(self):
        assert np_threshold(math.exp(-1), 1.0, 1) == pytest.approx(1.0)

    def test_invalid(self):
        with pytest.raises(InvalidParameterError):
            np_threshold(0.0, 1.0, 63)

    @given(st.floats(1e-9, 1.0), st.floats(1e-9, 1.0))
    def test_lower_alpha_never_lowers_tau(self, a, b):
        lo, hi = sorted((a, b))
        assert np_threshold(lo, 1.0, 63) >= np_threshold(hi, 1.0, 63)


class TestDetectSets:
    def test_all_zero(self):
        assert detect_sets(np.zeros((2, 3)), [1.0, 1.0, 1.0]) == [frozenset(), frozenset()]

    def test_zero_threshold(self):
        assert detect_sets(np.zeros((1, 3)), 0.0) == [frozenset({0, 1, 2})]

    def test_direct_comparison(self):
        z = np.sqrt(np.array([[10.0, 1.0]]))
        assert detect_sets(z, [5.0, 5.0]) == [frozenset({0})]

    @given(
        st.lists(st.floats(0, 100), min_size=1, max_size=8),
        st.floats(0, 100),
        st.floats(0, 100),
    )
    def test_raising_tau_never_grows_set(self, energies, t1, t2):
        z = np.sqrt(np.array([energies]))
        lo, hi = sorted((t1, t2))
        assert detect_sets(z, hi)[0] <= detect_sets(z, lo)[0]


class TestJaccard:
    def test_identical(self):
        assert jaccard({1, 2}, {1, 2}) == 1

    def test_disjoint_empty(self):
        assert jaccard(set(), {1}) == 0

    def test_partial(self):
        assert jaccard({1, 2, 3}, {2, 3, 4}) == 0.5

    def test_both_empty(self):
        assert jaccard(set(), set()) == 1.0

    @given(st.sets(st.integers(0, 12)), st.sets(st.integers(0, 12)))
    def test_bounds_and_symmetry(self, a, b):
        j = jaccard(a, b)
        assert 0.0 <= j <= 1.0
        assert j == jaccard(b, a)
        assert (j == 1.0) == (a == b)


class TestPipeline:
    def test_false_alarm_rate(self):
        M = 8
        ch = flat_channels(M, blocked=np.ones((M, 1)))
        pilot = PilotConfig(1.0, alpha=0.05)
        cfg = ZcConfig(ELL, Q, 8)
        rng = np.random.default_rng(21)
        hits = np.zeros(M)
        n = 10_000
        for _ in range(n):
            rep = detect_blockage(ch, cfg, pilot, rng, precoders=np.ones((M, 1)))
            for i in rep.estimated_sets[0]:
                hits[i] += 1
        sd = math.sqrt(0.05 * 0.95 / n)
        assert np.all(np.abs(hits / n - 0.05) <= 4 * sd)

    def test_deterministic(self):
        dims = SystemDims(K=2, M=3, Nt=4, Nr=2, Ni=4)
        from blockris.channel_model import generate_channels, random_geometry

        rng = np.random.default_rng(0)
        ch = generate_channels(dims, random_geometry(dims, 100.0, rng), 5.0, 0.3, rng)
        a = detect_blockage(ch, ZcConfig(), PilotConfig(1.0), np.random.default_rng(5))
        b = detect_blockage(ch, ZcConfig(), PilotConfig(1.0), np.random.default_rng(5))
        assert a.z.tobytes() == b.z.tobytes()
        assert a.estimated_sets == b.estimated_sets

    def test_report_consistency(self):
        M = 4
        ch = flat_channels(M, blocked=[[False], [True], [False], [True]])
        rep = detect_blockage(ch, ZcConfig(ELL, Q, 8), PilotConfig(1.0), np.random.default_rng(1), precoders=np.ones((M, 1)))
        for i in range(M):
            assert (i in rep.estimated_sets[0]) == (rep.energy[0, i] >= rep.tau[i])
        assert rep.estimated_sets[0] == frozenset({0, 2})
        assert rep.jaccard[0] == 1.0

    def test_per_panel_alpha(self):
        pilot = PilotConfig(1.0, alpha=(0.1, 0.01))
        np.testing.assert_allclose(pilot.alphas(2), [0.1, 0.01])
        with pytest.raises(InvalidParameterError):
            pilot.alphas(3)


def test_batched_hits_match_single_interval():
    from blockris.channel_model import SystemDims, generate_channels, random_geometry
    from blockris.sync_detect import detection_hits

    dims = SystemDims(K=2, M=4, Nt=4, Nr=2, Ni=4)
    rng = np.random.default_rng(8)
    ch = generate_channels(dims, random_geometry(dims, 100.0, rng), 5.0, 0.5, rng)
    pilot = PilotConfig(0.3)
    hits = detection_hits(ch, ZcConfig(), pilot, np.random.default_rng(2), draws=1)
    rep = detect_blockage(ch, ZcConfig(), pilot, np.random.default_rng(2))
    assert hits.shape == (1, 2, 4)
    assert [frozenset(np.flatnonzero(r).tolist()) for r in hits[0]] == rep.estimated_sets
