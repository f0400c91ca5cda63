import logging
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wcpkey.detection import GYS_LIKE, SystemParams
from wcpkey.qmath import binary_entropy
from wcpkey.rates import (
    RateInputs,
    RateModel,
    RatePoint,
    entropy_capped,
    evaluate_point,
    gain_nonrandom,
    gain_random,
    golden_section_max,
    max_secure_distance,
    mu_over_eta_threshold,
    optimize_mu,
    phase_error_closed,
    phase_error_lowest_order,
    phase_error_numeric,
    phase_error_tagged,
    rate_csv,
    rate_R,
    sweep_distance,
    zero_error_threshold,
)

deltas = st.floats(0.0, 0.5)
imbalances = st.floats(0.0, 0.49)
COIN_LIMIT = 0.5 - 0.5 / math.sqrt(2)


def sin2_bound(delta, delta_prime):
    """Phase-error bound from its geometric form: delta = sin^2 a, delta' = sin^2 c -> sin^2(a + 2c)."""
    a = math.asin(math.sqrt(delta))
    c = math.asin(math.sqrt(delta_prime))
    return math.sin(a + 2 * c) ** 2 if a + 2 * c <= math.pi / 2 else 1.0


class TestPhaseError:
    def test_equality_case(self):
        assert phase_error_closed(0.0, 0.05) == pytest.approx(0.19, abs=1e-15)
        assert phase_error_numeric(0.0, 0.05) == pytest.approx(0.19, abs=1e-12)
        assert 1 - 2 * 0.05 == pytest.approx(math.sqrt(1 - 0.19), abs=1e-15)

    def test_balanced_coin(self):
        for d in (0.0, 0.01, 0.2, 0.5):
            assert phase_error_closed(d, 0.0) == d
            assert phase_error_numeric(d, 0.0) == d

    def test_reference_value(self):
        # mpmath evaluation of sin^2(asin(sqrt .03) + 2 asin(sqrt .01))
        assert phase_error_closed(0.03, 0.01) == pytest.approx(0.13375899963177275, rel=1e-14)

    def test_gain_example(self):
        expected = 0.01 + 4 * 0.01 * 0.99 * 0.98 + 4 * 0.98 * math.sqrt(0.01 * 0.99 * 0.01 * 0.99)
        assert phase_error_closed(0.01, 0.01) == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.087616, abs=1e-6)

    def test_epsilon_is_additive(self):
        assert phase_error_closed(0.02, 0.01, 0.003) == pytest.approx(phase_error_closed(0.02, 0.01) + 0.003)

    @given(deltas, imbalances)
    def test_matches_geometric_form(self, d, c):
        closed = phase_error_closed(d, c)
        geo = sin2_bound(d, c)
        if geo < 1.0:
            assert closed == pytest.approx(geo, abs=1e-12)

    @given(deltas, imbalances)
    def test_below_lowest_order(self, d, c):
        assert phase_error_closed(d, c) <= phase_error_lowest_order(d, c) + 1e-15

    @given(deltas, imbalances)
    def test_at_least_delta(self, d, c):
        assert phase_error_closed(d, c) >= d - 1e-15

    def test_grid_agreement(self):
        for d in np.linspace(0.0, 0.25, 26):
            for c in np.linspace(0.0, 0.14, 15):
                assert abs(phase_error_numeric(d, c) - phase_error_closed(d, c)) <= 1e-9

    def test_numeric_saturates(self):
        assert phase_error_numeric(0.45, 0.4) == 1.0

    @pytest.mark.parametrize("args", [(-0.1, 0.0), (0.6, 0.1), (0.1, 0.6)])
    def test_domain(self, args):
        with pytest.raises(ValueError):
            phase_error_closed(*args)
        with pytest.raises(ValueError):
            phase_error_numeric(*args)

    def test_tagged_shift(self):
        assert phase_error_tagged(0.02, 0.1) - 0.02 == pytest.approx(0.05)

    def test_entropy_capped(self):
        assert entropy_capped(0.7) == 1.0
        assert entropy_capped(0.11) == binary_entropy(0.11)


class TestRateR:
    def test_perfect(self):
        assert rate_R(0, 0, 0) == 1.0

    def test_threshold_sign(self):
        assert rate_R(0, 0, COIN_LIMIT - 1e-4) > 0
        assert rate_R(0, 0, COIN_LIMIT + 1e-4) <= 0

    def test_monotone(self):
        grid = np.linspace(0.0, 0.2, 11)
        for a in grid:
            for b in grid:
                base = rate_R(a, b, 0.05)
                assert rate_R(min(a + 0.01, 0.5), b, 0.05) <= base + 1e-15
                assert rate_R(a, min(b + 0.01, 0.5), 0.05) <= base + 1e-15
                assert rate_R(a, b, 0.06) <= base + 1e-15


class TestThresholds:
    def test_zero_error_threshold(self):
        assert zero_error_threshold() == pytest.approx(COIN_LIMIT, abs=1e-12)
        assert 1 - entropy_capped(phase_error_closed(0.0, zero_error_threshold())) == pytest.approx(0.0, abs=1e-9)

    def test_mu_over_eta(self):
        # mpmath root of Delta(mu)/(eta mu) = sin^2(pi/8) at eta = 1e-4
        assert mu_over_eta_threshold(1e-4) == pytest.approx(1.1716186309242419, rel=1e-10)
        assert mu_over_eta_threshold(1e-8) == pytest.approx(8 * COIN_LIMIT, rel=1e-7)


class TestGains:
    def test_inputs_validated(self):
        with pytest.raises(ValueError):
            RateInputs(Q=0.0, e=0.0, delta_prime=0.0)
        with pytest.raises(ValueError):
            RateInputs(Q=0.1, e=0.6, delta_prime=0.0)
        with pytest.raises(ValueError):
            RateInputs(Q=0.1, e=0.0, delta_prime=0.0, f_ec=0.9)

    def test_noiseless_nonrandom(self):
        assert gain_nonrandom(RateInputs(Q=0.3, e=0.0, delta_prime=0.0)) == pytest.approx(0.15)

    def test_noiseless_random(self):
        assert gain_random(0.3, 0.0, 0.0, 1.22) == pytest.approx(0.15)

    @given(st.floats(1e-6, 1.0), st.floats(0.0, 0.2), st.floats(1.0, 1.5))
    def test_models_agree_without_imbalance(self, q, e, f):
        a = gain_nonrandom(RateInputs(Q=q, e=e, delta_prime=0.0, f_ec=f), clamp=False)
        b = gain_random(q, e, 0.0, f, clamp=False)
        assert a == pytest.approx(b, abs=1e-12)

    def test_clamping(self):
        inputs = RateInputs(Q=0.01, e=0.1, delta_prime=0.2)
        assert gain_nonrandom(inputs, clamp=False) < 0
        assert gain_nonrandom(inputs) == 0.0

    def test_all_tagged(self):
        assert gain_random(1e-4, 0.01, 0.1, 1.22) == 0.0

    def test_vanishing_region(self):
        assert gain_nonrandom(RateInputs(Q=0.01, e=0.0, delta_prime=COIN_LIMIT - 1e-3)) > 0
        assert gain_nonrandom(RateInputs(Q=0.01, e=0.0, delta_prime=COIN_LIMIT + 1e-3)) == 0.0


class TestEvaluatePoint:
    def test_random_at_point_one_is_insecure(self):
        # multi-photon pulses outnumber detections at 10 km with these detectors
        p = evaluate_point("random", 0.1, 10.0)
        assert p.delta_prime > 1.0
        assert p.insecure and p.G == 0.0

    def test_bright_uses_doubled_coin(self):
        params = SystemParams(d0=0.0, d1=0.0)
        p = evaluate_point(RateModel.BRIGHT, 1e-3, 5.0, params, bright_ratio=1e6)
        eta = params.xi * params.channel(5.0).transmission
        assert p.delta_prime == pytest.approx(1e-3 / (4 * eta), rel=2e-3)

    def test_csv_row(self):
        p = RatePoint(1.0, 0.1, 0.2, 0.03, 0.01, 0.1, 1 / 3)
        assert p.csv_row() == ["1", "0.1", "0.2", "0.03", "0.01", "0.1", "0.3333333333"]
        text = rate_csv([p])
        assert text.splitlines()[0] == "distance_km,mu,Q,e,delta_prime,e_ph,G"


class TestOptimizer:
    def test_golden_section(self):
        x = golden_section_max(lambda t: -((t - 0.3) ** 2), 0.0, 1.0, tol=1e-12)
        assert x == pytest.approx(0.3, abs=1e-9)

    @pytest.mark.parametrize("kind", ["nonrandom", "random", "bright"])
    @pytest.mark.parametrize("dist", [0.0, 8.0])
    def test_beats_grid(self, kind, dist):
        best = optimize_mu(kind, dist)
        assert not best.insecure
        for mu in np.logspace(-6, 0, 200):
            assert best.G >= evaluate_point(kind, float(mu), dist).G

    def test_nonrandom_scaling(self):
        p = optimize_mu("nonrandom", 0.0, SystemParams(d0=0.0, d1=0.0))
        assert 0.0 < p.mu < 1.2 * GYS_LIKE.xi

    @pytest.mark.parametrize("dist", [0.0, 5.0, 10.0])
    def test_random_uses_brighter_pulses(self, dist):
        assert optimize_mu("random", dist).mu > optimize_mu("nonrandom", dist).mu

    def test_regression_values(self):
        # pinned from the first run; not an external reference
        assert optimize_mu("random", 10.0).G == pytest.approx(5.554333627987169e-05, rel=1e-6)
        assert optimize_mu("nonrandom", 10.0).G == pytest.approx(1.2381814525691806e-06, rel=1e-6)

    def test_insecure_everywhere(self):
        p = optimize_mu("nonrandom", 100.0)
        assert p.insecure and p.mu == 0.0 and p.G == 0.0


class TestSweep:
    def test_single_point(self):
        assert len(sweep_distance("nonrandom", 3.0, 3.0, 1.0)) == 1

    def test_row_count(self):
        assert len(sweep_distance("random", 0.0, 10.0, 2.5)) == 5
        assert len(sweep_distance("random", 0.0, 1.0, 0.3)) == 4

    def test_bad_args(self):
        with pytest.raises(ValueError):
            sweep_distance("random", 0.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            sweep_distance("random", 2.0, 1.0, 1.0)

    @pytest.mark.parametrize("kind", ["nonrandom", "random"])
    def test_monotone_without_warnings(self, kind):
        with warnings.catch_warnings():
            warnings.simplefilter("error", RuntimeWarning)
            pts = sweep_distance(kind, 0.0, 45.0, 1.5)
        g = [p.G for p in pts]
        assert all(b <= a for a, b in zip(g, g[1:]))

    def test_deterministic(self):
        a = rate_csv(sweep_distance("nonrandom", 0.0, 12.0, 3.0))
        b = rate_csv(sweep_distance("nonrandom", 0.0, 12.0, 3.0))
        assert a == b


class TestMaxDistance:
    def test_reference_cutoffs(self):
        # regression values for the gys-like set
        assert max_secure_distance("nonrandom") == pytest.approx(13.18, abs=0.1)
        assert max_secure_distance("random") == pytest.approx(40.16, abs=0.1)

    def test_noiseless_reaches_cap(self, caplog):
        params = SystemParams(d0=0.0, d1=0.0, e_align=0.0, f_ec=1.0)
        with caplog.at_level(logging.WARNING):
            assert max_secure_distance("nonrandom", params) == 500.0
        assert "cap" in caplog.text

    def test_darks_shorten_reach(self):
        reach = [
            max_secure_distance("random", GYS_LIKE.with_overrides(d0=d, d1=d)) for d in (5e-7, 1e-6, 2e-6, 4e-6)
        ]
        assert all(b < a for a, b in zip(reach, reach[1:]))

    def test_insecure_at_origin(self):
        assert max_secure_distance("nonrandom", GYS_LIKE.with_overrides(d0=1e-4, d1=1e-4)) == 0.0
