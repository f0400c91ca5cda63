import math

import numpy as np
import pytest

from wcpkey import attack
from wcpkey.detection import (
    GYS_LIKE,
    ChannelParams,
    DetectorParams,
    DoubleClickPolicy,
    detection_prob_Q,
    intrinsic_error_rate,
)
from wcpkey.protosim import (
    TALLY_FIELDS,
    EveStrategy,
    RoundTally,
    bloch_bound_check,
    estimate_error_rates,
    run_protocol,
    tally_csv,
    ukd_expected,
)
from wcpkey.qmath import pure_state, random_density_matrix
from wcpkey.source import SourceKind, SourceVariant

IDEAL = DetectorParams(d0=0.0, d1=0.0, xi=1.0, e_align=0.0)
LOSSLESS = ChannelParams(0.0, 0.0)


def unmod(mu):
    return SourceVariant(SourceKind.UNMODULATED_REF, math.sqrt(mu / 2))


def z(observed, expected, n):
    return (observed - expected) / math.sqrt(expected * (1 - expected) / n)


class TestTally:
    def test_addition(self):
        a = RoundTally(sent=3, detected=2, sifted=1, sifted_x=1)
        b = RoundTally(sent=1, detected=1, sifted=1, sifted_y=1, errors_y=1)
        c = a + b
        assert (c.sent, c.detected, c.sifted, c.errors_y) == (4, 3, 2, 1)
        c.check()

    @pytest.mark.parametrize(
        "kw",
        [
            dict(sent=1, detected=2),
            dict(sent=5, detected=2, sifted=3, sifted_x=3),
            dict(sent=5, detected=2, sifted=1, sifted_x=1, errors_x=2),
            dict(sent=5, detected=2, sifted=2, sifted_x=1),
        ],
    )
    def test_check_rejects(self, kw):
        with pytest.raises(AssertionError):
            RoundTally(**kw).check()

    def test_csv(self):
        text = tally_csv([RoundTally(sent=7)])
        header, row = text.splitlines()
        assert header.split(",") == list(TALLY_FIELDS)
        assert row.split(",")[0] == "7"


class TestEstimates:
    def test_all_agree(self):
        est = estimate_error_rates(RoundTally(sent=10, detected=4, sifted=4, sifted_x=2, sifted_y=2))
        assert (est.delta_x, est.delta_y) == (0.0, 0.0)
        assert est.Q_hat == 0.4

    def test_synthetic(self):
        t = RoundTally(sent=1000, detected=300, sifted=200, errors_x=10, sifted_x=100, sifted_y=100)
        est = estimate_error_rates(t)
        assert est.delta_x == pytest.approx(0.10)
        assert est.se_x == pytest.approx(0.03)
        assert est.delta == pytest.approx(0.05)

    def test_empty_stratum(self):
        with pytest.raises(ValueError):
            estimate_error_rates(RoundTally(sent=10, detected=1, sifted=1, sifted_x=1))


class TestRunProtocol:
    def test_deterministic_and_parallel(self):
        args = (200_000, unmod(0.1), GYS_LIKE.channel(5.0), GYS_LIKE.detector())
        a = run_protocol(*args, seed=7)
        assert run_protocol(*args, seed=7) == a
        assert run_protocol(*args, seed=7, workers=3) == a
        assert run_protocol(*args, seed=8) != a

    def test_input_validation(self):
        with pytest.raises(ValueError):
            run_protocol(0, unmod(0.1), LOSSLESS, IDEAL)
        with pytest.raises(ValueError):
            run_protocol(10, unmod(0.1), LOSSLESS, IDEAL, seed=-1)
        with pytest.raises(ValueError):
            run_protocol(10, unmod(0.1), LOSSLESS, IDEAL, eve=EveStrategy.UKD_INTERCEPT_RESEND)

    def test_ideal_link(self):
        mu, n = 0.3, 1_000_000
        t = run_protocol(n, unmod(mu), LOSSLESS, IDEAL, seed=1)
        assert abs(z(t.detected / n, 1 - math.exp(-mu), n)) < 3
        # mismatched bases split the light and can double-click; sifted rounds never err
        assert t.errors_x == t.errors_y == 0

    @pytest.mark.parametrize("kind", [SourceKind.MODULATED_REF, SourceKind.BRIGHT_REF])
    def test_other_sources_error_free(self, kind):
        v = SourceVariant(kind, 0.3, 3.0 if kind is SourceKind.BRIGHT_REF else None)
        t = run_protocol(100_000, v, LOSSLESS, IDEAL, seed=2)
        assert t.sifted > 0 and t.errors_x == t.errors_y == 0

    def test_bright_detection_rate(self):
        mu_s, ratio, n = 0.05, 100.0, 1_000_000
        v = SourceVariant(SourceKind.BRIGHT_REF, math.sqrt(mu_s), math.sqrt(mu_s * ratio))
        t = run_protocol(n, v, LOSSLESS, IDEAL, seed=3)
        assert abs(z(t.detected / n, detection_prob_Q(mu_s, LOSSLESS, IDEAL, ratio), n)) < 4

    @pytest.mark.parametrize("mu", [0.05, 0.1, 0.5])
    def test_matches_analytics(self, mu):
        n = 1_000_000
        chan, det = GYS_LIKE.channel(20.0), GYS_LIKE.detector()
        t = run_protocol(n, unmod(mu), chan, det, seed=11)
        assert abs(z(t.detected / n, detection_prob_Q(mu, chan, det), n)) < 4
        est = estimate_error_rates(t)
        assert abs(z(est.delta, intrinsic_error_rate(mu, chan, det), t.sifted)) < 4

    def test_basis_independent_filter(self):
        n = 1_000_000
        t = run_protocol(n, unmod(0.5), GYS_LIKE.channel(5.0), GYS_LIKE.detector(), seed=5)
        nx, ny = t.bob_x_rounds, n - t.bob_x_rounds
        fx = 1 - t.bob_x_detected / nx
        fy = 1 - (t.detected - t.bob_x_detected) / ny
        se = math.sqrt(fx * (1 - fx) / nx + fy * (1 - fy) / ny)
        assert abs(fx - fy) < 4 * se

    @pytest.mark.parametrize("policy", list(DoubleClickPolicy))
    def test_double_click_policies(self, policy):
        det = DetectorParams(d0=0.05, d1=0.05, xi=1.0, e_align=0.0)
        t = run_protocol(50_000, unmod(2.0), LOSSLESS, det, seed=4, double_click=policy)
        assert t.double_clicks > 0
        t.check()


class TestUkd:
    def test_statistics_ideal_detector(self):
        mu, n = 0.02, 2_000_000
        v = SourceVariant(SourceKind.MODULATED_REF, math.sqrt(mu / 2))
        t = run_protocol(n, v, GYS_LIKE.channel(50.0), IDEAL, eve=EveStrategy.UKD_INTERCEPT_RESEND, seed=9)
        p_c = 0.5 * (attack.conclusive_prob(0, mu) + attack.conclusive_prob(1, mu))
        assert abs(z(t.detected / n, p_c, n)) < 3
        est = estimate_error_rates(t)
        assert abs(z(est.delta, attack.resend_error_rate(), t.sifted)) < 3

    def test_expected_with_noise(self):
        mu, n = 0.05, 1_000_000
        det = DetectorParams(d0=1e-3, d1=2e-3, xi=0.5, e_align=0.02)
        v = SourceVariant(SourceKind.MODULATED_REF, math.sqrt(mu / 2))
        t = run_protocol(n, v, LOSSLESS, det, eve=EveStrategy.UKD_INTERCEPT_RESEND, seed=10)
        q, e = ukd_expected(mu, det)
        assert abs(z(t.detected / n, q, n)) < 4
        assert abs(z(estimate_error_rates(t).delta, e, t.sifted)) < 4

    def test_expected_reduces_to_attack(self):
        q, e = ukd_expected(0.02, IDEAL)
        assert q == pytest.approx(0.5 * (attack.conclusive_prob(0, 0.02) + attack.conclusive_prob(1, 0.02)))
        assert e == pytest.approx(attack.resend_error_rate(), abs=1e-15)


class TestBloch:
    def test_saturating_pure_state(self):
        r = bloch_bound_check(10_000, pure_state([1, 0]), seed=1)
        assert r.ok
        assert r.gamma_z == 0.0
        assert r.gamma_x == pytest.approx(0.5, abs=0.02)
        assert r.lhs == pytest.approx(1.0, abs=0.01)

    def test_maximally_mixed(self):
        r = bloch_bound_check(10_000, np.eye(2) / 2, seed=2)
        assert r.ok and r.lhs < 0.01

    def test_random_pure_states(self):
        rng = np.random.default_rng(12)
        for i in range(200):
            r = bloch_bound_check(100_000, random_density_matrix(2, rng, rank=1), seed=i)
            assert r.ok, r

    def test_minimum_n(self):
        with pytest.raises(ValueError):
            bloch_bound_check(999, np.eye(2) / 2)
