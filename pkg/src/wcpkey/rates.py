"""Phase-error bounds, asymptotic key rates and per-pulse gains.

Three source models are supported:

``nonrandom``
    equal reference and signal pulses whose phase is known to Eve; privacy
    amplification is charged with the phase error inflated by the coin
    imbalance ``delta_prime = delta(mu)/Q``.
``bright``
    same, but with a reference pulse ``bright_ratio`` times brighter than the
    signal; ``mu`` then denotes the signal-pulse mean photon number.
``random``
    phase-randomized pulses without decoys, where every multi-photon pulse
    is assumed tagged (``delta_prime = p_M/Q``).
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.optimize import bisect, brentq

from .constants import DISTANCE_CAP_KM
from .detection import GYS_LIKE, SystemParams, detection_prob_Q, intrinsic_error_rate
from .qmath import binary_entropy
from .source import coin_imbalance, effective_imbalance, multiphoton_prob

logger = logging.getLogger(__name__)

MU_GRID_POINTS = 200
MU_MAX = 1.0
MU_MIN = 1e-6
DEFAULT_BRIGHT_RATIO = 100.0


class RateModel(enum.Enum):
    NONRANDOM = "nonrandom"
    RANDOM = "random"
    BRIGHT = "bright"


@dataclass(frozen=True)
class RateInputs:
    Q: float
    e: float
    delta_prime: float
    f_ec: float = 1.22
    epsilon: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.Q <= 1.0:
            raise ValueError(f"Q must lie in (0, 1], got {self.Q}")
        if not 0.0 <= self.e <= 0.5:
            raise ValueError(f"e must lie in [0, 0.5], got {self.e}")
        if not 0.0 <= self.delta_prime <= 0.5:
            raise ValueError(f"delta_prime must lie in [0, 0.5], got {self.delta_prime}")
        if self.f_ec < 1.0:
            raise ValueError("f_ec must be >= 1")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be >= 0")


@dataclass(frozen=True)
class RatePoint:
    """One optimized (or evaluated) point of a rate curve; ``G`` is in key bits per pulse."""

    distance_km: float
    mu: float
    Q: float
    e: float
    delta_prime: float
    e_ph: float
    G: float
    insecure: bool = False

    CSV_FIELDS = ("distance_km", "mu", "Q", "e", "delta_prime", "e_ph", "G")

    def csv_row(self) -> list[str]:
        return [f"{getattr(self, name):.10g}" for name in self.CSV_FIELDS]


def entropy_capped(x: float) -> float:
    """Binary entropy, saturated at 1 for arguments at or beyond 0.5."""
    if x >= 0.5:
        return 1.0
    return binary_entropy(max(0.0, x))


def phase_error_closed(delta: float, delta_prime: float, epsilon: float = 0.0) -> float:
    """Upper bound on the phase error rate given bit error ``delta`` and imbalance ``delta_prime``.

    Values above 0.5 are returned unclamped and mean the bound is saturated
    (no key can be distilled).
    """
    if not 0.0 <= delta <= 0.5:
        raise ValueError(f"delta must lie in [0, 0.5], got {delta}")
    if not 0.0 <= delta_prime <= 0.5:
        raise ValueError(f"delta_prime must lie in [0, 0.5], got {delta_prime}")
    d, c = delta, delta_prime
    return (
        d
        + 4 * c * (1 - c) * (1 - 2 * d)
        + 4 * (1 - 2 * c) * math.sqrt(c * (1 - c) * d * (1 - d))
        + epsilon
    )


def phase_error_lowest_order(delta: float, delta_prime: float, epsilon: float = 0.0) -> float:
    """Cruder bound ``delta + 4 delta' + 4 sqrt(delta' delta) + epsilon``."""
    return delta + 4 * delta_prime + 4 * math.sqrt(delta_prime * delta) + epsilon


def phase_error_numeric(delta: float, delta_prime: float) -> float:
    """Largest ``delta_p >= delta`` with ``1 - 2 delta' <= sqrt(delta delta_p) + sqrt((1-delta)(1-delta_p))``.

    Solved by bisection; the right-hand side decreases monotonically in
    ``delta_p`` on ``[delta, 1]``.  Returns 1.0 if the inequality holds on
    the whole interval.
    """
    if not 0.0 <= delta <= 0.5:
        raise ValueError(f"delta must lie in [0, 0.5], got {delta}")
    if not 0.0 <= delta_prime < 0.5:
        raise ValueError(f"need 0 <= delta_prime < 0.5, got {delta_prime}")
    target = 1.0 - 2.0 * delta_prime

    def slack(dp: float) -> float:
        return math.sqrt(delta * dp) + math.sqrt((1 - delta) * (1 - dp)) - target

    if delta_prime == 0.0:
        return delta
    if slack(1.0) >= 0.0:
        return 1.0
    return bisect(slack, delta, 1.0, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)


def phase_error_tagged(delta: float, delta_prime: float) -> float:
    """Phase error when a fraction ``delta_prime`` of coins is fully damaged and the rest intact."""
    return delta + delta_prime / 2


def rate_R(delta_x: float, delta_y: float, delta_prime: float) -> float:
    """Secret fraction of sifted key, ``1 - H(delta_x) - H(delta_y')``."""
    dyp = phase_error_closed(delta_y, delta_prime, 0.0)
    return 1.0 - binary_entropy(delta_x) - entropy_capped(dyp)


def gain_nonrandom(inputs: RateInputs, clamp: bool = True) -> float:
    """Key bits per pulse for a source whose phase Eve knows."""
    e_ph = phase_error_closed(inputs.e, inputs.delta_prime, inputs.epsilon)
    g = 0.5 * inputs.Q * (1 - inputs.f_ec * binary_entropy(inputs.e) - entropy_capped(e_ph))
    return max(0.0, g) if clamp else g


def gain_random(Q: float, e: float, mu: float, f_ec: float, clamp: bool = True) -> float:
    """Key bits per pulse for a phase-randomized source, all errors blamed on single photons."""
    if not 0.0 < Q <= 1.0:
        raise ValueError(f"Q must lie in (0, 1], got {Q}")
    tagged = multiphoton_prob(mu) / Q
    if tagged >= 1.0:
        return 0.0 if clamp else -0.5 * Q * f_ec * binary_entropy(e)
    e1 = e / (1 - tagged)
    q1 = Q * (1 - tagged)
    g = 0.5 * (q1 * (1 - entropy_capped(e1)) - Q * f_ec * binary_entropy(e))
    return max(0.0, g) if clamp else g


def _as_model(kind) -> RateModel:
    return kind if isinstance(kind, RateModel) else RateModel(kind)


def evaluate_point(
    kind,
    mu: float,
    distance_km: float,
    params: SystemParams = GYS_LIKE,
    bright_ratio: float = DEFAULT_BRIGHT_RATIO,
    epsilon: float = 0.0,
) -> RatePoint:
    """Rate bookkeeping at a fixed ``mu``.

    For the ``random`` model ``delta_prime`` is the tagged fraction
    ``p_M/Q`` and ``e_ph`` is the single-photon error ``e/(1 - p_M/Q)``.
    """
    kind = _as_model(kind)
    chan = params.channel(distance_km)
    det = params.detector()
    ratio = bright_ratio if kind is RateModel.BRIGHT else None
    q = detection_prob_Q(mu, chan, det, ratio)
    if q <= 0.0:
        return RatePoint(distance_km, mu, 0.0, 0.5, 0.5, 0.5, 0.0, True)
    e = intrinsic_error_rate(mu, chan, det, ratio)
    if kind is RateModel.RANDOM:
        tagged = multiphoton_prob(mu) / q
        e1 = e / (1 - tagged) if tagged < 1 else 0.5
        g = gain_random(q, e, mu, params.f_ec, clamp=False)
        return RatePoint(distance_km, mu, q, e, tagged, e1, max(0.0, g), g <= 0.0)
    coin_mu = 2 * mu if kind is RateModel.BRIGHT else mu
    dprime = effective_imbalance(coin_imbalance(coin_mu), q)
    inputs = RateInputs(Q=q, e=e, delta_prime=dprime, f_ec=params.f_ec, epsilon=epsilon)
    g = gain_nonrandom(inputs, clamp=False)
    e_ph = phase_error_closed(e, dprime, epsilon)
    return RatePoint(distance_km, mu, q, e, dprime, e_ph, max(0.0, g), g <= 0.0)


INV_PHI = (math.sqrt(5) - 1) / 2


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10) -> float:
    """Maximizer of a unimodal ``f`` on ``[a, b]`` by golden-section search."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return c if fc >= fd else d


def mu_search_range(kind, distance_km: float, params: SystemParams, bright_ratio: float) -> tuple[float, float]:
    """Bounds of the mu grid; the lower bound follows the transmittance so lossy links stay resolvable."""
    eta = params.xi * params.channel(distance_km).transmission
    if _as_model(kind) is RateModel.BRIGHT:
        eta *= 2 * bright_ratio / (1 + bright_ratio)
    return min(MU_MIN, 1e-3 * eta), MU_MAX


def optimize_mu(
    kind,
    distance_km: float,
    params: SystemParams = GYS_LIKE,
    bright_ratio: float = DEFAULT_BRIGHT_RATIO,
    epsilon: float = 0.0,
) -> RatePoint:
    """Maximize the gain over mu: log grid, then golden-section refinement between grid neighbours.

    When no grid point is secure the returned point has ``mu = G = 0`` and
    ``insecure=True``.
    """
    kind = _as_model(kind)
    lo, hi = mu_search_range(kind, distance_km, params, bright_ratio)
    grid = np.logspace(math.log10(lo), math.log10(hi), MU_GRID_POINTS)

    def raw_gain(log_mu: float) -> float:
        p = evaluate_point(kind, 10.0**log_mu, distance_km, params, bright_ratio, epsilon)
        return p.G if not p.insecure else -1.0

    points = [evaluate_point(kind, float(m), distance_km, params, bright_ratio, epsilon) for m in grid]
    gains = np.array([p.G if not p.insecure else -1.0 for p in points])
    best = int(np.argmax(gains))
    if gains[best] <= 0.0:
        return RatePoint(distance_km, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, True)
    logs = np.log10(grid)
    left = logs[max(best - 1, 0)]
    right = logs[min(best + 1, len(grid) - 1)]
    refined = golden_section_max(raw_gain, left, right)
    cand = evaluate_point(kind, 10.0**refined, distance_km, params, bright_ratio, epsilon)
    if cand.insecure or cand.G < points[best].G:
        return points[best]
    return cand


def sweep_distance(
    kind,
    d_min: float,
    d_max: float,
    step: float,
    params: SystemParams = GYS_LIKE,
    bright_ratio: float = DEFAULT_BRIGHT_RATIO,
    epsilon: float = 0.0,
) -> list[RatePoint]:
    """Optimized rate at each distance ``d_min, d_min+step, ...`` up to ``d_max``."""
    if step <= 0:
        raise ValueError("step must be positive")
    if d_max < d_min:
        raise ValueError("d_max must be >= d_min")
    count = int(math.floor((d_max - d_min) / step + 1e-9)) + 1
    distances = [d_min + i * step for i in range(count)]
    points = [optimize_mu(kind, d, params, bright_ratio, epsilon) for d in distances]
    for prev, cur in zip(points[1:], points[2:]):
        if cur.G > prev.G * (1 + 1e-9):
            warnings.warn(
                f"{_as_model(kind).value} gain increases from {prev.G:.4g} at {prev.distance_km} km "
                f"to {cur.G:.4g} at {cur.distance_km} km",
                RuntimeWarning,
                stacklevel=2,
            )
    return points


def max_secure_distance(
    kind,
    params: SystemParams = GYS_LIKE,
    bright_ratio: float = DEFAULT_BRIGHT_RATIO,
    cap_km: float = DISTANCE_CAP_KM,
    resolution_km: float = 0.1,
) -> float:
    """Largest distance with a positive optimized gain, to ``resolution_km``.

    Returns 0 if the link is insecure at zero distance and ``cap_km`` (with
    a logged warning) if it is still secure there.
    """

    def secure(d: float) -> bool:
        return not optimize_mu(kind, d, params, bright_ratio).insecure

    if not secure(0.0):
        return 0.0
    if secure(cap_km):
        logger.warning("%s link still secure at the %.0f km cap", _as_model(kind).value, cap_km)
        return cap_km
    lo, hi = 0.0, cap_km
    while hi - lo > resolution_km:
        mid = 0.5 * (lo + hi)
        if secure(mid):
            lo = mid
        else:
            hi = mid
    return lo


def zero_error_threshold() -> float:
    """Largest imbalance for which error-free sifted key still yields secret key.

    ``1 - H(x) = 0`` only at ``x = 1/2``, so the root is located on
    ``phase_error_closed(0, delta') = 1/2`` where it is a simple root.
    """
    return brentq(lambda c: phase_error_closed(0.0, c) - 0.5, 1e-9, 0.25, xtol=1e-15)


def mu_over_eta_threshold(eta: float) -> float:
    """Ratio ``mu/eta`` at which ``delta(mu)/(eta mu)`` reaches the zero-error threshold."""
    c = zero_error_threshold()
    mu = brentq(lambda m: coin_imbalance(m) / (eta * m) - c, 1e-6 * eta, 100 * eta, xtol=1e-15 * eta)
    return mu / eta


def rate_csv(points: Iterable[RatePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RatePoint.CSV_FIELDS)
    for p in points:
        w.writerow(p.csv_row())
    return buf.getvalue()
