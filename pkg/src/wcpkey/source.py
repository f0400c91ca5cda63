"""BB84 weak coherent-state sources and their basis dependence.

The basis dependence of a source is summarized by the imbalance of a
fictitious quantum coin: ``delta = (1 - <Psi_y|Psi_x>)/2``, where the
overlap is between the maximal-overlap purifications of the two
basis-averaged signal ensembles.  Loss lets an adversary concentrate the
imbalance on the detected signals, giving the effective ``delta_prime``.
"""

from __future__ import annotations

import cmath
import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaln

from .qmath import coherent_overlap

logger = logging.getLogger(__name__)

LABELS = ("0_X", "1_X", "0_Y", "1_Y")

# below this argument the overlap is summed as a power series
_SERIES_CUTOFF = 0.5
_SERIES_TERMS = 40


class SourceKind(enum.Enum):
    UNMODULATED_REF = "unmodulated"
    MODULATED_REF = "modulated"
    BRIGHT_REF = "bright"


@dataclass(frozen=True)
class SourceVariant:
    """Source type plus signal amplitude ``alpha`` and reference amplitude ``beta``.

    ``beta`` defaults to ``alpha`` and is only free for ``BRIGHT_REF``.
    """

    kind: SourceKind
    alpha: complex
    beta: complex | None = None

    def __post_init__(self):
        alpha = complex(self.alpha)
        if not cmath.isfinite(alpha):
            raise ValueError("alpha must be finite")
        beta = alpha if self.beta is None else complex(self.beta)
        if not cmath.isfinite(beta):
            raise ValueError("beta must be finite")
        if self.kind is SourceKind.BRIGHT_REF:
            if abs(beta) < abs(alpha):
                raise ValueError("bright reference requires |beta| >= |alpha|")
        elif abs(abs(beta) - abs(alpha)) > 1e-12 * max(1.0, abs(alpha)):
            raise ValueError(f"{self.kind.value} source requires |beta| == |alpha|")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def signal_mean_photons(self) -> float:
        return abs(self.alpha) ** 2


@dataclass(frozen=True)
class SignalSet:
    """Four labelled two-mode coherent states as ``(reference, signal)`` amplitude pairs."""

    variant: SourceVariant
    states: dict[str, tuple[complex, complex]] = field(default_factory=dict)

    def __getitem__(self, label: str) -> tuple[complex, complex]:
        return self.states[label]


@dataclass(frozen=True)
class CoinStats:
    mu: float
    delta: float
    delta_prime: float


def make_signal_set(variant: SourceVariant) -> SignalSet:
    a = variant.alpha
    if variant.kind is SourceKind.MODULATED_REF:
        w = cmath.exp(1j * math.pi / 4)
        states = {
            "0_X": (a, a),
            "1_X": (-1j * a, 1j * a),
            "0_Y": (a / w, w * a),
            "1_Y": (w * a, a / w),
        }
    else:
        r = variant.beta
        states = {
            "0_X": (r, a),
            "1_X": (r, -a),
            "0_Y": (r, 1j * a),
            "1_Y": (r, -1j * a),
        }
    return SignalSet(variant=variant, states=states)


def truncated_fock_vector(amplitude: complex, n_max: int) -> np.ndarray:
    """Fock coefficients ``e^{-|a|^2/2} a^n / sqrt(n!)`` for ``n <= n_max``."""
    n = np.arange(n_max + 1)
    a = complex(amplitude)
    if a == 0:
        out = np.zeros(n_max + 1, dtype=complex)
        out[0] = 1.0
        return out
    log_mag = n * math.log(abs(a)) - 0.5 * gammaln(n + 1) - abs(a) ** 2 / 2
    return np.exp(log_mag) * np.exp(1j * n * cmath.phase(a))


def signal_gram(signals: SignalSet, n_max: int = 1) -> np.ndarray:
    """Gram matrix of the four signals with each mode truncated at ``n_max`` photons."""
    vecs = [
        np.kron(truncated_fock_vector(r, n_max), truncated_fock_vector(s, n_max))
        for r, s in (signals[lab] for lab in LABELS)
    ]
    m = np.array(vecs)
    return m.conj() @ m.T


def numerical_rank(gram: np.ndarray, tol: float) -> int:
    w = np.linalg.eigvalsh((gram + gram.conj().T) / 2)
    return int(np.sum(w > tol))


def _one_minus_overlap(mu: float) -> float:
    """``1 - e^{-x}(cos x + sin x)`` with ``x = mu/2``, cancellation-free for small mu.

    Uses ``e^{-x}(cos x + sin x) = Re[(1-i) e^{(-1+i) x}]`` whose Taylor
    coefficients are ``2^{(n+1)/2} cos((3n-1) pi/4) / n!``; the n=0,1 terms
    are 1 and 0.
    """
    x = mu / 2.0
    if x < _SERIES_CUTOFF:
        total = 0.0
        term = 1.0  # x^n / n!
        for n in range(1, _SERIES_TERMS):
            term *= x / n
            if n < 2:
                continue
            coeff = 2.0 ** ((n + 1) / 2) * math.cos((3 * n - 1) * math.pi / 4)
            total -= coeff * term
            if term < 1e-18 * abs(total):
                break
        return total
    return 1.0 - math.exp(-x) * (math.cos(x) + math.sin(x))


def _check_mu(mu: float) -> float:
    mu = float(mu)
    if not (mu >= 0.0 and math.isfinite(mu)):
        raise ValueError(f"mean photon number must be finite and >= 0, got {mu}")
    return mu


def purification_overlap(mu: float) -> float:
    """``<Psi_y|Psi_x> = e^{-mu/2}(cos(mu/2) + sin(mu/2))``."""
    return 1.0 - _one_minus_overlap(_check_mu(mu))


def purification_overlap_direct(mu: float) -> float:
    """Same overlap assembled from coherent-state inner products of the purifications.

    ``<Psi_y|Psi_x> = (<1_Y|0_X><i a|a> + <1_Y|1_X><i a|-a>
    + <0_Y|0_X><-i a|a> + <0_Y|1_X><-i a|-a>)/2`` with qubit overlaps
    taken from the ideal BB84 states.
    """
    a = math.sqrt(_check_mu(mu) / 2)
    s = 1 / math.sqrt(2)
    q0x = np.array([s, s])
    q1x = np.array([s, -s])
    q0y = np.array([s, 1j * s])
    q1y = np.array([s, -1j * s])
    total = (
        np.vdot(q1y, q0x) * coherent_overlap(a, 1j * a)
        + np.vdot(q1y, q1x) * coherent_overlap(-a, 1j * a)
        + np.vdot(q0y, q0x) * coherent_overlap(a, -1j * a)
        + np.vdot(q0y, q1x) * coherent_overlap(-a, -1j * a)
    ) / 2
    return float(total.real)


def coin_imbalance(mu: float) -> float:
    """Coin imbalance ``(1 - <Psi_y|Psi_x>)/2`` of the unmodulated-reference source."""
    return 0.5 * _one_minus_overlap(_check_mu(mu))


def effective_imbalance(delta: float, detection_fraction: float) -> float:
    """Loss-amplified imbalance ``delta / detection_fraction``, saturated at 0.5.

    Saturation is logged at DEBUG level; a saturated value means the coin
    carries no usable basis secrecy.
    """
    if not 0.0 < detection_fraction <= 1.0:
        raise ValueError(f"detection fraction must lie in (0, 1], got {detection_fraction}")
    if delta < 0.0:
        raise ValueError("imbalance must be non-negative")
    value = delta / detection_fraction
    if value > 0.5:
        logger.debug("effective imbalance %.6g clamped to 0.5", value)
        return 0.5
    return value


def multiphoton_prob(mu: float) -> float:
    """Probability ``1 - e^{-mu}(1 + mu)`` of two or more photons in a Poisson pulse."""
    mu = _check_mu(mu)
    if mu == 0.0:
        return 0.0
    p = float(gammainc(2.0, mu))
    assert p <= 0.5 * mu * mu * (1 + 1e-12), "multiphoton probability exceeds mu^2/2"
    return p


def coin_stats(mu: float, detection_fraction: float) -> CoinStats:
    delta = coin_imbalance(mu)
    return CoinStats(mu=mu, delta=delta, delta_prime=effective_imbalance(delta, detection_fraction))
