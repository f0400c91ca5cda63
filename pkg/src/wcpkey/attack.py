"""Unambiguous key discrimination against a phase-modulated-reference source.

When the reference pulse phase is modulated along with the signal, the
single-photon-truncated signals live in a qutrit spanned by
``{|vac>, |0_Z>, |1_Z>}`` and the two signals carrying the same key bit
span only a plane.  A projector onto the vector orthogonal to that plane
therefore rules the bit out with certainty.  Multi-photon components are
discarded before the measurement; their weight ``1 - e^{-mu}(1+mu)`` is
kept in the unconditional probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .constants import SCALAR_TOL, STRUCT_TOL, TWO_WAY_THRESHOLD

SQRT2 = math.sqrt(2.0)
# conclusive strength per unit mu at small mu: 1/2 - 1/(2 sqrt 2)
CONCLUSIVE_SLOPE = 0.5 - 0.5 / SQRT2
# 1/2 -/+ 1/(2 sqrt 2): denominator coefficients for key bits 0 and 1
_BRACKET = {0: 0.5 - 0.5 / SQRT2, 1: 0.5 + 0.5 / SQRT2}

SIGNAL_LABELS = ("0_Z", "0_X", "1_Z", "1_X")
BIT_OF = {"0_Z": 0, "0_X": 0, "1_Z": 1, "1_X": 1}


@dataclass(frozen=True)
class UkdPovm:
    """Eve's three-outcome measurement: ``E0`` announces bit 0, ``E1`` bit 1, ``E_DK`` don't know."""

    E0: np.ndarray
    E1: np.ndarray
    E_DK: np.ndarray

    def elements(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.E0, self.E1, self.E_DK


def _alpha(mu: float) -> float:
    if not mu >= 0.0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    return math.sqrt(mu / 2.0)


def ukd_signals(mu: float) -> dict[str, np.ndarray]:
    """Single-photon-truncated signal vectors in the ``{vac, 0_Z, 1_Z}`` basis.

    Each vector keeps the Poisson prefactor ``e^{-mu/2}``, so its squared
    norm is the probability ``e^{-mu}(1+mu)`` that the pulse holds at most
    one photon.
    """
    a = _alpha(mu)
    w = math.exp(-mu / 2.0)
    return {
        "0_Z": w * np.array([1.0, SQRT2 * a, 0.0], dtype=complex),
        "0_X": w * np.array([1.0, a, a], dtype=complex),
        "1_Z": w * np.array([1.0, 0.0, SQRT2 * a], dtype=complex),
        "1_X": w * np.array([1.0, a, -a], dtype=complex),
    }


def conclusive_vectors(mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors orthogonal to both bit-0 signals and to both bit-1 signals, respectively."""
    a = _alpha(mu)
    v0 = np.array([-SQRT2 * a - a, 1 + 1 / SQRT2, 1 / SQRT2], dtype=complex)
    v1 = np.array([-a, 1 + 1 / SQRT2, 1 / SQRT2], dtype=complex)
    return v0 * norm_factor(mu, 0), v1 * norm_factor(mu, 1)


def norm_factor(mu: float, which: int) -> float:
    """Normalization ``N`` with ``N^{-2} = (2 + sqrt 2)[1 + (1/2 +/- 1/(2 sqrt 2)) mu]``.

    ``which=0`` (the vector orthogonal to the bit-0 plane) takes the plus sign.
    """
    coeff = _BRACKET[1 - which]
    return 1.0 / math.sqrt((2 + SQRT2) * (1 + coeff * mu))


def ukd_povm(mu: float) -> UkdPovm:
    v0, v1 = conclusive_vectors(mu)
    e0 = 0.5 * np.outer(v1, v1.conj())
    e1 = 0.5 * np.outer(v0, v0.conj())
    edk = np.eye(3) - e0 - e1
    min_eig = float(np.linalg.eigvalsh(edk).min())
    if min_eig < -STRUCT_TOL:
        raise RuntimeError(f"E_DK is not positive semidefinite (min eigenvalue {min_eig:.3g})")
    return UkdPovm(E0=e0, E1=e1, E_DK=edk)


def outcome_probs(mu: float, label: str, povm: UkdPovm | None = None) -> np.ndarray:
    """Unconditional probabilities ``(bit 0, bit 1, don't know, multi-photon discard)``."""
    povm = ukd_povm(mu) if povm is None else povm
    psi = ukd_signals(mu)[label]
    p = [float(np.real(np.vdot(psi, e @ psi))) for e in povm.elements()]
    p.append(1.0 - float(np.vdot(psi, psi).real))
    return np.array(p)


def conclusive_prob(key_bit: int, mu: float) -> float:
    """Probability that Eve's measurement correctly identifies ``key_bit``.

    Equals ``(1/2 - 1/(2 sqrt 2)) mu e^{-mu} / (1 + c mu)``, where ``c`` is
    ``1/2 - 1/(2 sqrt 2)`` for bit 0 and ``1/2 + 1/(2 sqrt 2)`` for bit 1,
    so bit 0 is identified slightly more often.
    """
    if key_bit not in (0, 1):
        raise ValueError("key_bit must be 0 or 1")
    if mu < 0:
        raise ValueError("mu must be >= 0")
    return CONCLUSIVE_SLOPE * mu * math.exp(-mu) / (1 + _BRACKET[key_bit] * mu)


def conclusive_prob_lower_bound(mu: float) -> float:
    """Bit-independent lower bound: the bit-1 expression, the smaller of the two."""
    return conclusive_prob(1, mu)


def resend_state(key_bit: int) -> np.ndarray:
    """Equal-weight superposition of ``|b_Z>`` and ``|b_X>`` that Eve forwards to Bob.

    The relative phase is chosen so the two components add in phase; for
    bit 1 that means ``|1_Z> - |1_X>``, because ``<1_Z|1_X>`` is negative.
    """
    z = np.eye(2, dtype=complex)[key_bit]
    x = np.array([1.0, 1.0 if key_bit == 0 else -1.0], dtype=complex) / SQRT2
    ov = np.vdot(x, z)
    v = z + x * (ov / abs(ov))
    return v / np.linalg.norm(v)


def bob_bases() -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Bob's two measurement bases as (bit-0 vector, bit-1 vector) pairs."""
    return {
        "Z": (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)),
        "X": (np.array([1, 1], dtype=complex) / SQRT2, np.array([1, -1], dtype=complex) / SQRT2),
    }


def resend_error_rate(key_bit: int = 0) -> float:
    """Bit error Bob sees on a resent photon, averaged over his two (sifted) bases."""
    psi = resend_state(key_bit)
    errs = []
    for b0, b1 in bob_bases().values():
        wrong = b1 if key_bit == 0 else b0
        errs.append(abs(np.vdot(wrong, psi)) ** 2)
    return float(np.mean(errs))


def multiphoton_fraction_bound(mu: float) -> float:
    """Upper bound ``(mu^2/2) / p_C,min`` on the multi-photon share of Bob's detections."""
    return 0.5 * mu * mu / conclusive_prob_lower_bound(mu)


def secure_mu_threshold(max_tagged_fraction: float = 0.086) -> float:
    """Largest mu for which the multi-photon share bound stays below ``max_tagged_fraction``.

    The default 0.086 is twice the gap ``0.189 - 0.146`` between the two-way
    threshold and the attack's error rate, with the error rate rounded to
    three digits.  The bound is ``(1/2)/(1/2 - 1/(2 sqrt 2)) mu e^mu (1 + 0.854 mu)``.
    """
    coeff = 0.5 / CONCLUSIVE_SLOPE
    lin = _BRACKET[1]

    def excess(mu: float) -> float:
        return coeff * mu * math.exp(mu) * (1 + lin * mu) - max_tagged_fraction

    return bisect(excess, 0.0, 1.0, xtol=1e-14)


def tagged_fraction_budget(error_rate: float | None = None) -> float:
    """``2 (0.189 - error_rate)``: tagged share tolerable by two-way post-processing."""
    err = resend_error_rate() if error_rate is None else error_rate
    return 2.0 * (TWO_WAY_THRESHOLD - err)


def povm_audit(mu: float) -> dict:
    """Numbers printed by the CLI attack report."""
    povm = ukd_povm(mu)
    completeness = float(np.abs(sum(povm.elements()) - np.eye(3)).max())
    signals = ukd_signals(mu)
    leak = max(
        abs(float(np.real(np.vdot(signals[lab], (povm.E1 if BIT_OF[lab] == 0 else povm.E0) @ signals[lab]))))
        for lab in SIGNAL_LABELS
    )
    return {
        "min_eig_E0": float(np.linalg.eigvalsh(povm.E0).min()),
        "min_eig_E1": float(np.linalg.eigvalsh(povm.E1).min()),
        "min_eig_EDK": float(np.linalg.eigvalsh(povm.E_DK).min()),
        "completeness_err": completeness,
        "misidentification": leak,
        "ok": completeness <= SCALAR_TOL and leak <= SCALAR_TOL,
    }
