"""Threshold detectors behind a lossy fiber.

Bob's two detectors share efficiency ``xi``; a detector receiving ``n``
photons stays silent with probability ``(1 - xi)**n`` and fires a
background count with probability ``d0`` or ``d1`` independently of the
light.  The probability that neither fires therefore depends only on the
total photon number, which is what makes the inconclusive outcome a
basis-independent filter.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .constants import DEFAULT_F_EC


class DoubleClickPolicy(enum.Enum):
    """How a double click is mapped to a key bit."""

    RANDOM = "random"
    ZERO = "zero"
    ONE = "one"


@dataclass(frozen=True)
class DetectorParams:
    d0: float = 8.5e-7
    d1: float = 8.5e-7
    xi: float = 0.045
    e_align: float = 0.033

    def __post_init__(self):
        for name in ("d0", "d1"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1), got {v}")
        if not 0.0 < self.xi <= 1.0:
            raise ValueError(f"xi must lie in (0, 1], got {self.xi}")
        if not 0.0 <= self.e_align <= 0.5:
            raise ValueError(f"e_align must lie in [0, 0.5], got {self.e_align}")

    @property
    def no_dark(self) -> float:
        """Probability that neither detector registers a background count."""
        return (1.0 - self.d0) * (1.0 - self.d1)


@dataclass(frozen=True)
class ChannelParams:
    loss_db_per_km: float = 0.21
    distance_km: float = 0.0

    def __post_init__(self):
        if not self.loss_db_per_km >= 0.0:
            raise ValueError("loss_db_per_km must be >= 0")
        if not self.distance_km >= 0.0:
            raise ValueError("distance_km must be >= 0")

    @property
    def transmission(self) -> float:
        return 10.0 ** (-self.loss_db_per_km * self.distance_km / 10.0)


@dataclass(frozen=True)
class SystemParams:
    """Everything in a parameter file: fiber loss, detectors and reconciliation inefficiency.

    Defaults are the "gys-like" set.  They are typical figures for a
    2004-era 1550 nm fiber link with InGaAs APDs and are meant to be
    edited, not treated as measured values.
    """

    loss_db_per_km: float = 0.21
    xi: float = 0.045
    d0: float = 8.5e-7
    d1: float = 8.5e-7
    e_align: float = 0.033
    f_ec: float = DEFAULT_F_EC

    def __post_init__(self):
        if self.f_ec < 1.0:
            raise ValueError(f"f_ec must be >= 1, got {self.f_ec}")
        # reuse range checks
        self.detector()
        self.channel(0.0)

    def detector(self) -> DetectorParams:
        return DetectorParams(d0=self.d0, d1=self.d1, xi=self.xi, e_align=self.e_align)

    def channel(self, distance_km: float) -> ChannelParams:
        return ChannelParams(loss_db_per_km=self.loss_db_per_km, distance_km=distance_km)

    def with_overrides(self, **kw) -> "SystemParams":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    @classmethod
    def from_text(cls, text: str) -> "SystemParams":
        known = {f.name for f in fields(cls)}
        values: dict[str, float] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"line {lineno}: unknown parameter {key!r}")
            try:
                values[key] = float(val)
            except ValueError:
                raise ValueError(f"line {lineno}: {key} is not a number: {val!r}") from None
        return cls(**values)

    @classmethod
    def from_file(cls, path: str | Path) -> "SystemParams":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)!r}\n" for f in fields(self))


GYS_LIKE = SystemParams()


def prob_inconclusive_n(n: int, det: DetectorParams) -> float:
    """Probability that an ``n``-photon signal produces no click in either detector."""
    if n < 0:
        raise ValueError("photon number must be >= 0")
    return det.no_dark * (1.0 - det.xi) ** n


def prob_inconclusive_coherent(mu: float, det: DetectorParams) -> float:
    """No-click probability for a coherent state of mean photon number ``mu`` at the detectors."""
    if mu < 0:
        raise ValueError("mean photon number must be >= 0")
    return det.no_dark * math.exp(-det.xi * mu)


def bright_ref_coupling(alpha_sig: float, beta_ref: float) -> tuple[float, float]:
    """Splitting factor ``c^2`` of Bob's asymmetric first beam splitter.

    Returns ``(c2, mu_eff)`` where ``mu_eff = 2 c^2 |alpha|^2`` is the mean
    photon number reaching the detectors (before loss and efficiency).
    """
    a2 = abs(alpha_sig) ** 2
    b2 = abs(beta_ref) ** 2
    if a2 == 0.0 or b2 == 0.0:
        raise ValueError("bright reference coupling needs nonzero amplitudes")
    if b2 < a2 * (1 - 1e-12):
        raise ValueError("reference must be at least as bright as the signal")
    c2 = b2 / (a2 + b2)
    return c2, 2.0 * c2 * a2


def effective_mean_photons(mu: float, bright_ratio: float | None = None) -> float:
    """Mean photon number delivered to Bob's detectors at zero loss.

    For equal pulses ``mu = 2|alpha|^2`` reaches the detectors.  With a
    bright reference ``mu`` is the signal-pulse mean ``|alpha|^2`` and
    ``bright_ratio = |beta|^2/|alpha|^2``.
    """
    if bright_ratio is None:
        return mu
    if mu == 0.0:
        return 0.0
    _, mu_eff = bright_ref_coupling(math.sqrt(mu), math.sqrt(mu * bright_ratio))
    return mu_eff


def _signal_click_prob(mu: float, chan: ChannelParams, det: DetectorParams, bright_ratio) -> float:
    x = det.xi * chan.transmission * effective_mean_photons(mu, bright_ratio)
    return -math.expm1(-x)


def detection_prob_Q(
    mu: float,
    chan: ChannelParams,
    det: DetectorParams,
    bright_ratio: float | None = None,
) -> float:
    """Fraction of pulses giving at least one click: ``1 - (1-d0)(1-d1) e^{-xi t mu_eff}``."""
    if mu < 0:
        raise ValueError("mean photon number must be >= 0")
    x = det.xi * chan.transmission * effective_mean_photons(mu, bright_ratio)
    # log1p/expm1 keep Q accurate when both darks and x are tiny
    return -math.expm1(math.log1p(-det.d0) + math.log1p(-det.d1) - x)


def intrinsic_error_rate(
    mu: float,
    chan: ChannelParams,
    det: DetectorParams,
    bright_ratio: float | None = None,
) -> float:
    """Sifted bit error rate with no eavesdropper.

    Misaligned signal clicks contribute ``e_align`` and background clicks
    are random: ``e = (e_align*S + D/2)/Q`` with ``S`` the signal click
    probability and ``D = 1 - (1-d0)(1-d1)`` the background probability,
    capped at 0.5.
    """
    q = detection_prob_Q(mu, chan, det, bright_ratio)
    if q <= 0.0:
        raise ValueError("detection probability is zero; error rate undefined")
    s = _signal_click_prob(mu, chan, det, bright_ratio)
    dark = -math.expm1(math.log1p(-det.d0) + math.log1p(-det.d1))
    return min(0.5, (det.e_align * s + 0.5 * dark) / q)
