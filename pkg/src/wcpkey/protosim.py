"""Monte Carlo BB84 rounds: source, optional eavesdropper, fiber, threshold detectors, sifting.

Random numbers come from counter-based Philox streams.  Rounds are
processed in fixed-size chunks and chunk ``c`` draws from
``SeedSequence(seed, spawn_key=(c,))``, so the tally does not depend on how
chunks are scheduled across workers.

Bob's interferometer is treated classically: coherent states factorize at
beam splitters, so each detector arm receives a Poisson photon number whose
mean is fixed by the interfering amplitudes.  Interferometer misalignment
sends a fraction ``e_align`` of each arm's light to the other arm.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable

import numpy as np

from . import attack
from .detection import ChannelParams, DetectorParams, DoubleClickPolicy
from .source import LABELS, SourceKind, SourceVariant, make_signal_set

CHUNK_ROUNDS = 1 << 16

# relative phase (signal/reference) flagging bit k in basis b; rows X, Y
_PHASES = np.array([[1.0, -1.0], [1j, -1j]])


class EveStrategy(enum.Enum):
    NONE = "none"
    UKD_INTERCEPT_RESEND = "ukd"


@dataclass
class RoundTally:
    sent: int = 0
    detected: int = 0
    sifted: int = 0
    double_clicks: int = 0
    errors_x: int = 0
    sifted_x: int = 0
    errors_y: int = 0
    sifted_y: int = 0
    bob_x_rounds: int = 0
    bob_x_detected: int = 0

    def __add__(self, other: "RoundTally") -> "RoundTally":
        return RoundTally(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def check(self) -> None:
        if not self.sifted <= self.detected <= self.sent:
            raise AssertionError("tally violates sifted <= detected <= sent")
        if self.errors_x > self.sifted_x or self.errors_y > self.sifted_y:
            raise AssertionError("more errors than sifted bits")
        if self.sifted_x + self.sifted_y != self.sifted:
            raise AssertionError("basis strata do not add up")


@dataclass(frozen=True)
class ErrorEstimate:
    delta_x: float
    delta_y: float
    Q_hat: float
    se_x: float
    se_y: float
    se_Q: float
    n_x: int
    n_y: int

    @property
    def delta(self) -> float:
        """Error rate pooled over both bases."""
        return (self.delta_x * self.n_x + self.delta_y * self.n_y) / (self.n_x + self.n_y)

    @property
    def se_delta(self) -> float:
        d = self.delta
        return math.sqrt(d * (1 - d) / (self.n_x + self.n_y))


def _binom_se(k: int, n: int) -> float:
    p = k / n
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def estimate_error_rates(tally: RoundTally) -> ErrorEstimate:
    """Per-basis error rates and detection rate with binomial standard errors."""
    if tally.sifted_x <= 0 or tally.sifted_y <= 0:
        raise ValueError("both basis strata need at least one sifted bit")
    if tally.sent <= 0:
        raise ValueError("empty tally")
    return ErrorEstimate(
        delta_x=tally.errors_x / tally.sifted_x,
        delta_y=tally.errors_y / tally.sifted_y,
        Q_hat=tally.detected / tally.sent,
        se_x=_binom_se(tally.errors_x, tally.sifted_x),
        se_y=_binom_se(tally.errors_y, tally.sifted_y),
        se_Q=_binom_se(tally.detected, tally.sent),
        n_x=tally.sifted_x,
        n_y=tally.sifted_y,
    )


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _arm_means(source: SourceVariant) -> np.ndarray:
    """Mean photon numbers at Bob's two detectors, indexed ``[alice label, bob basis, arm]``."""
    signals = make_signal_set(source)
    r_coef, s_coef = 1.0, 1.0
    if source.kind is SourceKind.BRIGHT_REF and source.alpha != 0:
        # asymmetric first splitter equalizes the interfering pulses
        a2, b2 = abs(source.alpha) ** 2, abs(source.beta) ** 2
        c = math.sqrt(b2 / (a2 + b2))
        r_coef, s_coef = math.sqrt(1 - c * c), c
    out = np.zeros((4, 2, 2))
    for i, lab in enumerate(LABELS):
        r, s = signals[lab]
        r, s = r * r_coef, s * s_coef
        for b in range(2):
            for k in range(2):
                # conjugate phase so that arm k collects the light of bit k
                amp = (r + np.conj(_PHASES[b, k]) * s) / math.sqrt(2)
                out[i, b, k] = abs(amp) ** 2
    return out


def _misalign(p0: np.ndarray, p1: np.ndarray, e_align: float) -> tuple[np.ndarray, np.ndarray]:
    return (1 - e_align) * p0 + e_align * p1, (1 - e_align) * p1 + e_align * p0


def _bob_bits(click0, click1, policy: DoubleClickPolicy, rng: np.random.Generator):
    both = click0 & click1
    if policy is DoubleClickPolicy.RANDOM:
        tie = rng.integers(0, 2, size=click0.shape)
    else:
        tie = np.full(click0.shape, 0 if policy is DoubleClickPolicy.ZERO else 1)
    bits = np.where(both, tie, np.where(click1, 1, 0))
    return bits, both


def _resend_arm_probs() -> np.ndarray:
    """Photon arm probabilities for Eve's resent state, ``[eve bit, bob basis, arm]``."""
    bases = attack.bob_bases()
    out = np.zeros((2, 2, 2))
    for bit in range(2):
        psi = attack.resend_state(bit)
        for b, key in enumerate(("Z", "X")):
            for k in range(2):
                out[bit, b, k] = abs(np.vdot(bases[key][k], psi)) ** 2
    return out


def _run_chunk(
    chunk: int,
    size: int,
    seed: int,
    source: SourceVariant,
    chan: ChannelParams,
    det: DetectorParams,
    eve: EveStrategy,
    policy: DoubleClickPolicy,
) -> RoundTally:
    rng = _chunk_rng(seed, chunk)
    a_basis = rng.integers(0, 2, size=size)
    a_bit = rng.integers(0, 2, size=size)
    b_basis = rng.integers(0, 2, size=size)
    label = 2 * a_basis + a_bit

    if eve is EveStrategy.NONE:
        means = _arm_means(source)[label, b_basis] * chan.transmission
        m0, m1 = _misalign(means[:, 0], means[:, 1], det.e_align)
        n0 = rng.binomial(rng.poisson(m0), det.xi)
        n1 = rng.binomial(rng.poisson(m1), det.xi)
        photon0, photon1 = n0 > 0, n1 > 0
    else:
        mu = 2 * abs(source.alpha) ** 2
        povm = attack.ukd_povm(mu)
        # alice basis 0/1 is the Z/X polarization basis of the qutrit picture
        names = ("0_Z", "1_Z", "0_X", "1_X")
        probs = np.array([attack.outcome_probs(mu, n, povm) for n in names])
        probs = np.clip(probs, 0.0, None)
        cum = np.cumsum(probs / probs.sum(axis=1, keepdims=True), axis=1)
        u = rng.random(size)
        outcome = (u[:, None] >= cum[label]).sum(axis=1)  # 0, 1, 2 (DK) or 3 (multi)
        resend = outcome < 2
        eve_bit = np.where(resend, outcome, 0)
        arm = _resend_arm_probs()[eve_bit, b_basis]
        p0, _ = _misalign(arm[:, 0], arm[:, 1], det.e_align)
        to_arm1 = rng.random(size) >= p0
        seen = resend & (rng.random(size) < det.xi)
        photon0, photon1 = seen & ~to_arm1, seen & to_arm1

    click0 = photon0 | (rng.random(size) < det.d0)
    click1 = photon1 | (rng.random(size) < det.d1)
    bob_bit, both = _bob_bits(click0, click1, policy, rng)
    detected = click0 | click1
    sifted = detected & (a_basis == b_basis)
    err = sifted & (bob_bit != a_bit)
    on_x = a_basis == 0
    bob_x = b_basis == 0
    return RoundTally(
        sent=size,
        detected=int(detected.sum()),
        sifted=int(sifted.sum()),
        double_clicks=int((both & detected).sum()),
        errors_x=int((err & on_x).sum()),
        sifted_x=int((sifted & on_x).sum()),
        errors_y=int((err & ~on_x).sum()),
        sifted_y=int((sifted & ~on_x).sum()),
        bob_x_rounds=int(bob_x.sum()),
        bob_x_detected=int((detected & bob_x).sum()),
    )


def run_protocol(
    n_rounds: int,
    source: SourceVariant,
    chan: ChannelParams,
    det: DetectorParams,
    eve: EveStrategy = EveStrategy.NONE,
    seed: int = 0,
    double_click: DoubleClickPolicy = DoubleClickPolicy.RANDOM,
    workers: int = 1,
) -> RoundTally:
    """Simulate ``n_rounds`` BB84 rounds and tally detections, sifting and errors.

    With ``EveStrategy.UKD_INTERCEPT_RESEND`` Eve measures every pulse with
    the unambiguous key discrimination POVM at Alice's output, blocks
    inconclusive and multi-photon pulses, and hands Bob a single photon in
    the resend state; the fiber is then irrelevant.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    if eve is not EveStrategy.NONE and source.kind is not SourceKind.MODULATED_REF:
        raise ValueError("the UKD attack targets the modulated-reference source")
    sizes = [CHUNK_ROUNDS] * (n_rounds // CHUNK_ROUNDS)
    if n_rounds % CHUNK_ROUNDS:
        sizes.append(n_rounds % CHUNK_ROUNDS)
    args = [(c, s, seed, source, chan, det, eve, double_click) for c, s in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda a: _run_chunk(*a), args))
    else:
        parts = [_run_chunk(*a) for a in args]
    total = RoundTally()
    for p in parts:
        total = total + p
    total.check()
    return total


def ukd_expected(mu: float, det: DetectorParams) -> tuple[float, float]:
    """Analytic ``(Q, e)`` under the UKD intercept/resend attack, random double-click bits."""
    d = (det.d0, det.d1)
    delta_r = attack.resend_error_rate()
    p_wrong = delta_r * (1 - det.e_align) + (1 - delta_r) * det.e_align
    q = err = 0.0
    for bit in (0, 1):
        p_c = attack.conclusive_prob(bit, mu)
        dc, dw = d[bit], d[1 - bit]
        dark_err = dw * (1 - dc) + 0.5 * dw * dc
        w, c, none = det.xi * p_wrong, det.xi * (1 - p_wrong), 1 - det.xi
        res_err = w * (1 - dc) + 0.5 * w * dc + 0.5 * c * dw + none * dark_err
        res_det = 1 - none * (1 - dc) * (1 - dw)
        dark_det = 1 - (1 - dc) * (1 - dw)
        q += 0.5 * (p_c * res_det + (1 - p_c) * dark_det)
        err += 0.5 * (p_c * res_err + (1 - p_c) * dark_err)
    return q, err / q


@dataclass(frozen=True)
class BlochCheck:
    ok: bool
    lhs: float
    epsilon: float
    margin: float
    gamma_x: float
    gamma_z: float


def bloch_bound_check(n: int, rho, seed: int = 0) -> BlochCheck:
    """Sample ``2n`` i.i.d. copies of qubit state ``rho``; measure a random half in x, the rest in z.

    Checks ``(1 - 2 gamma_x)^2 + (1 - 2 gamma_z)^2 <= 1 + 5 sqrt(log n / n)``,
    where ``gamma`` is the fraction of ``-1`` outcomes.
    """
    if n < 1000:
        raise ValueError("n must be >= 1000")
    rho = np.asarray(rho, dtype=complex)
    rx = float(np.real(np.trace(rho @ np.array([[0, 1], [1, 0]]))))
    rz = float(np.real(rho[0, 0] - rho[1, 1]))
    rng = np.random.default_rng(seed)
    in_x = np.zeros(2 * n, dtype=bool)
    in_x[rng.choice(2 * n, size=n, replace=False)] = True
    u = rng.random(2 * n)
    minus = np.where(in_x, u < (1 - rx) / 2, u < (1 - rz) / 2)
    gx = float(minus[in_x].mean())
    gz = float(minus[~in_x].mean())
    lhs = (1 - 2 * gx) ** 2 + (1 - 2 * gz) ** 2
    eps = 5 * math.sqrt(math.log(n) / n)
    margin = 1 + eps - lhs
    return BlochCheck(ok=margin >= 0, lhs=lhs, epsilon=eps, margin=margin, gamma_x=gx, gamma_z=gz)


TALLY_FIELDS = tuple(f.name for f in fields(RoundTally))


def tally_csv(tallies: Iterable[RoundTally]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TALLY_FIELDS)
    for t in tallies:
        w.writerow([asdict(t)[k] for k in TALLY_FIELDS])
    return buf.getvalue()
