"""Small-dimension quantum linear algebra.

States and POVM elements are plain ``numpy`` complex arrays of shape
``(d, d)`` with ``d <= 8``; coherent amplitudes are Python ``complex``.
"""

from __future__ import annotations

import cmath
import math
from typing import Sequence

import numpy as np

from .constants import EIG_CLAMP, SCALAR_TOL, STRUCT_TOL

MAX_DIM = 8


def coherent_overlap(alpha: complex, beta: complex) -> complex:
    """Inner product ``<beta|alpha>`` of two coherent states.

    >>> abs(coherent_overlap(0.5, 0.5) - 1) < 1e-15
    True
    """
    alpha = complex(alpha)
    beta = complex(beta)
    if not (cmath.isfinite(alpha) and cmath.isfinite(beta)):
        raise ValueError("coherent amplitudes must be finite")
    exponent = -(abs(alpha) ** 2 + abs(beta) ** 2) / 2 + beta.conjugate() * alpha
    return cmath.exp(exponent)


def binary_entropy(delta: float) -> float:
    """Binary Shannon entropy in bits, with ``H(0) = H(1) = 0``."""
    delta = float(delta)
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"binary_entropy argument must lie in [0, 1], got {delta}")
    if delta == 0.0 or delta == 1.0:
        return 0.0
    return -delta * math.log2(delta) - (1.0 - delta) * math.log2(1.0 - delta)


def as_matrix(rho) -> np.ndarray:
    """Coerce to a square complex array, rejecting oversized or non-square input."""
    m = np.asarray(rho, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not 1 <= m.shape[0] <= MAX_DIM:
        raise ValueError(f"matrix dimension {m.shape[0]} outside 1..{MAX_DIM}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def is_hermitian(m: np.ndarray, tol: float = STRUCT_TOL) -> bool:
    return bool(np.allclose(m, m.conj().T, atol=tol, rtol=0.0))


def is_psd(m: np.ndarray, tol: float = STRUCT_TOL) -> bool:
    """Hermitian with smallest eigenvalue no lower than ``-tol``."""
    return is_hermitian(m, tol) and float(np.linalg.eigvalsh(m).min()) >= -tol


def check_state(rho) -> np.ndarray:
    """Validate a density matrix: Hermitian, PSD, unit trace."""
    m = as_matrix(rho)
    if not is_psd(m):
        raise ValueError("density matrix is not positive semidefinite")
    tr = np.trace(m)
    if abs(tr - 1.0) > SCALAR_TOL:
        raise ValueError(f"density matrix trace {tr.real:.15g} is not 1")
    return m


def check_povm(povm: Sequence) -> list[np.ndarray]:
    """Validate a POVM: every element PSD and the elements sum to identity."""
    elems = [as_matrix(e) for e in povm]
    if not elems:
        raise ValueError("POVM has no elements")
    dim = elems[0].shape[0]
    if any(e.shape != (dim, dim) for e in elems):
        raise ValueError("POVM elements have mismatched dimensions")
    for i, e in enumerate(elems):
        if not is_psd(e):
            raise ValueError(f"POVM element {i} is not positive semidefinite")
    total = sum(elems)
    if not np.allclose(total, np.eye(dim), atol=STRUCT_TOL, rtol=0.0):
        raise ValueError("POVM elements do not sum to the identity")
    return elems


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Square root of a PSD matrix via Hermitian eigendecomposition."""
    h = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(h)
    w = np.where(w < EIG_CLAMP, 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def _pair(rho, sigma) -> tuple[np.ndarray, np.ndarray]:
    a = check_state(rho)
    b = check_state(sigma)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``, clamped to [0, 1].

    Computed as the squared nuclear norm of ``sqrt(rho) sqrt(sigma)``; taking
    square roots of the eigenvalues of the sandwiched product instead turns
    round-off of order 1e-17 into errors of order 1e-9 for rank-deficient
    states.
    """
    a, b = _pair(rho, sigma)
    s = np.linalg.svd(psd_sqrt(a) @ psd_sqrt(b), compute_uv=False)
    return min(1.0, max(0.0, float(np.sum(s)) ** 2))


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of ``rho - sigma``."""
    a, b = _pair(rho, sigma)
    diff = a - b
    w = np.linalg.eigvalsh((diff + diff.conj().T) / 2)
    return 0.5 * float(np.sum(np.abs(w)))


def statistical_overlap(rho_x, rho_y, povm: Sequence) -> float:
    """Bhattacharyya overlap of the outcome distributions of ``povm`` on two states."""
    a, b = _pair(rho_x, rho_y)
    elems = check_povm(povm)
    if elems[0].shape != a.shape:
        raise ValueError("POVM dimension does not match the states")
    total = 0.0
    for e in elems:
        px = max(0.0, float(np.real(np.trace(a @ e))))
        py = max(0.0, float(np.real(np.trace(b @ e))))
        total += math.sqrt(px * py)
    return total


def pure_state(psi) -> np.ndarray:
    """Density matrix of a (normalized on the fly) state vector."""
    v = np.asarray(psi, dtype=complex).ravel()
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Ginibre-ensemble density matrix; ``rank=1`` gives a Haar-random pure state."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def random_povm(dim: int, n_outcomes: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Random POVM built by whitening random PSD operators against their sum."""
    raw = []
    for _ in range(n_outcomes):
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        raw.append(g @ g.conj().T)
    total = sum(raw)
    w, v = np.linalg.eigh(total)
    inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    elems = [inv_sqrt @ r @ inv_sqrt for r in raw]
    elems = [(e + e.conj().T) / 2 for e in elems]
    # push the sum back onto the identity exactly
    elems[-1] = elems[-1] + (np.eye(dim) - sum(elems))
    return elems
