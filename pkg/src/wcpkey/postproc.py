"""Privacy amplification by a random linear map over GF(2).

Alice and Bob compress their reconciled ``n``-bit string ``v`` to
``kappa = v G`` with ``G`` an ``n x k`` binary matrix of rank ``k``.  The
complementary ``n x (n-k)`` matrix ``H`` has columns orthogonal to every
column of ``G``, so ``G^T H = 0``; ``H`` plays the role of the parity
checks that remove phase errors in the equivalent entanglement protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qmath import binary_entropy

# rejection sampling of uniform full-rank matrices is used up to this size
UNIFORM_MAX_N = 4096
_MAX_REJECTIONS = 200


@dataclass(frozen=True)
class Gf2Matrix:
    """Binary matrix stored as a ``uint8`` array of zeros and ones."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2:
            raise ValueError("Gf2Matrix needs a 2-D array")
        if b.size and not np.isin(b, (0, 1)).all():
            raise ValueError("entries must be 0 or 1")
        b = b.astype(np.uint8)
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @property
    def T(self) -> "Gf2Matrix":
        return Gf2Matrix(self.bits.T)

    def rank(self) -> int:
        return gf2_rank(self.bits)

    def __matmul__(self, other: "Gf2Matrix") -> "Gf2Matrix":
        return Gf2Matrix(gf2_matmul(self.bits, other.bits))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Gf2Matrix):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))

    def hex_rows(self) -> list[str]:
        """Each row packed MSB-first into bytes and written as hex."""
        return [bytes(np.packbits(row)).hex() for row in self.bits]

    @classmethod
    def from_hex_rows(cls, rows: list[str], cols: int) -> "Gf2Matrix":
        out = np.zeros((len(rows), cols), dtype=np.uint8)
        nbytes = (cols + 7) // 8
        for i, h in enumerate(rows):
            raw = bytes.fromhex(h.strip())
            if len(raw) != nbytes:
                raise ValueError(f"row {i}: expected {nbytes} bytes, got {len(raw)}")
            unpacked = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
            if unpacked[cols:].any():
                raise ValueError(f"row {i}: nonzero padding bits")
            out[i] = unpacked[:cols]
        return cls(out)


def gf2_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # float64 BLAS is exact here: inner sums stay far below 2**53
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    return (np.rint(a @ b).astype(np.int64) & 1).astype(np.uint8)


def row_reduce(m: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2) and the pivot columns.

    Rows are bit-packed so each elimination step is one vectorized XOR.
    """
    m = np.asarray(m)
    nrows, ncols = m.shape
    packed = np.packbits(m.astype(bool), axis=1)
    width = -(-packed.shape[1] // 8) * 8
    r8 = np.zeros((nrows, width), dtype=np.uint8)
    r8[:, : packed.shape[1]] = packed
    r = r8.view(np.uint64)  # XOR in 64-bit words; bit tests go through r8
    pivots: list[int] = []
    row = 0
    for col in range(ncols):
        if row == nrows:
            break
        byte, bit = col >> 3, np.uint8(0x80 >> (col & 7))
        hits = np.flatnonzero(r8[row:, byte] & bit)
        if hits.size == 0:
            continue
        p = row + hits[0]
        if p != row:
            r[[row, p]] = r[[p, row]]
        mask = (r8[:, byte] & bit).astype(bool)
        mask[row] = False
        r[mask] ^= r[row]
        pivots.append(col)
        row += 1
    return np.unpackbits(r8, axis=1, count=ncols), pivots


def gf2_rank(m: np.ndarray) -> int:
    m = np.asarray(m)
    if m.size == 0:
        return 0
    # eliminate along the shorter side
    if m.shape[0] > m.shape[1]:
        m = m.T
    return len(row_reduce(m)[1])


def nullspace(m: np.ndarray) -> np.ndarray:
    """Basis of ``{x : m x = 0}`` as the columns of the returned matrix."""
    m = np.asarray(m, dtype=np.uint8)
    ncols = m.shape[1]
    rref, pivots = row_reduce(m)
    free = np.setdiff1d(np.arange(ncols), pivots)
    basis = np.zeros((ncols, free.size), dtype=np.uint8)
    basis[free, np.arange(free.size)] = 1
    basis[pivots, :] = rref[: len(pivots)][:, free]
    return basis


def _uniform_full_rank(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform matrix of full column rank by rejection (success probability > 0.28)."""
    for _ in range(_MAX_REJECTIONS):
        m = rng.integers(0, 2, size=(rows, cols), dtype=np.uint8)
        if gf2_rank(m) == cols:
            return m
    raise RuntimeError("rejection sampling failed to find a full-rank matrix")


def _completed_full_rank(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Random matrix whose dependent columns are redrawn until it has full column rank.

    Not uniform over full-rank matrices, but needs only a few eliminations
    however unlucky the first draw is.
    """
    m = rng.integers(0, 2, size=(rows, cols), dtype=np.uint8)
    for _ in range(_MAX_REJECTIONS):
        _, pivots = row_reduce(m)
        dependent = np.setdiff1d(np.arange(cols), pivots)
        if dependent.size == 0:
            return m
        m[:, dependent] = rng.integers(0, 2, size=(rows, dependent.size), dtype=np.uint8)
    raise RuntimeError("could not complete a full-rank matrix")


def sample_pa_matrices(n: int, k: int, seed) -> tuple[Gf2Matrix, Gf2Matrix]:
    """Random key-extraction matrix ``G`` (n x k) and check matrix ``H`` (n x (n-k)).

    ``H`` is drawn uniformly among full-rank matrices, then ``G`` is a
    uniformly random basis of the null space of ``H^T``: a fixed basis
    times a uniform invertible ``k x k`` matrix.  For ``n`` above
    ``UNIFORM_MAX_N`` both draws use column-by-column completion instead.
    """
    if not (isinstance(n, (int, np.integer)) and isinstance(k, (int, np.integer))):
        raise TypeError("n and k must be integers")
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < n, got n={n}, k={k}")
    rng = np.random.default_rng(seed)
    draw = _uniform_full_rank if n <= UNIFORM_MAX_N else _completed_full_rank
    h = draw(n, n - k, rng)
    basis = nullspace(h.T)
    if basis.shape[1] != k:
        raise RuntimeError("null space of H^T has the wrong dimension")
    mix = draw(k, k, rng)
    g = gf2_matmul(basis, mix)
    return Gf2Matrix(g), Gf2Matrix(h)


def extract_key(v, g: Gf2Matrix) -> np.ndarray:
    """Final key ``v G`` over GF(2)."""
    v = np.asarray(v)
    if v.ndim != 1 or v.shape[0] != g.rows:
        raise ValueError(f"key of length {v.shape} does not match G with {g.rows} rows")
    if v.size and not np.isin(v, (0, 1)).all():
        raise ValueError("key bits must be 0 or 1")
    return gf2_matmul(v[None, :], g.bits)[0]


def pa_output_length(n: int, delta_y_prime: float, epsilon: float = 0.0) -> int:
    """Final key length ``n - ceil(n (H(delta') + 2 epsilon))``, at least 0."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    h = 1.0 if delta_y_prime >= 0.5 else binary_entropy(delta_y_prime)
    removed = math.ceil(n * (h + 2 * epsilon))
    return max(0, n - removed)


def dumps_pa(g: Gf2Matrix, h: Gf2Matrix) -> str:
    """Text form: an ``n,k`` header, then the n rows of G, then the n rows of H, in hex."""
    n, k = g.rows, g.cols
    if h.rows != n or h.cols != n - k:
        raise ValueError("G and H shapes are inconsistent")
    lines = [f"{n},{k}", *g.hex_rows(), *h.hex_rows()]
    return "\n".join(lines) + "\n"


def loads_pa(text: str) -> tuple[Gf2Matrix, Gf2Matrix]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty input")
    try:
        n, k = (int(x) for x in lines[0].split(","))
    except ValueError:
        raise ValueError(f"bad header {lines[0]!r}, expected 'n,k'") from None
    if not 0 < k < n:
        raise ValueError(f"header dims invalid: n={n}, k={k}")
    if len(lines) != 1 + 2 * n:
        raise ValueError(f"expected {2 * n} matrix rows, got {len(lines) - 1}")
    g = Gf2Matrix.from_hex_rows(lines[1 : 1 + n], k)
    h = Gf2Matrix.from_hex_rows(lines[1 + n :], n - k)
    return g, h
