"""Binary decomposition of real weight vectors.

A weight vector w in R^D is factored into a binary basis matrix
M in {-1,+1}^(D x k) and a scaling vector c in R^k minimizing

    E = || w - M c ||_2^2

by alternating two exact conditional minimizers: a least-squares solve for
c with M fixed, and a per-row exhaustive sign-pattern search for M with c
fixed (the row subproblems are independent, so the joint argmin over
{-1,+1}^(D x k) reduces to D enumerations of 2^k candidates).  The
alternation restarts from L random initializations and keeps the best.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .bitkernel import pack_words, popcount_words, unpack_words
from .errors import DimensionMismatch, RankTooLarge, SingularSystem

# Ranks below this approximate poorly enough that published sweeps skip them.
MIN_RECOMMENDED_RANK = 4
DEFAULT_RANKS = (4, 6, 8)

MAX_ENUM_RANK = 16
_COND_LIMIT = 1e12

# Row chunk sized so the (chunk x 2^k) candidate table stays ~32 MiB.
_ENUM_CHUNK_ELEMS = 1 << 22


@dataclass(frozen=True)
class DecomposeConfig:
    """Solver settings for the alternating decomposition."""

    k: int = 6
    L: int = 8              # random restarts
    max_iters: int = 50     # alternation cap per restart
    rel_tol: float = 1e-10  # relative cost-decrease convergence threshold
    seed: int = 0
    ridge: float = 1e-8     # regularization when the normal equations degenerate

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("rank k must be >= 1")
        if self.L < 1:
            raise ValueError("restart count L must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be > 0")
        if self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.k < MIN_RECOMMENDED_RANK:
            warnings.warn(
                f"rank {self.k} is below {MIN_RECOMMENDED_RANK}; approximation "
                "error grows sharply at low rank",
                stacklevel=2,
            )


@dataclass(frozen=True)
class BinaryBasis:
    """Packed binary basis matrix plus scaling coefficients.

    words packs each of the k columns LSB-first into 64-bit words
    (bit set <=> entry +1).  colsum caches the column sums M^T 1 used by
    the offset term of the popcount forward pass.
    """

    D: int
    k: int
    words: np.ndarray    # (k, ceil(D/64)) uint64
    coeffs: np.ndarray   # (k,) float64
    colsum: np.ndarray   # (k,) int64, 2*popcount(col) - D

    @classmethod
    def from_dense(cls, matrix, coeffs):
        matrix = np.asarray(matrix)
        D, k = matrix.shape
        bits = (matrix > 0).astype(np.uint8).T          # (k, D)
        words = pack_words(bits)
        colsum = 2 * popcount_words(words) - D
        return cls(D=int(D), k=int(k), words=words,
                   coeffs=np.asarray(coeffs, dtype=np.float64).copy(),
                   colsum=colsum.astype(np.int64))

    def to_dense(self):
        """Unpack to the dense D x k matrix over {-1, +1}."""
        bits = unpack_words(self.words, self.D)         # (k, D)
        return (bits.astype(np.float64) * 2.0 - 1.0).T

    def reconstruct(self):
        """Dense approximation M c of the original weight vector."""
        return self.to_dense() @ self.coeffs


def cost(w, basis):
    """Squared reconstruction error ||w - M c||^2 of a packed basis."""
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.size != basis.D:
        raise DimensionMismatch(f"w has D={w.size}, basis has D={basis.D}")
    resid = w - basis.reconstruct()
    return float(resid @ resid)


def _dense_cost(w, matrix, coeffs):
    resid = w - matrix @ coeffs
    return float(resid @ resid)


def least_squares_coeffs(matrix, w, ridge=1e-8):
    """Optimal coefficients argmin_c ||w - M c||^2 via the normal equations.

    Adds ridge * I when M^T M is singular or ill-conditioned; with
    ridge == 0 such systems raise SingularSystem instead.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if matrix.shape[0] != w.size:
        raise DimensionMismatch(
            f"matrix rows {matrix.shape[0]} != w length {w.size}"
        )
    gram = matrix.T @ matrix
    rhs = matrix.T @ w
    if np.linalg.cond(gram) > _COND_LIMIT:
        if ridge == 0:
            raise SingularSystem("M^T M is singular and ridge is 0")
        gram = gram + ridge * np.eye(gram.shape[0])
    return np.linalg.solve(gram, rhs)


def _sign_table(k):
    """(2^k, k) candidate sign rows; bit j of the row code set <=> +1 in
    column j, so code 0 is the all -1 row."""
    codes = np.arange(1 << k, dtype=np.uint32)
    bits = (codes[:, None] >> np.arange(k, dtype=np.uint32)[None, :]) & 1
    return bits.astype(np.float64) * 2.0 - 1.0


def exhaustive_update_basis(w, coeffs):
    """Optimal basis rows for fixed coefficients.

    Each row independently minimizes |w_d - m_d . c| over the 2^k sign
    patterns; ties resolve to the first pattern in code order.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    coeffs = np.asarray(coeffs, dtype=np.float64).reshape(-1)
    k = coeffs.size
    if k > MAX_ENUM_RANK:
        raise RankTooLarge(f"rank {k} exceeds enumeration guard {MAX_ENUM_RANK}")
    signs = _sign_table(k)
    values = signs @ coeffs                              # (2^k,)
    out = np.empty((w.size, k), dtype=np.float64)
    chunk = max(1, _ENUM_CHUNK_ELEMS >> k)
    for start in range(0, w.size, chunk):
        block = w[start:start + chunk]
        idx = np.abs(block[:, None] - values[None, :]).argmin(axis=1)
        out[start:start + chunk] = signs[idx]
    return out


def alternating_minimize(w, matrix, cfg, trace=None):
    """Alternate coefficient and basis updates from a given initial basis.

    Returns (matrix, coeffs, cost).  When trace is a list, the cost after
    every half-step (coefficient update, then basis update) is appended,
    for monotonicity checks.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    prev = None
    coeffs = None
    for _ in range(cfg.max_iters):
        coeffs = least_squares_coeffs(matrix, w, ridge=cfg.ridge)
        if trace is not None:
            trace.append(_dense_cost(w, matrix, coeffs))
        matrix = exhaustive_update_basis(w, coeffs)
        current = _dense_cost(w, matrix, coeffs)
        if trace is not None:
            trace.append(current)
        if prev is not None and prev - current <= cfg.rel_tol * max(prev, 1e-12):
            break
        prev = current
    return matrix, coeffs, _dense_cost(w, matrix, coeffs)


def decompose_vector(w, cfg, stream=()):
    """Decompose one weight vector, keeping the best of cfg.L restarts.

    stream is an optional tuple of integers (e.g. layer and filter index)
    mixed into the per-restart RNG seed, so layer-level decompositions are
    reproducible regardless of execution order.
    """
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.size < 1:
        raise DimensionMismatch("cannot decompose an empty vector")
    best = None
    for restart in range(cfg.L):
        rng = np.random.default_rng([cfg.seed, *stream, restart])
        matrix = rng.integers(0, 2, size=(w.size, cfg.k)).astype(np.float64) * 2 - 1
        matrix, coeffs, err = alternating_minimize(w, matrix, cfg)
        if best is None or err < best[0]:
            best = (err, matrix, coeffs)
    _, matrix, coeffs = best
    return BinaryBasis.from_dense(matrix, coeffs)


def decompose_conv_layer(weights, cfg, layer_index=0, threads=1):
    """Decompose every conv filter of a (N, M, H, H) weight tensor.

    Filter n is flattened channel-major then row-major spatial (the same
    order the patch extraction uses), giving one D = M*H^2 vector.
    """
    weights = np.asarray(weights)
    if weights.ndim != 4:
        raise DimensionMismatch(f"conv weights must be 4-d, got {weights.shape}")
    n_filters = weights.shape[0]
    vectors = weights.reshape(n_filters, -1)
    return _decompose_rows(vectors, cfg, layer_index, threads)


def decompose_fc_layer(weights, cfg, layer_index=0, threads=1):
    """Decompose every row (output unit) of a (N, M) fc weight matrix."""
    weights = np.asarray(weights)
    if weights.ndim != 2:
        raise DimensionMismatch(f"fc weights must be 2-d, got {weights.shape}")
    return _decompose_rows(weights, cfg, layer_index, threads)


def _decompose_rows(vectors, cfg, layer_index, threads):
    def solve(n):
        return decompose_vector(vectors[n], cfg, stream=(layer_index, n))

    n_rows = vectors.shape[0]
    if threads <= 1 or n_rows < 2:
        return [solve(n) for n in range(n_rows)]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(solve, range(n_rows)))
