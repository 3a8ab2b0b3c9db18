"""Dense linear algebra and seeded Gaussian sampling.

Random streams use numpy's ``Philox`` bit generator (a counter-based
generator, 4x64 rounds) with numpy's ziggurat transform for normals. Both
are fixed in the numpy ``Generator`` API, so a seed reproduces the same
sequence on any platform.
"""

from __future__ import annotations

import numpy as np
import numpy.typing as npt
import scipy.linalg

__all__ = [
    "NotPositiveDefinite",
    "NegativeVariance",
    "RngStream",
    "as_matrix",
    "spd_solve",
    "sample_standard_normal",
    "sample_gaussian",
]

Array = npt.NDArray[np.float64]


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot is not strictly positive."""


class NegativeVariance(ValueError):
    pass


def as_matrix(a, name: str = "matrix") -> Array:
    """Return ``a`` as a finite 2-D float64 array (copied, read-only)."""
    out = np.array(a, dtype=np.float64, ndmin=2, copy=True)
    if out.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains NaN or Inf entries")
    out.setflags(write=False)
    return out


class RngStream:
    """A reproducible stream of random draws.

    Parameters
    ----------
    seed : int
        64-bit seed. Identical seeds give identical sequences.

    Attributes
    ----------
    position : int
        Number of scalar draws taken from the stream so far.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self.position = 0
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def standard_normal(self, size) -> Array:
        out = self._gen.standard_normal(size)
        self.position += int(np.prod(size))
        return out

    def uniform(self, low: float, high: float, size) -> Array:
        out = self._gen.uniform(low, high, size)
        self.position += int(np.prod(size))
        return out

    def permutation(self, n: int) -> npt.NDArray[np.int64]:
        out = self._gen.permutation(n)
        self.position += n
        return out

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, position={self.position})"


def _symmetric(a: Array, rtol: float = 1e-10) -> bool:
    scale = max(np.abs(a).max(), 1.0)
    return bool(np.abs(a - a.T).max() <= rtol * scale)


def spd_solve(a, b, jitter: float | None = None) -> Array:
    """Solve ``a @ x = b`` for symmetric positive-definite ``a``.

    Uses a Cholesky factorization; no inverse is formed.

    Parameters
    ----------
    a : (n, n) array_like
        Symmetric positive-definite matrix.
    b : (n,) or (n, k) array_like
        Right-hand side(s).
    jitter : float, optional
        If given and the first factorization fails, ``jitter`` is added to
        the diagonal and the factorization is retried once. Pass ``0`` to
        use the default ``1e-10 * trace(a) / n``.

    Raises
    ------
    NotPositiveDefinite
        If the factorization (and the optional retry) fails.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"a must be square, got shape {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"shape mismatch: a is {a.shape}, b is {b.shape}")
    if not _symmetric(a):
        raise ValueError("a is not symmetric")
    try:
        factor = scipy.linalg.cho_factor(a, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        if jitter is None:
            raise NotPositiveDefinite(str(exc)) from exc
        eps = jitter if jitter > 0 else 1e-10 * np.trace(a) / a.shape[0]
        try:
            factor = scipy.linalg.cho_factor(a + eps * np.eye(a.shape[0]), lower=True)
        except np.linalg.LinAlgError as exc2:
            raise NotPositiveDefinite(f"{exc2} (after jitter {eps:g})") from exc2
    return scipy.linalg.cho_solve(factor, b)


def sample_standard_normal(rng: RngStream, rows: int, cols: int) -> Array:
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    return rng.standard_normal((rows, cols))


def sample_gaussian(rng: RngStream, mean, cov_diag) -> Array:
    """Draw one sample from ``N(mean, diag(cov_diag))``."""
    mean = np.asarray(mean, dtype=np.float64)
    cov_diag = np.broadcast_to(np.asarray(cov_diag, dtype=np.float64), mean.shape)
    if np.any(cov_diag < 0):
        raise NegativeVariance("cov_diag entries must be >= 0")
    return mean + np.sqrt(cov_diag) * rng.standard_normal(mean.shape)
