"""Deterministic dense linear algebra kernels.

Inputs may be float32 (the on-disk feature precision) or float64; every
kernel accumulates and returns float64. The LAPACK calls run on a single
BLAS thread so exact-mode results do not depend on the thread count.
"""

from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import NumericalError, ValidationError
from .validation import ensure_finite_matrix, ensure_vector

RSVD_OVERSAMPLING = 10
RSVD_POWER_ITERATIONS = 4
DEFAULT_REL_CUTOFF = 1e-10

_ZERO_NORM = 1e-12


def _single_thread():
    return threadpool_limits(limits=1)


@dataclass(frozen=True)
class SvdResult:
    """Leading-r SVD factors: a ~ u @ diag(sigma) @ vt."""

    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray

    @property
    def rank(self):
        return int(self.sigma.shape[0])


def _apply_sign_convention(u, vt):
    # Largest-magnitude entry of each u column is made non-negative; on a
    # magnitude tie the lowest row index decides (argmax takes the first).
    rows = np.argmax(np.abs(u), axis=0)
    cols = np.arange(u.shape[1])
    flip = u[rows, cols] < 0
    u[:, flip] *= -1.0
    vt[flip, :] *= -1.0
    return u, vt


def _randomized_factors(a, r, seed):
    n, m = a.shape
    width = min(r + RSVD_OVERSAMPLING, min(n, m))
    rng = np.random.default_rng(seed)
    sketch = rng.standard_normal((m, width))
    with _single_thread():
        q, _ = np.linalg.qr(a @ sketch)
        for _ in range(RSVD_POWER_ITERATIONS):
            z, _ = np.linalg.qr(a.T @ q)
            q, _ = np.linalg.qr(a @ z)
        u_small, sigma, vt = np.linalg.svd(q.T @ a, full_matrices=False)
        u = q @ u_small
    return u, sigma, vt


def truncated_svd(a, r, method="exact", seed=None):
    """Leading-r singular factors of a dense matrix.

    Parameters
    ----------
    a : (n, m) array
    r : int, 1 <= r <= min(n, m)
    method : "exact" or "randomized"
        The randomized path sketches with Gaussian oversampling and power
        iterations and requires a seed.

    Returns
    -------
    SvdResult with u (n, r), sigma (r,) non-increasing, vt (r, m), under
    the sign convention that each u column's largest-magnitude entry is
    non-negative.
    """
    af = ensure_finite_matrix(a, "a")
    n, m = af.shape
    r = int(r)
    if not 1 <= r <= min(n, m):
        raise NumericalError(f"rank out of range: r={r} for a {n}x{m} matrix")
    if method == "exact":
        with _single_thread():
            u, sigma, vt = np.linalg.svd(af, full_matrices=False)
    elif method == "randomized":
        if seed is None:
            raise ValidationError("randomized SVD requires a seed")
        u, sigma, vt = _randomized_factors(af, r, seed)
    else:
        raise ValidationError(f"unknown SVD method: {method!r}")
    u = u[:, :r].copy()
    sigma = sigma[:r].copy()
    vt = vt[:r, :].copy()
    u, vt = _apply_sign_convention(u, vt)
    return SvdResult(u=u, sigma=sigma, vt=vt)


def pinv(a, rel_cutoff=DEFAULT_REL_CUTOFF):
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below rel_cutoff * sigma_max * max(n, m) are
    treated as zero. A zero matrix maps to the zero matrix of transposed
    shape.
    """
    af = ensure_finite_matrix(a, "a")
    rel_cutoff = float(rel_cutoff)
    if not 0.0 < rel_cutoff < 1.0:
        raise ValidationError(f"rel_cutoff must be in (0, 1), got {rel_cutoff}")
    n, m = af.shape
    if af.size == 0:
        return np.zeros((m, n))
    with _single_thread():
        u, sigma, vt = np.linalg.svd(af, full_matrices=False)
        cutoff = rel_cutoff * sigma[0] * max(n, m)
        inv = np.zeros_like(sigma)
        keep = sigma > cutoff
        inv[keep] = 1.0 / sigma[keep]
        return (vt.T * inv) @ u.T


def lstsq(a, b, rel_cutoff=DEFAULT_REL_CUTOFF):
    """Minimum-norm least-squares solution of a @ x = b.

    Computed as pinv(a) @ b with the product formed column by column, so
    solving the columns of b separately is bitwise identical to the
    batched solve. Accepts a 1-D b and returns a 1-D solution for it.
    """
    af = ensure_finite_matrix(a, "a")
    b_arr = np.asarray(b)
    one_dim = b_arr.ndim == 1
    bf = ensure_finite_matrix(b_arr[:, None] if one_dim else b_arr, "b")
    if af.shape[0] != bf.shape[0]:
        raise ValidationError(
            f"row mismatch: a has {af.shape[0]} rows, b has {bf.shape[0]}"
        )
    p = pinv(af, rel_cutoff=rel_cutoff)
    out = np.empty((af.shape[1], bf.shape[1]))
    with _single_thread():
        for j in range(bf.shape[1]):
            out[:, j] = p @ bf[:, j]
    return out[:, 0] if one_dim else out


def cosine_similarity(x, y):
    """Cosine of the angle between two vectors, 0.0 if either is near zero."""
    xv = ensure_vector(x, "x")
    yv = ensure_vector(y, "y")
    if xv.shape[0] != yv.shape[0]:
        raise ValidationError(
            f"length mismatch: {xv.shape[0]} vs {yv.shape[0]}"
        )
    nx = float(np.linalg.norm(xv))
    ny = float(np.linalg.norm(yv))
    if nx < _ZERO_NORM or ny < _ZERO_NORM:
        return 0.0
    value = float(np.dot(xv, yv) / (nx * ny))
    return min(1.0, max(-1.0, value))
