"""Closed-set factorization of the aligned stack and in-set conversion.

The stack X (n, k*d) is approximated by its rank-r truncated SVD
X ~ U diag(sigma) Vt. The content representation is C = U diag(sigma) and
Vt splits column-wise into per-speaker transforms S_1..S_k with
X_j ~ C S_j. Conversion between two seen speakers is
x_src @ pinv(S_src) @ S_tgt.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .linalg import DEFAULT_REL_CUTOFF, pinv, truncated_svd
from .validation import ensure_finite_matrix

DEFAULT_RANK = 75


@dataclass(frozen=True)
class Factorization:
    speaker_order: tuple
    u: np.ndarray
    sigma: np.ndarray
    s_blocks: tuple

    def __post_init__(self):
        if len(self.s_blocks) != len(self.speaker_order):
            raise ValidationError("one S block per speaker required")
        r = self.u.shape[1]
        if self.sigma.shape != (r,):
            raise ValidationError("sigma length must equal the rank")
        for block in self.s_blocks:
            if block.shape[0] != r:
                raise ValidationError("S block row count must equal the rank")
            if block.shape[1] != self.s_blocks[0].shape[1]:
                raise ValidationError("S blocks must share the feature dim")

    @property
    def rank(self):
        return int(self.u.shape[1])

    @property
    def dim(self):
        return int(self.s_blocks[0].shape[1])

    @property
    def k(self):
        return len(self.speaker_order)

    @property
    def n(self):
        return int(self.u.shape[0])

    def index_of(self, speaker_id):
        try:
            return self.speaker_order.index(speaker_id)
        except ValueError:
            raise ValidationError(f"unknown speaker id: {speaker_id!r}") from None

    def s_for(self, speaker_id):
        return self.s_blocks[self.index_of(speaker_id)]

    def s_concat(self):
        return np.hstack(self.s_blocks)


def factorize(stack, r=DEFAULT_RANK, svd_method="exact", seed=None):
    """Rank-r factorization of an aligned stack.

    Raises NumericalError when r is out of range or when the r-th retained
    singular value falls at or below the relative cutoff (the stack is
    effectively rank deficient and the bundle could not honor its declared
    rank).
    """
    n, kd = stack.x.shape
    r = int(r)
    if not 1 <= r <= min(n, kd):
        raise NumericalError(
            f"rank out of range: r={r} for a {n}x{kd} stack"
        )
    result = truncated_svd(stack.x, r, method=svd_method, seed=seed)
    cutoff = DEFAULT_REL_CUTOFF * result.sigma[0] * max(n, kd)
    if result.sigma[-1] <= cutoff:
        raise NumericalError(
            f"effective rank deficient: sigma[{r - 1}]={result.sigma[-1]:.3e} "
            f"is at or below the cutoff {cutoff:.3e}"
        )
    d = stack.d
    blocks = tuple(
        result.vt[:, j * d:(j + 1) * d].copy() for j in range(stack.k)
    )
    return Factorization(
        speaker_order=tuple(stack.speaker_order),
        u=result.u,
        sigma=result.sigma,
        s_blocks=blocks,
    )


def content_of(fact):
    """Content representation C = U diag(sigma), shape (n, r)."""
    return fact.u * fact.sigma


def scf_convert(x_src, fact, src, tgt):
    """Closed-set conversion x_src @ pinv(S_src) @ S_tgt."""
    xs = ensure_finite_matrix(x_src, "x_src")
    if xs.shape[1] != fact.dim:
        raise ValidationError(
            f"dim mismatch: input has {xs.shape[1]}, factorization has {fact.dim}"
        )
    s_src = fact.s_for(src)
    s_tgt = fact.s_for(tgt)
    if xs.shape[0] == 0:
        return np.zeros((0, fact.dim))
    return (xs @ pinv(s_src)) @ s_tgt
