"""Universal feature-to-content mappings and one-shot speaker transforms.

A content mapping is a d x r matrix W with X @ W ~ C for any speaker's
features X, including speakers absent from the factorization:

    W0 minimizes sum_j ||X_j W - C||_F          (direct content target)
    W1 solves the same system against U and right-scales by sigma, so
       X_j W1 inv(diag(sigma)) ~ U
    W2 minimizes sum_j ||S_j W - I_r||_F        (inverts the transforms)
    W3 = pinv(S_i) for a chosen seen speaker i

An unseen speaker's transform is estimated from a few frames X_m as
S_m = pinv(X_m W) X_m, and open-set conversion is (x_src W) S_tgt.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .factorize import content_of
from .linalg import lstsq, pinv
from .validation import ensure_finite_matrix, ensure_positive_int

DEFAULT_FRAME_BUDGET = 500


@dataclass(frozen=True)
class ContentMapping:
    """A d x r feature-to-content matrix and how it was derived."""

    w: np.ndarray
    method: str
    w3_basis_speaker: str = None

    @property
    def dim(self):
        return int(self.w.shape[0])

    @property
    def rank(self):
        return int(self.w.shape[1])


@dataclass(frozen=True)
class SpeakerTransform:
    """An r x d content-to-feature matrix for one speaker."""

    s: np.ndarray
    speaker_id: str
    frames_used: int
    mapping_method: str

    @property
    def rank(self):
        return int(self.s.shape[0])

    @property
    def dim(self):
        return int(self.s.shape[1])


def _check_consistent(fact, stack):
    if tuple(fact.speaker_order) != tuple(stack.speaker_order):
        raise ValidationError("factorization and stack speaker orders differ")
    if fact.n != stack.n or fact.dim != stack.d:
        raise ValidationError(
            f"factorization ({fact.n} frames, dim {fact.dim}) inconsistent "
            f"with stack ({stack.n} frames, dim {stack.d})"
        )


def _stacked_design(stack):
    return np.vstack([stack.block(j) for j in range(stack.k)])


def derive_w0(fact, stack):
    """Least-squares mapping onto the content representation C."""
    _check_consistent(fact, stack)
    design = _stacked_design(stack)
    target = np.tile(content_of(fact), (stack.k, 1))
    return ContentMapping(w=lstsq(design, target), method="w0")


def derive_w1(fact, stack):
    """Least-squares mapping onto U, right-scaled by the singular values.

    Solves V = argmin sum_j ||X_j V - U||_F and returns W1 = V diag(sigma),
    so all r content dimensions carry equal weight in the fit. With
    sigma identically one this is exactly derive_w0.
    """
    _check_consistent(fact, stack)
    if fact.sigma[-1] <= 0.0:
        raise NumericalError("singular sigma: cannot scale the U-target solve")
    design = _stacked_design(stack)
    target = np.tile(fact.u, (stack.k, 1))
    v = lstsq(design, target)
    return ContentMapping(w=v * fact.sigma, method="w1")


def derive_w2(fact):
    """Least-squares inverse of the stacked speaker transforms."""
    r = fact.rank
    design = np.vstack(fact.s_blocks)
    target = np.tile(np.eye(r), (fact.k, 1))
    return ContentMapping(w=lstsq(design, target), method="w2")


def derive_w3(fact, basis_speaker=None):
    """Pseudoinverse of one seen speaker's transform."""
    if basis_speaker is None:
        basis_speaker = fact.speaker_order[0]
    s_i = fact.s_for(basis_speaker)
    return ContentMapping(w=pinv(s_i), method="w3", w3_basis_speaker=basis_speaker)


def w3_residual(fact, basis_speaker):
    """Mean over j != basis of ||S_j @ W3 - I||_F / sqrt(r)."""
    mapping = derive_w3(fact, basis_speaker)
    eye = np.eye(fact.rank)
    scale = np.sqrt(fact.rank)
    values = [
        np.linalg.norm(block @ mapping.w - eye) / scale
        for spk, block in zip(fact.speaker_order, fact.s_blocks)
        if spk != basis_speaker
    ]
    if not values:
        raise ValidationError("w3 residual needs at least two speakers")
    return float(np.mean(values))


def w3_residual_spread(fact, runs=None, seed=None):
    """Residuals across basis-speaker choices.

    With runs=None every seen speaker serves as the basis once; otherwise
    `runs` basis speakers are sampled with replacement using the seed.
    Returns (basis_ids, residuals).
    """
    if runs is None:
        basis_ids = list(fact.speaker_order)
    else:
        runs = ensure_positive_int(runs, "runs")
        rng = np.random.default_rng(seed)
        picks = rng.integers(0, fact.k, size=runs)
        basis_ids = [fact.speaker_order[i] for i in picks]
    residuals = np.array([w3_residual(fact, b) for b in basis_ids])
    return basis_ids, residuals


def sample_frames(x, budget, seed):
    """Deterministic frame subsample: a seeded shuffle truncated at the
    budget, returned in file order. Budgets are nested: a smaller budget
    with the same seed selects a subset of a larger one."""
    xf = ensure_finite_matrix(x, "x")
    budget = ensure_positive_int(budget, "budget")
    n = xf.shape[0]
    if budget >= n:
        return xf.copy()
    idx = np.random.default_rng(seed).permutation(n)[:budget]
    idx.sort()
    return xf[idx]


def derive_speaker_transform(x_m, mapping, speaker_id=""):
    """One-shot speaker transform S_m = pinv(X_m @ W) @ X_m.

    Fewer frames than the rank is allowed (the pseudoinverse handles the
    rank deficiency) but draws a warning: the estimate degrades sharply.
    """
    xm = ensure_finite_matrix(x_m, "x_m")
    if xm.shape[0] == 0:
        raise ValidationError("empty input: need at least one frame")
    if xm.shape[1] != mapping.dim:
        raise ValidationError(
            f"dim mismatch: frames have {xm.shape[1]}, mapping has {mapping.dim}"
        )
    m = xm.shape[0]
    if m < mapping.rank:
        warnings.warn(
            f"deriving a rank-{mapping.rank} speaker transform from only "
            f"{m} frames; expect a poor estimate",
            stacklevel=2,
        )
    s = lstsq(xm @ mapping.w, xm)
    return SpeakerTransform(
        s=s, speaker_id=speaker_id, frames_used=m, mapping_method=mapping.method
    )


def extract_content(x, mapping):
    """Map features into content space: x @ W."""
    xf = ensure_finite_matrix(x, "x")
    if xf.shape[1] != mapping.dim:
        raise ValidationError(
            f"dim mismatch: features have {xf.shape[1]}, mapping has {mapping.dim}"
        )
    return xf @ mapping.w


def uscf_convert(x_src, mapping, s_tgt):
    """Open-set conversion (x_src @ W) @ S_tgt."""
    xf = ensure_finite_matrix(x_src, "x_src")
    if xf.shape[1] != mapping.dim:
        raise ValidationError(
            f"dim mismatch: input has {xf.shape[1]}, mapping has {mapping.dim}"
        )
    if s_tgt.rank != mapping.rank:
        raise ValidationError(
            f"rank mismatch: mapping has {mapping.rank}, transform has {s_tgt.rank}"
        )
    if (
        s_tgt.mapping_method not in ("", "unknown")
        and mapping.method not in ("", "unknown")
        and s_tgt.mapping_method != mapping.method
    ):
        warnings.warn(
            f"speaker transform was derived with {s_tgt.mapping_method!r} but "
            f"conversion uses {mapping.method!r}; results may be inconsistent",
            stacklevel=2,
        )
    return (xf @ mapping.w) @ s_tgt.s
