"""Cosine nearest-neighbor alignment of speaker frame pools.

Builds the content-aligned stack: for every anchor frame, each other
speaker contributes the mean of its k most cosine-similar frames, and the
per-speaker blocks are concatenated along the feature dimension.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .linalg import _single_thread
from .validation import ensure_finite_matrix

SILENCE_NORM = 1e-8


@dataclass(frozen=True)
class FramePool:
    """One speaker's frames with precomputed row norms, silence removed."""

    speaker_id: str
    frames: np.ndarray
    norms: np.ndarray

    @property
    def size(self):
        return int(self.frames.shape[0])

    @property
    def dim(self):
        return int(self.frames.shape[1])


def make_frame_pool(speaker_id, frames):
    arr = ensure_finite_matrix(frames, f"frames of {speaker_id!r}")
    norms = np.linalg.norm(arr, axis=1)
    keep = norms >= SILENCE_NORM
    arr = arr[keep]
    norms = norms[keep]
    if arr.shape[0] == 0:
        raise ValidationError(
            f"speaker {speaker_id!r} has no frames after silence filtering"
        )
    return FramePool(speaker_id=speaker_id, frames=arr, norms=norms)


def _normalized_rows(x):
    norms = np.linalg.norm(x, axis=1)
    out = np.zeros_like(x)
    ok = norms >= SILENCE_NORM
    out[ok] = x[ok] / norms[ok, None]
    return out


def knn_match_indices(queries, pool, k_neighbors=1):
    """Indices of each query's k nearest pool rows by cosine similarity.

    Returns an (n, k) array ordered by decreasing similarity; ties pick
    the lowest pool index. Queries below the silence norm score 0 against
    everything and fall through to the lowest indices.
    """
    q = ensure_finite_matrix(queries, "queries")
    k = int(k_neighbors)
    if q.shape[1] != pool.dim:
        raise ValidationError(
            f"dim mismatch: queries have {q.shape[1]}, pool has {pool.dim}"
        )
    if pool.size == 0:
        raise ValidationError("empty pool")
    if not 1 <= k <= pool.size:
        raise ValidationError(
            f"k_neighbors must be in [1, {pool.size}], got {k_neighbors}"
        )
    qn = _normalized_rows(q)
    pn = pool.frames / pool.norms[:, None]
    with _single_thread():
        sims = qn @ pn.T
    if k == 1:
        return np.argmax(sims, axis=1)[:, None]
    order = np.argsort(-sims, axis=1, kind="stable")
    return order[:, :k]


def knn_match(queries, pool, k_neighbors=1):
    """Row i of the result is the mean of the k pool rows nearest query i."""
    idx = knn_match_indices(queries, pool, k_neighbors)
    if idx.shape[1] == 1:
        return pool.frames[idx[:, 0]].copy()
    return pool.frames[idx].mean(axis=1)


@dataclass(frozen=True)
class AlignedStack:
    """Content-aligned stack x of shape (n, k*d), anchor block first."""

    anchor_id: str
    speaker_order: tuple
    x: np.ndarray

    def __post_init__(self):
        if len(self.speaker_order) < 1:
            raise ValidationError("speaker_order is empty")
        if self.x.ndim != 2 or self.x.shape[1] % len(self.speaker_order) != 0:
            raise ValidationError(
                f"stack shape {self.x.shape} is not divisible into "
                f"{len(self.speaker_order)} speaker blocks"
            )
        if self.anchor_id != self.speaker_order[0]:
            raise ValidationError("anchor must be speaker_order[0]")

    @property
    def n(self):
        return int(self.x.shape[0])

    @property
    def k(self):
        return len(self.speaker_order)

    @property
    def d(self):
        return int(self.x.shape[1] // self.k)

    def block(self, j):
        return self.x[:, j * self.d:(j + 1) * self.d]

    def block_for(self, speaker_id):
        try:
            j = self.speaker_order.index(speaker_id)
        except ValueError:
            raise ValidationError(f"unknown speaker id: {speaker_id!r}") from None
        return self.block(j)


def build_aligned_stack(anchor, others, k_neighbors=1):
    """Align every other pool to the anchor and stack the blocks.

    The anchor block is the anchor frames verbatim; block j holds, row for
    row, the kNN match of the anchor frames in pool j.
    """
    if not others:
        raise ValidationError("need at least one non-anchor pool")
    ids = [anchor.speaker_id] + [p.speaker_id for p in others]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate speaker ids across pools")
    for p in others:
        if p.dim != anchor.dim:
            raise ValidationError(
                f"dim mismatch: {p.speaker_id!r} has {p.dim}, "
                f"anchor has {anchor.dim}"
            )
    blocks = [anchor.frames]
    for p in others:
        blocks.append(knn_match(anchor.frames, p, k_neighbors))
    return AlignedStack(
        anchor_id=anchor.speaker_id,
        speaker_order=tuple(ids),
        x=np.hstack(blocks),
    )
