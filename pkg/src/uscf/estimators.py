"""Estimator facades over the functional pipeline.

These follow the fit/transform/get_params protocol so they compose with
scikit-learn pipelines and model selection, without depending on it.
"""

import inspect

import numpy as np

from .align import build_aligned_stack, knn_match, make_frame_pool
from .errors import NotFittedError, ValidationError
from .factorize import DEFAULT_RANK, factorize
from .universal import (
    DEFAULT_FRAME_BUDGET,
    derive_speaker_transform,
    derive_w0,
    derive_w1,
    derive_w2,
    derive_w3,
    extract_content,
    sample_frames,
    uscf_convert,
)
from .validation import ensure_finite_matrix


class _Estimator:
    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [name for name in sig.parameters if name != "self"]

    def get_params(self, deep=True):
        params = {}
        for name in self._param_names():
            value = getattr(self, name)
            params[name] = value
            if deep and hasattr(value, "get_params"):
                for key, sub in value.get_params(deep=True).items():
                    params[f"{name}__{key}"] = sub
        return params

    def set_params(self, **params):
        names = self._param_names()
        nested = {}
        for key, value in params.items():
            if "__" in key:
                head, _, rest = key.partition("__")
                nested.setdefault(head, {})[rest] = value
            elif key in names:
                setattr(self, key, value)
            else:
                raise ValidationError(f"unknown parameter {key!r} for {type(self).__name__}")
        for head, sub in nested.items():
            getattr(self, head).set_params(**sub)
        return self

    def _fitted(self, attr):
        value = getattr(self, attr, None)
        if value is None:
            raise NotFittedError(
                f"{type(self).__name__} instance is not fitted yet; call fit first"
            )
        return value


class FrameMatcher(_Estimator):
    """Cosine kNN matcher: fit on a frame pool, transform queries to the
    mean of their nearest pool frames."""

    def __init__(self, k_neighbors=1):
        self.k_neighbors = k_neighbors
        self.pool_ = None

    def fit(self, X, y=None):
        self.pool_ = make_frame_pool("pool", X)
        return self

    def transform(self, X):
        return knn_match(X, self._fitted("pool_"), self.k_neighbors)

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


_METHODS = {"w0": derive_w0, "w1": derive_w1}


class ContentExtractor(_Estimator):
    """Learn a universal feature-to-content mapping from labeled frames.

    fit(X, y) groups the rows of X by the speaker labels y (the first
    label in appearance order is the anchor unless `anchor` is given),
    aligns, factorizes at `rank`, and derives the requested mapping.
    transform(X) then maps any speaker's frames into content space.
    """

    def __init__(
        self,
        rank=DEFAULT_RANK,
        method="w1",
        anchor=None,
        k_neighbors=1,
        svd_method="exact",
        seed=None,
    ):
        self.rank = rank
        self.method = method
        self.anchor = anchor
        self.k_neighbors = k_neighbors
        self.svd_method = svd_method
        self.seed = seed
        self.mapping_ = None
        self.factorization_ = None

    def fit(self, X, y):
        feats = ensure_finite_matrix(X, "X")
        labels = np.asarray(y)
        if labels.shape != (feats.shape[0],):
            raise ValidationError("y must hold one speaker label per row of X")
        order = []
        for label in labels.tolist():
            if label not in order:
                order.append(label)
        anchor = self.anchor if self.anchor is not None else order[0]
        if anchor not in order:
            raise ValidationError(f"anchor {anchor!r} not present in y")
        order.remove(anchor)
        order.insert(0, anchor)
        pools = [
            make_frame_pool(str(label), feats[labels == label]) for label in order
        ]
        stack = build_aligned_stack(pools[0], pools[1:], self.k_neighbors)
        fact = factorize(stack, self.rank, self.svd_method, self.seed)
        if self.method in _METHODS:
            mapping = _METHODS[self.method](fact, stack)
        elif self.method == "w2":
            mapping = derive_w2(fact)
        elif self.method == "w3":
            mapping = derive_w3(fact)
        else:
            raise ValidationError(f"unknown mapping method: {self.method!r}")
        self.mapping_ = mapping
        self.factorization_ = fact
        return self

    def transform(self, X):
        return extract_content(X, self._fitted("mapping_"))

    def fit_transform(self, X, y):
        return self.fit(X, y).transform(X)


class VoiceConverter(_Estimator):
    """Convert source frames toward a target speaker.

    fit(X) derives the target speaker's transform from up to `frames`
    rows of X using the extractor's mapping; transform(X) converts source
    frames into the fitted target's feature space.
    """

    def __init__(self, extractor=None, frames=DEFAULT_FRAME_BUDGET, seed=0):
        self.extractor = extractor
        self.frames = frames
        self.seed = seed
        self.transform_ = None

    def _mapping(self):
        if self.extractor is None:
            raise ValidationError("VoiceConverter needs a fitted ContentExtractor")
        return self.extractor._fitted("mapping_")

    def fit(self, X, y=None):
        mapping = self._mapping()
        sampled = sample_frames(X, self.frames, self.seed)
        self.transform_ = derive_speaker_transform(sampled, mapping)
        return self

    def transform(self, X):
        return uscf_convert(X, self._mapping(), self._fitted("transform_"))

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)
