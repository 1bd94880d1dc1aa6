"""Embedding analyses and sweep harness.

Covers cosine-centroid phoneme classification, per-phoneme speaker
verification trials scored into an equal error rate, and the rank and
frame-budget sweeps, which report feature-space proxies (recovery and
self-conversion errors) rather than any downstream audio metric.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .align import build_aligned_stack, make_frame_pool
from .errors import ValidationError
from .factorize import content_of, factorize, scf_convert
from .linalg import _single_thread, lstsq
from .store import LabelTrack, _atomic_write_text
from .universal import (
    derive_speaker_transform,
    derive_w0,
    derive_w1,
    derive_w2,
    sample_frames,
    uscf_convert,
)
from .validation import ensure_finite_matrix, ensure_fraction

_ZERO_NORM = 1e-12


@dataclass(frozen=True)
class TrialSet:
    """Verification trials: a score and a target/non-target flag each."""

    scores: np.ndarray
    is_target: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_target(self):
        return int(self.is_target.sum())

    @property
    def n_nontarget(self):
        return int((~self.is_target).sum())


def make_trial_set(scores, is_target, **meta):
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(is_target, dtype=bool)
    if s.ndim != 1 or t.ndim != 1 or s.shape != t.shape:
        raise ValidationError("scores and is_target must be 1-D and equal length")
    if s.size and not np.isfinite(s).all():
        raise ValidationError("scores contain non-finite entries")
    if t.sum() == 0 or (~t).sum() == 0:
        raise ValidationError(
            "degenerate trial set: need at least one target and one non-target"
        )
    return TrialSet(scores=s, is_target=t, meta=dict(meta))


def compute_eer(trials):
    """Equal error rate of a trial set.

    Sweeps every distinct score as a threshold t with
    FAR(t) = fraction of non-targets scoring >= t and
    FRR(t) = fraction of targets scoring < t, then takes the FAR/FRR
    crossing, linearly interpolated between adjacent thresholds.
    """
    n_tar = trials.n_target
    n_non = trials.n_nontarget
    if n_tar == 0 or n_non == 0:
        raise ValidationError(
            "degenerate trial set: need at least one target and one non-target"
        )
    scores = trials.scores
    targets = np.sort(scores[trials.is_target])
    nontargets = np.sort(scores[~trials.is_target])
    thresholds = np.unique(scores)[::-1]
    far = (n_non - np.searchsorted(nontargets, thresholds, side="left")) / n_non
    frr = np.searchsorted(targets, thresholds, side="left") / n_tar
    # Sentinel above the maximum score: nothing accepted, everything rejected.
    far = np.concatenate(([0.0], far))
    frr = np.concatenate(([1.0], frr))
    diff = far - frr
    k = int(np.argmax(diff >= 0.0))
    if diff[k] == 0.0:
        return float(far[k])
    a = k - 1
    denom = (far[k] - far[a]) - (frr[k] - frr[a])
    alpha = (frr[a] - far[a]) / denom
    return float(far[a] + alpha * (far[k] - far[a]))


def _as_label_arrays(features, labels):
    feats = ensure_finite_matrix(features, "features")
    if isinstance(labels, LabelTrack):
        if len(labels) != feats.shape[0] or not np.array_equal(
            labels.frame_index, np.arange(feats.shape[0])
        ):
            raise ValidationError(
                "labels must cover every feature row: expected frame indices "
                f"0..{feats.shape[0] - 1}"
            )
        return feats, np.asarray(labels.speaker_ids), np.asarray(labels.phonemes)
    phonemes = np.asarray(labels)
    if phonemes.shape != (feats.shape[0],):
        raise ValidationError(
            f"got {phonemes.shape[0] if phonemes.ndim else 0} labels "
            f"for {feats.shape[0]} feature rows"
        )
    return feats, None, phonemes


def class_splits(labels, enrollment_fraction=0.5, seed=0):
    """Per-class enrollment/test index split, clamped non-degenerate.

    Classes are processed in sorted order against one seeded generator, so
    the split is reproducible and shareable with external scorers.
    """
    frac = ensure_fraction(enrollment_fraction, "enrollment_fraction")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    splits = {}
    for label in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == label)
        if idx.size < 2:
            raise ValidationError(
                f"class {label!r} has fewer than 2 frames; cannot split"
            )
        perm = rng.permutation(idx.size)
        n_enroll = int(np.clip(round(frac * idx.size), 1, idx.size - 1))
        enroll = np.sort(idx[perm[:n_enroll]])
        test = np.sort(idx[perm[n_enroll:]])
        splits[label] = (enroll, test)
    return splits


def _normalized(x):
    norms = np.linalg.norm(x, axis=1)
    out = np.zeros_like(x)
    ok = norms >= _ZERO_NORM
    out[ok] = x[ok] / norms[ok, None]
    return out


def phoneme_classify(features, labels, enrollment_fraction=0.5, seed=0):
    """Cosine-centroid phoneme classification accuracy.

    Each phoneme's reference embedding is the mean of its enrollment
    split; every test frame goes to the phoneme at minimum cosine
    distance, ties resolved to the lexicographically smallest label.
    Returns (accuracy, per_class accuracy dict).
    """
    feats, _, phonemes = _as_label_arrays(features, labels)
    splits = class_splits(phonemes, enrollment_fraction, seed)
    ordered = sorted(splits)
    refs = np.stack([feats[splits[c][0]].mean(axis=0) for c in ordered])
    refs_n = _normalized(refs)
    test_idx = np.concatenate([splits[c][1] for c in ordered])
    test_true = np.concatenate(
        [np.full(splits[c][1].size, i) for i, c in enumerate(ordered)]
    )
    with _single_thread():
        sims = _normalized(feats[test_idx]) @ refs_n.T
    pred = np.argmax(sims, axis=1)
    correct = pred == test_true
    per_class = {
        c: float(correct[test_true == i].mean()) for i, c in enumerate(ordered)
    }
    return float(correct.mean()), per_class


def per_phoneme_speaker_trials(features, labels, enrollment_fraction=0.5, seed=0):
    """Speaker verification trials built within each phoneme group.

    Within one phoneme, every participating speaker gets a centroid from
    the enrollment half of its frames; each test frame is scored by cosine
    against every centroid in the group (own speaker = target trial).
    Cells with fewer than 2 frames, and phoneme groups with fewer than 2
    participating speakers, are skipped and reported in the meta.
    """
    feats, speakers, phonemes = _as_label_arrays(features, labels)
    if speakers is None:
        raise ValidationError("speaker trials need labels with speaker ids")
    frac = ensure_fraction(enrollment_fraction, "enrollment_fraction")
    rng = np.random.default_rng(seed)
    skipped_cells = []
    skipped_groups = []
    all_scores = []
    all_is_target = []
    for ph in sorted(set(phonemes.tolist())):
        group = np.flatnonzero(phonemes == ph)
        cells = {}
        for spk in sorted(set(speakers[group].tolist())):
            idx = group[speakers[group] == spk]
            if idx.size < 2:
                skipped_cells.append((ph, spk, int(idx.size)))
                continue
            cells[spk] = idx
        if len(cells) < 2:
            skipped_groups.append(ph)
            continue
        order = sorted(cells)
        test_parts = {}
        centroids = []
        for spk in order:
            idx = cells[spk]
            perm = rng.permutation(idx.size)
            n_enroll = int(np.clip(round(frac * idx.size), 1, idx.size - 1))
            centroids.append(feats[np.sort(idx[perm[:n_enroll]])].mean(axis=0))
            test_parts[spk] = np.sort(idx[perm[n_enroll:]])
        cents_n = _normalized(np.stack(centroids))
        for col, spk in enumerate(order):
            with _single_thread():
                sims = _normalized(feats[test_parts[spk]]) @ cents_n.T
            flags = np.zeros(len(order), dtype=bool)
            flags[col] = True
            all_scores.append(sims.ravel())
            all_is_target.append(np.tile(flags, sims.shape[0]))
    if not all_scores:
        raise ValidationError("no eligible (phoneme, speaker) cells")
    return make_trial_set(
        np.concatenate(all_scores),
        np.concatenate(all_is_target),
        grouping="phoneme",
        enrollment_fraction=frac,
        seed=seed,
        skipped_cells=tuple(skipped_cells),
        skipped_groups=tuple(skipped_groups),
    )


@dataclass(frozen=True)
class EvalReport:
    """Sweep results: one metrics row per parameter value, sorted."""

    param: str
    rows: tuple
    provenance: dict

    def metric_names(self):
        return list(self.rows[0][1].keys()) if self.rows else []

    def column(self, metric):
        return np.array([metrics[metric] for _, metrics in self.rows])

    def values(self):
        return [value for value, _ in self.rows]


def _config_hash(provenance):
    canon = ";".join(f"{k}={provenance[k]}" for k in sorted(provenance))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def write_report(path, report):
    """Emit a report as UTF-8 TSV with a leading "# config_hash=" line."""
    names = report.metric_names()
    lines = [f"# config_hash={report.provenance.get('config_hash', '')}"]
    lines.append("\t".join([report.param] + names))
    for value, metrics in report.rows:
        lines.append(
            "\t".join([str(value)] + [f"{metrics[m]:.10g}" for m in names])
        )
    _atomic_write_text(path, "\n".join(lines) + "\n")


def _relative_error(actual, reference):
    return float(np.linalg.norm(actual - reference) / np.linalg.norm(reference))


_W_DERIVERS = {"w0": derive_w0, "w1": derive_w1, "w2": None}


def _world_stack(world, k_neighbors=1):
    pools = [
        make_frame_pool(spk, world.features[spk]) for spk in world.speaker_ids
    ]
    return build_aligned_stack(pools[0], pools[1:], k_neighbors)


def run_sweep(
    world,
    param,
    values,
    rank=None,
    budget_seed=0,
    k_neighbors=1,
    mapping_method="w1",
):
    """Run a rank or frame-budget sweep over one synthetic world.

    param="rank": factorize the aligned stack at each rank and report the
    relative stack recovery error plus the anchor's closed-set
    self-conversion error.

    param="frames": factorize once (at `rank`, default the world's true
    rank), derive a universal mapping, then for each budget derive the
    first unseen speaker's transform from that many frames and report the
    transform recovery error against the gauge-aligned ground truth plus
    the open-set self-conversion error.
    """
    if param not in ("rank", "frames"):
        raise ValidationError(f"unknown sweep parameter: {param!r}")
    values = sorted({int(v) for v in values})
    if not values or values[0] < 1:
        raise ValidationError("sweep values must be positive integers")
    stack = _world_stack(world, k_neighbors)
    anchor = world.speaker_ids[0]
    rows = []
    if param == "rank":
        x_norm = np.linalg.norm(stack.x)
        anchor_feats = world.features[anchor]
        for r in values:
            fact = factorize(stack, r)
            recon = content_of(fact) @ fact.s_concat()
            metrics = {
                "content_recovery_error": float(
                    np.linalg.norm(stack.x - recon) / x_norm
                ),
                "self_conversion_error": _relative_error(
                    scf_convert(anchor_feats, fact, anchor, anchor), anchor_feats
                ),
            }
            rows.append((r, metrics))
    else:
        if not world.extra_ids:
            raise ValidationError("frame-budget sweep needs an unseen speaker")
        rank_eff = int(rank) if rank is not None else world.true_rank
        fact = factorize(stack, rank_eff)
        if mapping_method == "w2":
            mapping = derive_w2(fact)
        elif mapping_method in _W_DERIVERS and _W_DERIVERS[mapping_method]:
            mapping = _W_DERIVERS[mapping_method](fact, stack)
        else:
            raise ValidationError(f"unknown mapping method: {mapping_method!r}")
        unseen = world.extra_ids[0]
        x_unseen = world.features[unseen]
        gauge = lstsq(world.content_rows[anchor], content_of(fact))
        s_true = lstsq(gauge, world.transform_of(unseen))
        for budget in values:
            sampled = sample_frames(x_unseen, budget, budget_seed)
            transform = derive_speaker_transform(sampled, mapping, unseen)
            metrics = {
                "s_recovery_error": _relative_error(transform.s, s_true),
                "self_conversion_error": _relative_error(
                    uscf_convert(x_unseen, mapping, transform), x_unseen
                ),
            }
            rows.append((budget, metrics))
    provenance = {
        "param": param,
        "values": ",".join(str(v) for v in values),
        "rank": rank if rank is not None else "",
        "budget_seed": budget_seed,
        "k_neighbors": k_neighbors,
        "mapping_method": mapping_method,
        "world_seed": world.seed,
    }
    provenance["config_hash"] = _config_hash(provenance)
    return EvalReport(param=param, rows=tuple(rows), provenance=provenance)
