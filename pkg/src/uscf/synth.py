"""Synthetic linear-speaker worlds with exact ground truth.

Every speaker's features follow X_j = C_j (T + beta * B_j) + noise where
T is a shared content basis and B_j a per-speaker timbre basis, both with
orthonormal rows drawn in strict mode from one orthonormal frame so that
content and all timbre row spaces are exactly mutually orthogonal.

Seen speakers share one content pool: speaker j's frame t carries pool row
perm_j(t), so cross-speaker nearest-neighbor alignment can land on frames
generated from the very same content row. Unseen (extra) speakers draw
fresh content from the same cluster distribution. Provenance records, for
every generated frame, its speaker, its pool row (-1 for extras), and its
cluster, which doubles as the synthetic phoneme label.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ValidationError
from .store import (
    DEFAULT_FRAME_RATE,
    _atomic_write_text,
    _read_meta,
    _write_meta,
    read_fmat,
    write_fmat,
    write_labels,
    write_manifest,
)

DEFAULT_JITTER = 0.25


@dataclass(frozen=True)
class SynthWorld:
    true_rank: int
    dim: int
    clusters: int
    beta: float
    noise_sigma: float
    seed: int
    strict: bool
    jitter: float
    frames_per_speaker: int
    speaker_ids: tuple
    extra_ids: tuple
    content_pool: np.ndarray
    pool_clusters: np.ndarray
    t_content: np.ndarray
    timbre: dict
    features: dict
    content_rows: dict
    pool_index: dict
    frame_clusters: dict
    timbre_overlap: float

    def all_ids(self):
        return list(self.speaker_ids) + list(self.extra_ids)

    def transform_of(self, speaker_id):
        """Ground-truth r* x d transform T + beta * B_j of one speaker."""
        if speaker_id not in self.timbre:
            raise ValidationError(f"unknown speaker id: {speaker_id!r}")
        return self.t_content + self.beta * self.timbre[speaker_id]

    def phoneme_label(self, cluster):
        return f"ph{int(cluster):02d}"


def _orthonormal_rows(rows, dim, rng):
    g = rng.standard_normal((dim, rows))
    with threadpool_limits(limits=1):
        q, _ = np.linalg.qr(g)
    return q.T


def generate_world(
    true_rank,
    dim,
    speakers,
    extras=0,
    frames=2000,
    clusters=8,
    beta=0.5,
    noise_sigma=0.0,
    seed=0,
    strict=True,
    jitter=DEFAULT_JITTER,
):
    """Generate a synthetic world; deterministic given the seed.

    Strict mode requires dim - true_rank >= (speakers + extras) * true_rank
    so that every timbre basis fits in the orthogonal complement of the
    content basis with room to be orthogonal to every other speaker's.
    Outside strict mode the timbre bases are merely orthogonal to the
    content basis and the worst pairwise overlap is reported on the world.
    """
    true_rank = int(true_rank)
    dim = int(dim)
    speakers = int(speakers)
    extras = int(extras)
    frames = int(frames)
    clusters = int(clusters)
    if true_rank < 1:
        raise ValidationError(f"true_rank must be >= 1, got {true_rank}")
    if speakers < 1:
        raise ValidationError(f"speakers must be >= 1, got {speakers}")
    if extras < 0:
        raise ValidationError(f"extras must be >= 0, got {extras}")
    if frames < 1:
        raise ValidationError(f"frames must be >= 1, got {frames}")
    if clusters < 2:
        raise ValidationError(f"clusters must be >= 2, got {clusters}")
    if dim < true_rank:
        raise ValidationError(f"dim must be >= true_rank, got {dim} < {true_rank}")
    blocks = speakers + extras
    if strict and dim - true_rank < blocks * true_rank:
        raise ValidationError(
            "orthogonality infeasible in strict mode: need "
            f"dim >= {(blocks + 1) * true_rank}, got dim={dim}"
        )

    rng = np.random.default_rng(seed)
    centroids = rng.standard_normal((clusters, true_rank))
    pool_clusters = rng.integers(0, clusters, size=frames)
    content_pool = centroids[pool_clusters] + jitter * rng.standard_normal(
        (frames, true_rank)
    )

    seen_ids = tuple(f"spk{i + 1:02d}" for i in range(speakers))
    extra_ids = tuple(f"ext{i + 1:02d}" for i in range(extras))
    all_ids = seen_ids + extra_ids

    if strict:
        basis = _orthonormal_rows((blocks + 1) * true_rank, dim, rng)
        t_content = basis[:true_rank]
        timbre = {
            spk: basis[(j + 1) * true_rank:(j + 2) * true_rank]
            for j, spk in enumerate(all_ids)
        }
        overlap = 0.0
    else:
        t_content = _orthonormal_rows(true_rank, dim, rng)
        timbre = {}
        for spk in all_ids:
            g = rng.standard_normal((true_rank, dim))
            g -= (g @ t_content.T) @ t_content
            with threadpool_limits(limits=1):
                q, _ = np.linalg.qr(g.T)
            timbre[spk] = q.T[:true_rank]
        overlap = 0.0
        for i, a in enumerate(all_ids):
            for b in all_ids[i + 1:]:
                overlap = max(
                    overlap, float(np.abs(timbre[a] @ timbre[b].T).max())
                )

    content_rows = {}
    pool_index = {}
    frame_clusters = {}
    for spk in seen_ids:
        perm = rng.permutation(frames)
        content_rows[spk] = content_pool[perm]
        pool_index[spk] = perm
        frame_clusters[spk] = pool_clusters[perm]
    for spk in extra_ids:
        cl = rng.integers(0, clusters, size=frames)
        content_rows[spk] = centroids[cl] + jitter * rng.standard_normal(
            (frames, true_rank)
        )
        pool_index[spk] = np.full(frames, -1, dtype=np.int64)
        frame_clusters[spk] = cl

    features = {}
    for spk in all_ids:
        x = content_rows[spk] @ (t_content + beta * timbre[spk])
        if noise_sigma > 0.0:
            x = x + noise_sigma * rng.standard_normal(x.shape)
        features[spk] = x

    return SynthWorld(
        true_rank=true_rank,
        dim=dim,
        clusters=clusters,
        beta=float(beta),
        noise_sigma=float(noise_sigma),
        seed=int(seed),
        strict=bool(strict),
        jitter=float(jitter),
        frames_per_speaker=frames,
        speaker_ids=seen_ids,
        extra_ids=extra_ids,
        content_pool=content_pool,
        pool_clusters=pool_clusters,
        t_content=t_content,
        timbre=timbre,
        features=features,
        content_rows=content_rows,
        pool_index=pool_index,
        frame_clusters=frame_clusters,
        timbre_overlap=overlap,
    )


def emit_world(world, out_dir):
    """Write a world as files: features, manifests, labels, ground truth.

    Layout under out_dir:
      <spk>.fmat            per-speaker features
      manifest.tsv          seen speakers (drives alignment)
      extras.tsv            unseen speakers, present when there are any
      all.fmat, labels.tsv  features concatenated over all speakers with
                            per-frame speaker and phoneme labels
      provenance.tsv        speaker, row, pool_row, cluster per frame
      world.tsv             generation parameters
      truth/                content pool, content basis, timbre bases, and
                            per-speaker content rows
    """
    out = Path(out_dir)
    truth = out / "truth"
    truth.mkdir(parents=True, exist_ok=True)

    for spk in world.all_ids():
        write_fmat(out / f"{spk}.fmat", world.features[spk], DEFAULT_FRAME_RATE)
    write_manifest(
        out / "manifest.tsv", [(spk, f"{spk}.fmat") for spk in world.speaker_ids]
    )
    if world.extra_ids:
        write_manifest(
            out / "extras.tsv", [(spk, f"{spk}.fmat") for spk in world.extra_ids]
        )

    order = world.all_ids()
    all_features = np.vstack([world.features[spk] for spk in order])
    write_fmat(out / "all.fmat", all_features, DEFAULT_FRAME_RATE)
    speakers_col = []
    phonemes_col = []
    prov_lines = []
    for spk in order:
        clusters = world.frame_clusters[spk]
        pool_rows = world.pool_index[spk]
        speakers_col.extend([spk] * len(clusters))
        phonemes_col.extend(world.phoneme_label(c) for c in clusters)
        prov_lines.extend(
            f"{spk}\t{row}\t{int(pool_rows[row])}\t{int(clusters[row])}"
            for row in range(len(clusters))
        )
    write_labels(
        out / "labels.tsv", range(len(speakers_col)), speakers_col, phonemes_col
    )
    _atomic_write_text(out / "provenance.tsv", "\n".join(prov_lines) + "\n")

    write_fmat(truth / "content_pool.fmat", world.content_pool)
    write_fmat(truth / "t_content.fmat", world.t_content)
    for spk in world.all_ids():
        write_fmat(truth / f"timbre_{spk}.fmat", world.timbre[spk])
        write_fmat(truth / f"content_{spk}.fmat", world.content_rows[spk])

    _write_meta(
        out / "world.tsv",
        [
            ("format_version", 1),
            ("kind", "synth_world"),
            ("true_rank", world.true_rank),
            ("dim", world.dim),
            ("clusters", world.clusters),
            ("beta", repr(world.beta)),
            ("noise_sigma", repr(world.noise_sigma)),
            ("seed", world.seed),
            ("strict", int(world.strict)),
            ("jitter", repr(world.jitter)),
            ("frames_per_speaker", world.frames_per_speaker),
            ("speakers", ",".join(world.speaker_ids)),
            ("extras", ",".join(world.extra_ids)),
            ("timbre_overlap", repr(world.timbre_overlap)),
        ],
    )


def load_world(world_dir):
    """Load an emitted world. Matrices come back at float32 precision."""
    out = Path(world_dir)
    meta = _read_meta(out / "world.tsv")
    if meta.get("kind") != "synth_world":
        raise ValidationError(f"{out}: not a synthetic world directory")
    seen_ids = tuple(s for s in meta["speakers"].split(",") if s)
    extra_ids = tuple(s for s in meta.get("extras", "").split(",") if s)
    all_ids = seen_ids + extra_ids

    frames = int(meta["frames_per_speaker"])
    features = {}
    timbre = {}
    content_rows = {}
    pool_index = {spk: np.full(frames, -1, dtype=np.int64) for spk in all_ids}
    frame_clusters = {spk: np.zeros(frames, dtype=np.int64) for spk in all_ids}
    truth = out / "truth"
    for spk in all_ids:
        features[spk] = read_fmat(out / f"{spk}.fmat").astype(np.float64)
        timbre[spk] = read_fmat(truth / f"timbre_{spk}.fmat").astype(np.float64)
        content_rows[spk] = read_fmat(truth / f"content_{spk}.fmat").astype(
            np.float64
        )

    prov_path = out / "provenance.tsv"
    try:
        prov_text = prov_path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"no such file: {prov_path}") from None
    for lineno, raw in enumerate(prov_text.splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 4:
            raise ValidationError(f"{prov_path}:{lineno}: malformed line")
        spk, row, pool_row, cluster = parts
        if spk not in pool_index:
            raise ValidationError(f"{prov_path}:{lineno}: unknown speaker {spk!r}")
        pool_index[spk][int(row)] = int(pool_row)
        frame_clusters[spk][int(row)] = int(cluster)

    content_pool = read_fmat(truth / "content_pool.fmat").astype(np.float64)
    pool_clusters = np.zeros(content_pool.shape[0], dtype=np.int64)
    anchor = seen_ids[0]
    pool_clusters[pool_index[anchor]] = frame_clusters[anchor]

    return SynthWorld(
        true_rank=int(meta["true_rank"]),
        dim=int(meta["dim"]),
        clusters=int(meta["clusters"]),
        beta=float(meta["beta"]),
        noise_sigma=float(meta["noise_sigma"]),
        seed=int(meta["seed"]),
        strict=bool(int(meta["strict"])),
        jitter=float(meta["jitter"]),
        frames_per_speaker=frames,
        speaker_ids=seen_ids,
        extra_ids=extra_ids,
        content_pool=content_pool,
        pool_clusters=pool_clusters,
        t_content=read_fmat(truth / "t_content.fmat").astype(np.float64),
        timbre=timbre,
        features=features,
        content_rows=content_rows,
        pool_index=pool_index,
        frame_clusters=frame_clusters,
        timbre_overlap=float(meta["timbre_overlap"]),
    )
