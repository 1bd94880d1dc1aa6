"""File formats: feature matrices, manifests, label tracks, artifact bundles.

FMAT binary format v1, little-endian throughout:

    bytes  0-3   magic "USCF"
    byte   4     format version, 1
    byte   5     dtype code, 1 = float32
    bytes  6-7   reserved, written as 0
    bytes  8-11  u32 frame rate in frames per second, 0 = unspecified
    bytes 12-19  u64 rows
    bytes 20-27  u64 cols
    bytes 28-    rows * cols float32 values, row major

All writes go through a temp file in the target directory followed by an
atomic rename.
"""

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"USCF"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 1
DEFAULT_FRAME_RATE = 50

_HEADER = struct.Struct("<4sBBHI")
_DIMS = struct.Struct("<QQ")
_MAX_CELLS = 1 << 48


def _atomic_write_bytes(path, chunks):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            for chunk in chunks:
                f.write(chunk)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _atomic_write_text(path, text):
    _atomic_write_bytes(path, [text.encode("utf-8")])


def write_fmat(path, matrix, frame_rate=0):
    """Write a 2-D matrix as an FMAT file (float32 payload)."""
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise ValidationError(f"matrix must be 2-D, got shape {arr.shape}")
    data = np.ascontiguousarray(arr, dtype=np.float32)
    if data.size and not np.isfinite(data).all():
        raise ValidationError("matrix contains non-finite entries")
    frame_rate = int(frame_rate)
    if not 0 <= frame_rate < 1 << 32:
        raise ValidationError(f"frame_rate out of range: {frame_rate}")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_FLOAT32, 0, frame_rate)
    dims = _DIMS.pack(data.shape[0], data.shape[1])
    _atomic_write_bytes(path, [header, dims, data.tobytes()])


def _read_fmat_raw(path):
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise ValidationError(f"no such file: {path}") from None
    if len(blob) < _HEADER.size + _DIMS.size:
        raise ValidationError(f"{path}: truncated header")
    magic, version, dtype, _reserved, frame_rate = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ValidationError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValidationError(f"{path}: unsupported version {version}")
    if dtype != DTYPE_FLOAT32:
        raise ValidationError(f"{path}: unsupported dtype code {dtype}")
    rows, cols = _DIMS.unpack_from(blob, _HEADER.size)
    if rows * cols > _MAX_CELLS:
        raise ValidationError(f"{path}: dimension overflow ({rows}x{cols})")
    expected = rows * cols * 4
    payload = blob[_HEADER.size + _DIMS.size:]
    if len(payload) != expected:
        raise ValidationError(
            f"{path}: payload size mismatch, expected {expected} bytes, "
            f"found {len(payload)}"
        )
    matrix = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
    return matrix, frame_rate


def read_fmat(path):
    """Read an FMAT file, returning its float32 matrix."""
    matrix, _ = _read_fmat_raw(path)
    return matrix


@dataclass(frozen=True)
class FeatureFile:
    path: Path
    matrix: np.ndarray
    frame_rate: int

    @property
    def frames(self):
        return int(self.matrix.shape[0])

    @property
    def dim(self):
        return int(self.matrix.shape[1])

    @property
    def duration_seconds(self):
        if self.frame_rate <= 0:
            raise ValidationError(f"{self.path}: frame rate unspecified")
        return self.frames / self.frame_rate


def load_feature_file(path):
    matrix, frame_rate = _read_fmat_raw(path)
    if frame_rate == 0:
        frame_rate = DEFAULT_FRAME_RATE
    return FeatureFile(path=Path(path), matrix=matrix, frame_rate=frame_rate)


@dataclass(frozen=True)
class ManifestEntry:
    speaker_id: str
    path: Path


@dataclass(frozen=True)
class Manifest:
    entries: tuple

    def speakers(self):
        """Speaker ids in first-appearance order."""
        seen = []
        for entry in self.entries:
            if entry.speaker_id not in seen:
                seen.append(entry.speaker_id)
        return seen

    def paths_for(self, speaker_id):
        return [e.path for e in self.entries if e.speaker_id == speaker_id]


def load_manifest(path):
    """Parse a manifest: one "speaker_id<TAB>relative_path" per line.

    Lines starting with "#" and blank lines are skipped. Paths resolve
    relative to the manifest's directory and must exist.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"no such file: {path}") from None
    base = path.parent
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ValidationError(f"{path}:{lineno}: malformed manifest line")
        target = base / parts[1]
        if not target.is_file():
            raise ValidationError(f"{path}:{lineno}: missing file {target}")
        entries.append(ManifestEntry(speaker_id=parts[0], path=target))
    if not entries:
        raise ValidationError(f"{path}: empty manifest")
    return Manifest(entries=tuple(entries))


def write_manifest(path, entries):
    """Write (speaker_id, relative_path) pairs as a manifest."""
    lines = [f"{speaker}\t{rel}" for speaker, rel in entries]
    _atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class LabelTrack:
    frame_index: np.ndarray
    speaker_ids: tuple
    phonemes: tuple

    def __len__(self):
        return int(self.frame_index.shape[0])

    def phoneme_inventory(self):
        return sorted(set(self.phonemes))

    def speaker_inventory(self):
        return sorted(set(self.speaker_ids))


def load_labels(path):
    """Parse per-frame labels: "frame_index<TAB>speaker_id<TAB>phoneme"."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"no such file: {path}") from None
    indices = []
    speakers = []
    phonemes = []
    prev = -1
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not parts[1] or not parts[2]:
            raise ValidationError(f"{path}:{lineno}: malformed label line")
        try:
            idx = int(parts[0])
        except ValueError:
            raise ValidationError(
                f"{path}:{lineno}: frame_index is not an integer"
            ) from None
        if idx == prev:
            raise ValidationError(f"{path}:{lineno}: duplicate frame_index {idx}")
        if idx < prev:
            raise ValidationError(
                f"{path}:{lineno}: frame_index not strictly increasing"
            )
        prev = idx
        indices.append(idx)
        speakers.append(parts[1])
        phonemes.append(parts[2])
    if not indices:
        raise ValidationError(f"{path}: empty label file")
    return LabelTrack(
        frame_index=np.asarray(indices, dtype=np.int64),
        speaker_ids=tuple(speakers),
        phonemes=tuple(phonemes),
    )


def write_labels(path, frame_indices, speaker_ids, phonemes):
    if not len(frame_indices) == len(speaker_ids) == len(phonemes):
        raise ValidationError("label columns have mismatched lengths")
    lines = [
        f"{int(i)}\t{s}\t{p}"
        for i, s, p in zip(frame_indices, speaker_ids, phonemes)
    ]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def _write_meta(path, items):
    lines = [f"{k}\t{v}" for k, v in items]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def _read_meta(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"no such file: {path}") from None
    meta = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValidationError(f"{path}:{lineno}: malformed metadata line")
        meta[parts[0]] = parts[1]
    return meta


def _require_meta(meta, key, path):
    if key not in meta:
        raise ValidationError(f"{path}: metadata missing key {key!r}")
    return meta[key]


def save_aligned_stack(dir_path, stack):
    """Write an aligned stack bundle: stack.fmat plus meta.tsv."""
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    write_fmat(d / "stack.fmat", stack.x)
    _write_meta(
        d / "meta.tsv",
        [
            ("format_version", 1),
            ("kind", "aligned_stack"),
            ("anchor", stack.anchor_id),
            ("speakers", ",".join(stack.speaker_order)),
            ("n_frames", stack.n),
            ("k_speakers", stack.k),
            ("dim", stack.d),
        ],
    )


def load_aligned_stack(dir_path):
    from .align import AlignedStack

    d = Path(dir_path)
    meta = _read_meta(d / "meta.tsv")
    if meta.get("kind") != "aligned_stack":
        raise ValidationError(f"{d}: not an aligned stack bundle")
    speakers = tuple(_require_meta(meta, "speakers", d).split(","))
    anchor = _require_meta(meta, "anchor", d)
    x = read_fmat(d / "stack.fmat").astype(np.float64)
    stack = AlignedStack(anchor_id=anchor, speaker_order=speakers, x=x)
    declared = (
        int(_require_meta(meta, "n_frames", d)),
        int(_require_meta(meta, "k_speakers", d)),
        int(_require_meta(meta, "dim", d)),
    )
    if declared != (stack.n, stack.k, stack.d):
        raise ValidationError(f"{d}: metadata disagrees with stack.fmat shape")
    return stack


def save_factorization(dir_path, fact):
    """Write a factorization bundle.

    Layout: u.fmat, sigma.fmat (1 x r), s_00.fmat .. s_NN.fmat in speaker
    order, and meta.tsv. The speaker order in meta.tsv is contractual: it
    is the order of the S-block concatenation.
    """
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    write_fmat(d / "u.fmat", fact.u)
    write_fmat(d / "sigma.fmat", fact.sigma[None, :])
    for j, block in enumerate(fact.s_blocks):
        write_fmat(d / f"s_{j:02d}.fmat", block)
    _write_meta(
        d / "meta.tsv",
        [
            ("format_version", 1),
            ("kind", "factorization"),
            ("rank", fact.rank),
            ("dim", fact.dim),
            ("k_speakers", fact.k),
            ("n_frames", fact.n),
            ("anchor", fact.speaker_order[0]),
            ("speakers", ",".join(fact.speaker_order)),
        ],
    )


def load_factorization(dir_path):
    from .factorize import Factorization

    d = Path(dir_path)
    meta = _read_meta(d / "meta.tsv")
    if meta.get("kind") != "factorization":
        raise ValidationError(f"{d}: not a factorization bundle")
    speakers = tuple(_require_meta(meta, "speakers", d).split(","))
    u = read_fmat(d / "u.fmat").astype(np.float64)
    sigma_mat = read_fmat(d / "sigma.fmat").astype(np.float64)
    if sigma_mat.shape[0] != 1:
        raise ValidationError(f"{d}: sigma.fmat must have one row")
    blocks = tuple(
        read_fmat(d / f"s_{j:02d}.fmat").astype(np.float64)
        for j in range(len(speakers))
    )
    fact = Factorization(speaker_order=speakers, u=u, sigma=sigma_mat[0], s_blocks=blocks)
    declared = (
        int(_require_meta(meta, "rank", d)),
        int(_require_meta(meta, "dim", d)),
        int(_require_meta(meta, "n_frames", d)),
    )
    if declared != (fact.rank, fact.dim, fact.n):
        raise ValidationError(f"{d}: metadata disagrees with bundle matrices")
    return fact


def save_content_mapping(path, mapping):
    """Write a content mapping as w.fmat plus a .meta.tsv sidecar."""
    path = Path(path)
    write_fmat(path, mapping.w)
    items = [
        ("kind", "content_mapping"),
        ("method", mapping.method),
        ("rank", mapping.w.shape[1]),
        ("dim", mapping.w.shape[0]),
    ]
    if mapping.w3_basis_speaker is not None:
        items.append(("w3_basis_speaker", mapping.w3_basis_speaker))
    _write_meta(path.with_name(path.name + ".meta.tsv"), items)


def load_content_mapping(path):
    from .universal import ContentMapping

    path = Path(path)
    w = read_fmat(path).astype(np.float64)
    sidecar = path.with_name(path.name + ".meta.tsv")
    method = "unknown"
    basis = None
    if sidecar.is_file():
        meta = _read_meta(sidecar)
        method = meta.get("method", "unknown")
        basis = meta.get("w3_basis_speaker")
    return ContentMapping(w=w, method=method, w3_basis_speaker=basis)


def save_speaker_transform(path, transform):
    """Write a speaker transform as s.fmat plus a .meta.tsv sidecar."""
    path = Path(path)
    write_fmat(path, transform.s)
    _write_meta(
        path.with_name(path.name + ".meta.tsv"),
        [
            ("kind", "speaker_transform"),
            ("speaker_id", transform.speaker_id),
            ("frames_used", transform.frames_used),
            ("mapping_method", transform.mapping_method),
            ("rank", transform.s.shape[0]),
            ("dim", transform.s.shape[1]),
        ],
    )


def load_speaker_transform(path):
    from .universal import SpeakerTransform

    path = Path(path)
    s = read_fmat(path).astype(np.float64)
    sidecar = path.with_name(path.name + ".meta.tsv")
    speaker_id = ""
    frames_used = 0
    method = "unknown"
    if sidecar.is_file():
        meta = _read_meta(sidecar)
        speaker_id = meta.get("speaker_id", "")
        frames_used = int(meta.get("frames_used", 0))
        method = meta.get("mapping_method", "unknown")
    return SpeakerTransform(
        s=s, speaker_id=speaker_id, frames_used=frames_used, mapping_method=method
    )
