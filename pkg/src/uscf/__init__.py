"""Speech content factorization over aligned frame stacks.

Parallel frame matrices from several speakers are matched against an
anchor by nearest-neighbour content lookup, stacked side by side, and
factorized with a truncated SVD into shared content coordinates and
per-speaker linear transforms. A universal content mapping derived from
the factorization extends the model to speakers outside the training
stack from a handful of unlabeled frames.
"""

from .align import AlignedStack, FramePool, build_aligned_stack, knn_match, make_frame_pool
from .errors import NotFittedError, NumericalError, UscfError, ValidationError
from .estimators import ContentExtractor, FrameMatcher, VoiceConverter
from .evaluate import (
    TrialSet,
    compute_eer,
    make_trial_set,
    per_phoneme_speaker_trials,
    phoneme_classify,
    run_sweep,
)
from .factorize import Factorization, content_of, factorize, scf_convert
from .linalg import SvdResult, cosine_similarity, lstsq, pinv, truncated_svd
from .store import (
    Manifest,
    load_labels,
    load_manifest,
    read_fmat,
    write_fmat,
)
from .synth import SynthWorld, emit_world, generate_world, load_world
from .universal import (
    ContentMapping,
    SpeakerTransform,
    derive_speaker_transform,
    derive_w0,
    derive_w1,
    derive_w2,
    derive_w3,
    extract_content,
    uscf_convert,
)

__version__ = "0.1.0"

__all__ = [
    "AlignedStack",
    "ContentExtractor",
    "ContentMapping",
    "Factorization",
    "FrameMatcher",
    "FramePool",
    "Manifest",
    "NotFittedError",
    "NumericalError",
    "SpeakerTransform",
    "SvdResult",
    "SynthWorld",
    "TrialSet",
    "UscfError",
    "ValidationError",
    "VoiceConverter",
    "build_aligned_stack",
    "compute_eer",
    "content_of",
    "cosine_similarity",
    "derive_speaker_transform",
    "derive_w0",
    "derive_w1",
    "derive_w2",
    "derive_w3",
    "emit_world",
    "extract_content",
    "factorize",
    "generate_world",
    "knn_match",
    "load_labels",
    "load_manifest",
    "load_world",
    "lstsq",
    "make_frame_pool",
    "make_trial_set",
    "per_phoneme_speaker_trials",
    "phoneme_classify",
    "pinv",
    "read_fmat",
    "run_sweep",
    "scf_convert",
    "truncated_svd",
    "uscf_convert",
    "write_fmat",
    "__version__",
]
