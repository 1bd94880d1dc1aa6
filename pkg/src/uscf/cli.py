"""Command line entry point wiring the pipeline stages over files.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical error. Diagnostics and the resolved configuration go to
stderr; matrices and reports go to files; eval subcommands print their
scalar metrics to stdout.
"""

import argparse
import os
import sys
import warnings

import numpy as np
from threadpoolctl import threadpool_limits

from .align import build_aligned_stack, make_frame_pool
from .errors import NumericalError, ValidationError
from .evaluate import (
    compute_eer,
    per_phoneme_speaker_trials,
    phoneme_classify,
    run_sweep,
    write_report,
)
from .factorize import DEFAULT_RANK, factorize, scf_convert
from .store import (
    load_aligned_stack,
    load_content_mapping,
    load_factorization,
    load_labels,
    load_manifest,
    load_speaker_transform,
    read_fmat,
    save_aligned_stack,
    save_content_mapping,
    save_factorization,
    save_speaker_transform,
    write_fmat,
    _atomic_write_text,
)
from .synth import emit_world, generate_world, load_world
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
    w3_residual_spread,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    """Bad flag combination detected after parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_flags():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        help="cap BLAS threads (default: USCF_THREADS or library default)",
    )
    return common


def build_parser():
    common = _common_flags()
    parser = _Parser(prog="uscf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic world")
    p.add_argument("--rank", type=int, default=16, help="true content rank")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--speakers", type=int, default=5)
    p.add_argument("--extras", type=int, default=3)
    p.add_argument("--frames", type=int, default=2000, help="frames per speaker")
    p.add_argument("--clusters", type=int, default=12)
    p.add_argument("--beta", type=float, default=0.5, help="timbre strength")
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jitter", type=float, default=0.25)
    p.add_argument("--no-strict", action="store_true", help="allow overlapping timbre bases")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("align", parents=[common], help="build the content-aligned stack")
    p.add_argument("--manifest", required=True)
    p.add_argument("--anchor", required=True)
    p.add_argument("--k-neighbors", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_align)

    p = sub.add_parser("factorize", parents=[common], help="rank-r SVD of a stack")
    p.add_argument("--stack", required=True)
    p.add_argument("--rank", type=int, default=DEFAULT_RANK)
    p.add_argument("--svd", choices=["exact", "randomized"], default="exact")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_factorize)

    p = sub.add_parser("derive-w", parents=[common], help="derive a universal mapping")
    p.add_argument("--fact", required=True)
    p.add_argument("--stack", default=None, help="required for w0/w1")
    p.add_argument("--method", choices=["w0", "w1", "w2", "w3"], required=True)
    p.add_argument("--w3-basis", default=None, help="basis speaker for w3")
    p.add_argument(
        "--w3-average-runs",
        type=int,
        default=None,
        help="report the w3 residual spread over N random basis draws",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_derive_w)

    p = sub.add_parser("derive-s", parents=[common], help="one-shot speaker transform")
    p.add_argument("--features", required=True)
    p.add_argument("--w", required=True)
    p.add_argument("--frames", type=int, default=DEFAULT_FRAME_BUDGET)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--speaker-id", default="")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_derive_s)

    p = sub.add_parser("convert", parents=[common], help="convert features between speakers")
    p.add_argument("--mode", choices=["scf", "uscf"], required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fact", default=None, help="scf mode: factorization bundle")
    p.add_argument("--src", default=None, help="scf mode: source speaker")
    p.add_argument("--tgt", default=None, help="scf mode: target speaker")
    p.add_argument("--w", default=None, help="uscf mode: content mapping")
    p.add_argument("--s", default=None, help="uscf mode: target transform")
    p.set_defaults(handler=_cmd_convert)

    p = sub.add_parser("extract-content", parents=[common], help="map features to content")
    p.add_argument("--w", required=True)
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_extract_content)

    p = sub.add_parser("eval", parents=[], help="embedding analyses")
    esub = p.add_subparsers(dest="eval_kind", required=True)
    for kind in ("phoneme", "speaker-eer"):
        ep = esub.add_parser(kind, parents=[common])
        ep.add_argument("--features", required=True)
        ep.add_argument("--labels", required=True)
        ep.add_argument("--enrollment-fraction", type=float, default=0.5)
        ep.add_argument("--seed", type=int, default=0)
        ep.add_argument("--report", default=None, help="optional TSV output")
        ep.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="rank or frame-budget sweep")
    p.add_argument("--world", required=True)
    p.add_argument("--param", choices=["rank", "frames"], required=True)
    p.add_argument("--values", required=True, help="comma-separated integers")
    p.add_argument("--rank", type=int, default=None, help="factorization rank for frame sweeps")
    p.add_argument("--seed", type=int, default=0, help="frame sampling seed")
    p.add_argument("--k-neighbors", type=int, default=1)
    p.add_argument("--method", choices=["w0", "w1", "w2"], default="w1")
    p.add_argument("--report", required=True)
    p.set_defaults(handler=_cmd_sweep)

    return parser


def _cmd_simulate(args):
    world = generate_world(
        true_rank=args.rank,
        dim=args.dim,
        speakers=args.speakers,
        extras=args.extras,
        frames=args.frames,
        clusters=args.clusters,
        beta=args.beta,
        noise_sigma=args.noise,
        seed=args.seed,
        strict=not args.no_strict,
        jitter=args.jitter,
    )
    emit_world(world, args.out)
    print(
        f"wrote world: {args.speakers} speakers, {args.extras} extras, "
        f"{args.frames} frames each",
        file=sys.stderr,
    )
    return EXIT_OK


def _load_pools(manifest, anchor):
    speakers = manifest.speakers()
    if anchor not in speakers:
        raise ValidationError(f"anchor {anchor!r} not in manifest")
    pools = {}
    for spk in speakers:
        parts = [read_fmat(p).astype(np.float64) for p in manifest.paths_for(spk)]
        dims = {p.shape[1] for p in parts}
        if len(dims) != 1:
            raise ValidationError(f"speaker {spk!r} mixes feature dims {sorted(dims)}")
        pools[spk] = make_frame_pool(spk, np.vstack(parts))
    ordered = [anchor] + [s for s in speakers if s != anchor]
    return [pools[s] for s in ordered]


def _cmd_align(args):
    pools = _load_pools(load_manifest(args.manifest), args.anchor)
    stack = build_aligned_stack(pools[0], pools[1:], args.k_neighbors)
    save_aligned_stack(args.out, stack)
    return EXIT_OK


def _cmd_factorize(args):
    stack = load_aligned_stack(args.stack)
    fact = factorize(stack, args.rank, svd_method=args.svd, seed=args.seed)
    save_factorization(args.out, fact)
    return EXIT_OK


def _cmd_derive_w(args):
    fact = load_factorization(args.fact)
    if args.method in ("w0", "w1"):
        if args.stack is None:
            raise UsageError(f"--stack is required for method {args.method}")
        stack = load_aligned_stack(args.stack)
        mapping = derive_w0(fact, stack) if args.method == "w0" else derive_w1(fact, stack)
    elif args.method == "w2":
        mapping = derive_w2(fact)
    else:
        mapping = derive_w3(fact, args.w3_basis)
        if args.w3_average_runs:
            basis_ids, residuals = w3_residual_spread(
                fact, args.w3_average_runs, args.seed
            )
            print(
                f"w3 residual over {len(basis_ids)} basis draws: "
                f"mean={residuals.mean():.6g} std={residuals.std():.6g}",
                file=sys.stderr,
            )
    save_content_mapping(args.out, mapping)
    return EXIT_OK


def _cmd_derive_s(args):
    features = read_fmat(args.features).astype(np.float64)
    mapping = load_content_mapping(args.w)
    sampled = sample_frames(features, args.frames, args.seed)
    transform = derive_speaker_transform(sampled, mapping, args.speaker_id)
    save_speaker_transform(args.out, transform)
    return EXIT_OK


def _cmd_convert(args):
    x = read_fmat(args.in_path).astype(np.float64)
    if args.mode == "scf":
        if not (args.fact and args.src and args.tgt):
            raise UsageError("scf mode requires --fact, --src, and --tgt")
        fact = load_factorization(args.fact)
        y = scf_convert(x, fact, args.src, args.tgt)
    else:
        if not (args.w and args.s):
            raise UsageError("uscf mode requires --w and --s")
        mapping = load_content_mapping(args.w)
        transform = load_speaker_transform(args.s)
        y = uscf_convert(x, mapping, transform)
    write_fmat(args.out, y)
    return EXIT_OK


def _cmd_extract_content(args):
    x = read_fmat(args.in_path).astype(np.float64)
    mapping = load_content_mapping(args.w)
    write_fmat(args.out, extract_content(x, mapping))
    return EXIT_OK


def _cmd_eval(args):
    features = read_fmat(args.features).astype(np.float64)
    labels = load_labels(args.labels)
    if args.eval_kind == "phoneme":
        accuracy, per_class = phoneme_classify(
            features, labels, args.enrollment_fraction, args.seed
        )
        print(f"phoneme_accuracy={accuracy:.6f}")
        if args.report:
            lines = ["phoneme\taccuracy"]
            lines += [f"{c}\t{a:.6f}" for c, a in sorted(per_class.items())]
            _atomic_write_text(args.report, "\n".join(lines) + "\n")
    else:
        trials = per_phoneme_speaker_trials(
            features, labels, args.enrollment_fraction, args.seed
        )
        skipped = trials.meta.get("skipped_cells", ())
        if skipped:
            print(f"skipped {len(skipped)} cells with <2 frames", file=sys.stderr)
        eer = compute_eer(trials)
        print(f"speaker_eer={eer:.6f}")
        if args.report:
            lines = [
                "metric\tvalue",
                f"speaker_eer\t{eer:.6f}",
                f"n_target\t{trials.n_target}",
                f"n_nontarget\t{trials.n_nontarget}",
            ]
            _atomic_write_text(args.report, "\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_sweep(args):
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values must be comma-separated integers: {args.values!r}")
    world = load_world(args.world)
    report = run_sweep(
        world,
        args.param,
        values,
        rank=args.rank,
        budget_seed=args.seed,
        k_neighbors=args.k_neighbors,
        mapping_method=args.method,
    )
    write_report(args.report, report)
    return EXIT_OK


def _echo_config(args):
    skip = {"handler"}
    for key in sorted(vars(args)):
        if key in skip:
            continue
        print(f"config {key}={getattr(args, key)}", file=sys.stderr)


def _resolve_threads(args):
    if getattr(args, "threads", None) is not None:
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.threads
    env = os.environ.get("USCF_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise UsageError(f"USCF_THREADS is not an integer: {env!r}") from None
        if value < 1:
            raise UsageError("USCF_THREADS must be >= 1")
        return value
    return None


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        threads = _resolve_threads(args)
        _echo_config(args)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                with threadpool_limits(limits=threads):
                    code = args.handler(args)
            finally:
                for w in caught:
                    print(f"warning: {w.message}", file=sys.stderr)
        return code
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
