"""Acceptance gate: one test per release criterion.

Run with `pytest tests/test_acceptance.py -v` to get one pass/fail line
per criterion. Each test asserts both the numerical contract and its
runtime budget; the heavy trend tests pin their worlds to fixed seeds so
the gate is reproducible bit for bit.
"""

import time
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from uscf.align import knn_match_indices, make_frame_pool
from uscf.cli import main
from uscf.evaluate import (
    compute_eer,
    make_trial_set,
    per_phoneme_speaker_trials,
    phoneme_classify,
    run_sweep,
)
from uscf.factorize import content_of, factorize, scf_convert
from uscf.linalg import lstsq, pinv, truncated_svd
from uscf.store import LabelTrack, read_fmat, write_fmat
from uscf.synth import generate_world
from uscf.universal import (
    derive_speaker_transform,
    derive_w0,
    derive_w1,
    derive_w2,
    derive_w3,
    extract_content,
    sample_frames,
    uscf_convert,
)

from conftest import stack_from_world
from oracles import (
    brute_knn_indices,
    exhaustive_eer,
    gram_singular_values,
    jacobi_svd,
)


class _Budget:
    """Context timing a test body against its runtime budget in seconds."""

    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            elapsed = time.perf_counter() - self.start
            assert elapsed < self.seconds, (
                f"runtime budget exceeded: {elapsed:.1f}s >= {self.seconds}s"
            )
        return False


def _relative_max(delta, reference):
    floor = max(np.abs(reference).max(), 1e-12)
    return np.abs(delta).max() / floor


def _random_test_matrix(rng, case):
    m = int(rng.integers(2, 101))
    n = int(rng.integers(2, 101))
    if case == 0:
        return rng.standard_normal((m, n))
    if case == 1:
        r = int(rng.integers(1, min(m, n) + 1))
        return rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
    scales = 10.0 ** rng.integers(-3, 4, size=n)
    return rng.standard_normal((m, n)) * scales


def test_criterion_01_pseudoinverse_conditions():
    rng = np.random.default_rng(2024)
    with _Budget(10):
        for trial in range(200):
            a = _random_test_matrix(rng, trial % 3)
            p = pinv(a)
            ap = a @ p
            pa = p @ a
            assert _relative_max(ap @ a - a, a) <= 1e-5
            assert _relative_max(pa @ p - p, p) <= 1e-5
            assert _relative_max(ap.T - ap, ap) <= 1e-5
            assert _relative_max(pa.T - pa, pa) <= 1e-5


def test_criterion_02_truncated_svd_oracle():
    rng = np.random.default_rng(515)
    with _Budget(30):
        for trial in range(50):
            m = int(rng.integers(8, 41))
            n = int(rng.integers(6, 31))
            a = _random_test_matrix(np.random.default_rng(1000 + trial), trial % 3)
            a = a[:m, :n] if a.shape >= (m, n) else rng.standard_normal((m, n))
            r = int(rng.integers(1, min(a.shape) + 1))
            res = truncated_svd(a, r)
            approx = res.u @ np.diag(res.sigma) @ res.vt
            residual = np.linalg.norm(a - approx)
            oracle_sigma = jacobi_svd(a)[1]
            tail = np.sqrt(np.sum(oracle_sigma[r:] ** 2))
            assert abs(residual - tail) <= 1e-6 * max(np.linalg.norm(a), 1.0)
            for col in range(res.u.shape[1]):
                pivot = np.argmax(np.abs(res.u[:, col]))
                assert res.u[pivot, col] >= 0.0
            again = truncated_svd(a, r)
            assert np.array_equal(res.u, again.u)
            assert np.array_equal(res.sigma, again.sigma)
            assert np.array_equal(res.vt, again.vt)


def test_criterion_03_knn_matches_brute_force():
    rng = np.random.default_rng(31)
    with _Budget(30):
        for trial in range(20):
            if trial == 19:
                n_q, n_p = 500, 5000
            else:
                n_q = int(rng.integers(20, 501))
                n_p = int(rng.integers(100, 5001))
            k = int(rng.integers(1, 5))
            queries = rng.standard_normal((n_q, 64))
            pool_rows = rng.standard_normal((n_p, 64))
            pool = make_frame_pool("pool", pool_rows)
            got = knn_match_indices(queries, pool, k)
            want = brute_knn_indices(queries, pool.frames, k)
            assert np.array_equal(got, want)


def test_criterion_04_closed_set_round_trip(request):
    with _Budget(20):
        world = request.getfixturevalue("acceptance_world")
        stack = request.getfixturevalue("acceptance_stack")
        fact = request.getfixturevalue("acceptance_fact")
        c = content_of(fact)
        for spk in fact.speaker_order:
            block = stack.block_for(spk)
            recon = c @ fact.s_for(spk)
            rel = np.linalg.norm(block - recon) / np.linalg.norm(block)
            assert rel <= 1e-4, spk
        src, tgt = "spk02", "spk05"
        got = scf_convert(world.features[src], fact, src, tgt)
        want = world.content_rows[src] @ world.transform_of(tgt)
        rel = np.linalg.norm(got - want) / np.linalg.norm(want)
        assert rel <= 1e-4


def test_criterion_05_w_family_contracts(acceptance_world, acceptance_stack, acceptance_fact):
    stack, fact = acceptance_stack, acceptance_fact
    with _Budget(20):
        c = content_of(fact)
        c_norm = np.linalg.norm(c)
        mappings = (
            derive_w0(fact, stack),
            derive_w1(fact, stack),
            derive_w2(fact),
        )
        for mapping in mappings:
            for spk in fact.speaker_order:
                resp = stack.block_for(spk) @ mapping.w
                assert np.linalg.norm(resp - c) / c_norm <= 1e-4, mapping.method

        unit = replace(fact, sigma=np.ones_like(fact.sigma))
        assert np.array_equal(derive_w1(unit, stack).w, derive_w0(unit, stack).w)

        perm = (3, 0, 4, 1, 2)
        permuted = replace(
            fact,
            speaker_order=tuple(fact.speaker_order[i] for i in perm),
            s_blocks=tuple(fact.s_blocks[i] for i in perm),
        )
        assert np.abs(derive_w2(fact).w - derive_w2(permuted).w).max() <= 1e-6

        basis = fact.speaker_order[0]
        w3 = derive_w3(fact, basis)
        eye = np.eye(fact.rank)
        scale = np.sqrt(fact.rank)
        for spk in fact.speaker_order:
            if spk == basis:
                continue
            resid = np.linalg.norm(fact.s_for(spk) @ w3.w - eye) / scale
            assert resid <= 1e-4, spk


def test_criterion_06_one_shot_speaker_derivation(
    acceptance_world, acceptance_stack, acceptance_fact
):
    world, stack, fact = acceptance_world, acceptance_stack, acceptance_fact
    with _Budget(20):
        mapping = derive_w1(fact, stack)
        frames = sample_frames(world.features["ext01"], 500, seed=3)
        assert frames.shape[0] >= fact.rank
        st_unseen = derive_speaker_transform(frames, mapping, "ext01")

        gauge = lstsq(world.content_rows[stack.anchor_id], content_of(fact))
        s_star = world.transform_of("ext01")
        s_aligned = gauge @ st_unseen.s
        rel = np.linalg.norm(s_aligned - s_star) / np.linalg.norm(s_star)
        assert rel <= 1e-4

        converted = uscf_convert(world.features["ext02"], mapping, st_unseen)
        want = world.content_rows["ext02"] @ s_star
        rel = np.linalg.norm(converted - want) / np.linalg.norm(want)
        assert rel <= 1e-3


def test_criterion_07_frame_budget_trend():
    budgets = [200, 500, 1000, 2000, 5000, 10000]
    with _Budget(120):
        curves = []
        for i in range(20):
            world = generate_world(
                true_rank=8, dim=64, speakers=3, extras=1, frames=10000,
                clusters=12, beta=0.01, noise_sigma=0.05, seed=100 + i,
                strict=True,
            )
            report = run_sweep(
                world, param="frames", values=budgets, rank=8,
                budget_seed=0, k_neighbors=1, mapping_method="w1",
            )
            curves.append([row["s_recovery_error"] for _, row in report.rows])
        medians = np.median(np.array(curves), axis=0)
        assert np.all(np.diff(medians) <= 0.0), medians
        assert medians[0] > medians[1]


def test_criterion_08_rank_sweep_trend():
    ranks = [20, 30, 50, 75, 100]
    with _Budget(120):
        world = generate_world(
            true_rank=50, dim=256, speakers=4, extras=0, frames=1500,
            clusters=12, beta=0.3, noise_sigma=1e-6, seed=5, strict=True,
        )
        report = run_sweep(world, param="rank", values=ranks)
        errs = {r: row["content_recovery_error"] for r, row in report.rows}

        stack = stack_from_world(world)
        svals = gram_singular_values(stack.x)
        total = np.linalg.norm(stack.x)
        for r in ranks:
            tail = np.sqrt(max(float(np.sum(svals[r:] ** 2)), 0.0)) / total
            assert abs(errs[r] - tail) <= 1e-6 * tail + 1e-7, r

        assert all(e > 0.0 for e in errs.values())
        for r in (50, 75, 100):
            assert errs[r] <= 1e-4, r
        assert errs[20] > errs[30] > errs[50]


def test_criterion_09_content_vs_raw_features():
    with _Budget(120):
        world = generate_world(
            true_rank=16, dim=256, speakers=6, extras=0, frames=1200,
            clusters=12, beta=0.35, noise_sigma=0.02, seed=77, strict=True,
        )
        stack = stack_from_world(world)
        fact = factorize(stack, r=16)
        mapping = derive_w1(fact, stack)

        speakers, phonemes, raw_rows, content_rows = [], [], [], []
        for spk in world.all_ids():
            raw_rows.append(world.features[spk])
            content_rows.append(extract_content(world.features[spk], mapping))
            speakers.extend([spk] * world.frames_per_speaker)
            phonemes.extend(
                world.phoneme_label(cluster)
                for cluster in world.frame_clusters[spk]
            )
        raw = np.vstack(raw_rows)
        content = np.vstack(content_rows)
        track = LabelTrack(
            frame_index=np.arange(raw.shape[0]),
            speaker_ids=tuple(speakers),
            phonemes=tuple(phonemes),
        )

        raw_eer = compute_eer(per_phoneme_speaker_trials(raw, track, 0.5, 0))
        content_eer = compute_eer(per_phoneme_speaker_trials(content, track, 0.5, 0))
        assert content_eer >= raw_eer + 0.05, (raw_eer, content_eer)

        raw_acc, _ = phoneme_classify(raw, track, 0.5, 0)
        content_acc, _ = phoneme_classify(content, track, 0.5, 0)
        assert abs(raw_acc - content_acc) <= 0.02, (raw_acc, content_acc)


def _trials(tar, non):
    scores = np.concatenate([np.asarray(tar, float), np.asarray(non, float)])
    flags = np.concatenate([np.ones(len(tar), bool), np.zeros(len(non), bool)])
    return make_trial_set(scores, flags)


def test_criterion_10_eer_correctness():
    with _Budget(5):
        assert compute_eer(_trials([1.0, 2.0, 3.0], [-1.0, -2.0])) == 0.0

        rng = np.random.default_rng(404)
        same = compute_eer(
            _trials(rng.standard_normal(10000), rng.standard_normal(10000))
        )
        assert abs(same - 0.5) <= 0.03

        tar, non = [0.9, 0.7, 0.3], [0.8, 0.4, 0.1]
        got = compute_eer(_trials(tar, non))
        assert got == exhaustive_eer(tar, non) == 1.0 / 3.0


def test_criterion_11_format_and_determinism(tmp_path):
    with _Budget(60):
        fmat_dir = tmp_path / "fmat"
        fmat_dir.mkdir()

        @settings(max_examples=50, deadline=None, database=None)
        @given(
            arrays(
                np.float32,
                st.tuples(st.integers(0, 12), st.integers(1, 12)),
                elements=st.floats(-1e6, 1e6, width=32),
            ),
            st.integers(0, 1_000),
        )
        def round_trip(matrix, rate):
            path = fmat_dir / "probe.fmat"
            write_fmat(path, matrix, frame_rate=rate)
            first = path.read_bytes()
            back = read_fmat(path)
            assert back.dtype == np.float32
            assert np.array_equal(back, matrix)
            write_fmat(path, back, frame_rate=rate)
            assert path.read_bytes() == first

        round_trip()

        for tag in ("a", "b"):
            base = tmp_path / tag
            assert main([
                "simulate", "--rank", "4", "--dim", "64", "--speakers", "3",
                "--extras", "2", "--frames", "120", "--clusters", "5",
                "--beta", "0.01", "--noise", "0.0", "--seed", "8",
                "--out", str(base / "world"),
            ]) == 0
            assert main([
                "align", "--manifest", str(base / "world" / "manifest.tsv"),
                "--anchor", "spk01", "--out", str(base / "stack"),
            ]) == 0
            assert main([
                "factorize", "--stack", str(base / "stack"), "--rank", "4",
                "--out", str(base / "fact"),
            ]) == 0
            assert main([
                "derive-w", "--fact", str(base / "fact"),
                "--stack", str(base / "stack"), "--method", "w1",
                "--out", str(base / "w.fmat"),
            ]) == 0
            assert main([
                "derive-s", "--features", str(base / "world" / "ext01.fmat"),
                "--w", str(base / "w.fmat"), "--frames", "80", "--seed", "0",
                "--out", str(base / "s.fmat"),
            ]) == 0
            assert main([
                "convert", "--mode", "uscf",
                "--in", str(base / "world" / "ext02.fmat"),
                "--w", str(base / "w.fmat"), "--s", str(base / "s.fmat"),
                "--out", str(base / "y.fmat"),
            ]) == 0

        produced = sorted(
            p.relative_to(tmp_path / "a")
            for p in (tmp_path / "a").rglob("*")
            if p.is_file()
        )
        assert produced
        for rel in produced:
            a_bytes = (tmp_path / "a" / rel).read_bytes()
            b_bytes = (tmp_path / "b" / rel).read_bytes()
            assert a_bytes == b_bytes, str(rel)
