import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from wmseg.intervals import Segments
from wmseg.keys import generator
from wmseg.schemes import GumbelKey, SchemeSpec, gumbel_separation_lower_bound
from wmseg.streams import (
    Deletion,
    Insertion,
    NtpModel,
    StreamSpec,
    Substitution,
    apply_edits,
    cap_probs,
    generate_stream,
    read_stream_jsonl,
    reconstruct_keys,
    score_tokens,
    write_stream_jsonl,
)

GUMBEL = SchemeSpec("gumbel", vocab_size=100)
DIRICHLET = NtpModel(kind="dirichlet", delta_cap=0.5, concentration=0.3)


def make_spec(n=400, segments=(), seed=0, scheme=GUMBEL, ntp=DIRICHLET):
    return StreamSpec(
        n=n, true_segments=Segments(segments, n=n), scheme=scheme, ntp_model=ntp, seed=seed
    )


# ---------------------------------------------------------------------------
# Probability capping and NTP models
# ---------------------------------------------------------------------------


class TestCapProbs:
    def test_single_pass_case(self):
        out = cap_probs(np.array([0.9, 0.05, 0.05]), 0.5)
        assert np.allclose(out, [0.5, 0.25, 0.25])
        assert math.isclose(out.sum(), 1.0)

    def test_needs_a_second_pass(self):
        # Scaling the free mass pushes the second entry over the cap too.
        out = cap_probs(np.array([0.5, 0.49, 0.01]), 0.55)
        assert out.max() <= 0.45 + 1e-12
        assert math.isclose(out.sum(), 1.0)
        assert np.allclose(out, [0.45, 0.45, 0.10])

    def test_infeasible_cap(self):
        with pytest.raises(ValueError):
            cap_probs(np.array([0.5, 0.5]), 0.8)

    @given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=0.05, max_value=0.9))
    @settings(max_examples=60)
    def test_always_lands_in_the_cap(self, seed, delta):
        rng = np.random.default_rng(seed)
        probs = rng.dirichlet(np.full(12, 0.2))
        if (1.0 - delta) * 12 < 1.0:
            return
        out = cap_probs(probs, delta)
        assert out.max() <= 1.0 - delta + 1e-9
        assert math.isclose(out.sum(), 1.0, abs_tol=1e-9)
        assert out.min() >= 0.0


class TestNtpModel:
    def test_dirichlet_respects_the_cap(self):
        rng = generator(5)
        model = NtpModel(kind="dirichlet", delta_cap=0.6, concentration=0.3)
        for _ in range(300):
            probs = model.sample(rng, 40)
            assert probs.max() <= 0.4 + 1e-9
            assert math.isclose(probs.sum(), 1.0, abs_tol=1e-9)

    def test_zipf_is_a_capped_permuted_power_law(self):
        rng = generator(6)
        model = NtpModel(kind="zipf", delta_cap=0.5, exponent=2.0)
        a = model.sample(rng, 10)
        b = model.sample(rng, 10)
        assert math.isclose(a.sum(), 1.0, abs_tol=1e-9)
        assert a.max() <= 0.5 + 1e-9
        assert np.allclose(np.sort(a), np.sort(b))  # same shape, different order

    def test_fixed_vectors_cycle_and_validate(self):
        model = NtpModel(
            kind="fixed", delta_cap=0.5, vectors=((0.5, 0.5, 0.0), (0.25, 0.25, 0.5))
        )
        with pytest.raises(ValueError):
            NtpModel(kind="fixed", delta_cap=0.5, vectors=((0.9, 0.1),))
        rng = generator(7)
        assert np.allclose(model.sample(rng, 3, position=0), [0.5, 0.5, 0.0])
        assert np.allclose(model.sample(rng, 3, position=3), [0.25, 0.25, 0.5])

    def test_fixed_cap_boundary_is_allowed(self):
        NtpModel(kind="fixed", delta_cap=0.5, vectors=((0.5, 0.5),))

    def test_json_round_trip(self):
        for model in (
            NtpModel(kind="dirichlet", delta_cap=0.5, concentration=0.7),
            NtpModel(kind="zipf", delta_cap=0.3, exponent=1.2),
            NtpModel(kind="fixed", delta_cap=0.5, vectors=((0.5, 0.5),)),
        ):
            assert NtpModel.from_json(model.to_json()) == model


# ---------------------------------------------------------------------------
# Stream generation
# ---------------------------------------------------------------------------


class TestGenerateStream:
    def test_pure_null_stream_mean(self):
        spec = make_spec(n=2000, segments=(), seed=3)
        stream = generate_stream(spec)
        # Exp(1) scores: mean within 3 sigma / sqrt(n) of 1.
        assert abs(stream.pivots.scores.mean() - 1.0) < 3.0 / math.sqrt(2000)
        assert stream.watermarked_mask.sum() == 0

    def test_fully_watermarked_stream_mean(self):
        spec = make_spec(n=1500, segments=[(1, 1500)], seed=4)
        stream = generate_stream(spec)
        scores = stream.pivots.scores
        floor = 1.0 + gumbel_separation_lower_bound(0.5)
        assert scores.mean() >= floor - 3.0 * scores.std(ddof=1) / math.sqrt(scores.size)
        assert stream.watermarked_mask.sum() == 1500

    def test_replays_are_bit_identical(self):
        spec = make_spec(n=120, segments=[(30, 80)], seed=5)
        a, b = generate_stream(spec), generate_stream(spec)
        assert np.array_equal(a.tokens, b.tokens)
        assert np.array_equal(a.pivots.scores, b.pivots.scores)
        for ka, kb in zip(a.keys, b.keys):
            assert np.array_equal(ka.uniforms, kb.uniforms)

    def test_watermarked_positions_match_segments(self):
        segments = [(10, 25), (60, 70)]
        spec = make_spec(n=100, segments=segments, seed=6)
        stream = generate_stream(spec)
        assert stream.watermarked_mask.sum() == Segments(segments).union_size
        inside = stream.pivots.scores[stream.watermarked_mask]
        outside = stream.pivots.scores[~stream.watermarked_mask]
        assert inside.mean() > outside.mean()

    def test_pivots_match_verifier_scoring(self):
        spec = make_spec(n=150, segments=[(50, 100)], seed=7)
        stream = generate_stream(spec)
        rescored = score_tokens(stream.tokens, spec.seed, spec.scheme)
        assert np.array_equal(rescored.scores, stream.pivots.scores)

    def test_all_schemes_generate(self):
        for scheme in (
            GUMBEL,
            SchemeSpec("inverse", vocab_size=100),
            SchemeSpec("red_green", vocab_size=100, green_frac=0.5, bias=2.0),
        ):
            spec = make_spec(n=200, segments=[(50, 150)], seed=8, scheme=scheme)
            stream = generate_stream(spec)
            inside = stream.pivots.scores[stream.watermarked_mask]
            assert inside.mean() > scheme.null_mean

    def test_segments_must_fit_the_stream(self):
        with pytest.raises(ValueError):
            make_spec(n=50, segments=[(40, 60)])


class TestReconstructKeys:
    def test_round_trip_with_generation(self):
        spec = make_spec(n=80, segments=[(20, 50)], seed=9)
        stream = generate_stream(spec)
        rebuilt = reconstruct_keys(stream.tokens, spec.seed, spec.scheme)
        assert len(rebuilt) == len(stream.keys)
        for ka, kb in zip(stream.keys, rebuilt):
            assert np.array_equal(ka.uniforms, kb.uniforms)

    def test_editing_the_previous_token_changes_the_key(self):
        spec = make_spec(n=10, seed=10)
        stream = generate_stream(spec)
        tokens = stream.tokens.copy()
        tokens[4] = (tokens[4] + 1) % spec.vocab_size
        rebuilt = reconstruct_keys(tokens, spec.seed, spec.scheme)
        # position 6 (index 5) hashes token 5; all its uniforms move
        assert not np.any(np.isclose(rebuilt[5].uniforms, stream.keys[5].uniforms))
        assert np.array_equal(rebuilt[4].uniforms, stream.keys[4].uniforms)

    def test_different_master_seeds_disagree_everywhere(self):
        tokens = np.arange(1000) % 50
        scheme = SchemeSpec("gumbel", vocab_size=50)
        keys_a = reconstruct_keys(tokens, 1, scheme)
        keys_b = reconstruct_keys(tokens, 2, scheme)
        for ka, kb in zip(keys_a, keys_b):
            assert not np.any(ka.uniforms == kb.uniforms)

    def test_empty_tokens_rejected(self):
        with pytest.raises(ValueError):
            reconstruct_keys([], 0, GUMBEL)


# ---------------------------------------------------------------------------
# Edits
# ---------------------------------------------------------------------------


class TestApplyEdits:
    def test_empty_spec_is_identity(self):
        tokens = np.array([3, 1, 4, 1, 5])
        assert np.array_equal(apply_edits(tokens, []), tokens)

    def test_substitution(self):
        out = apply_edits(np.array([3, 1, 4]), [Substitution(position=2, token=9)])
        assert out.tolist() == [3, 9, 4]

    def test_deletion_shifts_left(self):
        out = apply_edits(np.array([3, 1, 4, 1, 5]), [Deletion(position=2)])
        assert out.tolist() == [3, 4, 1, 5]

    def test_insertion(self):
        out = apply_edits(np.array([3, 1]), [Insertion(position=2, token=7)])
        assert out.tolist() == [3, 7, 1]
        out = apply_edits(np.array([3, 1]), [Insertion(position=3, token=7)])
        assert out.tolist() == [3, 1, 7]

    def test_out_of_bounds(self):
        tokens = np.array([3, 1, 4])
        for edit in (Substitution(4, 0), Deletion(0), Insertion(5, 1)):
            with pytest.raises(IndexError):
                apply_edits(tokens, [edit])

    def test_edits_apply_sequentially(self):
        out = apply_edits(
            np.array([3, 1, 4, 1]),
            [Deletion(position=1), Substitution(position=1, token=8)],
        )
        assert out.tolist() == [8, 4, 1]

    def test_substitution_inside_a_segment_nulls_two_positions(self, rng):
        """Hash context is one token: an edit at t disturbs pivots at t and
        t+1 only; the watermark coupling resumes at t+2."""
        edited_here, edited_next, intact = [], [], []
        vocab = GUMBEL.vocab_size
        for seed in range(400):
            spec = make_spec(n=16, segments=[(1, 16)], seed=seed + 1000)
            stream = generate_stream(spec)
            tokens = stream.tokens.copy()
            old = tokens[9]
            tokens[9] = (old + 1 + rng.integers(0, vocab - 1)) % vocab
            rescored = score_tokens(tokens, spec.seed, spec.scheme)
            edited_here.append(rescored.scores[9])
            edited_next.append(rescored.scores[10])
            intact.append(rescored.scores[11])
        edited_here, edited_next, intact = map(np.asarray, (edited_here, edited_next, intact))
        for pooled in (edited_here, edited_next):
            assert abs(pooled.mean() - 1.0) < 3.0 * pooled.std(ddof=1) / 20.0
            assert stats.kstest(pooled, "expon").pvalue > 1e-3
        assert intact.mean() - 3.0 * intact.std(ddof=1) / 20.0 > 1.3


# ---------------------------------------------------------------------------
# JSONL interchange
# ---------------------------------------------------------------------------


class TestStreamJsonl:
    def test_round_trip(self, tmp_path):
        spec = make_spec(n=60, segments=[(10, 30)], seed=11)
        stream = generate_stream(spec)
        path = tmp_path / "stream.jsonl"
        write_stream_jsonl(path, stream)
        back = read_stream_jsonl(path)
        assert back.series.n == 60
        assert np.array_equal(back.series.scores, stream.pivots.scores)
        assert np.array_equal(back.tokens, stream.tokens)
        assert back.series.null_mean == spec.scheme.null_mean
        assert back.true_segments.to_pairs() == [[10, 30]]
        assert back.seed == 11
        assert back.scheme == spec.scheme

    def test_header_carries_the_contract_fields(self, tmp_path):
        spec = make_spec(n=5, seed=12)
        path = tmp_path / "s.jsonl"
        write_stream_jsonl(path, generate_stream(spec))
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        assert set(header) >= {"n", "scheme", "mu0", "seed", "true_segments"}
        assert header["n"] == 5
        assert header["scheme"] == "gumbel"
        record = json.loads(lines[1])
        assert set(record) == {"t", "token", "pivot_score"}
        assert record["t"] == 1
        assert len(lines) == 6
