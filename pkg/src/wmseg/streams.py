"""Synthetic mixed-source token streams with planted watermarked intervals.

The generator emits, per position, a next-token probability vector from a
constrained model class, a pseudo-random key derived by hashing the previous
token with the master seed (context window of one token), and either a
decoded token (inside a planted segment) or an independent sample from the
NTP (outside). The scored pivots of the resulting stream are what the
segmenter consumes; a JSONL file format carries them between tools.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .intervals import Segments
from .keys import (
    CONTEXT_SENTINEL,
    TAG_NTP,
    TAG_NULL_DRAW,
    generator,
    key_seed,
    mix,
)
from .schemes import PivotSeries, PseudoKey, SchemeSpec, validate_probs

NTP_KINDS = ("dirichlet", "zipf", "fixed")
_REJECTION_LIMIT = 10_000


def cap_probs(probs: np.ndarray, delta: float) -> np.ndarray:
    """Project a probability vector onto {max entry <= 1 - delta}.

    Entries above the cap are pinned to it and the remaining mass is spread
    proportionally over the free entries, repeating until feasible.
    """
    cap = 1.0 - delta
    probs = np.asarray(probs, dtype=float)
    if cap * probs.size < 1.0 - 1e-12:
        raise ValueError(f"cap {cap} infeasible for vocabulary of {probs.size}")
    out = probs / probs.sum()
    while out.max() > cap + 1e-15:
        pinned = out >= cap
        free = ~pinned
        remaining = 1.0 - cap * np.count_nonzero(pinned)
        free_mass = out[free].sum()
        if free_mass <= 0.0:
            out = np.where(pinned, cap, 0.0)
            break
        out = np.where(pinned, cap, out * (remaining / free_mass))
    return out


@dataclass(frozen=True)
class NtpModel:
    """Generator of next-token probability vectors with a max-probability cap.

    ``dirichlet`` draws concentration-alpha vectors (rejection-sampled into
    the cap, then capped outright after 10^4 failures); ``zipf`` permutes a
    capped power-law shape; ``fixed`` cycles through user-supplied vectors.
    """

    kind: str = "dirichlet"
    delta_cap: float = 0.5
    concentration: float = 0.3
    exponent: float = 1.5
    vectors: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        if self.kind not in NTP_KINDS:
            raise ValueError(f"unknown NTP model kind {self.kind!r}")
        if not 0.0 < self.delta_cap < 1.0:
            raise ValueError("delta_cap must lie in (0, 1)")
        if self.kind == "fixed":
            if not self.vectors:
                raise ValueError("fixed NTP model needs at least one vector")
            for vec in self.vectors:
                probs = validate_probs(np.asarray(vec))
                if probs.max() > 1.0 - self.delta_cap + 1e-12:
                    raise ValueError("fixed NTP vector violates the probability cap")

    def sample(self, rng: np.random.Generator, vocab_size: int, position: int = 0) -> np.ndarray:
        cap = 1.0 - self.delta_cap
        if self.kind == "fixed":
            return np.asarray(self.vectors[position % len(self.vectors)], dtype=float)
        if self.kind == "zipf":
            base = np.arange(1, vocab_size + 1, dtype=float) ** -self.exponent
            base /= base.sum()
            if base.max() > cap:
                base = cap_probs(base, self.delta_cap)
            return base[rng.permutation(vocab_size)]
        for _ in range(_REJECTION_LIMIT):
            probs = rng.dirichlet(np.full(vocab_size, self.concentration))
            if probs.max() <= cap:
                return probs
        return cap_probs(probs, self.delta_cap)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "delta_cap": self.delta_cap}
        if self.kind == "dirichlet":
            out["concentration"] = self.concentration
        elif self.kind == "zipf":
            out["exponent"] = self.exponent
        else:
            out["vectors"] = [list(v) for v in self.vectors]
        return out

    @classmethod
    def from_json(cls, data: dict) -> "NtpModel":
        return cls(
            kind=data["kind"],
            delta_cap=float(data["delta_cap"]),
            concentration=float(data.get("concentration", 0.3)),
            exponent=float(data.get("exponent", 1.5)),
            vectors=tuple(tuple(v) for v in data["vectors"]) if "vectors" in data else None,
        )

    def describe(self) -> str:
        if self.kind == "dirichlet":
            return f"dirichlet({self.concentration})"
        if self.kind == "zipf":
            return f"zipf({self.exponent})"
        return f"fixed({len(self.vectors)})"


@dataclass(frozen=True)
class StreamSpec:
    """Everything needed to generate one stream, replayable from the seed.

    The generator does not require planted segments to respect any minimum
    length or separation; harness-level checks can enforce that when a
    benchmark calls for it.
    """

    n: int
    true_segments: Segments
    scheme: SchemeSpec
    ntp_model: NtpModel
    seed: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("stream length must be positive")
        Segments(self.true_segments.intervals, n=self.n)  # bounds check

    @property
    def vocab_size(self) -> int:
        return self.scheme.vocab_size


@dataclass(frozen=True)
class Stream:
    """A generated stream: tokens, per-position keys, and scored pivots."""

    spec: StreamSpec
    tokens: np.ndarray
    keys: tuple[PseudoKey, ...]
    pivots: PivotSeries

    @property
    def watermarked_mask(self) -> np.ndarray:
        return self.spec.true_segments.mask(self.spec.n)


def _sample_token(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="left")), probs.size - 1)


def generate_stream(spec: StreamSpec) -> Stream:
    """Generate tokens, keys and scored pivots for a stream spec.

    Inside a planted segment the token is the scheme's decode of (NTP, key);
    outside it is sampled from the NTP independently of the key, which is
    exactly the coupling the pivot statistics detect.
    """
    scheme = spec.scheme
    rng_ntp = generator(mix(spec.seed, TAG_NTP))
    rng_null = generator(mix(spec.seed, TAG_NULL_DRAW))
    inside = spec.true_segments.mask(spec.n)

    tokens = np.empty(spec.n, dtype=np.int64)
    scores = np.empty(spec.n, dtype=float)
    keys: list[PseudoKey] = []
    prev = CONTEXT_SENTINEL
    for i in range(spec.n):
        probs = spec.ntp_model.sample(rng_ntp, spec.vocab_size, position=i)
        key = scheme.key_at(key_seed(spec.seed, prev))
        token = scheme.decode(probs, key) if inside[i] else _sample_token(probs, rng_null)
        tokens[i] = token
        keys.append(key)
        scores[i] = scheme.pivot_score(token, key)
        prev = token
    series = PivotSeries(scores=scores, null_mean=scheme.null_mean, scheme_id=scheme.scheme_id)
    return Stream(spec=spec, tokens=tokens, keys=tuple(keys), pivots=series)


def reconstruct_keys(
    tokens: Sequence[int], master_seed: int, scheme: SchemeSpec
) -> tuple[PseudoKey, ...]:
    """Re-derive the per-position keys from tokens and the master seed.

    This is the verifier's view: composing it with ``generate_stream`` gives
    back the generator's key sequence exactly.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.size == 0:
        raise ValueError("token sequence is empty")
    prevs = np.concatenate(([CONTEXT_SENTINEL], tokens[:-1]))
    return tuple(scheme.key_at(key_seed(master_seed, int(p))) for p in prevs)


def score_tokens(tokens: Sequence[int], master_seed: int, scheme: SchemeSpec) -> PivotSeries:
    """Verifier-side scored pivots for an arbitrary (possibly edited) stream."""
    tokens = np.asarray(tokens, dtype=np.int64)
    keys = reconstruct_keys(tokens, master_seed, scheme)
    scores = np.fromiter(
        (scheme.pivot_score(int(t), k) for t, k in zip(tokens, keys)),
        dtype=float,
        count=tokens.size,
    )
    return PivotSeries(scores=scores, null_mean=scheme.null_mean, scheme_id=scheme.scheme_id)


# ---------------------------------------------------------------------------
# Edits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Substitution:
    position: int  # 1-based
    token: int


@dataclass(frozen=True)
class Insertion:
    position: int  # new token ends up at this 1-based position
    token: int


@dataclass(frozen=True)
class Deletion:
    position: int  # 1-based


Edit = Substitution | Insertion | Deletion


def apply_edits(tokens: Sequence[int], edits: Sequence[Edit]) -> np.ndarray:
    """Apply substitutions, insertions and deletions in order.

    Positions refer to the sequence as it stands when each edit applies, so
    a deletion shifts everything after it left by one.
    """
    out = list(np.asarray(tokens, dtype=np.int64))
    for edit in edits:
        if isinstance(edit, Substitution):
            if not 1 <= edit.position <= len(out):
                raise IndexError(f"substitution position {edit.position} out of bounds")
            out[edit.position - 1] = edit.token
        elif isinstance(edit, Insertion):
            if not 1 <= edit.position <= len(out) + 1:
                raise IndexError(f"insertion position {edit.position} out of bounds")
            out.insert(edit.position - 1, edit.token)
        elif isinstance(edit, Deletion):
            if not 1 <= edit.position <= len(out):
                raise IndexError(f"deletion position {edit.position} out of bounds")
            del out[edit.position - 1]
        else:
            raise TypeError(f"unknown edit {edit!r}")
    return np.asarray(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# JSONL stream files: one header record, then one record per token
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StreamFile:
    """Contents of a stream JSONL file, as read back by consumers."""

    series: PivotSeries
    true_segments: Segments
    tokens: np.ndarray
    seed: int
    scheme: SchemeSpec


def write_stream_jsonl(path: str | Path, stream: Stream) -> None:
    spec = stream.spec
    header = {
        "n": spec.n,
        "scheme": spec.scheme.scheme_id,
        "mu0": spec.scheme.null_mean,
        "seed": spec.seed,
        "true_segments": spec.true_segments.to_pairs(),
        "scheme_params": spec.scheme.to_json(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for i in range(spec.n):
            record = {
                "t": i + 1,
                "token": int(stream.tokens[i]),
                "pivot_score": float(stream.pivots.scores[i]),
            }
            fh.write(json.dumps(record) + "\n")


def read_stream_jsonl(path: str | Path) -> StreamFile:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        n = int(header["n"])
        tokens = np.empty(n, dtype=np.int64)
        scores = np.empty(n, dtype=float)
        for _ in range(n):
            record = json.loads(fh.readline())
            t = int(record["t"])
            tokens[t - 1] = int(record["token"])
            scores[t - 1] = float(record["pivot_score"])
    scheme = SchemeSpec.from_json(header["scheme_params"])
    series = PivotSeries(
        scores=scores, null_mean=float(header["mu0"]), scheme_id=str(header["scheme"])
    )
    return StreamFile(
        series=series,
        true_segments=Segments(header["true_segments"], n=n),
        tokens=tokens,
        seed=int(header["seed"]),
        scheme=scheme,
    )
