"""Multi-segment localization pipeline over scored pivot sequences.

Stages, in order: sum scores over consecutive blocks; keep blocks whose sum
clears the calibrated threshold; merge kept blocks into runs and discard
runs too short to be real; enlarge surviving runs into disjoint candidate
regions; estimate the signal strength from those regions; and finally, for
each region, scan restricted endpoint windows for the interval whose
excluded scores look most like noise. The exhaustive single-interval
estimator over the full series doubles as the correctness oracle for the
restricted scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import CertMismatch, ThresholdCert
from .intervals import Interval, Segments
from .schemes import PivotSeries

SIGNAL_FLOOR = 1e-6


@dataclass(frozen=True)
class SegmenterConfig:
    """Tuning parameters of the pipeline.

    ``pad`` is the per-side enlargement of kept runs, in tokens; the "auto"
    default resolves to ceil(n ** (0.5 + gamma)). ``discard_c`` scales the
    minimum believable run length c * sqrt(n log n) (in tokens). ``rho``
    tempers the estimated signal in the localization objective.
    """

    cert: ThresholdCert
    rho: float = 0.5
    gamma: float = 0.1
    discard_c: float = 0.5
    pad: int | str = "auto"

    def __post_init__(self):
        if not 0.05 <= self.rho <= 0.9:
            raise ValueError("rho must lie in [0.05, 0.9]")
        if not 0.0 < self.gamma < 0.5:
            raise ValueError("gamma must lie in (0, 1/2)")
        if self.discard_c <= 0:
            raise ValueError("discard_c must be positive")
        if self.pad != "auto" and (not isinstance(self.pad, int) or self.pad < 0):
            raise ValueError("pad must be 'auto' or a nonnegative integer")

    @property
    def block_len(self) -> int:
        return self.cert.block_len

    @property
    def alpha(self) -> float:
        return self.cert.alpha

    def resolved_pad(self, n: int) -> int:
        if self.pad == "auto":
            return default_pad(n, self.gamma)
        return self.pad


def default_pad(n: int, gamma: float) -> int:
    return math.ceil(n ** (0.5 + gamma))


def min_run_blocks(n: int, block_len: int, discard_c: float) -> int:
    """Shortest believable run, converted from c*sqrt(n log n) tokens to blocks."""
    cutoff_tokens = discard_c * math.sqrt(n * math.log(n)) if n > 1 else 0.0
    return max(1, math.ceil(cutoff_tokens / block_len))


@dataclass(frozen=True)
class StageTrace:
    """Everything the pipeline decided on the way to its output."""

    block_sums: np.ndarray
    threshold: float
    selected_blocks: np.ndarray  # 0-based block indices
    merged_runs: tuple[Interval, ...]  # 0-based inclusive block runs
    kept_runs: tuple[Interval, ...]
    regions: Segments  # enlarged candidate regions, token units
    windows: tuple[tuple[Interval, Interval], ...]  # (left, right) per region
    signal: float
    signal_floored: bool
    min_run_blocks: int
    pad: int

    def summary(self) -> dict:
        return {
            "n_blocks": int(self.block_sums.size),
            "threshold": self.threshold,
            "selected_blocks": [int(k) + 1 for k in self.selected_blocks],
            "kept_runs_blocks": [[a + 1, b + 1] for a, b in self.kept_runs],
            "regions": self.regions.to_pairs(),
            "d_tilde": self.signal,
            "d_tilde_floored": self.signal_floored,
            "min_run_blocks": self.min_run_blocks,
            "pad": self.pad,
        }


@dataclass(frozen=True)
class SegmentationResult:
    segments: Segments
    trace: StageTrace

    @property
    def k_hat(self) -> int:
        return len(self.segments)

    def to_json(self) -> dict:
        return {
            "k_hat": self.k_hat,
            "segments": [{"left": l, "right": r} for l, r in self.segments],
            "d_tilde": self.trace.signal,
            "trace": self.trace.summary(),
        }


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def block_sums(scores: np.ndarray, block_len: int) -> np.ndarray:
    """Sums over consecutive blocks of block_len scores; last block may be short."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("empty score series")
    if not 1 <= block_len <= scores.size:
        raise ValueError("block length must lie in [1, n]")
    return np.add.reduceat(scores, np.arange(0, scores.size, block_len))


def screen_blocks(sums: np.ndarray, threshold: float) -> np.ndarray:
    """0-based indices of blocks whose sum strictly exceeds the threshold."""
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    return np.nonzero(np.asarray(sums) > threshold)[0]


def merge_selected(selected: np.ndarray) -> list[Interval]:
    """Group consecutive selected block indices into inclusive runs."""
    runs: list[Interval] = []
    for k in np.sort(np.asarray(selected, dtype=int)):
        if runs and k == runs[-1][1] + 1:
            runs[-1] = (runs[-1][0], int(k))
        else:
            runs.append((int(k), int(k)))
    return runs


def discard_short_runs(selected: np.ndarray, min_run: int) -> list[Interval]:
    """Merge selected blocks into runs and drop runs shorter than min_run blocks."""
    if min_run < 1:
        raise ValueError("minimum run length must be at least 1 block")
    return [(a, b) for a, b in merge_selected(selected) if b - a + 1 >= min_run]


def enlarge_runs(kept_runs: list[Interval], block_len: int, n: int, pad: int) -> Segments:
    """Convert block runs to token intervals, pad both sides, keep disjoint.

    Padded neighbours that would overlap are truncated at the midpoint of
    the token gap between the unpadded runs, so each region still contains
    its run.
    """
    if pad < 0:
        raise ValueError("pad must be nonnegative")
    raw = [(a * block_len + 1, min((b + 1) * block_len, n)) for a, b in kept_runs]
    regions: list[Interval] = []
    for i, (left, right) in enumerate(raw):
        lo, hi = max(1, left - pad), min(n, right + pad)
        if i > 0:
            mid = (raw[i - 1][1] + left) // 2
            lo = max(lo, mid + 1)
        if i + 1 < len(raw):
            mid = (right + raw[i + 1][0]) // 2
            hi = min(hi, mid)
        regions.append((lo, hi))
    return Segments(regions, n=n)


def estimate_signal(
    scores: np.ndarray, regions: Segments, null_mean: float
) -> tuple[float, bool]:
    """Mean elevation of scores over the candidate regions.

    A nonpositive estimate (possible after a false screening) is floored at
    a tiny positive value and flagged, keeping the localization objective
    well-posed while surfacing the anomaly in the trace.
    """
    if not regions:
        raise ValueError("cannot estimate signal from an empty region set")
    scores = np.asarray(scores, dtype=float)
    picked = scores[regions.mask(scores.size)]
    value = float(picked.mean() - null_mean)
    if value <= 0.0:
        return SIGNAL_FLOOR, True
    return value, False


def search_windows(region: Interval, block_len: int, pad: int) -> tuple[Interval, Interval]:
    """Endpoint search windows: the first and last 2*(pad + block_len) tokens
    of the region (the whole region when it is shorter than that)."""
    left, right = region
    width = min(right - left + 1, 2 * (pad + block_len))
    return (left, left + width - 1), (right - width + 1, right)


def localize_segment(
    scores: np.ndarray,
    region: Interval,
    window_left: Interval,
    window_right: Interval,
    null_mean: float,
    rho: float,
    signal: float,
) -> Interval:
    """Best interval [s, t] with s in the left window, t in the right one.

    Minimizes the sum of (score - null_mean - rho*signal) over the region
    outside [s, t]; equivalently maximizes the penalized mass inside. Ties
    break toward the narrowest interval, then the smallest start.
    """
    d_left, d_right = region
    wl_lo, wl_hi = window_left
    wr_lo, wr_hi = window_right
    if not (d_left <= wl_lo <= wl_hi <= d_right and d_left <= wr_lo <= wr_hi <= d_right):
        raise ValueError("search windows must lie inside the region")
    if wl_lo > wr_hi:
        raise ValueError("empty search space: left window starts after right window ends")

    adjusted = np.asarray(scores, dtype=float)[d_left - 1 : d_right] - (null_mean + rho * signal)
    prefix = np.concatenate(([0.0], np.cumsum(adjusted)))

    # Local 0-based offsets within the region.
    s_off = np.arange(wl_lo - d_left, wl_hi - d_left + 1)
    t_off = np.arange(wr_lo - d_left, wr_hi - d_left + 1)

    # For each candidate start s, the inside mass is prefix[t+1] - prefix[s];
    # sweep ends with a running minimum over admissible prefix[s], preferring
    # the latest argmin (narrower interval) on exact ties.
    start_vals = prefix[s_off]
    run_min = np.minimum.accumulate(start_vals)
    latest_argmin = np.maximum.accumulate(
        np.where(start_vals == run_min, np.arange(start_vals.size), -1)
    )

    n_admissible = np.minimum(np.searchsorted(s_off, t_off, side="right"), s_off.size)
    valid = n_admissible >= 1  # needs some start s <= t
    if not np.any(valid):
        raise ValueError("empty search space: no start precedes any end")

    k = n_admissible[valid] - 1
    ends = t_off[valid]
    inside = prefix[ends + 1] - run_min[k]
    starts = s_off[latest_argmin[k]]

    best_inside = inside.max()
    top = inside == best_inside
    widths = ends[top] - starts[top] + 1
    pick = int(np.argmin(widths))  # first minimal width == smallest start
    return (
        int(starts[top][pick]) + d_left,
        int(ends[top][pick]) + d_left,
    )


def naive_estimate(
    scores: np.ndarray, null_mean: float, rho: float, signal: float
) -> Interval:
    """Exhaustive single-interval estimator over the whole series.

    Scans every 1 <= s <= t <= n for the interval minimizing the adjusted
    score sum outside it, with the same tie-breaking as localize_segment.
    Quadratic cost; serves as the correctness oracle for the restricted scan.
    """
    adjusted = np.asarray(scores, dtype=float) - (null_mean + rho * signal)
    n = adjusted.size
    if n == 0:
        raise ValueError("empty score series")
    # suffix[i] = sum of adjusted[i:]
    suffix = np.concatenate((np.cumsum(adjusted[::-1])[::-1], [0.0]))
    best_obj = math.inf
    best: Interval = (1, 1)
    best_width = n + 1
    left = 0.0
    for s0 in range(n):
        row = left + suffix[s0 + 1 :]  # objective over t0 = s0 .. n-1
        t_rel = int(np.argmin(row))  # first minimum: smallest t, narrowest here
        obj = float(row[t_rel])
        width = t_rel + 1
        if obj < best_obj or (obj == best_obj and width < best_width):
            best_obj, best_width, best = obj, width, (s0 + 1, s0 + t_rel + 1)
        left += adjusted[s0]
    return best


def segment_series(series: PivotSeries, config: SegmenterConfig) -> SegmentationResult:
    """Run the full pipeline on a scored pivot series."""
    cert = config.cert
    if cert.n != series.n:
        raise CertMismatch(f"certificate is for n={cert.n}, stream has n={series.n}")
    if cert.scheme_id != series.scheme_id:
        raise CertMismatch(
            f"certificate is for scheme {cert.scheme_id!r}, stream carries {series.scheme_id!r}"
        )
    n = series.n
    b = config.block_len
    pad = config.resolved_pad(n)
    min_run = min_run_blocks(n, b, config.discard_c)

    sums = block_sums(series.scores, b)
    selected = screen_blocks(sums, cert.q)
    merged = merge_selected(selected)
    kept = discard_short_runs(selected, min_run)
    regions = enlarge_runs(kept, b, n, pad)

    if not regions:
        trace = StageTrace(
            block_sums=sums,
            threshold=cert.q,
            selected_blocks=selected,
            merged_runs=tuple(merged),
            kept_runs=tuple(kept),
            regions=regions,
            windows=(),
            signal=0.0,
            signal_floored=False,
            min_run_blocks=min_run,
            pad=pad,
        )
        return SegmentationResult(segments=Segments(), trace=trace)

    signal, floored = estimate_signal(series.scores, regions, series.null_mean)
    windows = tuple(search_windows(region, b, pad) for region in regions)
    located = [
        localize_segment(series.scores, region, wl, wr, series.null_mean, config.rho, signal)
        for region, (wl, wr) in zip(regions, windows)
    ]
    trace = StageTrace(
        block_sums=sums,
        threshold=cert.q,
        selected_blocks=selected,
        merged_runs=tuple(merged),
        kept_runs=tuple(kept),
        regions=regions,
        windows=windows,
        signal=signal,
        signal_floored=floored,
        min_run_blocks=min_run,
        pad=pad,
    )
    return SegmentationResult(segments=Segments(located, n=n), trace=trace)
