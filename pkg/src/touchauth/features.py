"""Per-swipe features, sliding windows, min-max scaling and MI-based selection."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .data import SwipeGesture
from .errors import DegenerateSwipe, EmptySeries, SingleClass

FEATURE_NAMES = (
    "swipe_duration",
    "start_x", "start_y", "end_x", "end_y",
    "dp", "l", "velocity", "initial_v", "final_v", "mean_v",
    "direction", "area", "acceleration", "mean_a", "initial_a", "final_a",
    "aP25", "aP50", "aP75",
    "vP25", "vP50", "vP75",
    "speed", "initial_s", "final_s",
    "sP25", "sP50", "sP75",
    "mean_vx", "mean_vy", "mean_ax", "mean_ay", "mean_d",
    "max_d",
    "vxP25", "vxP50", "vxP75",
    "vyP25", "vyP50", "vyP75",
    "axP25", "axP50", "axP75",
    "ayP25", "ayP50", "ayP75",
)
N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 47

LABELS = ("genuine", "impostor", "synthetic_genuine", "synthetic_impostor")
PERCENTS = (25, 50, 75)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    swipe_ref: tuple[str, str]
    timestamp: float


@dataclass
class WindowSet:
    """A batch of window vectors; row ``i`` of ``values`` is one window."""

    values: np.ndarray
    user_ids: list
    window_index: np.ndarray
    labels: list

    def __len__(self):
        return len(self.values)

    @classmethod
    def empty(cls, dim: int) -> "WindowSet":
        return cls(np.zeros((0, dim)), [], np.zeros(0, dtype=int), [])

    @classmethod
    def concat(cls, sets: Sequence["WindowSet"]) -> "WindowSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            raise ValueError("nothing to concatenate")
        return cls(
            np.vstack([s.values for s in sets]),
            [u for s in sets for u in s.user_ids],
            np.concatenate([s.window_index for s in sets]),
            [lab for s in sets for lab in s.labels],
        )

    def relabel(self, label: str) -> "WindowSet":
        return WindowSet(self.values, list(self.user_ids), self.window_index.copy(), [label] * len(self))


def percentile(series, m: float) -> float:
    """Linear-interpolation percentile, rank ``m/100 * (k-1)`` over the sorted series."""
    s = sorted(float(v) for v in series)
    if not s:
        raise EmptySeries("percentile of an empty series")
    r = m / 100.0 * (len(s) - 1)
    lo = math.floor(r)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (r - lo) * (s[hi] - s[lo])


def _percentiles(arr: np.ndarray) -> list[float]:
    if len(arr) == 0:
        return [0.0, 0.0, 0.0]
    return [percentile(arr, m) for m in PERCENTS]


def _edge_count(n: int) -> int:
    # points in the leading/trailing 5% of a swipe, at least two
    return max(2, math.ceil(0.05 * n))


def _safe_div(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def extract_features(swipe: SwipeGesture) -> FeatureVector:
    """Compute the 47 swipe features, in feature-id order."""
    ev = swipe.events
    n = len(ev)
    if n < 2:
        raise DegenerateSwipe(f"swipe {swipe.swipe_id!r} has {n} events")
    x, y, t, a, b = ev.T
    duration = t[-1] - t[0]
    if duration == 0:
        raise DegenerateSwipe(f"swipe {swipe.swipe_id!r} has zero duration")

    dx_total, dy_total = x[-1] - x[0], y[-1] - y[0]
    dp = math.hypot(dx_total, dy_total)
    dx, dy, dt = np.diff(x), np.diff(y), np.diff(t)
    steps = np.hypot(dx, dy)
    length = float(steps.sum())

    vx = _safe_div(dx, dt)
    vy = _safe_div(dy, dt)
    speeds = np.hypot(vx, vy)
    # signed pairwise velocity along the start->end chord
    if dp > 0:
        v_chord = (vx * dx_total + vy * dy_total) / dp
    else:
        v_chord = np.zeros_like(vx)
    ax = _safe_div(np.diff(vx), dt[1:])
    ay = _safe_div(np.diff(vy), dt[1:])
    acc = np.hypot(ax, ay)

    k = _edge_count(n)
    head, tail = slice(0, k), slice(n - k, n)

    def chord_velocity(sl):
        span = t[sl][-1] - t[sl][0]
        return float(_safe_div(math.hypot(x[sl][-1] - x[sl][0], y[sl][-1] - y[sl][0]), span))

    def path_speed(sl):
        span = t[sl][-1] - t[sl][0]
        return float(_safe_div(np.hypot(np.diff(x[sl]), np.diff(y[sl])).sum(), span))

    initial_v, final_v = chord_velocity(head), chord_velocity(tail)
    ka = max(1, math.ceil(0.05 * len(acc)))
    initial_a = float(acc[:ka].mean()) if len(acc) else 0.0
    final_a = float(acc[-ka:].mean()) if len(acc) else 0.0

    if x[-1] != x[0]:
        m = dy_total / dx_total
        c = y[0] - m * x[0]
        dev = np.abs(y - m * x - c) / math.sqrt(1 + m * m)
    else:
        dev = np.abs(x - x[0])

    def mean(arr):
        return float(arr.mean()) if len(arr) else 0.0

    values = [
        duration,
        x[0], y[0], x[-1], y[-1],
        dp, length, dp / duration, initial_v, final_v, mean(speeds),
        math.atan2(dx_total, dy_total),
        float(np.mean(np.pi * a * b)),
        (final_v - initial_v) / duration,
        mean(acc), initial_a, final_a,
        *_percentiles(acc),
        *_percentiles(v_chord),
        length / duration, path_speed(head), path_speed(tail),
        *_percentiles(speeds),
        mean(vx), mean(vy), mean(ax), mean(ay), float(dev.mean()),
        float(dev.max()),
        *_percentiles(vx), *_percentiles(vy), *_percentiles(ax), *_percentiles(ay),
    ]
    vec = np.array(values, dtype=float)
    return FeatureVector(vec, (swipe.user_id, swipe.swipe_id), swipe.t_start)


def feature_matrix(swipes: Sequence[SwipeGesture]) -> np.ndarray:
    if not swipes:
        return np.zeros((0, N_FEATURES))
    return np.vstack([extract_features(s).values for s in swipes])


def window_count(n: int, p: int, q: int) -> int:
    return (n - p) // q + 1 if n >= p else 0


def build_windows(vectors, p: int = 5, q: int = 1, label: str = "genuine") -> WindowSet:
    """Concatenate ``p`` consecutive feature vectors, sliding by ``q``.

    ``vectors`` is either a sequence of :class:`FeatureVector` from one user
    (time-ordered) or an ``(n, 47)`` array.
    """
    if p < 1 or q < 1:
        raise ValueError("p and q must be >= 1")
    if isinstance(vectors, np.ndarray):
        mat, uid = vectors, None
    else:
        users = {v.swipe_ref[0] for v in vectors}
        if len(users) > 1:
            raise ValueError("build_windows expects vectors of a single user")
        uid = users.pop() if users else None
        mat = np.vstack([v.values for v in vectors]) if vectors else np.zeros((0, N_FEATURES))
    n, d = mat.shape
    count = window_count(n, p, q)
    if count == 0:
        return WindowSet.empty(d * p)
    starts = np.arange(count) * q
    values = np.stack([mat[s : s + p].reshape(-1) for s in starts])
    return WindowSet(values, [uid] * count, np.arange(count), [label] * count)


@dataclass(frozen=True)
class Normalizer:
    mins: np.ndarray
    maxs: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        span = self.maxs - self.mins
        const = span == 0
        out = _safe_div(values - self.mins, span)
        out = np.clip(out, 0.0, 1.0)
        return np.where(const, 0.5, out)


def fit_normalizer(train) -> Normalizer:
    values = train.values if isinstance(train, WindowSet) else np.asarray(train, dtype=float)
    if len(values) == 0:
        raise ValueError("cannot fit a normalizer on no data")
    return Normalizer(values.min(axis=0), values.max(axis=0))


def apply_normalizer(norm: Normalizer, v):
    if isinstance(v, WindowSet):
        return WindowSet(norm.apply(v.values), list(v.user_ids), v.window_index.copy(), list(v.labels))
    return norm.apply(v)


def _equal_frequency_bins(rank2: np.ndarray, k: int, bins: int) -> np.ndarray:
    """Bin codes from doubled 0-based average ranks.

    A sample's quantile position is ``(r + 1/2) / k``. Positions falling
    exactly on an interior edge are assigned to the side nearer the centre,
    and a position exactly at 1/2 gets its own code, so negating the
    feature yields the mirrored partition.
    """
    num = bins * (rank2 + 1)
    den = 2 * k
    code = num // den
    on_edge = num % den == 0
    centre = on_edge & (2 * code == bins)
    upper_half = on_edge & (2 * code > bins)
    code = np.where(upper_half, code - 1, code)
    code = np.where(centre, bins, code)
    return np.minimum(code, bins)


def mutual_information(feature_column, labels, bins: int = 10) -> float:
    """Plug-in MI (nats) between an equal-frequency-binned feature and a binary label."""
    x = np.asarray(feature_column, dtype=float)
    y = np.asarray(labels).astype(int)
    if len(x) != len(y):
        raise ValueError("feature and labels differ in length")
    if len(np.unique(y)) < 2:
        raise SingleClass("mutual information needs both labels")
    return float(_mi_matrix(x[:, None], y, bins)[0])


def _mi_matrix(X: np.ndarray, y: np.ndarray, bins: int) -> np.ndarray:
    k, d = X.shape
    rank2 = (2 * (rankdata(X, axis=0, method="average") - 1)).round().astype(np.int64)
    codes = _equal_frequency_bins(rank2, k, bins)
    classes, yc = np.unique(y, return_inverse=True)
    nb = bins + 1
    # joint counts: (d, nb, n_classes)
    joint = np.zeros((d, nb, len(classes)))
    cols = np.broadcast_to(np.arange(d), (k, d))
    np.add.at(joint, (cols, codes, np.broadcast_to(yc[:, None], (k, d))), 1.0)
    pxy = joint / k
    px = pxy.sum(axis=2, keepdims=True)
    py = pxy.sum(axis=1, keepdims=True)
    denom = px * py
    ratio = _safe_div(pxy, denom)
    terms = np.where(pxy > 0, pxy * np.log(np.where(pxy > 0, ratio, 1.0)), 0.0)
    return np.maximum(terms.sum(axis=(1, 2)), 0.0)


@dataclass(frozen=True)
class FeatureSelector:
    selected_indices: np.ndarray
    mi_scores: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values)[..., self.selected_indices]

    @property
    def k(self) -> int:
        return len(self.selected_indices)

    def truncated(self, k: int) -> "FeatureSelector":
        return FeatureSelector(self.selected_indices[:k].copy(), self.mi_scores)


def rank_features(X: np.ndarray, y, bins: int = 10) -> FeatureSelector:
    """Order every dimension by decreasing MI with the label (stable on ties)."""
    y = np.asarray(y).astype(int)
    if len(np.unique(y)) < 2:
        raise SingleClass("feature ranking needs both labels")
    scores = _mi_matrix(np.asarray(X, dtype=float), y, bins)
    order = np.argsort(-scores, kind="stable")
    return FeatureSelector(order, scores)


def select_features(
    X: np.ndarray,
    y,
    k_grid: Sequence[int],
    evaluate: Callable[[np.ndarray], float] | None = None,
    bins: int = 10,
) -> tuple[FeatureSelector, dict[int, float]]:
    """Rank by MI and keep the ``k`` from ``k_grid`` with lowest validation HTER.

    ``evaluate`` receives the candidate index array and returns a
    validation HTER; it is not called when ``k_grid`` has one entry.
    Ties go to the smaller ``k``. Returns the selector and the HTER per k.
    """
    d = np.asarray(X).shape[1]
    grid = sorted({min(int(k), d) for k in k_grid})
    if not grid or grid[0] < 1:
        raise ValueError("k_grid must contain positive counts")
    ranked = rank_features(X, y, bins)
    if len(grid) == 1 or evaluate is None:
        return ranked.truncated(grid[0]), {}
    scores = {k: float(evaluate(ranked.selected_indices[:k])) for k in grid}
    best = min(grid, key=lambda k: (scores[k], k))
    return ranked.truncated(best), scores


def export_feature_csv(windows: WindowSet, path) -> None:
    dim = windows.values.shape[1]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "window_index", "label", *(f"f{i:03d}" for i in range(dim))])
        for i in range(len(windows)):
            w.writerow([windows.user_ids[i], int(windows.window_index[i]), windows.labels[i],
                        *(repr(float(v)) for v in windows.values[i])])
