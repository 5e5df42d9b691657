"""Swipe corpus model, CSV ingestion, filtering, splitting and a seeded synthetic corpus."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np

from .errors import DataError, MalformedRow, UserTooSmall

log = logging.getLogger(__name__)

SWIPE_HEADER = [
    "dataset_id",
    "user_id",
    "swipe_id",
    "event_index",
    "t_ms",
    "x",
    "y",
    "major_axis",
    "minor_axis",
]
GENDER_HEADER = ["user_id", "gender"]
GENDERS = ("male", "female", "unspecified")

# minimum touch events kept by the preprocessing filter
MIN_EVENTS = 6


class TouchEvent(NamedTuple):
    x: float
    y: float
    t: float
    a: float
    b: float


@dataclass(frozen=True)
class SwipeGesture:
    """One finger-down to finger-up gesture.

    ``events`` is an ``(n, 5)`` float array with columns ``x, y, t, a, b``,
    sorted by ``t``. The array is made read-only on construction.
    """

    user_id: str
    dataset_id: str
    swipe_id: str
    events: np.ndarray

    def __post_init__(self):
        ev = np.array(self.events, dtype=float, copy=True)
        if ev.ndim != 2 or ev.shape[1] != 5:
            raise DataError(f"swipe {self.swipe_id!r}: events must have shape (n, 5)")
        ev.setflags(write=False)
        object.__setattr__(self, "events", ev)

    @property
    def n(self) -> int:
        return len(self.events)

    @property
    def t_start(self) -> float:
        return float(self.events[0, 2])

    def touch_events(self) -> list[TouchEvent]:
        return [TouchEvent(*map(float, row)) for row in self.events]

    def __eq__(self, other):
        if not isinstance(other, SwipeGesture):
            return NotImplemented
        return (
            self.user_id == other.user_id
            and self.dataset_id == other.dataset_id
            and self.swipe_id == other.swipe_id
            and np.array_equal(self.events, other.events)
        )

    __hash__ = None


@dataclass(frozen=True)
class Corpus:
    dataset_id: str
    swipes: tuple[SwipeGesture, ...]
    user_metadata: Mapping[str, dict] = field(default_factory=dict)
    # swipes dropped during ingestion (non-monotone time)
    n_dropped: int = 0

    def __post_init__(self):
        object.__setattr__(self, "swipes", tuple(self.swipes))
        for s in self.swipes:
            if s.dataset_id != self.dataset_id:
                raise DataError(
                    f"swipe {s.swipe_id!r} belongs to {s.dataset_id!r}, not {self.dataset_id!r}"
                )

    @property
    def user_ids(self) -> list[str]:
        seen = dict.fromkeys(s.user_id for s in self.swipes)
        return sorted(seen)

    def gender(self, user_id: str) -> str:
        return self.user_metadata.get(user_id, {}).get("gender", "unspecified")

    def by_user(self) -> dict[str, list[SwipeGesture]]:
        """Swipes grouped by user, each list in chronological order."""
        out: dict[str, list[SwipeGesture]] = {}
        for s in self.swipes:
            out.setdefault(s.user_id, []).append(s)
        for uid in out:
            out[uid].sort(key=lambda s: (s.t_start, s.swipe_id))
        return {uid: out[uid] for uid in sorted(out)}

    def replace_swipes(self, swipes) -> "Corpus":
        return Corpus(self.dataset_id, tuple(swipes), self.user_metadata, self.n_dropped)


@dataclass(frozen=True)
class SplitPlan:
    train_fraction: float
    per_user: Mapping[str, tuple[tuple[str, ...], tuple[str, ...]]]


def _float(value: str, line: int, name: str, default: float | None = None) -> float:
    if value is None or value.strip() == "":
        if default is None:
            raise MalformedRow(line, f"missing {name}")
        return default
    try:
        v = float(value)
    except ValueError:
        raise MalformedRow(line, f"{name} is not a number: {value!r}") from None
    if not math.isfinite(v):
        raise MalformedRow(line, f"{name} is not finite")
    return v


def parse_swipe_csv(path, gender_path=None) -> Corpus:
    """Read a canonical swipe CSV into a :class:`Corpus`.

    The ``major_axis``/``minor_axis`` columns may be absent, in which case
    both are set to zero. Swipes whose timestamps decrease in event order
    are dropped and counted in ``Corpus.n_dropped``.
    """
    path = Path(path)
    groups: dict[tuple[str, str], list[tuple[int, list[float]]]] = {}
    dataset_id = None
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRow(1, "empty file") from None
        header = [h.strip() for h in header]
        if header != SWIPE_HEADER and header != SWIPE_HEADER[:7]:
            raise MalformedRow(1, f"unexpected header {header}")
        width = len(header)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise MalformedRow(line, f"expected {width} fields, got {len(row)}")
            ds, uid, sid = row[0].strip(), row[1].strip(), row[2].strip()
            if not ds or not uid or not sid:
                raise MalformedRow(line, "empty identifier")
            if dataset_id is None:
                dataset_id = ds
            elif ds != dataset_id:
                raise MalformedRow(line, f"mixed dataset ids {dataset_id!r} and {ds!r}")
            try:
                idx = int(row[3])
            except ValueError:
                raise MalformedRow(line, f"bad event_index {row[3]!r}") from None
            t = _float(row[4], line, "t_ms")
            x = _float(row[5], line, "x")
            y = _float(row[6], line, "y")
            a = _float(row[7], line, "major_axis", 0.0) if width == 9 else 0.0
            b = _float(row[8], line, "minor_axis", 0.0) if width == 9 else 0.0
            if a < 0 or b < 0:
                raise MalformedRow(line, "negative fingertip axis")
            if a < b:
                a, b = b, a
            groups.setdefault((uid, sid), []).append((idx, [x, y, t, a, b]))

    swipes = []
    dropped = 0
    for (uid, sid), rows in groups.items():
        rows.sort(key=lambda r: r[0])
        ev = np.array([r[1] for r in rows], dtype=float)
        if np.any(np.diff(ev[:, 2]) < 0):
            dropped += 1
            continue
        swipes.append(SwipeGesture(uid, dataset_id, sid, ev))
    if dropped:
        log.warning("%s: dropped %d swipe(s) with non-monotone time", path, dropped)
    meta = read_gender_csv(gender_path) if gender_path is not None else {}
    return Corpus(dataset_id or path.stem, tuple(swipes), meta, dropped)


def write_swipe_csv(corpus: Corpus, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWIPE_HEADER)
        for s in corpus.swipes:
            for i, (x, y, t, a, b) in enumerate(s.events):
                w.writerow([s.dataset_id, s.user_id, s.swipe_id, i] + [repr(float(v)) for v in (t, x, y, a, b)])


def read_gender_csv(path) -> dict[str, dict]:
    out = {}
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != GENDER_HEADER:
            raise MalformedRow(1, f"unexpected gender header {header}")
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 or row[1].strip() not in GENDERS:
                raise MalformedRow(line, f"bad gender row {row}")
            out[row[0].strip()] = {"gender": row[1].strip()}
    return out


def write_gender_csv(corpus: Corpus, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GENDER_HEADER)
        for uid in corpus.user_ids:
            w.writerow([uid, corpus.gender(uid)])


def filter_short_swipes(corpus: Corpus) -> Corpus:
    return corpus.replace_swipes(s for s in corpus.swipes if s.n >= MIN_EVENTS)


def split_train_test(corpus: Corpus, train_fraction: float, seed: int = 0) -> SplitPlan:
    """Chronological per-user split.

    The earliest ``floor(train_fraction * n_u)`` swipes of each user go to
    training. ``seed`` is accepted for interface symmetry; the split has no
    random component.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    per_user = {}
    for uid, swipes in corpus.by_user().items():
        if len(swipes) < 2:
            raise UserTooSmall(uid)
        k = math.floor(train_fraction * len(swipes))
        ids = [s.swipe_id for s in swipes]
        per_user[uid] = (tuple(ids[:k]), tuple(ids[k:]))
    return SplitPlan(train_fraction, per_user)


def _bezier(p0, p1, p2, s):
    s = s[:, None]
    return (1 - s) ** 2 * p0 + 2 * (1 - s) * s * p1 + s**2 * p2


def synth_generate_corpus(
    num_users: int,
    swipes_per_user: int,
    profile_spread: float = 1.0,
    seed: int = 0,
    dataset_id: str = "synth",
    genders: Mapping[str, str] | None = None,
) -> Corpus:
    """Generate a seeded corpus of quadratic-Bezier swipes.

    Each user draws a behavioural profile (start/end region, duration,
    curvature, pacing, fingertip size). ``profile_spread`` scales how far
    profiles sit from the population centre. When ``genders`` is omitted,
    genders are assigned alternately, independent of the profiles.
    """
    if num_users < 2:
        raise ValueError("num_users must be >= 2")
    if swipes_per_user < 10:
        raise ValueError("swipes_per_user must be >= 10")
    root = np.random.SeedSequence(seed)
    user_seqs = root.spawn(num_users)
    width = len(str(num_users - 1))
    swipes = []
    meta = {}
    for u, seq in enumerate(user_seqs):
        rng = np.random.default_rng(seq)
        uid = f"u{u:0{width}d}"
        sp = profile_spread
        start = np.array([540.0, 1400.0]) + sp * rng.normal(0, [120, 150])
        end = np.array([540.0, 600.0]) + sp * rng.normal(0, [120, 150])
        bend = sp * rng.normal(0, 80)
        duration = 220.0 * math.exp(sp * rng.normal(0, 0.3))
        pacing = math.exp(sp * rng.normal(0, 0.25))
        n_mean = 20 + sp * rng.normal(0, 4)
        size = 9.0 * math.exp(sp * rng.normal(0, 0.15))
        aspect = min(0.95, max(0.5, 0.75 + sp * rng.normal(0, 0.08)))
        clock = 0.0
        for k in range(swipes_per_user):
            n = int(np.clip(round(n_mean + rng.normal(0, 4)), 8, 40))
            p0 = start + rng.normal(0, 60, 2)
            p2 = end + rng.normal(0, 60, 2)
            chord = p2 - p0
            normal = np.array([-chord[1], chord[0]]) / (np.hypot(*chord) + 1e-9)
            p1 = (p0 + p2) / 2 + normal * (bend + rng.normal(0, 40))
            dur = duration * math.exp(rng.normal(0, 0.25))
            gaps = rng.uniform(0.5, 1.5, n - 1)
            u_t = np.concatenate([[0.0], np.cumsum(gaps)])
            u_t /= u_t[-1]
            s_path = u_t ** (pacing * math.exp(rng.normal(0, 0.15)))
            xy = _bezier(p0, p1, p2, s_path) + rng.normal(0, 2.0, (n, 2))
            t = clock + dur * u_t
            a = size * math.exp(rng.normal(0, 0.1)) * np.exp(rng.normal(0, 0.05, n))
            b = a * aspect * np.exp(-np.abs(rng.normal(0, 0.05, n)))
            ev = np.column_stack([xy[:, 0], xy[:, 1], t, a, b])
            swipes.append(SwipeGesture(uid, dataset_id, f"{uid}_s{k:04d}", ev))
            clock = t[-1] + rng.uniform(800, 3000)
        g = genders.get(uid) if genders else None
        meta[uid] = {"gender": g or ("female" if u % 2 else "male")}
    return Corpus(dataset_id, tuple(swipes), meta)
