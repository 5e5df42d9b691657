"""Zero-effort, population and random-vector attacks against per-user models."""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .classifiers import AuthModel
from .data import Corpus
from .errors import DimensionMismatch, EmptyPool, NoImpostorData
from .features import build_windows, feature_matrix

KINDS = ("zero_effort_same", "zero_effort_cross", "population", "random_vector")
# short names used in configs and reports
SCENARIO_NAMES = {
    "zero_same": "zero_effort_same",
    "zero_cross": "zero_effort_cross",
    "population": "population",
    "random": "random_vector",
}
POPULATION_R_STD = 3.0
MANIFEST_SCHEMA = "touchauth.attack_manifest"


def scenario_rng(seed: int, model_id: str, scenario: str) -> np.random.Generator:
    """RNG stream keyed by (seed, model, scenario), independent of evaluation order."""
    return np.random.default_rng([seed, zlib.crc32(model_id.encode()), zlib.crc32(scenario.encode())])


@dataclass(frozen=True)
class AttackScenario:
    kind: str
    source_datasets: tuple = ()
    N: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.kind in ("zero_effort_cross", "population") and not self.source_datasets:
            raise ValueError(f"{self.kind} needs at least one external dataset")
        object.__setattr__(self, "source_datasets", tuple(self.source_datasets))


@dataclass(frozen=True)
class AttackOutcome:
    model_id: str
    scenario: str
    accepted: int
    total: int
    dataset_id: str | None = None

    @property
    def far(self) -> float:
        return self.accepted / self.total

    def to_dict(self) -> dict:
        return {**asdict(self), "far": self.far}


@dataclass
class WindowBank:
    """Raw (unnormalized) window vectors of one dataset, keyed by user."""

    dataset_id: str
    windows: Mapping[str, np.ndarray]

    def pooled(self, exclude: str | None = None) -> np.ndarray:
        parts = [w for uid, w in self.windows.items() if uid != exclude and len(w)]
        if not parts:
            return np.zeros((0, 0))
        return np.vstack(parts)


def window_bank(corpus: Corpus, p: int = 5, q: int = 1) -> WindowBank:
    out = {}
    for uid, swipes in corpus.by_user().items():
        out[uid] = build_windows(feature_matrix(swipes), p, q).values
    return WindowBank(corpus.dataset_id, out)


def _as_bank(d, p, q) -> WindowBank:
    return d if isinstance(d, WindowBank) else window_bank(d, p, q)


def _outcome(model: AuthModel, scenario: str, X: np.ndarray, dataset_id=None) -> AttackOutcome:
    accepted = int(model.decide_prepared(X).sum())
    return AttackOutcome(model.model_id, scenario, accepted, len(X), dataset_id)


def zero_effort_attack(
    models: Sequence[AuthModel], datasets: Sequence, p: int = 5, q: int = 1
) -> dict[str, dict[str, AttackOutcome]]:
    """Replay other users' windows through each model's own normalizer and selector.

    Within a model's own dataset the genuine user is excluded; other
    datasets are used in full. Returns ``{model_id: {dataset_id: outcome}}``.
    """
    banks = [_as_bank(d, p, q) for d in datasets]
    out: dict[str, dict[str, AttackOutcome]] = {}
    for model in models:
        per = {}
        for bank in banks:
            same = bank.dataset_id == model.dataset_id
            raw = bank.pooled(exclude=model.user_id if same else None)
            if len(raw) == 0:
                raise NoImpostorData(bank.dataset_id)
            kind = "zero_effort_same" if same else "zero_effort_cross"
            per[bank.dataset_id] = _outcome(model, kind, model.prepare(raw), bank.dataset_id)
        out[model.model_id] = per
    return out


@dataclass(frozen=True)
class PopulationStats:
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def L(self) -> int:
        return len(self.mu)


def population_stats_from(X: np.ndarray) -> PopulationStats:
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise EmptyPool("no vectors to pool")
    return PopulationStats(X.mean(axis=0), X.std(axis=0))


def population_stats(datasets: Sequence, model: AuthModel, p: int = 5, q: int = 1) -> PopulationStats:
    """Per-dimension mean and population std of external windows in the model's input space."""
    banks = [_as_bank(d, p, q) for d in datasets]
    if any(b.dataset_id == model.dataset_id for b in banks):
        raise ValueError("population pool must exclude the model's training dataset")
    pooled = [b.pooled() for b in banks]
    pooled = [x for x in pooled if len(x)]
    if not pooled:
        raise EmptyPool("external datasets contain no windows")
    return population_stats_from(model.prepare(np.vstack(pooled)))


def population_vectors(stats: PopulationStats, N: int, rng: np.random.Generator) -> np.ndarray:
    r = rng.normal(0.0, POPULATION_R_STD, (N, stats.L))
    return np.clip(stats.mu + r * stats.sigma, 0.0, 1.0)


def population_attack(model: AuthModel, stats: PopulationStats, N: int = 10000, seed: int = 0) -> AttackOutcome:
    if stats.L != model.input_dim:
        raise DimensionMismatch(model.input_dim, stats.L)
    X = population_vectors(stats, N, scenario_rng(seed, model.model_id, "population"))
    return _outcome(model, "population", X)


def random_vectors(L: int, N: int, rng: np.random.Generator) -> np.ndarray:
    return rng.random((N, L))


def random_vector_attack(model: AuthModel, L: int, N: int = 10000, seed: int = 0) -> AttackOutcome:
    if L != model.input_dim:
        raise DimensionMismatch(model.input_dim, L)
    X = random_vectors(L, N, scenario_rng(seed, model.model_id, "random_vector"))
    return _outcome(model, "random_vector", X)


@dataclass
class AttackManifest:
    scenario: AttackScenario
    outcomes: list[AttackOutcome] = field(default_factory=list)

    def to_json(self) -> str:
        payload = {
            "schema": MANIFEST_SCHEMA,
            "version": 1,
            "scenario": self.scenario.kind,
            "seed": self.scenario.seed,
            "N": self.scenario.N,
            "source_datasets": list(self.scenario.source_datasets),
            "outcomes": [o.to_dict() for o in self.outcomes],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AttackManifest":
        d = json.loads(text)
        if d.get("schema") != MANIFEST_SCHEMA:
            raise ValueError("not an attack manifest")
        scen = AttackScenario(d["scenario"], tuple(d["source_datasets"]), d["N"], d["seed"])
        outs = [
            AttackOutcome(o["model_id"], o["scenario"], o["accepted"], o["total"], o.get("dataset_id"))
            for o in d["outcomes"]
        ]
        return cls(scen, outs)
