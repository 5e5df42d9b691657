"""End-to-end per-user training (V and G architectures), attack runs and evaluation."""

from __future__ import annotations

import hashlib
import json
import logging
import time
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import __version__
from .attacks import (
    SCENARIO_NAMES,
    AttackManifest,
    AttackOutcome,
    AttackScenario,
    WindowBank,
    population_attack,
    population_stats,
    random_vector_attack,
    window_bank,
    zero_effort_attack,
)
from .balancing import AdasynConfig, adasyn_balance
from .classifiers import (
    GENUINE,
    IMPOSTOR,
    AuthModel,
    ForestHyper,
    MlpHyper,
    cross_validate,
    eer_hter,
    make_cv_plan,
    select_threshold_eer,
    train_mlp,
    train_random_forest,
)
from .data import Corpus, filter_short_swipes, parse_swipe_csv, split_train_test, synth_generate_corpus
from .errors import ConfigError, InsufficientGenuineData, TouchAuthError
from .evaluation import EvalReport, emit_heatmap_tables, fairness_by_group, reports_to_json
from .features import fit_normalizer, select_features
from .gan import GanPair, GanTrainConfig, generate_samples, train_gan_pair, tune_synth_count

log = logging.getLogger(__name__)

STAGES = (
    "extract_features",
    "build_windows",
    "label",
    "fit_normalizer",
    "select_features",
    "gan_augment",
    "adasyn_balance",
    "train_classifier",
    "eer_threshold",
)
SCENARIOS = tuple(SCENARIO_NAMES)
CLASSIFIERS = ("mlp", "rf")
DEFAULT_K_GRID = (25, 50, 100, 150, 235)


def stage_seed(seed: int, *keys) -> int:
    """Derive a 32-bit seed from a base seed and string keys."""
    h = zlib.crc32(str(seed).encode())
    for k in keys:
        h = zlib.crc32(str(k).encode(), h)
    return h


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


@dataclass
class DatasetSpec:
    """Either a canonical CSV (``path``, optional ``genders``) or synthetic parameters."""

    dataset_id: str | None = None
    path: str | None = None
    genders: str | None = None
    num_users: int = 20
    swipes_per_user: int = 200
    profile_spread: float = 1.0
    seed: int = 0

    def load(self) -> Corpus:
        if self.path:
            corpus = parse_swipe_csv(self.path, self.genders)
        else:
            corpus = synth_generate_corpus(
                self.num_users, self.swipes_per_user, self.profile_spread, self.seed, self.dataset_id or "synth"
            )
        return filter_short_swipes(corpus)


def _build(cls, d):
    if d is None:
        return cls()
    if isinstance(d, cls):
        return d
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return cls(**kw)


@dataclass
class ExperimentConfig:
    base: DatasetSpec = field(default_factory=DatasetSpec)
    external: list[DatasetSpec] = field(default_factory=list)
    train_fraction: float = 0.6
    p: int = 5
    q: int = 1
    classifiers: tuple[str, ...] = ("mlp",)
    architectures: tuple[str, ...] = ("V", "G")
    scenarios: tuple[str, ...] = SCENARIOS
    synth_counts: tuple[int, ...] = (100, 250, 500, 750, 1000)
    k_grid: tuple[int, ...] = DEFAULT_K_GRID
    cv_folds: int = 5
    attack_n: int = 10000
    users: tuple[str, ...] | None = None
    adasyn: AdasynConfig = field(default_factory=AdasynConfig)
    gan: GanTrainConfig = field(default_factory=GanTrainConfig)
    mlp: MlpHyper = field(default_factory=MlpHyper)
    rf: ForestHyper = field(default_factory=ForestHyper)
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.classifiers or set(self.classifiers) - set(CLASSIFIERS):
            raise ConfigError(f"classifiers must be a non-empty subset of {CLASSIFIERS}")
        if not self.architectures or set(self.architectures) - {"V", "G"}:
            raise ConfigError("architectures must be a non-empty subset of {V, G}")
        if set(self.scenarios) - set(SCENARIOS):
            raise ConfigError(f"scenarios must be a subset of {SCENARIOS}")
        needs_ext = {"zero_cross", "population"} & set(self.scenarios)
        if needs_ext and not self.external:
            raise ConfigError(f"scenarios {sorted(needs_ext)} need external datasets")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.p < 1 or self.q < 1 or self.cv_folds < 2:
            raise ConfigError("p, q >= 1 and cv_folds >= 2 required")
        if not self.seeds:
            raise ConfigError("at least one seed required")
        if not self.synth_counts or not self.k_grid:
            raise ConfigError("synth_counts and k_grid must be non-empty")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d or {})
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            kw = {}
            for k, v in d.items():
                if k == "base":
                    kw[k] = _build(DatasetSpec, v)
                elif k == "external":
                    kw[k] = [_build(DatasetSpec, x) for x in v]
                elif k == "adasyn":
                    kw[k] = _build(AdasynConfig, v)
                elif k == "gan":
                    kw[k] = _build(GanTrainConfig, v)
                elif k == "mlp":
                    kw[k] = _build(MlpHyper, v)
                elif k == "rf":
                    kw[k] = _build(ForestHyper, v)
                elif isinstance(v, list):
                    kw[k] = tuple(v)
                else:
                    kw[k] = v
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


@dataclass
class UserData:
    """Raw windows of one dataset split into train/test, per user."""

    corpus: Corpus
    train: WindowBank
    test: WindowBank
    full: WindowBank


def prepare_dataset(corpus: Corpus, cfg: ExperimentConfig) -> UserData:
    plan = split_train_test(corpus, cfg.train_fraction)
    by_user = corpus.by_user()
    train_c, test_c = [], []
    for uid, swipes in by_user.items():
        tr_ids = set(plan.per_user[uid][0])
        for s in swipes:
            (train_c if s.swipe_id in tr_ids else test_c).append(s)
    train = window_bank(corpus.replace_swipes(train_c), cfg.p, cfg.q)
    test = window_bank(corpus.replace_swipes(test_c), cfg.p, cfg.q)
    full = WindowBank(
        corpus.dataset_id,
        {u: np.vstack([train.windows.get(u, np.zeros((0, 47 * cfg.p))), test.windows.get(u, np.zeros((0, 47 * cfg.p)))])
         for u in by_user},
    )
    return UserData(corpus, train, test, full)


def training_set(data: UserData, user: str) -> tuple[np.ndarray, np.ndarray]:
    genuine = data.train.windows.get(user)
    if genuine is None or len(genuine) == 0:
        raise InsufficientGenuineData(f"user {user!r} has no training windows")
    impostor = data.train.pooled(exclude=user)
    if len(impostor) == 0:
        raise InsufficientGenuineData("no other users to act as impostors")
    X = np.vstack([genuine, impostor])
    y = np.concatenate([np.full(len(genuine), GENUINE), np.full(len(impostor), IMPOSTOR)])
    return X, y


def _trainer(name: str, cfg: ExperimentConfig, seed: int):
    if name == "mlp":
        hyper = MlpHyper(**{**asdict(cfg.mlp), "seed": seed})
        return lambda X, y: train_mlp(X, y, hyper)
    if name == "rf":
        hyper = ForestHyper(**{**asdict(cfg.rf), "seed": seed})
        return lambda X, y: train_random_forest(X, y, hyper)
    raise ConfigError(f"unknown classifier {name!r}")


def _gan_cfg(cfg: ExperimentConfig, seed: int, n_min: int) -> GanTrainConfig:
    batch = max(1, min(cfg.gan.batch_size, n_min // 2))
    return GanTrainConfig(**{**asdict(cfg.gan), "seed": seed, "batch_size": batch})


def fit_gan_pair(X, y, cfg: ExperimentConfig, seed: int) -> GanPair:
    gen, imp = X[y == GENUINE], X[y == IMPOSTOR]
    return train_gan_pair(gen, imp, _gan_cfg(cfg, seed, min(len(gen), len(imp))))


def augment(X, y, pair: GanPair | None, count: int, seed: int):
    """Append ``count`` synthetic genuine and impostor rows from ``pair``."""
    if pair is None or count == 0:
        return X, y
    sg = generate_samples(pair.genuine_gen, count, stage_seed(seed, "gen_genuine"), "synthetic_genuine")
    si = generate_samples(pair.impostor_gen, count, stage_seed(seed, "gen_impostor"), "synthetic_impostor")
    X = np.vstack([X, sg.values, si.values])
    y = np.concatenate([y, np.full(count, GENUINE), np.full(count, IMPOSTOR)])
    return X, y


def fit_classifier(X, y, clf_name, cfg, seed, pair=None, count=0):
    X2, y2 = augment(X, y, pair, count, seed)
    bal = adasyn_balance(X2, y2, AdasynConfig(cfg.adasyn.K, cfg.adasyn.beta, stage_seed(seed, "adasyn")))
    return _trainer(clf_name, cfg, stage_seed(seed, "clf"))(bal.X, bal.y)


@dataclass
class SharedFit:
    """Normalizer, selector and CV plan shared by the V and G models of one user."""

    X: np.ndarray  # normalized, selected training windows
    y: np.ndarray
    normalizer: object
    selector: object
    plan: object
    k_scores: dict


def fit_shared(data: UserData, user: str, clf_name: str, cfg: ExperimentConfig, seed: int) -> SharedFit:
    X_raw, y = training_set(data, user)
    norm = fit_normalizer(X_raw)
    Xn = norm.apply(X_raw)
    plan = make_cv_plan(y, cfg.cv_folds, stage_seed(seed, user, "cv"))

    def evaluate(idx):
        Xs = Xn[:, idx]
        res = cross_validate(
            Xs, y, plan,
            lambda Xt, yt, f: fit_classifier(Xt, yt, clf_name, cfg, stage_seed(seed, user, "ksel", len(idx), f)),
            eer_hter,
        )
        return res.mean

    selector, k_scores = select_features(Xn, y, cfg.k_grid, evaluate)
    return SharedFit(selector.apply(Xn), y, norm, selector, plan, k_scores)


def train_user_model(
    data: UserData,
    user: str,
    cfg: ExperimentConfig,
    architecture: str,
    clf_name: str = "mlp",
    seed: int = 0,
    shared: SharedFit | None = None,
) -> AuthModel:
    """Train one user's model; pass ``shared`` to reuse the V/G-common normalizer and selector."""
    if shared is None:
        shared = fit_shared(data, user, clf_name, cfg, seed)
    X, y = shared.X, shared.y
    plan = shared.plan
    base = stage_seed(seed, user, clf_name, architecture)

    fold_pairs: dict[int, GanPair] = {}
    if architecture == "G":
        for f in range(plan.folds):
            tr, _ = plan.split(f)
            fold_pairs[f] = fit_gan_pair(X[tr], y[tr], cfg, stage_seed(base, "gan", f))

    def run_cv(count):
        return cross_validate(
            X, y, plan,
            lambda Xt, yt, f: fit_classifier(Xt, yt, clf_name, cfg, stage_seed(base, "cv", f),
                                             fold_pairs.get(f), count),
            eer_hter,
        )

    if architecture == "G":
        cv_cache = {}

        def evaluate(count):
            cv_cache[count] = run_cv(count)
            return cv_cache[count].mean

        count, synth_scores = tune_synth_count(evaluate, cfg.synth_counts)
        cv = cv_cache.get(count) or run_cv(count)
        pair = fit_gan_pair(X, y, cfg, stage_seed(base, "gan", "final"))
    else:
        count, synth_scores, pair = 0, {}, None
        cv = run_cv(0)

    tau, val_eer = select_threshold_eer(cv.oof_scores[y == GENUINE], cv.oof_scores[y == IMPOSTOR])
    clf = fit_classifier(X, y, clf_name, cfg, stage_seed(base, "final"), pair, count)
    info = {
        "stages": [s for s in STAGES if architecture == "G" or s != "gan_augment"],
        "k": shared.selector.k,
        "k_scores": {str(k): v for k, v in shared.k_scores.items()},
        "synth_count": count,
        "synth_scores": {str(k): v for k, v in synth_scores.items()},
        "cv_fold_hter": cv.fold_metrics,
        "validation_eer": val_eer,
        "n_train_genuine": int((y == GENUINE).sum()),
        "n_train_impostor": int((y == IMPOSTOR).sum()),
    }
    model = AuthModel(
        user_id=user,
        dataset_id=data.corpus.dataset_id,
        classifier=clf,
        threshold=tau,
        normalizer=shared.normalizer,
        selector=shared.selector,
        architecture=architecture,
        gan_pair=pair,
        gender=data.corpus.gender(user),
        seed=seed,
        info=info,
    )
    d = model.to_dict()
    info["hashes"] = {
        "normalizer": _digest(d["normalizer"]),
        "selector": _digest(d["selector"]),
        "gan_pair": _digest(d["gan_pair"]),
        "classifier": _digest(d["classifier"]),
    }
    return model


def model_frr(model: AuthModel, data: UserData) -> float:
    genuine = data.test.windows.get(model.user_id)
    if genuine is None or len(genuine) == 0:
        raise InsufficientGenuineData(f"user {model.user_id!r} has no test windows")
    accepted = model.decide(genuine)
    return int((~accepted).sum()) / len(accepted)


def run_scenarios(
    model: AuthModel, data: UserData, externals: Sequence[UserData], scenarios: Sequence[str], N: int, seed: int
) -> dict[str, AttackOutcome]:
    """FAR outcome per scenario; zero_cross pools all external datasets."""
    out = {}
    for scen in scenarios:
        if scen == "zero_same":
            res = zero_effort_attack([model], [data.test])[model.model_id]
            out[scen] = res[data.corpus.dataset_id]
        elif scen == "zero_cross":
            res = zero_effort_attack([model], [e.full for e in externals])[model.model_id]
            acc = sum(o.accepted for o in res.values())
            tot = sum(o.total for o in res.values())
            out[scen] = AttackOutcome(model.model_id, "zero_effort_cross", acc, tot)
        elif scen == "population":
            stats = population_stats([e.full for e in externals], model)
            out[scen] = population_attack(model, stats, N, seed)
        elif scen == "random":
            out[scen] = random_vector_attack(model, model.input_dim, N, seed)
        else:
            raise ConfigError(f"unknown scenario {scen!r}")
    return out


def make_reports(model: AuthModel, frr: float, outcomes: dict[str, AttackOutcome], dataset_ids) -> list[EvalReport]:
    reports = []
    for scen, o in outcomes.items():
        far = o.far
        reports.append(
            EvalReport(
                model.model_id, model.classifier.name, model.architecture, scen,
                far, frr, (far + frr) / 2, model.gender, tuple(dataset_ids[scen]), model.seed,
            )
        )
    return reports


def _model_filename(model_id: str) -> str:
    return model_id.replace("/", "__") + ".json"


@dataclass
class Experiment:
    """Loaded datasets for a config; cached so several runs can share them."""

    cfg: ExperimentConfig
    base: UserData
    externals: list[UserData]

    @classmethod
    def load(cls, cfg: ExperimentConfig) -> "Experiment":
        base = prepare_dataset(cfg.base.load(), cfg)
        externals = [prepare_dataset(spec.load(), cfg) for spec in cfg.external]
        ids = [base.corpus.dataset_id] + [e.corpus.dataset_id for e in externals]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"dataset ids must be distinct, got {ids}")
        return cls(cfg, base, externals)

    @property
    def users(self) -> list[str]:
        all_users = self.base.corpus.user_ids
        if self.cfg.users:
            missing = set(self.cfg.users) - set(all_users)
            if missing:
                raise ConfigError(f"unknown users {sorted(missing)}")
            return [u for u in all_users if u in set(self.cfg.users)]
        return all_users

    def scenario_datasets(self) -> dict[str, list[str]]:
        base_id = self.base.corpus.dataset_id
        ext = [e.corpus.dataset_id for e in self.externals]
        return {"zero_same": [base_id], "zero_cross": ext, "population": ext, "random": [base_id]}


def train_models(exp: Experiment, failures: list | None = None):
    """Yield ``(user, clf, seed, {arch: AuthModel})`` for every grid cell."""
    cfg = exp.cfg
    for seed in cfg.seeds:
        for clf_name in cfg.classifiers:
            for user in exp.users:
                try:
                    shared = fit_shared(exp.base, user, clf_name, cfg, stage_seed(seed, "shared"))
                    models = {
                        arch: train_user_model(exp.base, user, cfg, arch, clf_name, seed, shared)
                        for arch in cfg.architectures
                    }
                except TouchAuthError as exc:
                    if failures is None:
                        raise
                    log.warning("training failed for %s/%s/s%d: %s", user, clf_name, seed, exc)
                    failures.append({"user": user, "classifier": clf_name, "seed": seed, "error": str(exc)})
                    continue
                yield user, clf_name, seed, models


def run_experiment(cfg: ExperimentConfig, out_dir=None, exp: Experiment | None = None) -> dict:
    """Train, attack and evaluate the whole grid; returns the experiment manifest.

    When ``out_dir`` is given, models, ``reports.json``, heatmap tables,
    ``fairness.json`` and ``manifest.json`` are written there.
    """
    t0 = time.perf_counter()
    exp = exp or Experiment.load(cfg)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "models").mkdir(parents=True, exist_ok=True)
    failures: list[dict] = []
    reports: list[EvalReport] = []
    frr_rows: list[dict] = []
    artifacts: list[dict] = []
    ds_ids = exp.scenario_datasets()
    for user, clf_name, seed, models in train_models(exp, failures):
        for arch, model in models.items():
            try:
                frr = model_frr(model, exp.base)
                outcomes = run_scenarios(model, exp.base, exp.externals, cfg.scenarios, cfg.attack_n, seed)
            except TouchAuthError as exc:
                failures.append({"model_id": model.model_id, "error": str(exc)})
                continue
            frr_rows.append({
                "model_id": model.model_id, "classifier": clf_name, "architecture": arch,
                "frr": frr, "gender": model.gender, "seed": seed,
            })
            reports.extend(make_reports(model, frr, outcomes, ds_ids))
            art = {"model_id": model.model_id, "hashes": model.info["hashes"], "k": model.info["k"],
                   "synth_count": model.info["synth_count"], "threshold": model.threshold}
            if out is not None:
                text = json.dumps(model.to_dict(), sort_keys=True)
                path = out / "models" / _model_filename(model.model_id)
                path.write_text(text)
                art["path"] = str(path.relative_to(out))
                art["sha256"] = hashlib.sha256(text.encode()).hexdigest()
            artifacts.append(art)

    fairness = []
    if reports:
        try:
            for cell in fairness_by_group(reports):
                fairness.append({
                    "architecture": cell.architecture, "scenario": cell.scenario,
                    "gap": cell.gap, "p_value": cell.p_value,
                    "hters": cell.hters,
                })
        except TouchAuthError as exc:
            fairness = [{"skipped": str(exc)}]

    manifest = {
        "toolkit_version": __version__,
        "config": cfg.to_dict(),
        "stages": list(STAGES),
        "models": artifacts,
        "reports": [r.to_dict() for r in reports],
        "frr": frr_rows,
        "fairness": fairness,
        "failures": failures,
        "wall_clock_s": time.perf_counter() - t0,
    }
    if out is not None:
        (out / "reports.json").write_text(reports_to_json(reports))
        (out / "frr.json").write_text(json.dumps(frr_rows, indent=2, sort_keys=True) + "\n")
        if reports or frr_rows:
            emit_heatmap_tables(reports, out, frr_rows)
        (out / "fairness.json").write_text(json.dumps(fairness, indent=2, sort_keys=True) + "\n")
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def attack_manifests(models: Sequence[AuthModel], exp: Experiment, scenario: str, seed: int) -> AttackManifest:
    cfg = exp.cfg
    kind = SCENARIO_NAMES[scenario]
    ext_ids = tuple(e.corpus.dataset_id for e in exp.externals) if scenario in ("zero_cross", "population") else ()
    man = AttackManifest(AttackScenario(kind, ext_ids, cfg.attack_n, seed))
    for m in models:
        man.outcomes.append(run_scenarios(m, exp.base, exp.externals, [scenario], cfg.attack_n, m.seed)[scenario])
    return man
