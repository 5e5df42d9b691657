"""Command-line entry point: ``touchauth <command> [options]``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 partial
failures (some models could not be trained or evaluated).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .classifiers import AuthModel
from .data import filter_short_swipes, parse_swipe_csv, synth_generate_corpus, write_gender_csv, write_swipe_csv
from .errors import ConfigError, DataError, TouchAuthError
from .evaluation import EvalReport, emit_heatmap_tables, fairness_by_group, reports_to_json
from .pipeline import (
    Experiment,
    ExperimentConfig,
    _model_filename,
    attack_manifests,
    make_reports,
    model_frr,
    run_experiment,
    run_scenarios,
    train_models,
)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3

log = logging.getLogger("touchauth")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = ExperimentConfig.load(args.config)
    # dataset paths are taken relative to the config file
    root = Path(args.config).resolve().parent

    def fix(spec):
        if spec.path and not Path(spec.path).is_absolute():
            spec = replace(spec, path=str(root / spec.path))
            if spec.genders and not Path(spec.genders).is_absolute():
                spec = replace(spec, genders=str(root / spec.genders))
        return spec

    over = {"base": fix(cfg.base), "external": [fix(e) for e in cfg.external]}
    if getattr(args, "seed", None) is not None:
        over["seeds"] = (args.seed,)
    if getattr(args, "arch", None):
        over["architectures"] = tuple(args.arch)
    if getattr(args, "classifier", None):
        over["classifiers"] = tuple(args.classifier)
    if getattr(args, "scenario", None):
        over["scenarios"] = tuple(args.scenario)
    return replace(cfg, **over)


def _load_models(models_dir: Path) -> list[AuthModel]:
    paths = sorted(models_dir.glob("*.json"))
    if not paths:
        raise DataError(f"no model files in {models_dir}")
    return [AuthModel.from_dict(json.loads(p.read_text())) for p in paths]


def cmd_ingest(args) -> int:
    corpus = parse_swipe_csv(args.csv, args.genders)
    kept = filter_short_swipes(corpus)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_swipe_csv(kept, out / "corpus.csv")
    write_gender_csv(kept, out / "genders.csv")
    summary = {
        "dataset_id": kept.dataset_id,
        "users": len(kept.user_ids),
        "swipes": len(kept.swipes),
        "dropped_non_monotone": corpus.n_dropped,
        "dropped_short": len(corpus.swipes) - len(kept.swipes),
    }
    _write_json(out / "ingest.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        corpus = synth_generate_corpus(
            args.users, args.swipes, args.spread, args.seed if args.seed is not None else 0, args.dataset_id
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_swipe_csv(corpus, out / "corpus.csv")
    write_gender_csv(corpus, out / "genders.csv")
    print(f"wrote {len(corpus.swipes)} swipes for {len(corpus.user_ids)} users to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    exp = Experiment.load(cfg)
    out = Path(args.out_dir)
    (out / "models").mkdir(parents=True, exist_ok=True)
    failures: list[dict] = []
    written = []
    for _, _, _, models in train_models(exp, failures):
        for model in models.values():
            path = out / "models" / _model_filename(model.model_id)
            path.write_text(json.dumps(model.to_dict(), sort_keys=True))
            written.append(model.model_id)
    _write_json(out / "train.json", {"config": cfg.to_dict(), "models": written, "failures": failures,
                                     "toolkit_version": __version__})
    print(f"trained {len(written)} models, {len(failures)} failures")
    return EXIT_PARTIAL if failures else EXIT_OK


def _models_dir(args) -> Path:
    return Path(args.models_dir) if args.models_dir else Path(args.out_dir) / "models"


def cmd_attack(args) -> int:
    cfg = _load_config(args)
    exp = Experiment.load(cfg)
    models = _load_models(_models_dir(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else 0
    for scenario in cfg.scenarios:
        man = attack_manifests(models, exp, scenario, seed)
        (out / f"attack_{scenario}.json").write_text(man.to_json())
        far = sum(o.accepted for o in man.outcomes) / max(1, sum(o.total for o in man.outcomes))
        print(f"{scenario}: pooled FAR {far:.4f} over {len(man.outcomes)} models")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    exp = Experiment.load(cfg)
    models = _load_models(_models_dir(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds_ids = exp.scenario_datasets()
    reports: list[EvalReport] = []
    frr_rows, failures = [], []
    for m in models:
        try:
            frr = model_frr(m, exp.base)
            outcomes = run_scenarios(m, exp.base, exp.externals, cfg.scenarios, cfg.attack_n, m.seed)
        except TouchAuthError as exc:
            failures.append({"model_id": m.model_id, "error": str(exc)})
            continue
        frr_rows.append({"model_id": m.model_id, "classifier": m.classifier.name, "architecture": m.architecture,
                         "frr": frr, "gender": m.gender, "seed": m.seed})
        reports.extend(make_reports(m, frr, outcomes, ds_ids))
    (out / "reports.json").write_text(reports_to_json(reports))
    _write_json(out / "frr.json", frr_rows)
    if reports or frr_rows:
        emit_heatmap_tables(reports, out, frr_rows)
    fairness = []
    if reports:
        try:
            fairness = [{"architecture": c.architecture, "scenario": c.scenario, "gap": c.gap, "p_value": c.p_value}
                        for c in fairness_by_group(reports)]
        except TouchAuthError as exc:
            fairness = [{"skipped": str(exc)}]
    _write_json(out / "fairness.json", fairness)
    print(f"{len(reports)} reports from {len(frr_rows)} models, {len(failures)} failures")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    man = run_experiment(cfg, args.out_dir)
    print(f"{len(man['models'])} models, {len(man['reports'])} reports, {len(man['failures'])} failures "
          f"in {man['wall_clock_s']:.1f}s")
    return EXIT_PARTIAL if man["failures"] else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="touchauth", description="Swipe-based continuous authentication experiments.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="YAML or JSON experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", required=True)

    def grid(p):
        p.add_argument("--arch", action="append", choices=["V", "G"])
        p.add_argument("--classifier", action="append", choices=["mlp", "rf"])

    p = sub.add_parser("ingest", help="validate a swipe CSV and write the canonical corpus")
    p.add_argument("csv")
    p.add_argument("--genders")
    common(p, config=False)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--users", type=int, default=20)
    p.add_argument("--swipes", type=int, default=200)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--dataset-id", default="synth")
    common(p, config=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train per-user models")
    common(p)
    grid(p)
    p.set_defaults(func=cmd_train)

    for name, func, text in (("attack", cmd_attack, "run attack scenarios against stored models"),
                             ("evaluate", cmd_evaluate, "reports, heatmaps and fairness for stored models")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--models-dir", help="defaults to <out-dir>/models")
        p.add_argument("--scenario", action="append", choices=["zero_same", "zero_cross", "population", "random"])
        p.set_defaults(func=func)

    p = sub.add_parser("run", help="full experiment: train, attack, evaluate")
    common(p)
    grid(p)
    p.add_argument("--scenario", action="append", choices=["zero_same", "zero_cross", "population", "random"])
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TouchAuthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
