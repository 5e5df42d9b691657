"""Error rates, KDE utilities, gender-fairness analysis and report tables."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyList, GroupTooSmall, TooFewSamples

REPORT_SCHEMA = "touchauth.reports"
REPORT_VERSION = 1
HEATMAP_HEADER = ["classifier", "architecture", "scenario", "metric", "value", "n_models"]
SCENARIOS = ("zero_same", "zero_cross", "population", "random")
# fallback bandwidth for samples with no spread
MIN_BANDWIDTH = 1e-3
# grid half-margin, in bandwidths, beyond the sample range
KDE_MARGIN = 4.0


@dataclass(frozen=True)
class RateSet:
    far: float
    frr: float
    hter: float

    @classmethod
    def from_rates(cls, far: float, frr: float) -> "RateSet":
        return cls(far, frr, (far + frr) / 2)


@dataclass(frozen=True)
class EvalReport:
    model_id: str
    classifier: str
    architecture: str
    scenario: str
    far: float
    frr: float
    hter: float
    gender: str
    dataset_ids: tuple
    seed: int

    @property
    def rates(self) -> RateSet:
        return RateSet(self.far, self.frr, self.hter)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dataset_ids"] = list(self.dataset_ids)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**{**d, "dataset_ids": tuple(d["dataset_ids"])})


def compute_rates(genuine_decisions, impostor_decisions) -> RateSet:
    """FAR, FRR and HTER from accept (True) / reject (False) decisions."""
    gen = np.asarray(genuine_decisions, dtype=bool)
    imp = np.asarray(impostor_decisions, dtype=bool)
    if gen.size == 0 or imp.size == 0:
        raise EmptyList("both decision lists must be non-empty")
    far = int(imp.sum()) / imp.size
    frr = int((~gen).sum()) / gen.size
    return RateSet.from_rates(far, frr)


def far_from_decisions(impostor_decisions) -> float:
    imp = np.asarray(impostor_decisions, dtype=bool)
    if imp.size == 0:
        raise EmptyList("no impostor decisions")
    return int(imp.sum()) / imp.size


def frr_from_decisions(genuine_decisions) -> float:
    gen = np.asarray(genuine_decisions, dtype=bool)
    if gen.size == 0:
        raise EmptyList("no genuine decisions")
    return int((~gen).sum()) / gen.size


def bypass_probability(p: float, q: float, n: int) -> float:
    """Chance of passing the entry check (``p``) and then ``n`` continuous checks (``q`` each)."""
    if not (0 <= p <= 1 and 0 <= q <= 1) or n < 0:
        raise ValueError("p, q must lie in [0, 1] and n >= 0")
    return p * q**n


@dataclass(frozen=True)
class KdeCurve:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise TooFewSamples("bandwidth needs at least 2 samples")
    sd = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    spread = [s for s in (sd, (q75 - q25) / 1.34) if s > 0]
    if not spread:
        return MIN_BANDWIDTH
    return 0.9 * min(spread) * x.size ** (-0.2)


def kde_evaluate(samples, points, bandwidth: float) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    pts = np.asarray(points, dtype=float)
    u = (pts[:, None] - x[None, :]) / bandwidth
    return np.exp(-0.5 * u * u).sum(axis=1) / (x.size * bandwidth * math.sqrt(2 * math.pi))


def kde_density(samples, grid_size: int = 512, bandwidth: float | None = None) -> KdeCurve:
    """Gaussian KDE on a uniform grid spanning the samples plus a 4-bandwidth margin."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise TooFewSamples("KDE needs at least 2 samples")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    grid = np.linspace(x.min() - KDE_MARGIN * h, x.max() + KDE_MARGIN * h, grid_size)
    return KdeCurve(grid, kde_evaluate(x, grid, h), h)


@dataclass
class GroupCell:
    architecture: str
    scenario: str
    hters: dict
    curves: dict
    gap: float
    p_value: float


def fairness_by_group(
    reports: Sequence[EvalReport],
    permutations: int = 1000,
    seed: int = 0,
) -> list[GroupCell]:
    """Per-(architecture, scenario) HTER distributions by gender and their mean gap.

    ``gap`` is the largest absolute difference between group mean HTERs.
    ``p_value`` is a seeded permutation test of that gap under random
    reassignment of group labels.
    """
    cells: dict[tuple, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    for r in reports:
        cells[(r.architecture, r.scenario)][r.gender].append(r.hter)
    out = []
    for (arch, scen), groups in sorted(cells.items()):
        groups = {g: v for g, v in sorted(groups.items())}
        if len(groups) < 2 or any(len(v) < 2 for v in groups.values()):
            raise GroupTooSmall(f"{arch}/{scen}: need >= 2 groups with >= 2 models each")
        gap = _mean_gap(groups.values())
        rng = np.random.default_rng(seed)
        pooled = np.concatenate([np.asarray(v, dtype=float) for v in groups.values()])
        sizes = np.cumsum([len(v) for v in groups.values()])[:-1]
        hits = 0
        for _ in range(permutations):
            perm = rng.permutation(pooled)
            if _mean_gap(np.split(perm, sizes)) >= gap - 1e-12:
                hits += 1
        p_value = (hits + 1) / (permutations + 1)
        curves = {g: kde_density(v) for g, v in groups.items()}
        out.append(GroupCell(arch, scen, groups, curves, gap, p_value))
    return out


def _mean_gap(groups: Iterable) -> float:
    means = [float(np.mean(v)) for v in groups]
    return max(means) - min(means)


def heatmap_tables(reports: Sequence[EvalReport], frr_rows: Sequence[dict] = ()) -> dict[str, list[dict]]:
    """Mean FAR / HTER per (classifier, architecture, scenario), and mean FRR per (classifier, architecture).

    FRR comes from ``frr_rows`` when given, otherwise from the reports
    (one value per model).
    """
    if not reports and not frr_rows:
        raise EmptyList("no reports")
    tables: dict[str, list[dict]] = {}
    for metric in ("far", "hter"):
        cells: dict[tuple, list[float]] = defaultdict(list)
        for r in reports:
            cells[(r.classifier, r.architecture, r.scenario)].append(getattr(r, metric))
        tables[metric] = [_cell(k, metric, v) for k, v in sorted(cells.items(), key=_cell_order)]
    per_model = {}
    for row in frr_rows:
        per_model[row["model_id"]] = (row["classifier"], row["architecture"], row["frr"])
    if not frr_rows:
        for r in reports:
            per_model[r.model_id] = (r.classifier, r.architecture, r.frr)
    frr_cells: dict[tuple, list[float]] = defaultdict(list)
    for clf, arch, frr in per_model.values():
        frr_cells[(clf, arch, "genuine_test")].append(frr)
    tables["frr"] = [_cell(k, "frr", v) for k, v in sorted(frr_cells.items())]
    return tables


def _cell_order(item):
    (clf, arch, scen), _ = item
    rank = SCENARIOS.index(scen) if scen in SCENARIOS else len(SCENARIOS)
    return clf, arch, rank, scen


def _cell(key, metric, values) -> dict:
    clf, arch, scen = key
    return {
        "classifier": clf,
        "architecture": arch,
        "scenario": scen,
        "metric": metric,
        "value": float(np.mean(values)),
        "n_models": len(values),
    }


def emit_heatmap_tables(reports, out_dir, frr_rows=()) -> dict[str, Path]:
    """Write ``heatmap_{far,hter,frr}.csv`` plus ``heatmaps.json`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = heatmap_tables(reports, frr_rows)
    paths = {}
    for metric, rows in tables.items():
        path = out_dir / f"heatmap_{metric}.csv"
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, HEATMAP_HEADER, lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({**row, "value": repr(row["value"])})
        paths[metric] = path
    paths["json"] = out_dir / "heatmaps.json"
    paths["json"].write_text(json.dumps(tables, indent=2, sort_keys=True) + "\n")
    return paths


def reports_to_json(reports: Sequence[EvalReport]) -> str:
    payload = {
        "schema": REPORT_SCHEMA,
        "version": REPORT_VERSION,
        "reports": [r.to_dict() for r in reports],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def reports_from_json(text: str) -> list[EvalReport]:
    payload = json.loads(text)
    if payload.get("schema") != REPORT_SCHEMA or payload.get("version") != REPORT_VERSION:
        raise ValueError("unsupported report file")
    return [EvalReport.from_dict(d) for d in payload["reports"]]
