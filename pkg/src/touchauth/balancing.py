"""ADASYN oversampling of the minority class."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import MinorityTooSmall, SingleClass


@dataclass(frozen=True)
class AdasynConfig:
    K: int = 5
    beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")


@dataclass
class AdasynResult:
    X: np.ndarray
    y: np.ndarray
    synthetic: np.ndarray  # bool mask over rows of X
    minority_label: int
    ratios: np.ndarray  # r_i per minority sample (majority share among K neighbours)
    counts: np.ndarray  # g_i per minority sample
    neighbours: np.ndarray  # K nearest neighbours in the whole set, as row indices
    minority_neighbours: np.ndarray  # K nearest minority neighbours, as row indices
    skipped: bool = False

    @property
    def n_synthetic(self) -> int:
        return int(self.synthetic.sum())


def _sq_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d, 0.0)


def _nearest(dist: np.ndarray, k: int) -> np.ndarray:
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def apportion(weights: np.ndarray, total: int) -> np.ndarray:
    """Split ``total`` into integers proportional to ``weights`` (largest remainder)."""
    raw = weights * total
    base = np.floor(raw).astype(int)
    short = total - int(base.sum())
    if short > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


def adasyn_balance(X, y, cfg: AdasynConfig = AdasynConfig()) -> AdasynResult:
    """Oversample the minority class adaptively to local difficulty.

    Returns the original rows (unchanged, first) followed by the synthetic
    minority rows. If every minority sample has only minority neighbours,
    the input is returned with ``skipped=True``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    labels, counts = np.unique(y, return_counts=True)
    if len(labels) < 2:
        raise SingleClass("ADASYN needs both classes")
    minority = int(labels[np.argmin(counts)]) if counts[0] != counts[1] else int(labels[1])
    min_idx = np.flatnonzero(y == minority)
    m_s, m_l = len(min_idx), len(y) - len(min_idx)
    empty = np.zeros(0)
    if m_s == m_l:
        return AdasynResult(X.copy(), y.copy(), np.zeros(len(y), bool), minority, empty, empty.astype(int),
                            np.zeros((0, cfg.K), int), np.zeros((0, cfg.K), int))
    if m_s < cfg.K + 1:
        raise MinorityTooSmall(f"minority class has {m_s} samples, need >= {cfg.K + 1}")

    target = math.floor((m_l - m_s) * cfg.beta + 0.5)
    d_all = _sq_dist(X[min_idx], X)
    d_all[np.arange(m_s), min_idx] = np.inf
    nbrs = _nearest(d_all, cfg.K)
    ratios = (y[nbrs] != minority).sum(axis=1) / cfg.K

    d_min = d_all[:, min_idx]
    min_nbrs = min_idx[_nearest(d_min, cfg.K)]

    if ratios.sum() == 0:
        return AdasynResult(X.copy(), y.copy(), np.zeros(len(y), bool), minority, ratios,
                            np.zeros(m_s, int), nbrs, min_nbrs, skipped=True)

    g = apportion(ratios / ratios.sum(), target)
    synth = []
    for i, (row, gi) in enumerate(zip(min_idx, g)):
        if gi == 0:
            continue
        rng = np.random.default_rng([cfg.seed, i])
        picks = rng.integers(0, cfg.K, gi)
        lam = rng.random(gi)[:, None]
        partners = X[min_nbrs[i, picks]]
        synth.append(X[row] + lam * (partners - X[row]))
    S = np.vstack(synth)
    return AdasynResult(
        np.vstack([X, S]),
        np.concatenate([y, np.full(len(S), minority)]),
        np.concatenate([np.zeros(len(y), bool), np.ones(len(S), bool)]),
        minority,
        ratios,
        g,
        nbrs,
        min_nbrs,
    )
