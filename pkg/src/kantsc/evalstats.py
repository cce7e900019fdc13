"""Classification metrics, distribution summaries and rank statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, rankdata

from .core import ConfigError, DataError

# Studentized range statistic divided by sqrt(2), alpha = 0.05 (Nemenyi post-hoc test)
NEMENYI_Q05 = {2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031, 9: 3.102, 10: 3.164}


def _pair(preds, labels) -> tuple[np.ndarray, np.ndarray]:
    preds, labels = np.asarray(preds), np.asarray(labels)
    if preds.shape != labels.shape:
        raise DataError("predictions and labels differ in length")
    if preds.size == 0:
        raise DataError("metric of an empty sample")
    return preds, labels


def accuracy(preds, labels) -> float:
    preds, labels = _pair(preds, labels)
    return float(np.mean(preds == labels))


def per_class_f1(preds, labels, m: int) -> np.ndarray:
    preds, labels = _pair(preds, labels)
    f1 = np.zeros(m)
    for c in range(m):
        tp = np.sum((preds == c) & (labels == c))
        fp = np.sum((preds == c) & (labels != c))
        fn = np.sum((preds != c) & (labels == c))
        if tp > 0:
            f1[c] = 2 * tp / (2 * tp + fp + fn)
    return f1


def macro_f1(preds, labels, m: int) -> float:
    """Unweighted mean of per-class F1 over all ``m`` classes; absent classes count as 0."""
    return float(per_class_f1(preds, labels, m).mean())


def weighted_f1(preds, labels, m: int) -> float:
    _, labels = _pair(preds, labels)
    support = np.bincount(labels, minlength=m)
    return float(np.sum(per_class_f1(preds, labels, m) * support) / support.sum())


def quantiles(values, qs=(0.25, 0.5, 0.75)) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DataError("quantiles of an empty sample")
    return np.quantile(values, qs)


def pairwise_geq_counts(acc: dict[str, dict[str, float]]) -> tuple[list[str], np.ndarray]:
    """``M[r][c]`` = number of datasets where config ``r`` scores >= config ``c``.

    ``acc`` maps config name -> {dataset: accuracy}; every config must cover
    the same datasets.
    """
    names = list(acc)
    if not names:
        raise DataError("no configurations given")
    datasets = sorted(acc[names[0]])
    for n in names[1:]:
        if sorted(acc[n]) != datasets:
            raise DataError(f"config {n!r} covers a different dataset set")
    a = np.array([[acc[n][d] for d in datasets] for n in names])
    return names, (a[:, None, :] >= a[None, :, :]).sum(axis=-1)


@dataclass
class RankSummary:
    models: list[str]
    mean_ranks: np.ndarray  # rank 1 = best
    n_datasets: int
    friedman_chi2: float
    p_value: float
    critical_difference: float
    test: str = "Friedman + Nemenyi (alpha=0.05)"

    @property
    def k(self) -> int:
        return len(self.models)

    @property
    def flipped_ranks(self) -> np.ndarray:
        """Ranks with k = best, for plots that read 'higher rank is better'."""
        return self.k + 1 - self.mean_ranks

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "models": self.models,
            "n_datasets": self.n_datasets,
            "mean_rank_lower_is_better": dict(zip(self.models, map(float, self.mean_ranks))),
            "mean_rank_higher_is_better": dict(zip(self.models, map(float, self.flipped_ranks))),
            "friedman_chi2": self.friedman_chi2,
            "p_value": self.p_value,
            "critical_difference": self.critical_difference,
        }


def nemenyi_cd(k: int, n: int) -> float:
    if k not in NEMENYI_Q05:
        raise ConfigError(f"no bundled Nemenyi constant for k={k} (supported 2..10)")
    return NEMENYI_Q05[k] * math.sqrt(k * (k + 1) / (6.0 * n))


def friedman_ranks(scores, models: list[str] | None = None, higher_is_better: bool = True) -> RankSummary:
    """Average ranks (ties share the mean rank), Friedman chi-square and Nemenyi CD.

    ``scores`` is ``[datasets, models]``.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2:
        raise ConfigError("scores must be a [datasets x models] matrix")
    n, k = s.shape
    if k < 2 or n < 2:
        raise ConfigError(f"rank statistics need k >= 2 models and N >= 2 datasets (got k={k}, N={n})")
    ranks = rankdata(-s if higher_is_better else s, axis=1)
    mean = ranks.mean(axis=0)
    stat = 12.0 * n / (k * (k + 1)) * (np.sum(mean**2) - k * (k + 1) ** 2 / 4.0)
    models = list(models) if models is not None else [f"m{j}" for j in range(k)]
    return RankSummary(models=models, mean_ranks=mean, n_datasets=n, friedman_chi2=float(stat),
                       p_value=float(chi2.sf(stat, k - 1)), critical_difference=nemenyi_cd(k, n))


def histogram(values, n_bins: int, value_range: tuple[float, float] | None = None):
    """Uniform-bin histogram; values outside the range land in the edge bins."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if n_bins < 1:
        raise ConfigError("n_bins must be >= 1")
    if values.size == 0:
        raise DataError("histogram of an empty sample")
    lo, hi = value_range if value_range is not None else (values.min(), values.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(np.clip(values, lo, hi), bins=edges)
    return edges, counts
