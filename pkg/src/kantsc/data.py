"""UCR archive ingestion, preprocessing and a cylinder-bell-funnel generator."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DataError


@dataclass
class LabeledSeries:
    values: np.ndarray
    label: int


@dataclass
class RawDataset:
    name: str
    train: list[LabeledSeries]
    test: list[LabeledSeries]


@dataclass
class Dataset:
    """Preprocessed splits stored as dense arrays; labels are 0..m-1."""

    name: str
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    label_map: dict
    meta: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return int(self.x_train.shape[1])

    @property
    def m(self) -> int:
        return len(self.label_map)

    @property
    def train(self) -> list[LabeledSeries]:
        return [LabeledSeries(v, int(l)) for v, l in zip(self.x_train, self.y_train)]

    @property
    def test(self) -> list[LabeledSeries]:
        return [LabeledSeries(v, int(l)) for v, l in zip(self.x_test, self.y_test)]

    def train_arrays(self):
        return self.x_train, self.y_train

    def test_arrays(self):
        return self.x_test, self.y_test


def _parse_label(tok: str):
    v = float(tok)
    return int(v) if v.is_integer() else v


def load_ucr_tsv(path) -> list[LabeledSeries]:
    """Parse a UCR2018 ``.tsv`` split: label first, then values; ragged rows are NaN-padded."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    rows: list[tuple] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            toks = line.split("\t") if "\t" in line else line.replace(",", " ").split()
            try:
                label = _parse_label(toks[0])
            except ValueError:
                raise DataError(f"{path}:{lineno}:1: unparsable label {toks[0]!r}") from None
            vals = []
            for col, tok in enumerate(toks[1:], 2):
                tok = tok.strip()
                if tok == "":
                    continue
                try:
                    vals.append(float(tok))
                except ValueError:
                    raise DataError(f"{path}:{lineno}:{col}: unparsable value {tok!r}") from None
            rows.append((label, vals))
    if not rows:
        raise DataError(f"{path}: empty file")
    d = max(len(v) for _, v in rows)
    out = []
    for label, vals in rows:
        arr = np.full(d, np.nan)
        arr[:len(vals)] = vals
        out.append(LabeledSeries(arr, label))
    return out


def impute(values: np.ndarray) -> np.ndarray:
    """Linear interpolation of interior NaNs, nearest-value fill at the edges."""
    v = np.asarray(values, dtype=np.float64)
    ok = np.isfinite(v)
    if not ok.any():
        raise DataError("series is entirely missing")
    if ok.all():
        return v.copy()
    idx = np.arange(len(v))
    # np.interp holds the edge values constant outside the known range
    return np.interp(idx, idx[ok], v[ok])


def znormalize(values: np.ndarray) -> np.ndarray:
    std = values.std()
    if std < 1e-8:
        return np.zeros_like(values)
    return (values - values.mean()) / std


def preprocess(raw: RawDataset, normalize: bool = True) -> Dataset:
    """Pad to a common length, impute, z-normalise per series and remap labels."""
    if not raw.train:
        raise DataError(f"{raw.name}: empty training split")
    series = raw.train + raw.test
    d = max(len(s.values) for s in series)
    lengths = {len(s.values) for s in series}

    def block(items):
        out = np.empty((len(items), d))
        for i, s in enumerate(items):
            row = np.full(d, np.nan)
            row[:len(s.values)] = s.values
            try:
                row = impute(row)
            except DataError as e:
                raise DataError(f"{raw.name}: series {i}: {e}") from None
            out[i] = znormalize(row) if normalize else row
        return out

    labels = sorted({s.label for s in series})
    label_map = {lab: i for i, lab in enumerate(labels)}
    meta = {
        "variable_length": len(lengths) > 1,
        "had_missing": any(np.isnan(s.values).any() for s in series),
        "n_train": len(raw.train),
        "n_test": len(raw.test),
    }
    return Dataset(
        name=raw.name,
        x_train=block(raw.train),
        y_train=np.array([label_map[s.label] for s in raw.train], dtype=np.int64),
        x_test=block(raw.test),
        y_test=np.array([label_map[s.label] for s in raw.test], dtype=np.int64),
        label_map=label_map,
        meta=meta,
    )


def data_root(root=None) -> Path:
    root = root or os.environ.get("KANTSC_DATA")
    if not root:
        raise DataError("no data root given (use --data or set KANTSC_DATA)")
    return Path(root)


def dataset_names(root) -> list[str]:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: data root is not a directory")
    return sorted(p.name for p in root.iterdir() if (p / f"{p.name}_TRAIN.tsv").exists())


def load_dataset(root, name: str) -> Dataset:
    base = Path(root) / name
    raw = RawDataset(name, load_ucr_tsv(base / f"{name}_TRAIN.tsv"), load_ucr_tsv(base / f"{name}_TEST.tsv"))
    return preprocess(raw)


def write_ucr_tsv(path, labels, values) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lab, row in zip(labels, values):
            fh.write("\t".join([str(lab)] + [repr(float(v)) for v in row]) + "\n")


def cbf_series(kind: int, rng: np.random.Generator, length: int = 128) -> np.ndarray:
    """One cylinder (1), bell (2) or funnel (3) series of the classic synthetic benchmark."""
    t = np.arange(1, length + 1, dtype=np.float64)
    a = rng.integers(16, 33)
    b = a + rng.integers(32, 97)
    eta = rng.standard_normal()
    noise = rng.standard_normal(length)
    on = ((t >= a) & (t <= b)).astype(np.float64)
    if kind == 1:
        shape = on
    elif kind == 2:
        shape = on * (t - a) / (b - a)
    elif kind == 3:
        shape = on * (b - t) / (b - a)
    else:
        raise ValueError(f"CBF class must be 1, 2 or 3, got {kind}")
    return (6.0 + eta) * shape + noise


def make_cbf(n_train: int = 30, n_test: int = 900, length: int = 128, seed: int = 0) -> RawDataset:
    """Balanced CBF splits with the UCR archive's sizes by default."""
    rng = np.random.default_rng(seed)

    def split(n):
        labels = np.resize(np.array([1, 2, 3]), n)
        rng.shuffle(labels)
        return [LabeledSeries(cbf_series(int(l), rng, length), int(l)) for l in labels]

    return RawDataset("CBF", split(n_train), split(n_test))


def write_ucr_dataset(root, raw: RawDataset) -> Path:
    base = Path(root) / raw.name
    for split, items in (("TRAIN", raw.train), ("TEST", raw.test)):
        write_ucr_tsv(base / f"{raw.name}_{split}.tsv", [s.label for s in items], [s.values for s in items])
    return base
