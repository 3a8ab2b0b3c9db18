"""Datasets: synthetic generators, CSV ingestion, standardization, losses."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import numpy.typing as npt

from .network import NetworkArchitecture, forward
from .numerics import RngStream

__all__ = [
    "ParseError",
    "ColumnMismatch",
    "Dataset",
    "SplitSpec",
    "Standardization",
    "REFERENCE_ARCHITECTURE",
    "gen_toy_cubic",
    "gen_ideal_dataset",
    "load_csv",
    "standardize",
    "split",
    "loss_mae",
]

Array = npt.NDArray[np.float64]

REFERENCE_ARCHITECTURE = NetworkArchitecture(2, (4, 4, 10, 1), "tanh")


class ParseError(ValueError):
    """A cell could not be parsed as a number. ``row``/``col`` are 0-based data indices."""

    def __init__(self, row: int, col: int, value: str, path: str = "") -> None:
        self.row, self.col, self.value = row, col, value
        where = f"{path}: " if path else ""
        super().__init__(f"{where}row {row}, col {col}: cannot parse {value!r} as a number")


class ColumnMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Standardization:
    """Per-column ``(mean, std)`` for inputs and targets.

    Columns with zero spread are passed through with std 1 and flagged in
    ``constant_inputs`` / ``constant_targets``.
    """

    input_mean: Array
    input_std: Array
    target_mean: Array
    target_std: Array
    constant_inputs: tuple[int, ...] = ()
    constant_targets: tuple[int, ...] = ()

    def inputs_to(self, x) -> Array:
        return (np.asarray(x, dtype=np.float64) - self.input_mean) / self.input_std

    def inputs_from(self, z) -> Array:
        return np.asarray(z, dtype=np.float64) * self.input_std + self.input_mean

    def targets_to(self, y) -> Array:
        return (np.asarray(y, dtype=np.float64) - self.target_mean) / self.target_std

    def targets_from(self, z) -> Array:
        return np.asarray(z, dtype=np.float64) * self.target_std + self.target_mean

    def to_dict(self) -> dict:
        return {
            "convention": "z-score, population std (ddof=0)",
            "input_mean": self.input_mean.tolist(),
            "input_std": self.input_std.tolist(),
            "target_mean": self.target_mean.tolist(),
            "target_std": self.target_std.tolist(),
            "constant_inputs": list(self.constant_inputs),
            "constant_targets": list(self.constant_targets),
        }


@dataclass(frozen=True)
class Dataset:
    inputs: Array
    targets: Array
    feature_names: tuple[str, ...] | None = None
    target_names: tuple[str, ...] | None = None
    standardization: Standardization | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.targets, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if x.shape[0] != y.shape[0]:
            raise ColumnMismatch(f"{x.shape[0]} input rows but {y.shape[0]} target rows")
        if np.isnan(x).any() or np.isnan(y).any():
            raise ValueError("dataset contains NaN")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.targets.shape[1]

    def subset(self, idx) -> "Dataset":
        return replace(self, inputs=self.inputs[idx], targets=self.targets[idx])

    def unstandardized(self) -> "Dataset":
        s = self.standardization
        if s is None:
            return self
        return replace(
            self, inputs=s.inputs_from(self.inputs), targets=s.targets_from(self.targets), standardization=None
        )


@dataclass(frozen=True)
class SplitSpec:
    train_count: int
    test_count: int
    shuffle_seed: int = 0


def gen_toy_cubic(
    rng: RngStream, n: int = 20, x_low: float = -4.0, x_high: float = 4.0, noise_var: float = 9.0
) -> Dataset:
    """Draw ``y = x**3 + eps`` with ``x ~ U(x_low, x_high)`` and ``eps ~ N(0, noise_var)``."""
    if n < 1 or not x_low < x_high:
        raise ValueError("need n >= 1 and x_low < x_high")
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    x = rng.uniform(x_low, x_high, n)
    y = x**3 + np.sqrt(noise_var) * rng.standard_normal(n)
    return Dataset(x[:, None], y[:, None], ("x",), ("y",))


def gen_ideal_dataset(
    rng: RngStream,
    arch: NetworkArchitecture = REFERENCE_ARCHITECTURE,
    n_train: int = 70,
    n_test: int = 30,
    input_std: float = 10.0,
    true_weights=None,
) -> tuple[Dataset, Dataset, Array]:
    """Targets generated by a network with random N(0, 1) weights.

    Inputs are drawn from ``N(0, input_std**2)``. Returns the train set,
    the test set and the generating weights.
    """
    n = n_train + n_test
    x = input_std * rng.standard_normal((n, arch.input_dim))
    if true_weights is None:
        true_weights = rng.standard_normal(arch.n_weights)
    true_weights = np.asarray(true_weights, dtype=np.float64)
    y = forward(arch, true_weights, x)
    full = Dataset(x, y)
    return full.subset(slice(0, n_train)), full.subset(slice(n_train, n)), true_weights


def _split_line(line: str, delimiter: str | None) -> list[str]:
    if delimiter is None:
        return line.split()
    return next(csv.reader([line], delimiter=delimiter))


def _resolve(cols: Sequence[int | str], header: list[str] | None, ncols: int) -> list[int]:
    out = []
    for c in cols:
        if isinstance(c, str) and not c.lstrip("-").isdigit():
            if header is None or c not in header:
                raise ColumnMismatch(f"unknown column {c!r}")
            out.append(header.index(c))
        else:
            i = int(c)
            if not -ncols <= i < ncols:
                raise ColumnMismatch(f"column index {i} out of range for {ncols} columns")
            out.append(i % ncols)
    return out


def load_csv(
    path,
    input_cols: Sequence[int | str],
    target_cols: Sequence[int | str],
    header: bool = False,
    delimiter: str | None = ",",
) -> Dataset:
    """Read a delimited text table.

    Lines starting with ``#`` and blank lines are skipped. ``delimiter=None``
    splits on runs of whitespace. Column selectors are 0-based indices or,
    with ``header=True``, header names. Raises ``FileNotFoundError``,
    :class:`ParseError` (0-based data row and column) or
    :class:`ColumnMismatch`.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    names: list[str] | None = None
    rows: list[list[str]] = []
    with path.open(encoding="utf-8", newline="") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cells = [c.strip() for c in _split_line(line, delimiter)]
            if header and names is None:
                names = cells
                continue
            rows.append(cells)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    ncols = len(names) if names is not None else len(rows[0])
    values = np.empty((len(rows), ncols))
    for r, cells in enumerate(rows):
        if len(cells) != ncols:
            raise ColumnMismatch(f"{path}: row {r} has {len(cells)} columns, expected {ncols}")
        for c, cell in enumerate(cells):
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise ParseError(r, c, cell, str(path)) from None
            if np.isnan(values[r, c]):
                raise ParseError(r, c, cell, str(path))
    icols = _resolve(input_cols, names, ncols)
    tcols = _resolve(target_cols, names, ncols)
    label = (lambda cols: tuple(names[i] for i in cols)) if names else (lambda cols: None)
    return Dataset(values[:, icols], values[:, tcols], label(icols), label(tcols))


def _zscore_params(a: Array) -> tuple[Array, Array, tuple[int, ...]]:
    mean = a.mean(axis=0)
    std = a.std(axis=0)
    const = tuple(int(i) for i in np.flatnonzero(std == 0))
    std = np.where(std == 0, 1.0, std)
    return mean, std, const


def standardize(ds: Dataset, params: Standardization | None = None) -> Dataset:
    """Z-score inputs and targets column-wise (population std).

    Pass ``params`` to apply an existing transform, e.g. the training
    set's to a test set.
    """
    if ds.standardization is not None:
        raise ValueError("dataset is already standardized")
    if params is None:
        im, isd, ic = _zscore_params(ds.inputs)
        tm, tsd, tc = _zscore_params(ds.targets)
        params = Standardization(im, isd, tm, tsd, ic, tc)
    return replace(
        ds,
        inputs=params.inputs_to(ds.inputs),
        targets=params.targets_to(ds.targets),
        standardization=params,
    )


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Shuffle with ``spec.shuffle_seed`` and cut into disjoint train/test sets."""
    if spec.train_count < 1 or spec.test_count < 0:
        raise ValueError("train_count must be >= 1 and test_count >= 0")
    if spec.train_count + spec.test_count > len(ds):
        raise ValueError(
            f"train_count + test_count = {spec.train_count + spec.test_count} exceeds {len(ds)} rows"
        )
    idx = RngStream(spec.shuffle_seed).permutation(len(ds))
    tr = np.sort(idx[: spec.train_count])
    te = np.sort(idx[spec.train_count : spec.train_count + spec.test_count])
    return ds.subset(tr), ds.subset(te)


def loss_mae(pred_mean, targets) -> float:
    """Mean absolute error over all N * k target entries."""
    pred_mean = np.asarray(pred_mean, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if pred_mean.shape != targets.shape:
        raise ValueError(f"shape mismatch {pred_mean.shape} vs {targets.shape}")
    return float(np.mean(np.abs(pred_mean - targets)))
