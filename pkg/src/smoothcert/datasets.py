"""Seeded synthetic 2-D datasets and their CSV format."""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from smoothcert.stats import RngStream, derive_stream_id

DATASET_HEADER = "# smoothcert-dataset v1, d={d}, classes={k}"
_HEADER_RE = re.compile(r"^# smoothcert-dataset v1, d=(\d+), classes=(\d+)\s*$")


class DatasetFormatError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    num_classes: int
    name: str = "custom"
    seed: int | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X must be (n, d) with one label per row")
        if (self.y < 0).any() or (self.y >= self.num_classes).any():
            raise ValueError("labels must lie in [0, num_classes)")
        if not np.isfinite(self.X).all():
            raise ValueError("coordinates must be finite")

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]

    def __iter__(self):
        return iter(zip(self.X, self.y))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.y[idx], self.num_classes, self.name, self.seed)


def _noise_stream(name, seed):
    return RngStream(seed, derive_stream_id("dataset", name))


def gen_two_moons(n: int, noise_std: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaved half circles.

    Class 0 is the upper unit arc around the origin; class 1 is the lower
    unit arc around ``(1, 0.5)``. Arc parameters are evenly spaced; jitter is
    isotropic Gaussian with std ``noise_std``.
    """
    if n < 2:
        raise ValueError("two moons needs n >= 2")
    n0 = n // 2
    n1 = n - n0
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    X = np.vstack([upper, lower])
    y = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    if noise_std > 0:
        X = X + noise_std * _noise_stream("two_moons", seed).standard_normal(X.shape)
    return Dataset(X, y, 2, "two_moons", seed)


def gen_blobs(n: int, centers, std: float = 1.0, seed: int = 0) -> Dataset:
    """Isotropic Gaussian blobs, ``n`` split as evenly as possible over centers."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    k = centers.shape[0]
    if k < 2:
        raise ValueError("blobs needs at least two centers")
    per = np.full(k, n // k)
    per[: n % k] += 1
    y = np.repeat(np.arange(k), per)
    X = centers[y].copy()
    if std > 0:
        X = X + std * _noise_stream("blobs", seed).standard_normal(X.shape)
    return Dataset(X, y, k, "blobs", seed)


def gen_rings(n: int, radii=(1.0, 2.0), noise_std: float = 0.1, seed: int = 0) -> Dataset:
    """Concentric circles around the origin, one class per radius.

    Angles are evenly spaced per ring; jitter is isotropic Gaussian.
    """
    radii = np.asarray(radii, dtype=float)
    k = radii.shape[0]
    if k < 2:
        raise ValueError("rings needs at least two radii")
    per = np.full(k, n // k)
    per[: n % k] += 1
    y = np.repeat(np.arange(k), per)
    angles = np.concatenate([np.linspace(0.0, 2 * np.pi, c, endpoint=False) for c in per])
    X = radii[y][:, None] * np.column_stack([np.cos(angles), np.sin(angles)])
    if noise_std > 0:
        X = X + noise_std * _noise_stream("rings", seed).standard_normal(X.shape)
    return Dataset(X, y, k, "rings", seed)


def format_dataset(ds: Dataset) -> str:
    lines = [DATASET_HEADER.format(d=ds.d, k=ds.num_classes)]
    for x, label in ds:
        lines.append(",".join(format(float(v), ".17g") for v in x) + f",{int(label)}")
    return "\n".join(lines) + "\n"


def parse_dataset(text: str, name: str = "loaded") -> Dataset:
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise DatasetFormatError("empty dataset file", 1)
    match = _HEADER_RE.match(lines[0].strip())
    if match is None:
        raise DatasetFormatError("missing or malformed '# smoothcert-dataset v1' header", 1)
    d, k = int(match.group(1)), int(match.group(2))
    rows, labels = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != d + 1:
            raise DatasetFormatError(f"expected {d + 1} fields, got {len(fields)}", lineno)
        try:
            rows.append([float(v) for v in fields[:d]])
            label = int(fields[d])
        except ValueError as exc:
            raise DatasetFormatError(f"unparsable value ({exc})", lineno) from None
        if not 0 <= label < k:
            raise DatasetFormatError(f"label {label} outside [0, {k})", lineno)
        labels.append(label)
    if not rows:
        raise DatasetFormatError("dataset has a header but no rows", len(lines))
    return Dataset(np.array(rows), np.array(labels), k, name)


def save_dataset(ds: Dataset, path, comments=()) -> None:
    """Write ``ds``; ``comments`` become ``#`` lines right after the header."""
    text = format_dataset(ds)
    if comments:
        header, rest = text.split("\n", 1)
        text = "\n".join([header, *(f"# {c}" for c in comments), rest])
    with open(path, "w") as fh:
        fh.write(text)


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        return parse_dataset(fh.read(), name=str(path))
