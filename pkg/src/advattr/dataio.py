"""File formats and the seeded synthetic dataset.

Tabular data is CSV, structured records are JSON. Floats are written with 17
significant digits in CSV and as shortest round-trip reprs in JSON, so every
save/load pair is bit-exact. All randomness comes from numpy's Philox4x64-10
counter-based generator seeded through ``SeedSequence``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numeric import DimensionError, Layer, MLPParams
from .sje import AttributeMatrix

SPLITS = ("train", "val", "test")
_COLORS = ("black", "white", "red", "blue", "brown", "yellow", "green", "grey",
           "orange", "spotted")
_PARTS = ("head", "wing", "belly", "tail", "back", "breast", "leg", "eye")


class FormatError(ValueError):
    """A file does not follow its documented format."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_float(cell: str, where: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise FormatError(f"{where}: non-numeric cell {cell!r}") from None
    if not math.isfinite(value):
        raise FormatError(f"{where}: non-finite cell {cell!r}")
    return value


def _parse_int(cell: str, where: str) -> int:
    try:
        return int(cell)
    except ValueError:
        raise FormatError(f"{where}: expected an integer, got {cell!r}") from None


def _read_rows(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- attribute matrices -----------------------------------------------------

def save_attribute_matrix(path, Phi: AttributeMatrix) -> None:
    m = Phi.attribute_count
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class_id"] + [f"a_{i}" for i in range(m)])
        for cid, row in zip(Phi.class_ids, Phi.values):
            w.writerow([cid] + [_fmt(v) for v in row])


def load_attribute_matrix(path, vocabulary=None) -> AttributeMatrix:
    """Read ``class_id,a_0..a_{m-1}``; rows come back in ascending class_id order."""
    rows = _read_rows(path)
    if not rows:
        raise FormatError(f"{path}: missing header")
    header = rows[0]
    m = len(header) - 1
    if m < 1 or header != ["class_id"] + [f"a_{i}" for i in range(m)]:
        raise FormatError(f"{path}: header must be class_id,a_0..a_{{m-1}}, got {header}")
    seen: dict[int, list[float]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        where = f"{path}:{lineno}"
        if len(row) != m + 1:
            raise FormatError(f"{where}: expected {m + 1} cells, got {len(row)}")
        cid = _parse_int(row[0], where)
        if cid in seen:
            raise FormatError(f"{where}: duplicate class_id {cid}")
        seen[cid] = [_parse_float(c, where) for c in row[1:]]
    ids = sorted(seen)
    if len(ids) < 2:
        raise FormatError(f"{path}: need at least two classes")
    return AttributeMatrix(np.array([seen[i] for i in ids]), vocabulary, tuple(ids))


def save_vocabulary(path, phrases) -> None:
    Path(path).write_text(json.dumps(list(phrases), indent=1) + "\n")


def load_vocabulary(path) -> tuple[str, ...]:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    if not isinstance(data, list) or not all(isinstance(p, str) and p.strip() for p in data):
        raise FormatError(f"{path}: vocabulary must be a list of non-empty strings")
    return tuple(data)


# -- feature tables ---------------------------------------------------------

@dataclass(frozen=True)
class FeatureTable:
    ids: tuple[str, ...]
    labels: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.ids)


def save_features(path, table: FeatureTable) -> None:
    d = table.values.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"] + [f"f_{i}" for i in range(d)])
        for sid, label, row in zip(table.ids, table.labels, table.values):
            w.writerow([sid, int(label)] + [_fmt(v) for v in row])


def load_features(path) -> FeatureTable:
    """Read ``id,label,f_0..f_{d-1}``; a header-only file gives an empty table."""
    rows = _read_rows(path)
    if not rows:
        raise FormatError(f"{path}: missing header")
    header = rows[0]
    d = len(header) - 2
    if d < 0 or header != ["id", "label"] + [f"f_{i}" for i in range(d)]:
        raise FormatError(f"{path}: header must be id,label,f_0..f_{{d-1}}, got {header}")
    ids, labels, values = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        where = f"{path}:{lineno}"
        if len(row) != d + 2:
            raise FormatError(f"{where}: expected {d + 2} cells, got {len(row)}")
        if not row[0]:
            raise FormatError(f"{where}: empty id")
        ids.append(row[0])
        labels.append(_parse_int(row[1], where))
        values.append([_parse_float(c, where) for c in row[2:]])
    return FeatureTable(tuple(ids), np.array(labels, dtype=np.int64),
                        np.array(values, dtype=np.float64).reshape(len(ids), d))


# -- models -----------------------------------------------------------------

def _matrix_json(a: np.ndarray) -> dict:
    return {"rows": int(a.shape[0]), "cols": int(a.shape[1]),
            "values": [float(v) for v in a.ravel()]}


def _matrix_from(obj, where: str) -> np.ndarray:
    try:
        rows, cols, values = int(obj["rows"]), int(obj["cols"]), obj["values"]
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{where}: missing or invalid field ({e})") from None
    if not isinstance(values, list) or len(values) != rows * cols:
        got = len(values) if isinstance(values, list) else type(values).__name__
        raise FormatError(f"{where}: expected {rows}x{cols}={rows * cols} values, got {got}")
    arr = np.array([_check_num(v, where) for v in values], dtype=np.float64)
    return arr.reshape(rows, cols)


def _check_num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise FormatError(f"{where}: invalid number {v!r}")
    return float(v)


def save_model(path, model) -> None:
    """Write an :class:`MLPParams` or a compatibility matrix as JSON."""
    if isinstance(model, MLPParams):
        doc = {
            "kind": "mlp",
            "input_dim": model.input_dim,
            "class_count": model.class_count,
            "layers": [
                {"activation": layer.activation, "weight": _matrix_json(layer.weight),
                 "bias": [float(v) for v in layer.bias]}
                for layer in model.layers
            ],
        }
    else:
        W = np.asarray(model, dtype=np.float64)
        if W.ndim != 2:
            raise DimensionError("compatibility matrix must be 2-D")
        doc = {"kind": "compat", **_matrix_json(W)}
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path, expect_shape=None):
    """Inverse of :func:`save_model`.

    ``expect_shape`` optionally pins the layer widths of an MLP or the
    ``(d, m)`` shape of a compatibility matrix.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    if not isinstance(doc, dict) or doc.get("kind") not in ("mlp", "compat"):
        raise FormatError(f"{path}: missing or unknown 'kind'")
    if doc["kind"] == "compat":
        W = _matrix_from(doc, str(path))
        if expect_shape is not None and tuple(W.shape) != tuple(expect_shape):
            raise DimensionError(f"{path}: expected shape {tuple(expect_shape)}, got {W.shape}")
        return W
    layers = []
    for i, entry in enumerate(doc.get("layers") or []):
        where = f"{path}: layer {i}"
        w = _matrix_from(entry.get("weight"), where + " weight")
        bias = entry.get("bias")
        if not isinstance(bias, list) or len(bias) != w.shape[0]:
            raise DimensionError(f"{where}: expected {w.shape[0]} bias values")
        b = np.array([_check_num(v, where + " bias") for v in bias])
        layers.append(Layer(w, b, entry.get("activation", "")))
    if not layers:
        raise FormatError(f"{path}: no layers")
    model = MLPParams(tuple(layers))
    if (doc.get("input_dim"), doc.get("class_count")) != (model.input_dim, model.class_count):
        raise DimensionError(
            f"{path}: header dims ({doc.get('input_dim')}, {doc.get('class_count')}) "
            f"disagree with layers ({model.input_dim}, {model.class_count})"
        )
    if expect_shape is not None and list(expect_shape) != model.shape:
        raise DimensionError(f"{path}: expected shape {list(expect_shape)}, got {model.shape}")
    return model


# -- synthetic data ---------------------------------------------------------

@dataclass(frozen=True)
class SyntheticConfig:
    class_count: int = 10
    attribute_count: int = 16
    input_dim: int = 64
    samples_per_class: int = 200
    noise_sigma: float = 0.08
    seed: int = 0
    split: tuple[float, float, float] = (0.7, 0.1, 0.2)

    def __post_init__(self):
        if min(self.class_count, self.attribute_count, self.input_dim,
               self.samples_per_class) < 1:
            raise ValueError("all counts must be positive")
        if self.class_count < 2:
            raise ValueError("need at least two classes")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        split = tuple(float(f) for f in self.split)
        if len(split) != 3 or min(split) < 0 or abs(sum(split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must be three non-negative values summing to 1, got {self.split}")
        object.__setattr__(self, "split", split)


@dataclass(frozen=True)
class DatasetBundle:
    inputs: np.ndarray
    labels: np.ndarray
    splits: tuple[str, ...]
    attributes: AttributeMatrix
    ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        n = self.inputs.shape[0]
        if self.labels.shape != (n,) or len(self.splits) != n:
            raise DimensionError("inputs, labels and splits must have equal lengths")
        if not self.ids:
            object.__setattr__(self, "ids", tuple(f"s{i:05d}" for i in range(n)))
        if np.any(self.labels < 0) or np.any(self.labels >= self.attributes.class_count):
            raise ValueError("label out of range")
        if n and (np.min(self.inputs) < 0.0 or np.max(self.inputs) > 1.0):
            raise ValueError("inputs must lie in [0, 1]")

    @property
    def vocabulary(self):
        return self.attributes.vocabulary

    def split(self, name: str):
        """``(inputs, labels, dataset indices)`` for one split."""
        idx = np.array([i for i, s in enumerate(self.splits) if s == name], dtype=np.int64)
        return self.inputs[idx], self.labels[idx], idx


def synthetic_vocabulary(m: int) -> tuple[str, ...]:
    phrases = [f"{c} {p}" for p in _PARTS for c in _COLORS]
    if m > len(phrases):
        phrases += [f"attribute {i}" for i in range(len(phrases), m)]
    return tuple(phrases[:m])


def _split_counts(n: int, fractions) -> list[int]:
    counts = [int(round(f * n)) for f in fractions[:-1]]
    counts.append(n - sum(counts))
    return counts


def gen_synthetic(cfg: SyntheticConfig) -> DatasetBundle:
    """Class templates derived from random attribute vectors, plus uniform noise.

    Draw order from one Philox stream: attribute matrix (C x m, U[0,1]),
    mixing matrix P (d x m, U[-1,1]), per-sample noise (U[-sigma, sigma],
    class-major order), then one permutation per class for the split.
    """
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    C, m, d, k = cfg.class_count, cfg.attribute_count, cfg.input_dim, cfg.samples_per_class
    phi = rng.uniform(0.0, 1.0, size=(C, m))
    P = rng.uniform(-1.0, 1.0, size=(d, m))
    proj = phi @ P.T
    scale = np.max(np.abs(proj), axis=1, keepdims=True)
    templates = np.clip(0.5 + 0.5 * proj / np.where(scale > 0, scale, 1.0), 0.0, 1.0)
    labels = np.repeat(np.arange(C), k)
    noise = rng.uniform(-cfg.noise_sigma, cfg.noise_sigma, size=(C * k, d))
    inputs = np.clip(templates[labels] + noise, 0.0, 1.0)
    counts = _split_counts(k, cfg.split)
    splits = [""] * (C * k)
    for c in range(C):
        order = rng.permutation(k)
        pos = 0
        for name, cnt in zip(SPLITS, counts):
            for j in order[pos:pos + cnt]:
                splits[c * k + int(j)] = name
            pos += cnt
    Phi = AttributeMatrix(phi, synthetic_vocabulary(m))
    return DatasetBundle(inputs, labels, tuple(splits), Phi)


def save_bundle(out_dir, bundle: DatasetBundle) -> list[Path]:
    """Write ``{train,val,test}.csv``, ``attributes.csv`` and ``vocabulary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in SPLITS:
        idx = [i for i, s in enumerate(bundle.splits) if s == name]
        table = FeatureTable(tuple(bundle.ids[i] for i in idx), bundle.labels[idx],
                             bundle.inputs[idx].reshape(len(idx), bundle.inputs.shape[1]))
        save_features(out / f"{name}.csv", table)
        written.append(out / f"{name}.csv")
    save_attribute_matrix(out / "attributes.csv", bundle.attributes)
    written.append(out / "attributes.csv")
    if bundle.vocabulary is not None:
        save_vocabulary(out / "vocabulary.json", bundle.vocabulary)
        written.append(out / "vocabulary.json")
    return written


def load_bundle(in_dir) -> DatasetBundle:
    src = Path(in_dir)
    vocab_path = src / "vocabulary.json"
    vocab = load_vocabulary(vocab_path) if vocab_path.exists() else None
    Phi = load_attribute_matrix(src / "attributes.csv", vocab)
    if Phi.class_ids != tuple(range(Phi.class_count)):
        raise FormatError(f"{src}: class ids must be 0..C-1 for labelled data")
    ids, labels, inputs, splits = [], [], [], []
    for name in SPLITS:
        table = load_features(src / f"{name}.csv")
        ids += table.ids
        labels.append(table.labels)
        inputs.append(table.values)
        splits += [name] * len(table)
    widths = {v.shape[1] for v in inputs if len(v)}
    if len(widths) > 1:
        raise FormatError(f"{src}: splits disagree on input width {sorted(widths)}")
    d = widths.pop() if widths else 0
    x = np.concatenate([v.reshape(-1, d) for v in inputs])
    return DatasetBundle(x, np.concatenate(labels), tuple(splits), Phi, tuple(ids))
