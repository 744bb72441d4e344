"""Discriminative attributes, attribute-space distance studies, robust ratio."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numeric import DimensionError
from .sje import AttributeMatrix

RESTRICT_MODES = ("union", "clean", "adv", "full")
HIST_BINS = 20


class UndefinedRatioError(ValueError):
    """The standard classifier lost no accuracy, so the robust ratio has no value."""


@dataclass(frozen=True)
class SelectionResult:
    indices: tuple[int, ...]
    deltas: tuple[float, ...]
    k_used: int


def _rank_gap(A, phi, k: int) -> SelectionResult:
    A = np.asarray(A, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    if A.shape != phi.shape or A.ndim != 1:
        raise DimensionError(f"shape mismatch {A.shape} vs {phi.shape}")
    m = A.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"k must lie in [1, {m}], got {k}")
    delta = A - phi
    # stable sort keeps the lower index first among equal deltas
    order = np.argsort(-delta, kind="stable")[:k]
    return SelectionResult(tuple(int(i) for i in order),
                           tuple(float(delta[i]) for i in order), k)


def select_clean(A, phi_wrong, k: int) -> SelectionResult:
    """Top-k of ``A - phi(wrong class)`` for a clean image's predicted attributes."""
    return _rank_gap(A, phi_wrong, k)


def select_adv(A_hat, phi_true, k: int) -> SelectionResult:
    """Top-k of ``A_hat - phi(true class)`` for an adversarial image."""
    return _rank_gap(A_hat, phi_true, k)


def euclid(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def top_count(top_fraction: float, m: int) -> int:
    if not 0.0 < top_fraction <= 1.0:
        raise ValueError(f"top_fraction must lie in (0, 1], got {top_fraction}")
    # guard against 0.7 * 10 = 7.000000000000001 rounding up to 8
    return max(1, min(m, math.ceil(top_fraction * m - 1e-9)))


@dataclass(frozen=True)
class StandardPair:
    """Clean vs adversarial attributes of one image under the standard network."""

    a_clean: np.ndarray
    a_adv: np.ndarray
    true_class: int
    clean_class: int
    adv_class: int
    image_id: str = ""

    def qualifies(self) -> bool:
        return self.clean_class == self.true_class and self.adv_class != self.true_class


@dataclass(frozen=True)
class RobustPair:
    """Adversarial attributes of one image under the robust and standard networks."""

    a_robust: np.ndarray
    a_standard: np.ndarray
    true_class: int
    robust_class: int
    standard_class: int
    image_id: str = ""

    def qualifies(self) -> bool:
        return self.standard_class != self.true_class and self.robust_class == self.true_class


@dataclass(frozen=True)
class DistanceStats:
    d1_values: tuple[float, ...] = ()
    d2_values: tuple[float, ...] = ()
    pair_indices: tuple[int, ...] = ()
    bin_edges: tuple[float, ...] = ()
    counts_d1: tuple[int, ...] = ()
    counts_d2: tuple[int, ...] = ()
    filter: str = ""
    restrict: str = "union"
    k: int = 0

    @property
    def mean_d1(self) -> float | None:
        return float(np.mean(self.d1_values)) if self.d1_values else None

    @property
    def mean_d2(self) -> float | None:
        return float(np.mean(self.d2_values)) if self.d2_values else None

    def to_json(self) -> dict:
        return {
            "filter": self.filter,
            "restrict": self.restrict,
            "k": self.k,
            "count": len(self.d1_values),
            "pair_indices": list(self.pair_indices),
            "d1_values": list(self.d1_values),
            "d2_values": list(self.d2_values),
            "mean_d1": self.mean_d1,
            "mean_d2": self.mean_d2,
            "histogram": {
                "bin_edges": list(self.bin_edges),
                "counts_d1": list(self.counts_d1),
                "counts_d2": list(self.counts_d2),
            },
        }


def restricted_indices(sel_a: SelectionResult, sel_b: SelectionResult, m: int,
                       restrict: str) -> np.ndarray:
    if restrict == "union":
        idx = set(sel_a.indices) | set(sel_b.indices)
    elif restrict == "clean":
        idx = set(sel_a.indices)
    elif restrict == "adv":
        idx = set(sel_b.indices)
    elif restrict == "full":
        idx = range(m)
    else:
        raise ValueError(f"unknown restrict mode {restrict!r}")
    return np.array(sorted(idx), dtype=np.int64)


def histogram(d1: Sequence[float], d2: Sequence[float], bins: int = HIST_BINS):
    """Shared uniform bins over ``[0, max(d1, d2)]``; ``[0, 1]`` if all values are 0."""
    values = list(d1) + list(d2)
    if not values:
        return (), (), ()
    hi = max(values)
    if hi <= 0.0:
        hi = 1.0
    edges = np.linspace(0.0, hi, bins + 1)
    c1, _ = np.histogram(np.sort(np.asarray(d1, dtype=np.float64)), bins=edges)
    c2, _ = np.histogram(np.sort(np.asarray(d2, dtype=np.float64)), bins=edges)
    return tuple(float(e) for e in edges), tuple(int(c) for c in c1), tuple(int(c) for c in c2)


def _study(pairs, Phi: AttributeMatrix, top_fraction: float, restrict: str, kind: str):
    m = Phi.attribute_count
    k = top_count(top_fraction, m)
    d1, d2, used = [], [], []
    for i, p in enumerate(pairs):
        if not p.qualifies():
            continue
        phi_true = Phi.values[p.true_class]
        if kind == "standard":
            a_first, a_second, wrong = p.a_clean, p.a_adv, p.adv_class
        else:
            a_first, a_second, wrong = p.a_robust, p.a_standard, p.standard_class
        phi_wrong = Phi.values[wrong]
        a_first = np.asarray(a_first, dtype=np.float64)
        a_second = np.asarray(a_second, dtype=np.float64)
        if a_first.shape != (m,) or a_second.shape != (m,):
            raise DimensionError(f"pair {i}: attribute vectors must have length {m}")
        # first vector is "correct-side" (clean or robust), ranked against the
        # wrong class; second is "wrong-side", ranked against the true class
        sel_first = select_clean(a_first, phi_wrong, k)
        sel_second = select_adv(a_second, phi_true, k)
        idx = restricted_indices(sel_first, sel_second, m, restrict)
        d1.append(euclid(a_first[idx], a_second[idx]))
        d2.append(euclid(phi_true[idx], phi_wrong[idx]))
        used.append(i)
    edges, c1, c2 = histogram(d1, d2)
    return d1, d2, used, edges, c1, c2, k


def distance_study_standard(pairs: Sequence[StandardPair], Phi: AttributeMatrix,
                            top_fraction: float = 0.2, restrict: str = "union") -> DistanceStats:
    """d1 between clean and adversarial predicted attributes, d2 between class rows.

    Only images classified correctly when clean and wrongly when attacked
    take part. Both distances are measured on the selected top-k coordinates.
    """
    d1, d2, used, edges, c1, c2, k = _study(pairs, Phi, top_fraction, restrict, "standard")
    return DistanceStats(tuple(d1), tuple(d2), tuple(used), edges, c1, c2,
                         "clean correct and adversarial misclassified", restrict, k)


def distance_study_robust(pairs: Sequence[RobustPair], Phi: AttributeMatrix,
                          top_fraction: float = 0.2, restrict: str = "union") -> DistanceStats:
    """d1 between robust and standard adversarial attributes, d2 between class rows.

    Only adversarial images misclassified by the standard network and
    classified correctly by the robust one take part.
    """
    d1, d2, used, edges, c1, c2, k = _study(pairs, Phi, top_fraction, restrict, "robust")
    return DistanceStats(tuple(d1), tuple(d2), tuple(used), edges, c1, c2,
                         "standard adversarial misclassified and robust adversarial correct",
                         restrict, k)


def write_histogram_csv(path, stats: DistanceStats) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count_d1", "count_d2"])
        for lo, hi, a, b in zip(stats.bin_edges, stats.bin_edges[1:],
                                stats.counts_d1, stats.counts_d2):
            w.writerow([format(lo, ".17g"), format(hi, ".17g"), a, b])


def accuracy(preds, labels) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise DimensionError(f"shape mismatch {preds.shape} vs {labels.shape}")
    if preds.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(preds == labels))


@dataclass(frozen=True)
class RobustnessRecord:
    acc_clean_std: float
    acc_adv_std: float
    acc_adv_robust: float
    L_R: float
    L_S: float
    R: float
    epsilon: float | None = None
    classifier_kind: str = "general"

    def to_json(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "classifier_kind": self.classifier_kind,
            "acc_clean_std": self.acc_clean_std,
            "acc_adv_std": self.acc_adv_std,
            "acc_adv_robust": self.acc_adv_robust,
            "L_R": self.L_R,
            "L_S": self.L_S,
            "R": self.R,
            "status": "ok",
        }


def robust_ratio(acc_clean_std: float, acc_adv_std: float, acc_adv_robust: float,
                 epsilon: float | None = None, classifier_kind: str = "general") -> RobustnessRecord:
    """Share of the standard classifier's attack-induced accuracy loss left after robustification.

    ``L_R = acc_clean_std - acc_adv_robust``, ``L_S = acc_clean_std - acc_adv_std``
    and ``R = L_R / L_S``. Raises :class:`UndefinedRatioError` when
    ``|L_S| < 1e-12``.
    """
    for name, v in (("acc_clean_std", acc_clean_std), ("acc_adv_std", acc_adv_std),
                    ("acc_adv_robust", acc_adv_robust)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    L_R = acc_clean_std - acc_adv_robust
    L_S = acc_clean_std - acc_adv_std
    if abs(L_S) < 1e-12:
        raise UndefinedRatioError("no attack degradation; R undefined")
    return RobustnessRecord(acc_clean_std, acc_adv_std, acc_adv_robust, L_R, L_S, L_R / L_S,
                            epsilon, classifier_kind)


def robust_ratio_json(acc_clean_std, acc_adv_std, acc_adv_robust, epsilon, kind) -> dict:
    """Report form of :func:`robust_ratio`; the undefined case becomes null fields."""
    try:
        return robust_ratio(acc_clean_std, acc_adv_std, acc_adv_robust, epsilon, kind).to_json()
    except UndefinedRatioError as e:
        return {
            "epsilon": epsilon,
            "classifier_kind": kind,
            "acc_clean_std": acc_clean_std,
            "acc_adv_std": acc_adv_std,
            "acc_adv_robust": acc_adv_robust,
            "L_R": acc_clean_std - acc_adv_robust,
            "L_S": acc_clean_std - acc_adv_std,
            "R": None,
            "status": f"undefined: {e}",
        }
