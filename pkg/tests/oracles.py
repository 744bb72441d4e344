"""Loop-based reference implementations used as independent test oracles."""

import json
import math
from pathlib import Path

import numpy as np

from advattr.analysis import RobustPair, StandardPair
from advattr.sje import AttributeMatrix

FIXTURES = Path(__file__).parent / "fixtures"


def top_k(a, ref, k):
    deltas = [(a[i] - ref[i], i) for i in range(len(a))]
    deltas.sort(key=lambda t: (-t[0], t[1]))
    return [i for _, i in deltas[:k]]


def dist(a, b, idx):
    return math.sqrt(sum((a[i] - b[i]) ** 2 for i in idx))


def distance_oracle(pairs, Phi, kind, top_fraction=0.2):
    """Returns (d1, d2, used) recomputed with plain Python lists."""
    m = len(Phi[0])
    k = max(1, math.ceil(round(top_fraction * m, 9)))
    d1, d2, used = [], [], []
    for i, p in enumerate(pairs):
        if kind == "standard":
            ok = p["clean_class"] == p["true_class"] and p["adv_class"] != p["true_class"]
            first, second, wrong = p["a_clean"], p["a_adv"], p["adv_class"]
        else:
            ok = p["standard_class"] != p["true_class"] and p["robust_class"] == p["true_class"]
            first, second, wrong = p["a_robust"], p["a_standard"], p["standard_class"]
        if not ok:
            continue
        true_row, wrong_row = Phi[p["true_class"]], Phi[wrong]
        idx = sorted(set(top_k(first, wrong_row, k)) | set(top_k(second, true_row, k)))
        d1.append(dist(first, second, idx))
        d2.append(dist(true_row, wrong_row, idx))
        used.append(i)
    return d1, d2, used


def load_distance_fixture():
    doc = json.loads((FIXTURES / "distance_pairs.json").read_text())
    Phi = AttributeMatrix(np.array(doc["attributes"]))
    std = [StandardPair(np.array(p["a_clean"]), np.array(p["a_adv"]), p["true_class"],
                        p["clean_class"], p["adv_class"], p["image_id"])
           for p in doc["standard_pairs"]]
    rob = [RobustPair(np.array(p["a_robust"]), np.array(p["a_standard"]), p["true_class"],
                      p["robust_class"], p["standard_class"], p["image_id"])
           for p in doc["robust_pairs"]]
    return doc, Phi, std, rob


def normalize(s):
    return " ".join(s.lower().split())


def ground_oracle(phrases, records, min_score=0.0):
    """Brute-force matcher over raw detection records."""
    out = []
    for phrase in phrases:
        boxes = [r for r in records
                 if r.get("score", 1.0) >= min_score and normalize(r["attribute"]) == normalize(phrase)]
        out.append((phrase, [tuple(r["box"]) for r in boxes]))
    return out
