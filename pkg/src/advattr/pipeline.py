"""End-to-end experiment: train, attack, embed, measure, report.

For every epsilon in the grid the standard classifier is attacked with the
evaluation attack, a robust classifier is adversarially trained at that
epsilon and attacked the same way, and an SJE attribute classifier is fit on
the clean training features of each network. The report collects accuracy
curves, robust ratios, distance studies and discriminative-attribute
selections; histogram tables go to side CSVs.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import zlib
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    RobustPair, StandardPair, accuracy, distance_study_robust, distance_study_standard,
    robust_ratio_json, select_adv, select_clean, write_histogram_csv,
)
from .attacks import AttackConfig, attack, linf_dist
from .dataio import SyntheticConfig, gen_synthetic, load_bundle, save_model
from .grounding import ground, load_detections
from .numeric import extract_features, predict
from .sje import SJEConfig, effective_attributes, predict_attributes, predict_class, train_sje
from .training import TrainConfig, train_adversarial, train_standard

log = logging.getLogger(__name__)

CURVES = ("general_standard", "general_robust", "attribute_standard", "attribute_robust")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


class ConfigError(ValueError):
    pass


def _default_adv_train() -> TrainConfig:
    return TrainConfig(attack=AttackConfig(epsilon=0.06, steps=7, random_start=True))


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    synthetic: SyntheticConfig | None = field(default_factory=SyntheticConfig)
    data_dir: str | None = None
    hidden: tuple[int, ...] = (32,)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(mix_alpha=1.0))
    adv_train: TrainConfig = field(default_factory=_default_adv_train)
    attack: AttackConfig = field(default_factory=lambda: AttackConfig(steps=10))
    epsilons: tuple[float, ...] = (0.01, 0.06, 0.12)
    sje: SJEConfig = field(default_factory=SJEConfig)
    top_fraction: float = 0.2
    restrict: str = "union"
    select_k: int = 3
    max_selections: int = 20
    detections: str | None = None
    min_score: float = 0.0
    out: str = "out"

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps:
            raise ConfigError("epsilon grid must be non-empty")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise ConfigError(f"epsilon grid must be strictly ascending, got {list(eps)}")
        if min(eps) < 0:
            raise ConfigError("epsilons must be >= 0")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden:
            raise ConfigError("at least one hidden layer is needed for feature extraction")
        if (self.synthetic is None) == (self.data_dir is None):
            raise ConfigError("set exactly one of 'synthetic' and 'data_dir'")


_NESTED = {
    "synthetic": SyntheticConfig,
    "train": TrainConfig,
    "adv_train": TrainConfig,
    "attack": AttackConfig,
    "sje": SJEConfig,
}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if cls is TrainConfig and key == "attack":
            value = _build(AttackConfig, value, f"{where}.attack")
        elif cls is PipelineConfig and key in _NESTED and value is not None:
            value = _build(_NESTED[key], value, key)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def config_from_dict(data: dict) -> PipelineConfig:
    if "data_dir" in data and data["data_dir"] is not None and "synthetic" not in data:
        data = {**data, "synthetic": None}
    return _build(PipelineConfig, data, "config")


def config_to_dict(cfg: PipelineConfig) -> dict:
    """JSON form of the config; the output directory is left out so reports
    written to different places stay byte-identical."""
    data = json.loads(json.dumps(dataclasses.asdict(cfg)))
    data.pop("out", None)
    return data


def derive_seed(seed: int, tag: str, local: int = 0) -> int:
    """Stable 63-bit seed for one component from the global seed."""
    seq = np.random.SeedSequence([int(seed), zlib.crc32(tag.encode()), int(local)])
    return int(seq.generate_state(1, np.uint64)[0] >> np.uint64(1))


@contextmanager
def stage(name: str):
    log.info("stage %s", name)
    try:
        yield
    except StageError:
        raise
    except Exception as e:  # noqa: BLE001 - every failure is reported by stage
        raise StageError(name, e) from e


def _eps_tag(eps: float) -> str:
    return format(eps, "g")


def _view(role: str, image: str, sel, Phi) -> dict:
    return {
        "role": role,
        "image": image,
        "indices": list(sel.indices),
        "deltas": list(sel.deltas),
        "phrases": [Phi.phrase(i) for i in sel.indices],
    }


def _attack_check(x, res, cfg: AttackConfig) -> dict:
    linf = np.atleast_1d(linf_dist(x, res.x_hat))
    excess = linf - cfg.epsilon
    out_of_range = (res.x_hat < cfg.clamp_lo) | (res.x_hat > cfg.clamp_hi)
    violations = int(np.sum(excess > 1e-12) + np.sum(np.any(out_of_range, axis=-1)))
    return {"epsilon": cfg.epsilon, "max_linf": float(np.max(linf)) if linf.size else 0.0,
            "violations": violations}


def run(cfg: PipelineConfig, out_dir: str | Path | None = None) -> dict:
    """Execute the full protocol; writes report.json, histogram CSVs and models."""
    out = Path(out_dir if out_dir is not None else cfg.out)
    with stage("output"):
        out.mkdir(parents=True, exist_ok=True)
        (out / "models").mkdir(exist_ok=True)

    with stage("data"):
        if cfg.synthetic is not None:
            syn = replace(cfg.synthetic, seed=derive_seed(cfg.seed, "data", cfg.synthetic.seed))
            bundle = gen_synthetic(syn)
        else:
            bundle = load_bundle(cfg.data_dir)
        Phi = bundle.attributes
        x_tr, y_tr, _ = bundle.split("train")
        x_te, y_te, idx_te = bundle.split("test")
        if len(y_tr) == 0 or len(y_te) == 0:
            raise ValueError("train and test splits must be non-empty")
        ids_te = [bundle.ids[i] for i in idx_te]
        shape = [bundle.inputs.shape[1], *cfg.hidden, Phi.class_count]

    sje_cfg = replace(cfg.sje, seed=derive_seed(cfg.seed, "sje", cfg.sje.seed))
    Phi_eff = effective_attributes(Phi, sje_cfg)

    with stage("train_standard"):
        std = train_standard((x_tr, y_tr), shape,
                             replace(cfg.train, seed=derive_seed(cfg.seed, "train", cfg.train.seed)))
        save_model(out / "models" / "standard.json", std)

    with stage("sje_standard"):
        W_std = train_sje(extract_features(std, x_tr), y_tr, Phi, sje_cfg)
        save_model(out / "models" / "sje_standard.json", W_std)
        A_clean = predict_attributes(extract_features(std, x_te), W_std)
        attr_clean_pred = predict_class(extract_features(std, x_te), W_std, Phi, sje_cfg)
        gen_clean = accuracy(predict(std, x_te), y_te)
        attr_clean = accuracy(attr_clean_pred, y_te)

    curves = {name: [] for name in CURVES}
    robust_models, ratios_gen, ratios_attr = [], [], []
    studies_std, studies_rob, selections, checks = [], [], [], []
    attack_seed = derive_seed(cfg.seed, "attack", cfg.attack.seed)
    adv_seed = derive_seed(cfg.seed, "adv_train", cfg.adv_train.seed)
    adv_attack_seed = derive_seed(cfg.seed, "adv_attack", cfg.adv_train.attack.seed)

    for eps in cfg.epsilons:
        tag = _eps_tag(eps)
        acfg = replace(cfg.attack, epsilon=eps, seed=attack_seed)
        with stage(f"attack_standard[eps={tag}]"):
            res_std = attack(std, x_te, y_te, acfg, **_ids(acfg, idx_te))
            checks.append({"network": "standard", **_attack_check(x_te, res_std, acfg)})
            f_adv_std = extract_features(std, res_std.x_hat)
            A_adv_std = predict_attributes(f_adv_std, W_std)
            attr_adv_std_pred = predict_class(f_adv_std, W_std, Phi, sje_cfg)
            gen_adv_std = accuracy(res_std.pred_adv, y_te)
            attr_adv_std = accuracy(attr_adv_std_pred, y_te)

        with stage(f"train_robust[eps={tag}]"):
            tcfg = replace(cfg.adv_train, seed=adv_seed,
                           attack=replace(cfg.adv_train.attack, epsilon=eps, seed=adv_attack_seed))
            rob = train_adversarial((x_tr, y_tr), shape, tcfg)
            save_model(out / "models" / f"robust_eps{tag}.json", rob)
            W_rob = train_sje(extract_features(rob, x_tr), y_tr, Phi, sje_cfg)
            save_model(out / "models" / f"sje_robust_eps{tag}.json", W_rob)

        with stage(f"attack_robust[eps={tag}]"):
            res_rob = attack(rob, x_te, y_te, acfg, **_ids(acfg, idx_te))
            checks.append({"network": "robust", **_attack_check(x_te, res_rob, acfg)})
            f_adv_rob = extract_features(rob, res_rob.x_hat)
            A_adv_rob = predict_attributes(f_adv_rob, W_rob)
            attr_adv_rob_pred = predict_class(f_adv_rob, W_rob, Phi, sje_cfg)
            gen_adv_rob = accuracy(res_rob.pred_adv, y_te)
            attr_adv_rob = accuracy(attr_adv_rob_pred, y_te)
            robust_models.append({
                "epsilon": eps,
                "clean_general": accuracy(predict(rob, x_te), y_te),
                "clean_attribute": accuracy(predict_class(extract_features(rob, x_te), W_rob,
                                                          Phi, sje_cfg), y_te),
            })

        curves["general_standard"].append({"epsilon": eps, "accuracy": gen_adv_std})
        curves["general_robust"].append({"epsilon": eps, "accuracy": gen_adv_rob})
        curves["attribute_standard"].append({"epsilon": eps, "accuracy": attr_adv_std})
        curves["attribute_robust"].append({"epsilon": eps, "accuracy": attr_adv_rob})

        with stage(f"robust_ratio[eps={tag}]"):
            ratios_gen.append(robust_ratio_json(gen_clean, gen_adv_std, gen_adv_rob, eps, "general"))
            ratios_attr.append(robust_ratio_json(attr_clean, attr_adv_std, attr_adv_rob, eps,
                                                 "attribute"))

        with stage(f"distance_study[eps={tag}]"):
            std_pairs = [
                StandardPair(A_clean[i], A_adv_std[i], int(y_te[i]), int(attr_clean_pred[i]),
                             int(attr_adv_std_pred[i]), ids_te[i])
                for i in range(len(y_te))
            ]
            rob_pairs = [
                RobustPair(A_adv_rob[i], A_adv_std[i], int(y_te[i]), int(attr_adv_rob_pred[i]),
                           int(attr_adv_std_pred[i]), ids_te[i])
                for i in range(len(y_te))
            ]
            s_std = distance_study_standard(std_pairs, Phi_eff, cfg.top_fraction, cfg.restrict)
            s_rob = distance_study_robust(rob_pairs, Phi_eff, cfg.top_fraction, cfg.restrict)
            write_histogram_csv(out / f"hist_standard_eps{tag}.csv", s_std)
            write_histogram_csv(out / f"hist_robust_eps{tag}.csv", s_rob)
            studies_std.append({"epsilon": eps, "csv": f"hist_standard_eps{tag}.csv",
                                **s_std.to_json()})
            studies_rob.append({"epsilon": eps, "csv": f"hist_robust_eps{tag}.csv",
                                **s_rob.to_json()})

        with stage(f"selection[eps={tag}]"):
            k = min(cfg.select_k, Phi.attribute_count)
            for i in s_std.pair_indices[:cfg.max_selections]:
                p = std_pairs[i]
                selections.append({
                    "network": "standard", "epsilon": eps, "image_id": p.image_id,
                    "true_class": p.true_class, "wrong_class": p.adv_class,
                    "views": [
                        _view("clean", p.image_id,
                              select_clean(p.a_clean, Phi_eff.values[p.adv_class], k), Phi),
                        _view("adversarial", f"{p.image_id}:adv:{tag}:standard",
                              select_adv(p.a_adv, Phi_eff.values[p.true_class], k), Phi),
                    ],
                })
            for i in s_rob.pair_indices[:cfg.max_selections]:
                p = rob_pairs[i]
                selections.append({
                    "network": "robust", "epsilon": eps, "image_id": p.image_id,
                    "true_class": p.true_class, "wrong_class": p.standard_class,
                    "views": [
                        _view("robust_adversarial", f"{p.image_id}:adv:{tag}:robust",
                              select_clean(p.a_robust, Phi_eff.values[p.standard_class], k), Phi),
                        _view("standard_adversarial", f"{p.image_id}:adv:{tag}:standard",
                              select_adv(p.a_standard, Phi_eff.values[p.true_class], k), Phi),
                    ],
                })

    report = {
        "version": __version__,
        "config": config_to_dict(cfg),
        "dataset": {
            "source": "synthetic" if cfg.synthetic is not None else "files",
            "input_dim": int(bundle.inputs.shape[1]),
            "class_count": Phi.class_count,
            "attribute_count": Phi.attribute_count,
            "train_size": int(len(y_tr)),
            "test_size": int(len(y_te)),
            "model_shape": shape,
        },
        "epsilons": list(cfg.epsilons),
        "clean_accuracy": {"general_standard": gen_clean, "attribute_standard": attr_clean},
        "robust_models": robust_models,
        "curves": curves,
        "robust_ratio": {"general": ratios_gen, "attribute": ratios_attr},
        "distance_studies": {"standard": studies_std, "robust": studies_rob},
        "selections": selections,
        "attack_checks": checks,
    }
    if cfg.detections:
        with stage("ground"):
            ground_report(report, cfg.detections, cfg.min_score)
    with stage("write_report"):
        write_report(out / "report.json", report)
    return report


def _ids(acfg: AttackConfig, idx):
    return {"sample_ids": idx} if acfg.random_start else {}


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=1, allow_nan=False) + "\n")


def ground_report(report: dict, detections_path, min_score: float = 0.0) -> int:
    """Attach grounding results for every selection view; returns the warning count.

    Views whose image id is absent from the detections file are reported as
    ungrounded and listed under ``missing_images``.
    """
    detections, rejected = load_detections(detections_path)
    missing, results = [], []
    for s_idx, sel in enumerate(report.get("selections", [])):
        for view in sel["views"]:
            image = view["image"]
            if image not in detections and image not in missing:
                missing.append(image)
            boxes = detections.get(image, [])
            results.append({
                "selection": s_idx,
                "role": view["role"],
                "image": image,
                "results": [g.to_json() for g in ground(view["phrases"], boxes, min_score)],
            })
    report["grounding"] = {
        "detections": str(detections_path),
        "min_score": min_score,
        "rejected_records": rejected,
        "missing_images": missing,
        "warnings": len(missing) + rejected,
        "views": results,
    }
    return len(missing) + rejected


def report_schema() -> dict:
    return json.loads((Path(__file__).with_name("report.schema.json")).read_text())
