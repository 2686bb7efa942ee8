"""Experiment configuration: a versioned JSON document. Unknown keys are
errors so a typo cannot silently corrupt an experiment."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .training import FreezeSpec, HyperParams

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _hyper_from(d: dict, where: str, seed: int) -> HyperParams:
    _check_keys(d, {"lr_schedule", "weight_decay", "momentum", "batch_size",
                    "epochs"}, where)
    try:
        return HyperParams(
            lr_schedule=tuple(tuple(e) for e in d.get("lr_schedule", [[0, 0.01]])),
            weight_decay=d.get("weight_decay", 0.0),
            momentum=d.get("momentum", 0.0),
            batch_size=d.get("batch_size", 32),
            epochs=d.get("epochs", 0),
            seed=seed,
        )
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from e


@dataclass
class ClassConfig:
    name: str
    trainable_layers: int  # counted from the output end; 0 = the ERM class
    fine_tune: HyperParams

    def freeze(self) -> FreezeSpec:
        return FreezeSpec.last(self.trainable_layers)


@dataclass
class DatasetConfig:
    kind: str  # "mnist" | "digits" | "blobs"
    train_size: int | None = None
    test_size: int = 200
    blob_classes: int = 4
    blob_dim: int = 8
    blob_separation: float = 10.0
    blob_train_per_class: int = 50
    blob_test_per_class: int = 25


@dataclass
class ExperimentConfig:
    seed: int
    out_dir: Path
    dataset: DatasetConfig
    arch_hidden: list[int]
    train: HyperParams
    classes: list[ClassConfig]
    noise_inputs: int = 100
    epsilons: list[float] = field(default_factory=lambda: [0.0, 0.05, 0.2])
    label_noise_ps: list[float] = field(
        default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    random_label_max_extra_epochs: int = 0
    histogram_bins: int = 50
    histogram_eps: float = 1e-10
    thresholds: list[float] = field(
        default_factory=lambda: [0.05, 0.1, 0.15, 0.23, 0.3, 0.5, 1.0])
    source_hidden: list[int] = field(default_factory=lambda: [32])
    source_seed_offset: int = 9973

    @staticmethod
    def from_file(path, seed_override: int | None = None,
                  out_override=None) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed config {path}: {e}") from e
        return ExperimentConfig.from_dict(doc, seed_override, out_override)

    @staticmethod
    def from_dict(doc: dict, seed_override: int | None = None,
                  out_override=None) -> "ExperimentConfig":
        _check_keys(doc, {
            "version", "seed", "out_dir", "dataset", "arch_hidden", "train",
            "classes", "noise_inputs", "epsilons", "label_noise_ps",
            "random_label_max_extra_epochs", "histogram_bins", "histogram_eps",
            "thresholds", "source_hidden", "source_seed_offset",
        }, "config")
        if doc.get("version") != SCHEMA_VERSION:
            raise ConfigError(
                f"config version {doc.get('version')!r}, expected {SCHEMA_VERSION}")
        if "seed" not in doc:
            raise ConfigError("config must carry an explicit seed")
        seed = int(doc["seed"]) if seed_override is None else int(seed_override)

        ds_doc = doc.get("dataset", {})
        _check_keys(ds_doc, {
            "kind", "train_size", "test_size", "blob_classes", "blob_dim",
            "blob_separation", "blob_train_per_class", "blob_test_per_class",
        }, "dataset")
        kind = ds_doc.get("kind", "digits")
        if kind not in ("mnist", "digits", "blobs"):
            raise ConfigError(f"unknown dataset kind {kind!r}")
        dataset = DatasetConfig(
            kind=kind,
            train_size=ds_doc.get("train_size"),
            test_size=ds_doc.get("test_size", 200),
            blob_classes=ds_doc.get("blob_classes", 4),
            blob_dim=ds_doc.get("blob_dim", 8),
            blob_separation=ds_doc.get("blob_separation", 10.0),
            blob_train_per_class=ds_doc.get("blob_train_per_class", 50),
            blob_test_per_class=ds_doc.get("blob_test_per_class", 25),
        )

        classes = []
        for i, cd in enumerate(doc.get("classes", [])):
            _check_keys(cd, {"name", "trainable_layers", "fine_tune"},
                        f"classes[{i}]")
            if "trainable_layers" not in cd:
                raise ConfigError(f"classes[{i}]: trainable_layers required")
            classes.append(ClassConfig(
                name=cd.get("name", f"class{i}"),
                trainable_layers=int(cd["trainable_layers"]),
                fine_tune=_hyper_from(cd.get("fine_tune", {}),
                                      f"classes[{i}].fine_tune", seed),
            ))
        if not classes:
            raise ConfigError("config needs at least one hypothesis class")

        out_dir = Path(out_override if out_override is not None
                       else doc.get("out_dir", "results"))
        return ExperimentConfig(
            seed=seed,
            out_dir=out_dir,
            dataset=dataset,
            arch_hidden=[int(h) for h in doc.get("arch_hidden", [10])],
            train=_hyper_from(doc.get("train", {}), "train", seed),
            classes=classes,
            noise_inputs=doc.get("noise_inputs", 100),
            epsilons=[float(e) for e in doc.get("epsilons", [0.0, 0.05, 0.2])],
            label_noise_ps=[float(p) for p in doc.get(
                "label_noise_ps", [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])],
            random_label_max_extra_epochs=doc.get(
                "random_label_max_extra_epochs", 0),
            histogram_bins=doc.get("histogram_bins", 50),
            histogram_eps=doc.get("histogram_eps", 1e-10),
            thresholds=[float(t) for t in doc.get(
                "thresholds", [0.05, 0.1, 0.15, 0.23, 0.3, 0.5, 1.0])],
            source_hidden=[int(h) for h in doc.get("source_hidden", [32])],
            source_seed_offset=doc.get("source_seed_offset", 9973),
        )
