"""One YAML configuration file drives every pipeline stage.

Config files are strict: every field must be present explicitly (no silent
defaults when loading) and unknown fields are rejected by name, so a file
always states exactly what a run will do.  Programmatic defaults exist only
for constructing fresh configs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from .channel import ScenarioConfig
from .errors import ValidationError
from .evaluation import SweepSpec
from .model import TrainConfig


@dataclass
class PathsConfig:
    out_dir: str = "out"
    dataset_file: str = "dataset.bin"
    model_file: str = "model.bin"


@dataclass
class RunConfig:
    seed: int = 12345
    n_samples: int = 100_000
    m: int = 12
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def validate(self) -> None:
        self.scenario.validate()
        self.train.validate()
        self.sweep.validate(self.scenario.n_beams)
        if self.n_samples < 1:
            raise ValidationError("dataset.n_samples: must be >= 1")
        if not 1 <= self.m <= self.scenario.n_beams:
            raise ValidationError(
                f"dataset.m: must lie in [1, {self.scenario.n_beams}]"
            )

    def apply_seed(self, seed: int) -> None:
        """Reseed every stage coherently from one global seed."""
        self.seed = seed
        self.scenario.rng_seed = seed
        self.train.rng_seed = seed + 1
        self.sweep.rng_seed = seed + 2

    def dataset_path(self) -> str:
        return _resolve(self.paths.out_dir, self.paths.dataset_file)

    def model_path(self) -> str:
        return _resolve(self.paths.out_dir, self.paths.model_file)


def _resolve(out_dir: str, name: str) -> str:
    import os

    if os.path.isabs(name):
        return name
    return os.path.join(out_dir, name)


def default_run_config() -> RunConfig:
    return RunConfig()


_SECTION_FIELDS = {
    "scenario": [f.name for f in dataclasses.fields(ScenarioConfig)],
    "train": [f.name for f in dataclasses.fields(TrainConfig)],
    "sweep": [f.name for f in dataclasses.fields(SweepSpec)],
    "paths": [f.name for f in dataclasses.fields(PathsConfig)],
    "dataset": ["n_samples", "m"],
}
_TOP_FIELDS = {"seed", "dataset", "scenario", "train", "sweep", "paths"}


def _check_fields(section: str, data: dict, expected: list[str]) -> None:
    if not isinstance(data, dict):
        raise ValidationError(f"{section}: expected a mapping")
    missing = [name for name in expected if name not in data]
    if missing:
        raise ValidationError(f"{section}.{missing[0]}: field is required")
    unknown = [name for name in data if name not in expected]
    if unknown:
        raise ValidationError(f"{section}.{unknown[0]}: unknown field")


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a mapping")
    missing = [name for name in _TOP_FIELDS if name not in data]
    if missing:
        raise ValidationError(f"{sorted(missing)[0]}: field is required")
    unknown = [name for name in data if name not in _TOP_FIELDS]
    if unknown:
        raise ValidationError(f"{sorted(unknown)[0]}: unknown field")

    for section, expected in _SECTION_FIELDS.items():
        _check_fields(section, data[section], expected)

    scenario_data = dict(data["scenario"])
    scenario_data["tx_position"] = tuple(
        float(v) for v in scenario_data["tx_position"]
    )
    scenario_data["beam_azimuths_deg"] = [
        float(v) for v in scenario_data["beam_azimuths_deg"]
    ]
    cfg = RunConfig(
        seed=int(data["seed"]),
        n_samples=int(data["dataset"]["n_samples"]),
        m=int(data["dataset"]["m"]),
        scenario=ScenarioConfig(**scenario_data),
        train=TrainConfig(**data["train"]),
        sweep=SweepSpec(
            psr_grid_db=[float(v) for v in data["sweep"]["psr_grid_db"]],
            attacks=[str(v) for v in data["sweep"]["attacks"]],
            k_values=[int(v) for v in data["sweep"]["k_values"]],
            n_test_samples=int(data["sweep"]["n_test_samples"]),
            rng_seed=int(data["sweep"]["rng_seed"]),
        ),
        paths=PathsConfig(**{k: str(v) for k, v in data["paths"].items()}),
    )
    cfg.validate()
    return cfg


def run_config_to_dict(cfg: RunConfig) -> dict:
    return {
        "seed": cfg.seed,
        "dataset": {"n_samples": cfg.n_samples, "m": cfg.m},
        "scenario": {
            **dataclasses.asdict(cfg.scenario),
            "tx_position": [cfg.scenario.tx_position[0],
                            cfg.scenario.tx_position[1]],
        },
        "train": dataclasses.asdict(cfg.train),
        "sweep": dataclasses.asdict(cfg.sweep),
        "paths": dataclasses.asdict(cfg.paths),
    }


def save_run_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(run_config_to_dict(cfg), fh, sort_keys=False)
