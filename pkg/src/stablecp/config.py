"""Run configuration: TOML files validated against ``run_config.schema.json``."""

from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema

from .experiments import Scenario, ScenarioParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUT_DIR_ENV = "STABLECP_OUT_DIR"
THREADS_ENV = "STABLECP_THREADS"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def load_schema() -> dict:
    return json.loads(resources.files("stablecp").joinpath("run_config.schema.json").read_text())


@dataclass
class RunConfig:
    scenario: Scenario
    methods: tuple[str, ...] = ("minse",)
    seeds: tuple[int, ...] = (0,)
    out_dir: Path = Path("out")
    per_seed_csv: str = "per_seed.csv"
    summary_json: str = "summary.json"
    trace_csv: str = "trace.csv"
    sets_csv: str = "recalibrated.csv"
    data: Path | None = None
    split: dict[str, float] = field(default_factory=lambda: {"train": 0.5, "cal": 0.25, "aux": 0.1})
    noise_sd: float = 1.0
    threads: int = 1

    @property
    def params(self) -> ScenarioParams:
        return self.scenario.params


def _field_of(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        path = ".".join(filter(None, [path, extra[0] if extra else ""]))
    return path or "<root>"


def parse_config(raw: dict, base_dir: Path | None = None) -> RunConfig:
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as err:
        raise ConfigError(_field_of(err), err.message) from None

    if "scenario" not in raw:
        raise ConfigError("scenario", "missing required table")
    params = dict(raw["scenario"].get("params", {}))
    params.update(raw.get("budget", {}))
    if "scale" in raw:
        params["scale"] = raw["scale"]
    try:
        sp = ScenarioParams.from_dict(params)
    except ValueError as err:
        raise ConfigError("scenario.params", str(err)) from None
    base_seed = int(raw.get("seed", 0))
    scenario = Scenario(raw["scenario"]["kind"], sp, base_seed)

    seeds_raw = raw.get("seeds", 1)
    seeds = tuple(range(base_seed, base_seed + seeds_raw)) if isinstance(seeds_raw, int) else tuple(seeds_raw)

    out = raw.get("output", {})
    out_dir = Path(os.environ.get(OUT_DIR_ENV) or out.get("dir", "out"))
    data = raw.get("data")
    if data is not None:
        data = Path(data)
        if base_dir is not None and not data.is_absolute():
            data = base_dir / data
    split = {"train": 0.5, "cal": 0.25, "aux": 0.1}
    split.update(raw.get("split", {}))
    if sum(split.values()) >= 1:
        raise ConfigError("split", "train + cal + aux must leave a test fraction")
    threads = int(os.environ.get(THREADS_ENV) or raw.get("threads", 1))
    if threads < 1:
        raise ConfigError("threads", "must be >= 1")
    return RunConfig(
        scenario=scenario,
        methods=tuple(raw.get("methods", ["minse"])),
        seeds=seeds,
        out_dir=out_dir,
        per_seed_csv=out.get("per_seed", "per_seed.csv"),
        summary_json=out.get("summary", "summary.json"),
        trace_csv=out.get("trace", "trace.csv"),
        sets_csv=out.get("sets", "recalibrated.csv"),
        data=data,
        split=split,
        noise_sd=float(raw.get("noise_sd", 1.0)),
        threads=threads,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("--config", f"no such file: {path}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError("--config", f"not valid TOML: {err}") from None
    return parse_config(raw, path.parent)


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    """Restart the seed sequence at ``seed``, keeping the number of seeds."""
    seeds = tuple(range(seed, seed + len(cfg.seeds)))
    return replace(cfg, seeds=seeds, scenario=replace(cfg.scenario, seed=seed))
