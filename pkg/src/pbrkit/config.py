"""Run configuration: defaults, YAML loading and validation."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError

ENV_CONFIG = "PBRKIT_CONFIG"
STAGES = ("ingest", "metrics", "decomposition", "attribution", "classification", "simulation", "network")


@dataclass
class RunConfig:
    panel: str | None = None
    predictors: str | None = None
    components: str | None = None
    blocks: str | None = None
    schema: dict = field(default_factory=dict)
    delimiter: str = "auto"
    relax_years: bool = False
    period: tuple[int, int] | None = None
    bin_width: int = 2
    over_threshold: float = 0.5
    expected_threshold: float = 0.3
    significance: float = 0.1
    multi_factor: float = 0.7
    cis_bootstrap: int = 1000
    trend_bootstrap: int = 200
    shapley_permutations: int = 100
    shapley_bootstrap: int = 100
    shapley_bootstrap_permutations: int = 50
    simulation_bootstrap: int = 200
    ranking: str = "log"
    min_weight: int = 2
    status_rule: str = "modal"
    louvain_starts: int = 1
    noise_bootstrap: int = 100
    seed: int = 42
    threads: int = 1
    out: str = "results"
    stages: tuple[str, ...] = STAGES

    def validate(self, check_files: bool = True) -> "RunConfig":
        if self.period is not None:
            lo, hi = self.period
            if lo > hi:
                raise ConfigError(f"period start {lo} after end {hi}")
        if self.bin_width < 1:
            raise ConfigError("bin_width must be >= 1")
        if not 0 < self.expected_threshold <= self.over_threshold:
            raise ConfigError("need 0 < expected_threshold <= over_threshold")
        if not 0 < self.significance < 1 or not 0 < self.multi_factor <= 1:
            raise ConfigError("significance and multi_factor must lie in (0, 1)")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.ranking not in ("log", "abs", "participants"):
            raise ConfigError(f"unknown ranking {self.ranking!r}")
        if self.status_rule not in ("modal", "mean_residual"):
            raise ConfigError(f"unknown status_rule {self.status_rule!r}")
        bad = set(self.stages) - set(STAGES)
        if bad:
            raise ConfigError(f"unknown stages {sorted(bad)}")
        if check_files:
            if self.panel is None:
                raise ConfigError("no panel file configured")
            for name in ("panel", "predictors", "components", "blocks"):
                path = getattr(self, name)
                if path is not None and not Path(path).is_file():
                    raise ConfigError(f"{name} file not found: {path}")
            needs = {"attribution", "classification"} & set(self.stages)
            if needs and self.predictors is None and tuple(self.stages) != STAGES:
                raise ConfigError(f"stages {sorted(needs)} need a predictors file")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["stages"] = list(self.stages)
        d["period"] = list(self.period) if self.period else None
        return d

    def digest(self) -> str:
        """sha256 of the canonical JSON form, excluding the output directory and thread count."""
        d = self.to_dict()
        d.pop("out")
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _coerce(raw: Mapping[str, Any], base: Path | None) -> dict:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    out = dict(raw)
    for key in ("panel", "predictors", "components", "blocks"):
        if out.get(key) is not None and base is not None and not Path(out[key]).is_absolute():
            out[key] = str(base / out[key])
    if out.get("period") is not None:
        p = out["period"]
        if isinstance(p, str):
            p = p.replace(":", "-").split("-")
        if not isinstance(p, (list, tuple)) or len(p) != 2:
            raise ConfigError(f"period must have two years, got {out['period']!r}")
        try:
            out["period"] = (int(p[0]), int(p[1]))
        except (TypeError, ValueError):
            raise ConfigError(f"period years must be integers, got {out['period']!r}") from None
    if "stages" in out:
        out["stages"] = tuple(out["stages"])
    return out


def load_config(path: str | os.PathLike | None = None, **overrides) -> RunConfig:
    """Read YAML config (explicit path, then ``$PBRKIT_CONFIG``) and apply overrides.

    Relative input paths in the file are resolved against the file's directory.
    """
    path = path or os.environ.get(ENV_CONFIG)
    raw: dict = {}
    base = None
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {p}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config {p} must be a mapping")
        base = p.parent
    merged = _coerce(raw, base)
    merged.update(_coerce({k: v for k, v in overrides.items() if v is not None}, None))
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
