"""Run configuration: YAML file merged over the bundled defaults, then CLI overrides."""

from __future__ import annotations

import copy
import hashlib
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .econ import CONVENTIONS, PAPER_LITERAL, RiskProfile
from .errors import ConfigError
from .simulate import Scenario, scenario_grid

MODEL_SOURCES = ("published", "fitted")


def default_mapping() -> dict:
    text = resources.files("serfsim").joinpath("default_config.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def _merge(base: dict, override: Mapping, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where + key!r}")
        # bands is a free-form mapping, replaced wholesale
        if isinstance(base[key], dict) and key != "bands":
            if not isinstance(value, Mapping):
                raise ConfigError(f"config key {where + key!r} must be a mapping")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def _float_list(value, key: str) -> list[float]:
    if value is None:
        return []
    if isinstance(value, (int, float)):
        value = [value]
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a list of numbers, got {value!r}") from None


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully resolved settings for one run."""

    trials: Path | None
    costs: Path | None
    bii: Path | None
    control: str
    seed: int
    taus: tuple[float, ...]
    n_boot: int
    rac_min: float
    rac_max: float
    rac_step: float
    w0: float
    convention: str
    model_source: str
    sim_taus: tuple[float, ...]
    bands: tuple[tuple[str, tuple[float, float]], ...]
    n_draws: int
    price_override: tuple[float, ...]
    t_start: int | None
    residual_noise: bool
    out: Path

    @classmethod
    def from_mapping(cls, raw: Mapping[str, Any], base_dir: Path | None = None) -> "RunConfig":
        m = _merge(default_mapping(), raw)
        base_dir = Path(base_dir or ".")

        def path(key):
            v = m["data"][key]
            if v is None:
                return None
            p = Path(os.path.expanduser(str(v)))
            return (p if p.is_absolute() else base_dir / p).resolve()

        try:
            sim, rac = m["simulation"], m["rac"]
            bands = sim["bands"]
            if not isinstance(bands, Mapping) or not bands:
                raise ConfigError("simulation.bands must be a non-empty mapping of level: [lower, upper]")
            cfg = cls(
                trials=path("trials"),
                costs=path("costs"),
                bii=path("bii"),
                control=str(m["data"]["control"]),
                seed=int(m["seed"]),
                taus=tuple(_float_list(m["taus"], "taus")),
                n_boot=int(m["bootstrap"]["n_boot"]),
                rac_min=float(rac["min"]),
                rac_max=float(rac["max"]),
                rac_step=float(rac["step"]),
                w0=float(m["w0"]),
                convention=str(m["convention"]).replace("-", "_"),
                model_source=str(sim["model_source"]),
                sim_taus=tuple(_float_list(sim["taus"], "simulation.taus")),
                bands=tuple((str(k), tuple(_float_list(v, f"simulation.bands.{k}"))) for k, v in bands.items()),
                n_draws=int(sim["n_draws"]),
                price_override=tuple(_float_list(sim["price_override"], "simulation.price_override")),
                t_start=None if sim["t_start"] is None else int(sim["t_start"]),
                residual_noise=bool(sim["residual_noise"]),
                out=Path(str(m["out"])),
            )
        except (TypeError, ValueError, KeyError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"invalid config value: {err}") from None
        cfg.check()
        return cfg

    def check(self) -> None:
        if not self.taus or any(not 0 < t < 1 for t in self.taus):
            raise ConfigError(f"taus must be a non-empty list inside (0, 1), got {list(self.taus)}")
        if self.rac_step <= 0:
            raise ConfigError(f"rac step must be > 0, got {self.rac_step}")
        if self.rac_max < self.rac_min:
            raise ConfigError(f"rac max {self.rac_max} is below rac min {self.rac_min}")
        if self.w0 < 0:
            raise ConfigError(f"w0 must be >= 0, got {self.w0}")
        if self.convention not in CONVENTIONS:
            raise ConfigError(f"convention must be standard or paper-literal, got {self.convention!r}")
        if self.n_draws < 1:
            raise ConfigError(f"n_draws must be >= 1, got {self.n_draws}")
        if self.n_boot != 0 and self.n_boot < 2:
            raise ConfigError(f"bootstrap.n_boot must be 0 (off) or >= 2, got {self.n_boot}")
        if self.model_source not in MODEL_SOURCES:
            raise ConfigError(f"simulation.model_source must be one of {MODEL_SOURCES}, got {self.model_source!r}")
        if not self.sim_taus or any(not 0 < t < 1 for t in self.sim_taus):
            raise ConfigError(f"simulation.taus must lie inside (0, 1), got {list(self.sim_taus)}")
        if any(p <= 0 for p in self.price_override):
            raise ConfigError(f"price overrides must be > 0, got {list(self.price_override)}")
        for level, band in self.bands:
            if len(band) != 2 or not 0 <= band[0] < band[1] <= 1:
                raise ConfigError(f"band {level!r} must be [lower, upper] with 0 <= lower < upper <= 1, got {list(band)}")
        given = [p is not None for p in (self.trials, self.costs, self.bii)]
        if any(given) and not all(given):
            raise ConfigError("data.trials, data.costs and data.bii must be given together (or all null for the fixture)")

    def check_files(self) -> None:
        """Raise FileNotFoundError naming the first missing input file."""
        for p in self.data_paths() or ():
            if not p.is_file():
                raise FileNotFoundError(f"input file not found: {p}")

    def data_paths(self) -> tuple[Path, Path, Path] | None:
        if self.trials is None:
            return None
        return self.trials, self.costs, self.bii

    # -- derived objects ---------------------------------------------------------

    def risk_profile(self) -> RiskProfile:
        return RiskProfile.from_range(self.rac_min, self.rac_max, self.rac_step,
                                      w0=self.w0, convention=self.convention)

    def scenario_grids(self) -> list[list[Scenario]]:
        """The base grid plus one grid per price override."""
        bands = dict(self.bands)
        return [
            scenario_grid(self.n_draws, self.seed, price, self.sim_taus, bands)
            for price in (None, *self.price_override)
        ]

    # -- echo ------------------------------------------------------------------

    def to_mapping(self) -> dict:
        """Effective config, without the output directory, suitable for re-running."""
        s = lambda p: None if p is None else str(p)  # noqa: E731
        return {
            "data": {"trials": s(self.trials), "costs": s(self.costs), "bii": s(self.bii), "control": self.control},
            "seed": self.seed,
            "taus": list(self.taus),
            "bootstrap": {"n_boot": self.n_boot},
            "rac": {"min": self.rac_min, "max": self.rac_max, "step": self.rac_step},
            "w0": self.w0,
            "convention": "paper-literal" if self.convention == PAPER_LITERAL else self.convention,
            "simulation": {
                "model_source": self.model_source,
                "taus": list(self.sim_taus),
                "bands": {k: list(v) for k, v in self.bands},
                "n_draws": self.n_draws,
                "price_override": list(self.price_override),
                "t_start": self.t_start,
                "residual_noise": self.residual_noise,
            },
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_mapping(), sort_keys=False, default_flow_style=None)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_yaml().encode("utf-8")).hexdigest()


def load_config(path=None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read a YAML config (or the defaults) and apply nested ``overrides``."""
    raw: dict = {}
    base_dir = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as err:
            raise ConfigError(f"{path}: not valid YAML ({str(err).splitlines()[0]})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        base_dir = path.resolve().parent
    if overrides:
        raw = _merge(_merge(default_mapping(), raw), overrides)
    return RunConfig.from_mapping(raw, base_dir)
