"""Run configuration for the command-line driver.

A run is configured by a JSON document; every field is optional and falls
back to the defaults below. Relative paths are resolved against the
directory containing the config file. Schema::

    {
      "seed": 0,                      # master seed (unsigned 64-bit)
      "threads": 1,                   # worker processes for episode fits
      "out": "out",                   # output directory
      "box":   {"lower": [0, 0, 0], "upper": [0.6, 6, 10]},
      "chain": {"n_samples": 20000, "burn_in": 5000, "step_fraction": 0.01,
                "grid_per_dim": 10, "sigma2_iterations": 1, "horizon": 14},
      "qc":    {"max_extension": 10, "start_threshold_quantile": 0.5,
                "drop_if_missing": true},
      "sweep": {"snr_grid": [1, 2, 5, 10, 20, 50], "reps": 50, "n_days": 92,
                "truth_margin": 0.05},
      "mle":   {"n_draws": 100000},
      "data":  {"watersheds": null, "discharge_dir": null, "rainfall_dir": null,
                "cells": null, "years": null},
      "track": {"fits": null, "min_episodes": 8},
      "survey": {"min_nse": 0.2, "min_episodes": 5}
    }

``data.watersheds`` is a metadata CSV (``id,name,lat,lon,area_km2``);
discharge for watershed ``ID`` is read from ``discharge_dir/ID.csv`` in
m^3/s; rainfall is read from ``rainfall_dir/STATION.csv`` in mm/day, where
STATION is the watershed id, or the nearest cell id when ``data.cells``
(``id,lat,lon``) is given. ``data.years`` is ``[first, last]`` inclusive or
null for every year present in the discharge record.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .inference import ChainConfig, ParamBox
from .ingest import EpisodeQcPolicy

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "threads": 1,
    "out": "out",
    "box": {"lower": [0.0, 0.0, 0.0], "upper": [0.6, 6.0, 10.0]},
    "chain": {"n_samples": 20_000, "burn_in": 5_000, "step_fraction": 0.01, "grid_per_dim": 10,
              "sigma2_iterations": 1, "horizon": 14},
    "qc": {"max_extension": 10, "start_threshold_quantile": 0.5, "drop_if_missing": True},
    "sweep": {"snr_grid": [1.0, 2.0, 5.0, 10.0, 20.0, 50.0], "reps": 50, "n_days": 92,
              "truth_margin": 0.05},
    "mle": {"n_draws": 100_000},
    "data": {"watersheds": None, "discharge_dir": None, "rainfall_dir": None, "cells": None,
             "years": None},
    "track": {"fits": None, "min_episodes": 8},
    "survey": {"min_nse": 0.2, "min_episodes": 5},
}

# Keys that change where or how fast a run happens but not what it computes.
_UNHASHED = ("out", "threads")
_PATH_KEYS = ("watersheds", "discharge_dir", "rainfall_dir", "cells")
_MAX_SEED = 2**64 - 1


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


def _merge(base: dict, update: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key!r} must be an object")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one CLI run.

    Attributes:
        raw: merged config document (defaults + file + overrides).
        base_dir: directory relative paths are resolved against.
    """

    raw: dict
    base_dir: Path

    @classmethod
    def load(cls, path: Optional[str | Path] = None, *, seed: Optional[int] = None,
             out: Optional[str] = None, threads: Optional[int] = None) -> "RunConfig":
        """Read a JSON config (or the defaults when ``path`` is None) and apply overrides."""
        doc: dict = {}
        base_dir = Path.cwd()
        if path is not None:
            path = Path(path)
            try:
                doc = json.loads(path.read_text())
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from None
            if not isinstance(doc, dict):
                raise ConfigError(f"{path}: top level must be an object")
            base_dir = path.resolve().parent
        raw = _merge(DEFAULTS, doc)
        if seed is not None:
            raw["seed"] = seed
        if out is not None:
            # a command-line --out is relative to the working directory
            raw["out"] = str(Path(out).resolve())
        if threads is not None:
            raw["threads"] = threads
        cfg = cls(raw, base_dir)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        seed = self.raw["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed <= _MAX_SEED:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        threads = self.raw["threads"]
        if not isinstance(threads, int) or threads < 1:
            raise ConfigError(f"threads must be a positive integer, got {threads!r}")
        try:
            self.box, self.chain, self.qc  # noqa: B018 -- construct to validate
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        sweep = self.raw["sweep"]
        if not sweep["snr_grid"] or any(not (isinstance(s, (int, float)) and s > 0)
                                        for s in sweep["snr_grid"]):
            raise ConfigError("sweep.snr_grid must be a non-empty list of positive numbers")
        if not isinstance(sweep["reps"], int) or sweep["reps"] < 1:
            raise ConfigError("sweep.reps must be a positive integer")
        if not isinstance(self.raw["mle"]["n_draws"], int) or self.raw["mle"]["n_draws"] < 1:
            raise ConfigError("mle.n_draws must be a positive integer")
        years = self.raw["data"]["years"]
        if years is not None and (len(years) != 2 or years[0] > years[1]):
            raise ConfigError("data.years must be [first, last] with first <= last")

    # --- typed views -------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def threads(self) -> int:
        return self.raw["threads"]

    @property
    def out_dir(self) -> Path:
        return self._resolve(self.raw["out"])

    @property
    def box(self) -> ParamBox:
        b = self.raw["box"]
        return ParamBox(tuple(map(float, b["lower"])), tuple(map(float, b["upper"])))

    @property
    def chain(self) -> ChainConfig:
        return ChainConfig(**self.raw["chain"], rng_seed=self.seed)

    @property
    def qc(self) -> EpisodeQcPolicy:
        return EpisodeQcPolicy(**self.raw["qc"])

    @property
    def horizon(self) -> int:
        return self.raw["chain"]["horizon"]

    def section(self, name: str) -> dict:
        return self.raw[name]

    def path(self, section: str, key: str, *, required: bool = True) -> Optional[Path]:
        """Resolved path ``raw[section][key]``, checked to exist."""
        value = self.raw[section][key]
        if value is None:
            if required:
                raise ConfigError(f"{section}.{key} is required for this subcommand")
            return None
        path = self._resolve(value)
        if not path.exists():
            raise ConfigError(f"{section}.{key}: path does not exist: {path}")
        return path

    def _resolve(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    # --- provenance --------------------------------------------------------

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every setting that affects results."""
        doc = {k: v for k, v in self.raw.items() if k not in _UNHASHED}
        canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def provenance(self) -> dict:
        from . import __version__

        return {"tool": "iuhtrack", "version": __version__, "config_sha256": self.config_hash,
                "seed": self.seed}
