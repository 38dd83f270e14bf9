"""Pipeline configuration read from TOML.

Every key is optional; defaults are listed in :data:`DEFAULT_GRIDS` and on
the dataclasses below. A minimal file::

    seed = 0
    out_dir = "runs/demo"

    [synth]
    n_entities = 1100
    n_sectors = 50

    [gmm]
    h_min = 2
    h_max = 15
"""

from __future__ import annotations

import itertools
import sys
from collections.abc import Mapping
from dataclasses import dataclass, field, fields
from pathlib import Path

from .classifiers import MODELS
from .data import Granularity
from .errors import ConfigInvalid
from .gmm import ALL_STRUCTURES, CovarianceStructure
from .synth import PopulationConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_GRIDS = {
    "knn": {"k": [3, 5, 9, 15, 25]},
    "forest": {"mtry": ["sqrt", "quarter", "half"], "n_trees": [500], "min_node": [5]},
    "boost": {"max_depth": [2, 3], "n_rounds": [100, 200, 400], "learning_rate": [0.1]},
}


def expand_grid(axes: Mapping[str, list]) -> list[dict]:
    """Cartesian product of parameter axes, in key order then value order."""
    keys = list(axes)
    for k in keys:
        if not isinstance(axes[k], list) or not axes[k]:
            raise ConfigInvalid(f"grid axis {k!r} must be a non-empty list")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(axes[k] for k in keys))]


@dataclass(frozen=True)
class GmmSettings:
    h_min: int = 2
    h_max: int = 15
    structures: tuple[str, ...] = tuple(s.name for s in ALL_STRUCTURES)
    tol: float = 1e-6
    max_iter: int = 500
    reg: float = 1e-6

    def __post_init__(self):
        if not 1 <= self.h_min <= self.h_max:
            raise ConfigInvalid("gmm needs 1 <= h_min <= h_max")
        if not self.structures:
            raise ConfigInvalid("gmm.structures is empty")
        for s in self.structures:
            try:
                CovarianceStructure.parse(s)
            except ValueError as exc:
                raise ConfigInvalid(str(exc)) from None
        if not self.tol > 0 or self.max_iter < 1 or self.reg < 0:
            raise ConfigInvalid("gmm needs tol > 0, max_iter >= 1 and reg >= 0")

    @property
    def h_range(self) -> range:
        return range(self.h_min, self.h_max + 1)


@dataclass(frozen=True)
class EvalSettings:
    k: int = 10
    test_fraction: float = 0.25
    metric: str = "accuracy"

    def __post_init__(self):
        if self.k < 2:
            raise ConfigInvalid("eval.k must be >= 2")
        if not 0 < self.test_fraction < 1:
            raise ConfigInvalid("eval.test_fraction must lie in (0, 1)")
        if self.metric not in ("accuracy", "kappa"):
            raise ConfigInvalid("eval.metric must be 'accuracy' or 'kappa'")


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: Path = Path("profilecast-out")
    readings: Path | None = None
    synth: PopulationConfig | None = None
    seed: int = 0
    granularities: tuple[Granularity, ...] = (Granularity.DISAGGREGATED, Granularity.AGGREGATED)
    classifiers: tuple[str, ...] = ("knn", "forest", "boost")
    features: str = "mean"
    coverage: float = 0.9
    gmm: GmmSettings = field(default_factory=GmmSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    grids: Mapping[str, list[dict]] = field(
        default_factory=lambda: {m: expand_grid(a) for m, a in DEFAULT_GRIDS.items()}
    )

    def __post_init__(self):
        if (self.readings is None) == (self.synth is None):
            raise ConfigInvalid("give exactly one of 'readings' or a [synth] table")
        if not self.granularities:
            raise ConfigInvalid("at least one granularity is required")
        if not self.classifiers:
            raise ConfigInvalid("at least one classifier is required")
        for c in self.classifiers:
            if c not in MODELS:
                raise ConfigInvalid(f"unknown classifier {c!r}; expected one of {', '.join(MODELS)}")
        if self.features not in ("mean", "mean+std"):
            raise ConfigInvalid("features must be 'mean' or 'mean+std'")
        if not 0 <= self.coverage <= 1:
            raise ConfigInvalid("coverage must lie in [0, 1]")
        if not 0 <= self.seed < 2**63:
            raise ConfigInvalid("seed must be a non-negative 63-bit integer")

    @classmethod
    def from_dict(cls, raw: Mapping, base: Path | None = None) -> "PipelineConfig":
        """Build from parsed TOML; relative paths resolve against ``base``."""
        raw = dict(raw)
        base = Path(".") if base is None else base
        allowed = {f.name for f in fields(cls)} | {"grid"}
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigInvalid(f"unknown option(s): {', '.join(sorted(unknown))}")
        kw: dict = {}
        for key in ("seed", "features", "coverage"):
            if key in raw:
                kw[key] = raw[key]
        if "out_dir" in raw:
            kw["out_dir"] = base / raw["out_dir"]
        if "readings" in raw:
            kw["readings"] = base / raw["readings"]
        if "synth" in raw:
            kw["synth"] = PopulationConfig.from_dict(raw["synth"])
        try:
            if "granularities" in raw:
                kw["granularities"] = tuple(Granularity(g) for g in raw["granularities"])
            if "classifiers" in raw:
                kw["classifiers"] = tuple(raw["classifiers"])
            if "gmm" in raw:
                gmm = dict(raw["gmm"])
                if "structures" in gmm:
                    gmm["structures"] = tuple(gmm["structures"])
                kw["gmm"] = GmmSettings(**gmm)
            if "eval" in raw:
                kw["eval"] = EvalSettings(**raw["eval"])
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(str(exc)) from None
        grid_axes = {m: dict(a) for m, a in DEFAULT_GRIDS.items()}
        for model, axes in dict(raw.get("grid", {})).items():
            if model not in grid_axes:
                raise ConfigInvalid(f"grid for unknown classifier {model!r}")
            grid_axes[model].update(axes)
        kw["grids"] = {m: expand_grid(a) for m, a in grid_axes.items()}
        return cls(**kw)

    def to_dict(self) -> dict:
        """Plain data view, used in the run manifest."""
        out = {
            "seed": self.seed,
            "granularities": [g.value for g in self.granularities],
            "classifiers": list(self.classifiers),
            "features": self.features,
            "coverage": self.coverage,
            "gmm": {
                "h_min": self.gmm.h_min, "h_max": self.gmm.h_max,
                "structures": list(self.gmm.structures), "tol": self.gmm.tol,
                "max_iter": self.gmm.max_iter, "reg": self.gmm.reg,
            },
            "eval": {"k": self.eval.k, "test_fraction": self.eval.test_fraction, "metric": self.eval.metric},
            "grids": {m: list(g) for m, g in self.grids.items()},
        }
        if self.readings is not None:
            out["readings"] = self.readings.name
        if self.synth is not None:
            s = self.synth
            out["synth"] = {
                "n_entities": s.n_entities, "n_sectors": s.n_sectors,
                "sector_mixing": s.sector_mixing.value, "seed": s.seed,
                "season_amplitude": s.season_amplitude, "weekend": s.weekend,
                "noise_scale": s.noise_scale, "mixing": list(s.mixing),
                "archetypes": [a.name or str(a.id) for a in s.archetypes],
            }
        return out


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    return PipelineConfig.from_dict(raw, base=path.parent)


def load_synth_config(path) -> PopulationConfig:
    """A synth config is either a bare table of population fields or has a [synth] table."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    return PopulationConfig.from_dict(raw.get("synth", raw))
