"""Seeded synthetic smart-meter populations with known archetype labels.

Each entity belongs to one archetype (a characteristic 48-slot daily shape).
A reading is::

    max(0, base[slot] * season(day) * weekend(day) + day_effect + slot_noise)

with a per-day Gaussian shift and per-cell Gaussian noise. All randomness
flows from one seed through :class:`numpy.random.SeedSequence` spawning, so
every entity has its own independent stream.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from .data import N_DAYS, N_SLOTS, MeterSeries
from .errors import ConfigInvalid

HOURS = np.arange(N_SLOTS) / 2.0

# Default archetype shares, in archetype order. The fifth is 19.9% rather
# than 20.0% so the vector sums to exactly 1.
DEFAULT_MIXING = (0.157, 0.142, 0.014, 0.059, 0.199, 0.034, 0.136, 0.225, 0.034)


class SectorMixing(str, enum.Enum):
    HOMOGENEOUS = "homogeneous"
    MIXED = "mixed"


@dataclass(frozen=True)
class Archetype:
    id: int
    base_profile: tuple[float, ...]
    day_noise_sd: float = 0.01
    slot_noise_sd: float = 0.1
    weekend_scale: float = 1.0
    name: str = ""

    def __post_init__(self):
        base = np.asarray(self.base_profile, dtype=np.float64)
        if base.shape != (N_SLOTS,):
            raise ConfigInvalid(f"archetype {self.id}: base_profile needs {N_SLOTS} values")
        if not np.all(np.isfinite(base)) or np.any(base < 0):
            raise ConfigInvalid(f"archetype {self.id}: base_profile must be finite and >= 0")
        if self.day_noise_sd < 0 or self.slot_noise_sd < 0:
            raise ConfigInvalid(f"archetype {self.id}: noise sds must be >= 0")
        if not self.weekend_scale > 0:
            raise ConfigInvalid(f"archetype {self.id}: weekend_scale must be positive")
        object.__setattr__(self, "base_profile", tuple(float(v) for v in base))

    @property
    def profile(self) -> np.ndarray:
        return np.array(self.base_profile)


def _bump(center: float, width: float) -> np.ndarray:
    # circular in hours so night peaks wrap past midnight
    d = np.abs(HOURS - center)
    d = np.minimum(d, 24.0 - d)
    return np.exp(-0.5 * (d / width) ** 2)


def _plateau(start: float, end: float, edge: float = 0.75) -> np.ndarray:
    rise = 1.0 / (1.0 + np.exp(-(HOURS - start) / edge))
    fall = 1.0 / (1.0 + np.exp((HOURS - end) / edge))
    return rise * fall


def default_archetypes() -> list[Archetype]:
    """Nine daily shapes, ordered to line up with :data:`DEFAULT_MIXING`."""
    shapes = [
        ("evening-peak", 0.12 + 0.90 * _bump(19.0, 1.5), 1.10),
        ("morning-peak", 0.12 + 0.80 * _bump(7.5, 1.0), 0.90),
        ("very-low", 0.04 + 0.04 * _bump(19.0, 2.0), 1.00),
        ("night-active", 0.12 + 0.60 * _bump(1.5, 2.0), 1.05),
        ("flat-low", 0.18 + 0.04 * _bump(19.0, 3.0), 1.00),
        ("daytime-high", 0.15 + 0.60 * _plateau(9.0, 17.0), 1.00),
        ("flat-high", 0.55 + 0.05 * _bump(19.0, 3.0), 1.00),
        ("dual-peak", 0.12 + 0.60 * _bump(8.0, 1.0) + 0.70 * _bump(19.0, 1.5), 1.20),
        ("high-variance", 0.25 + 0.30 * _bump(13.0, 4.0), 1.30),
    ]
    out = []
    for i, (name, base, weekend) in enumerate(shapes):
        day_sd, slot_sd = (0.04, 0.50) if name == "high-variance" else (0.01, 0.10)
        out.append(Archetype(i, tuple(base), day_sd, slot_sd, weekend, name))
    return out


@dataclass(frozen=True)
class PopulationConfig:
    archetypes: tuple[Archetype, ...] = field(default_factory=lambda: tuple(default_archetypes()))
    mixing: tuple[float, ...] = DEFAULT_MIXING
    n_entities: int = 1100
    n_sectors: int = 50
    sector_mixing: SectorMixing = SectorMixing.MIXED
    seed: int = 0
    season_amplitude: float = 0.2
    weekend: bool = True
    noise_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "archetypes", tuple(self.archetypes))
        object.__setattr__(self, "mixing", tuple(float(m) for m in self.mixing))
        try:
            object.__setattr__(self, "sector_mixing", SectorMixing(self.sector_mixing))
        except ValueError:
            raise ConfigInvalid(f"sector_mixing must be 'homogeneous' or 'mixed', got {self.sector_mixing!r}") from None
        self.validate()

    def validate(self) -> None:
        if not self.archetypes:
            raise ConfigInvalid("at least one archetype is required")
        if len(self.mixing) != len(self.archetypes):
            raise ConfigInvalid(f"{len(self.mixing)} mixing weights for {len(self.archetypes)} archetypes")
        if any(not math.isfinite(m) or m < 0 for m in self.mixing):
            raise ConfigInvalid("mixing weights must be finite and non-negative")
        if abs(math.fsum(self.mixing) - 1.0) > 1e-12:
            raise ConfigInvalid(f"mixing must sum to 1, sums to {math.fsum(self.mixing)!r}")
        if self.n_entities < 1:
            raise ConfigInvalid("n_entities must be >= 1")
        if not 1 <= self.n_sectors <= self.n_entities:
            raise ConfigInvalid("n_sectors must satisfy 1 <= n_sectors <= n_entities")
        if not 0 <= self.season_amplitude < 1:
            raise ConfigInvalid("season_amplitude must lie in [0, 1)")
        if self.noise_scale < 0:
            raise ConfigInvalid("noise_scale must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigInvalid("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "PopulationConfig":
        raw = dict(raw)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known - {"archetype"}
        if unknown:
            raise ConfigInvalid(f"unknown synth option(s): {', '.join(sorted(unknown))}")
        tables = raw.pop("archetype", None) or raw.pop("archetypes", None)
        if tables:
            try:
                raw["archetypes"] = tuple(Archetype(**t) for t in tables)
            except TypeError as exc:
                raise ConfigInvalid(f"bad archetype table: {exc}") from None
            if "mixing" not in raw:
                raise ConfigInvalid("custom archetypes need an explicit mixing vector")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from None


def season_curve(amplitude: float = 0.2) -> np.ndarray:
    """Smooth annual multiplier in ``[1 - amplitude, 1 + amplitude]``, peaking on day 0."""
    return 1.0 + amplitude * np.cos(2.0 * np.pi * np.arange(N_DAYS) / N_DAYS)


def is_weekend(days=None) -> np.ndarray:
    days = np.arange(N_DAYS) if days is None else np.asarray(days)
    return days % 7 >= 5


def assign_sectors(archetype_ids, n_sectors: int, mode=SectorMixing.MIXED, seed=0) -> np.ndarray:
    """Sector index per entity.

    ``mixed`` draws sectors uniformly at random. ``homogeneous`` apportions
    sectors to archetypes (D'Hondt on member counts, at least one sector per
    present archetype when there are enough sectors) and deals each
    archetype's shuffled members round-robin over its own sectors.
    """
    if n_sectors < 1:
        raise ValueError("n_sectors must be >= 1")
    arch = np.asarray(archetype_ids, dtype=np.int64)
    rng = np.random.default_rng(seed)
    mode = SectorMixing(mode)
    if mode is SectorMixing.MIXED:
        return rng.integers(0, n_sectors, size=arch.size)

    present, counts = np.unique(arch, return_counts=True)
    out = np.empty(arch.size, dtype=np.int64)
    if n_sectors < present.size:
        # not enough sectors for purity: whole archetypes share sectors
        for k, a in enumerate(present):
            out[arch == a] = k % n_sectors
        return out

    seats = np.ones(present.size, dtype=np.int64)
    for _ in range(n_sectors - present.size):
        quotient = np.where(seats < counts, counts / (seats + 1), -np.inf)
        seats[int(np.argmax(quotient))] += 1
    first = np.concatenate([[0], np.cumsum(seats)[:-1]])
    for k, a in enumerate(present):
        members = rng.permutation(np.flatnonzero(arch == a))
        out[members] = first[k] + np.arange(members.size) % seats[k]
    return out


def _entity_width(n: int) -> int:
    return max(4, len(str(n - 1)))


def generate(config: PopulationConfig) -> tuple[list[MeterSeries], dict[str, int]]:
    """Build the population; returns the series and ``entity_id -> archetype id``."""
    config.validate()
    root = np.random.SeedSequence(config.seed)
    draw_seq, sector_seq, entity_root = root.spawn(3)
    entity_seqs = entity_root.spawn(config.n_entities)

    draw_rng = np.random.default_rng(draw_seq)
    which = draw_rng.choice(len(config.archetypes), size=config.n_entities, p=np.asarray(config.mixing))
    sector_idx = assign_sectors(which, config.n_sectors, config.sector_mixing, sector_seq)

    season = season_curve(config.season_amplitude)
    weekend = is_weekend()
    ew = _entity_width(config.n_entities)
    sw = _entity_width(config.n_sectors)

    series, truth = [], {}
    for i in range(config.n_entities):
        a = config.archetypes[which[i]]
        scale = np.where(weekend, a.weekend_scale, 1.0) if config.weekend else np.ones(N_DAYS)
        level = np.outer(season * scale, a.profile)
        rng = np.random.default_rng(entity_seqs[i])
        day_effect = rng.normal(0.0, a.day_noise_sd * config.noise_scale, size=(N_DAYS, 1))
        slot_noise = rng.normal(0.0, a.slot_noise_sd * config.noise_scale, size=(N_DAYS, N_SLOTS))
        values = np.maximum(0.0, level + day_effect + slot_noise)
        eid = f"E{i:0{ew}d}"
        series.append(MeterSeries(eid, f"S{sector_idx[i]:0{sw}d}", values))
        truth[eid] = int(a.id)
    return series, truth


def noiseless(config: PopulationConfig) -> PopulationConfig:
    """Same population with noise, season and weekend effects switched off."""
    return replace(config, noise_scale=0.0, season_amplitude=0.0, weekend=False)


def write_truth(truth: Mapping[str, int], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("entity_id,archetype_id\n")
        for eid in sorted(truth):
            fh.write(f"{eid},{truth[eid]}\n")


def read_truth(path) -> dict[str, int]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "entity_id,archetype_id":
            raise ValueError(f"unexpected truth header {header!r}")
        return {e: int(a) for e, a in (line.strip().split(",") for line in fh if line.strip())}


def mixing_weighted_profile(archetypes: Sequence[Archetype], mixing: Sequence[float]) -> np.ndarray:
    return np.sum([m * a.profile for a, m in zip(archetypes, mixing)], axis=0)
