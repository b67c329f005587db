"""Pipeline parameter sets and the searchable grid space over them.

A ParameterConfig carries everything that shapes map building and
localization; its fingerprint ties persisted maps to the settings they were
built under. A ParameterSpace assigns each tunable a (min, max, step) grid
and supports uniform sampling plus stepwise neighbourhood moves.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .features import DescriptorParams, DetectorParams

MATCHING_VARIANTS = ("nearest", "identity")

# The ten tunable knobs, in their canonical order.
PARAM_NAMES = (
    "query_feature_cap",
    "reference_feature_cap",
    "cell_size",
    "kept_bits",
    "response_threshold",
    "num_scales",
    "edge_rejection",
    "patch_size",
    "sampling_radius",
    "comparison_count",
)

_INT_PARAMS = {"query_feature_cap", "reference_feature_cap", "kept_bits", "num_scales", "comparison_count"}


@dataclass(frozen=True)
class ParameterConfig:
    """Full parameter set for one mapping/localization pipeline."""

    matching_variant: str = "identity"
    query_feature_cap: int = 850
    reference_feature_cap: int = 850
    cell_size: float = 75.0
    kept_bits: int = 15
    response_threshold: float = 0.0008
    num_scales: int = 3
    edge_rejection: float = 8.0
    patch_size: float = 16.0
    sampling_radius: float = 12.0
    comparison_count: int = 32
    pca_dim: int = 16  # used by the nearest variant only

    def __post_init__(self):
        if self.matching_variant not in MATCHING_VARIANTS:
            raise ValueError(f"matching_variant must be one of {MATCHING_VARIANTS}")
        if self.query_feature_cap < 1 or self.reference_feature_cap < 1:
            raise ValueError("feature budgets must be at least 1")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if self.pca_dim < 1:
            raise ValueError("pca_dim must be at least 1")
        # constructing the sub-parameter objects runs their validation
        self.detector_params()
        self.descriptor_params()

    def detector_params(self) -> DetectorParams:
        return DetectorParams(
            response_threshold=self.response_threshold,
            num_scales=self.num_scales,
            edge_rejection=self.edge_rejection,
            patch_size=self.patch_size,
        )

    def descriptor_params(self) -> DescriptorParams:
        return DescriptorParams(
            sampling_radius=self.sampling_radius,
            comparison_count=self.comparison_count,
            kept_bits=self.kept_bits,
        )

    def with_value(self, name: str, value) -> "ParameterConfig":
        return replace(self, **{name: value})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


def config_fingerprint(config: ParameterConfig) -> str:
    """Stable hash of a config; persisted with maps for compatibility checks."""
    canon = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def save_config(config: ParameterConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> ParameterConfig:
    with open(path, encoding="utf-8") as fh:
        return ParameterConfig.from_dict(json.load(fh))


@dataclass(frozen=True)
class GridRange:
    """Inclusive arithmetic grid: lo, lo+step, ..., up to hi."""

    lo: float
    hi: float
    step: float

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.hi < self.lo:
            raise ValueError("hi must not be below lo")

    @property
    def count(self) -> int:
        return int(np.floor((self.hi - self.lo) / self.step + 1e-9)) + 1

    def value(self, index: int, integral: bool = False):
        index = min(max(index, 0), self.count - 1)
        v = self.lo + index * self.step
        return int(round(v)) if integral else float(v)

    def index_of(self, value: float) -> int:
        return min(max(int(round((value - self.lo) / self.step)), 0), self.count - 1)

    def values(self, integral: bool = False) -> list:
        return [self.value(i, integral) for i in range(self.count)]


@dataclass
class ParameterSpace:
    """Grid ranges for the ten tunables plus the fixed pipeline choices.

    The total number of grid configurations is the product of the per-knob
    grid sizes (see ``cardinality``). Construction rejects spaces where a
    sampled kept_bits could exceed a sampled comparison_count, so uniform
    grid sampling never needs rejection.
    """

    ranges: dict = field(default_factory=dict)
    matching_variant: str = "identity"
    pca_dim: int = 16

    def __post_init__(self):
        missing = set(PARAM_NAMES) - set(self.ranges)
        extra = set(self.ranges) - set(PARAM_NAMES)
        if missing or extra:
            raise ValueError(f"space must cover exactly {PARAM_NAMES}; missing={sorted(missing)} extra={sorted(extra)}")
        kb = self.ranges["kept_bits"]
        cc = self.ranges["comparison_count"]
        if kb.hi > cc.lo:
            raise ValueError("max kept_bits must not exceed min comparison_count")

    def cardinality(self) -> int:
        n = 1
        for name in PARAM_NAMES:
            n *= self.ranges[name].count
        return n

    def sample(self, rng: np.random.Generator) -> ParameterConfig:
        """Uniform draw over the grid, independently per knob."""
        values = {}
        for name in PARAM_NAMES:
            r = self.ranges[name]
            values[name] = r.value(int(rng.integers(r.count)), integral=name in _INT_PARAMS)
        return ParameterConfig(
            matching_variant=self.matching_variant, pca_dim=self.pca_dim, **values
        )

    def neighbor_values(self, name: str, current, offsets=(-2, -1, 1, 2)) -> list:
        """Grid values at the given step offsets, clamped and deduplicated."""
        r = self.ranges[name]
        i = r.index_of(current)
        out = []
        for off in offsets:
            v = r.value(i + off, integral=name in _INT_PARAMS)
            if v != current and v not in out:
                out.append(v)
        return out

    def contains(self, config: ParameterConfig) -> bool:
        if config.matching_variant != self.matching_variant:
            return False
        for name in PARAM_NAMES:
            r = self.ranges[name]
            v = getattr(config, name)
            i = r.index_of(v)
            if abs(r.value(i) - float(v)) > 1e-9 * max(1.0, abs(r.step)):
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "matching_variant": self.matching_variant,
            "pca_dim": self.pca_dim,
            "ranges": {k: [r.lo, r.hi, r.step] for k, r in self.ranges.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ParameterSpace":
        ranges = {k: GridRange(*v) for k, v in data["ranges"].items()}
        return cls(
            ranges=ranges,
            matching_variant=data.get("matching_variant", "identity"),
            pca_dim=data.get("pca_dim", 16),
        )


def save_space(space: ParameterSpace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(space.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_space(path) -> ParameterSpace:
    with open(path, encoding="utf-8") as fh:
        return ParameterSpace.from_dict(json.load(fh))
