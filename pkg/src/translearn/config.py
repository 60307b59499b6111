"""Experiment configuration: one TOML file per experiment.

Validation is strict: unknown keys are errors, and error messages carry
the dotted field path.  The schema is documented in the README.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .gp import FiniteDomain, NoiseModel
from .kernels import Kernel, kernel_from_config

__all__ = [
    "ConfigError",
    "DomainSpec",
    "SpaceSpec",
    "NoiseSpec",
    "GpExperimentConfig",
    "SafeBoConfig",
    "TheoryConfig",
    "load_config",
]

DEFAULT_MAX_POINTS = 4096


class ConfigError(ValueError):
    pass


def _require(table: dict, key: str, path: str):
    if key not in table:
        raise ConfigError(f"{path}.{key}: missing required key")
    return table[key]


def _check_keys(table: dict, allowed: set[str], path: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")


@dataclass(frozen=True)
class DomainSpec:
    kind: str  # "grid" | "embeddings"
    bounds: tuple | None = None
    resolution: int = 0
    path: str | None = None

    @classmethod
    def parse(cls, table: dict, path: str = "domain") -> "DomainSpec":
        kind = _require(table, "kind", path)
        if kind == "grid":
            _check_keys(table, {"kind", "bounds", "resolution"}, path)
            bounds = tuple(tuple(float(v) for v in b) for b in _require(table, "bounds", path))
            for b in bounds:
                if len(b) != 2 or not b[0] < b[1]:
                    raise ConfigError(f"{path}.bounds: each entry must be [low, high] with low < high")
            res = int(_require(table, "resolution", path))
            if res < 2:
                raise ConfigError(f"{path}.resolution: must be >= 2")
            return cls(kind="grid", bounds=bounds, resolution=res)
        if kind == "embeddings":
            _check_keys(table, {"kind", "path"}, path)
            return cls(kind="embeddings", path=str(_require(table, "path", path)))
        raise ConfigError(f"{path}.kind: unknown domain kind {kind!r}")

    @property
    def size(self) -> int:
        if self.kind != "grid":
            raise ConfigError("size only known for grid domains before loading")
        return self.resolution ** len(self.bounds)

    def build(self) -> FiniteDomain:
        if self.kind == "grid":
            axes = [np.linspace(lo, hi, self.resolution) for lo, hi in self.bounds]
            mesh = np.meshgrid(*axes, indexing="ij")
            pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
            return FiniteDomain(points=pts)
        from .embeddings import load_embeddings

        domain, _ = load_embeddings(self.path)
        return domain


@dataclass(frozen=True)
class SpaceSpec:
    """Geometric predicate picking a subset of domain indices."""

    kind: str
    lower: tuple = ()
    upper: tuple = ()
    axis: int = 0
    op: str = "le"
    value: float = 0.0
    center: tuple = ()
    radius: float = 0.0
    values: tuple = ()
    subsample: int = 0

    @classmethod
    def parse(cls, table: dict, path: str) -> "SpaceSpec":
        kind = _require(table, "kind", path)
        sub = int(table.get("subsample", 0))
        if sub < 0:
            raise ConfigError(f"{path}.subsample: must be >= 0")
        if kind == "all":
            _check_keys(table, {"kind", "subsample"}, path)
            return cls(kind="all", subsample=sub)
        if kind == "box":
            _check_keys(table, {"kind", "lower", "upper", "subsample"}, path)
            return cls(
                kind="box",
                lower=tuple(float(v) for v in _require(table, "lower", path)),
                upper=tuple(float(v) for v in _require(table, "upper", path)),
                subsample=sub,
            )
        if kind == "halfspace":
            _check_keys(table, {"kind", "axis", "op", "value", "subsample"}, path)
            op = table.get("op", "le")
            if op not in ("le", "ge"):
                raise ConfigError(f"{path}.op: must be 'le' or 'ge'")
            return cls(
                kind="halfspace",
                axis=int(table.get("axis", 0)),
                op=op,
                value=float(_require(table, "value", path)),
                subsample=sub,
            )
        if kind == "disk":
            _check_keys(table, {"kind", "center", "radius", "subsample"}, path)
            return cls(
                kind="disk",
                center=tuple(float(v) for v in _require(table, "center", path)),
                radius=float(_require(table, "radius", path)),
                subsample=sub,
            )
        if kind == "indices":
            _check_keys(table, {"kind", "values", "subsample"}, path)
            return cls(kind="indices", values=tuple(int(v) for v in _require(table, "values", path)), subsample=sub)
        raise ConfigError(f"{path}.kind: unknown space kind {kind!r}")

    def indices(self, domain: FiniteDomain) -> np.ndarray:
        pts = domain.points
        if self.kind == "all":
            mask = np.ones(domain.size, dtype=bool)
        elif self.kind == "box":
            lo = np.asarray(self.lower)
            hi = np.asarray(self.upper)
            mask = np.all((pts >= lo) & (pts <= hi), axis=1)
        elif self.kind == "halfspace":
            coord = pts[:, self.axis]
            mask = coord <= self.value if self.op == "le" else coord >= self.value
        elif self.kind == "disk":
            mask = np.linalg.norm(pts - np.asarray(self.center), axis=1) <= self.radius
        else:
            ix = np.asarray(self.values, dtype=int)
            if ix.size and (ix.min() < 0 or ix.max() >= domain.size):
                raise ConfigError("indices out of range for domain")
            return np.unique(ix)
        ix = np.flatnonzero(mask)
        if ix.size == 0:
            raise ConfigError(f"space predicate {self.kind!r} selects no points")
        return ix


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    variance: float = 0.01
    lower: tuple = ()
    upper: tuple = ()
    inside_variance: float = 1.0
    outside_variance: float = 0.01

    @classmethod
    def parse(cls, table: dict, path: str = "noise") -> "NoiseSpec":
        kind = _require(table, "kind", path)
        if kind == "homoscedastic":
            _check_keys(table, {"kind", "variance"}, path)
            var = float(_require(table, "variance", path))
            if var <= 0:
                raise ConfigError(f"{path}.variance: must be positive")
            return cls(kind="homoscedastic", variance=var)
        if kind == "region":
            _check_keys(
                table,
                {"kind", "lower", "upper", "inside_variance", "outside_variance"},
                path,
            )
            inside = float(_require(table, "inside_variance", path))
            outside = float(_require(table, "outside_variance", path))
            if inside <= 0 or outside <= 0:
                raise ConfigError(f"{path}: variances must be positive")
            return cls(
                kind="region",
                lower=tuple(float(v) for v in _require(table, "lower", path)),
                upper=tuple(float(v) for v in _require(table, "upper", path)),
                inside_variance=inside,
                outside_variance=outside,
            )
        raise ConfigError(f"{path}.kind: unknown noise kind {kind!r}")

    def build(self, domain: FiniteDomain) -> NoiseModel:
        if self.kind == "homoscedastic":
            return NoiseModel.homoscedastic(domain.size, self.variance)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        inside = np.all((domain.points >= lo) & (domain.points <= hi), axis=1)
        variances = np.where(inside, self.inside_variance, self.outside_variance)
        return NoiseModel(variances)


_BASE_KEYS = {"kind", "name", "rounds", "seeds", "output_dir", "max_points"}


def _parse_base(data: dict, path: str):
    name = str(_require(data, "name", path))
    rounds = int(_require(data, "rounds", path))
    if rounds < 0:
        raise ConfigError(f"{path}.rounds: must be >= 0")
    seeds = tuple(int(s) for s in _require(data, "seeds", path))
    if len(seeds) == 0:
        raise ConfigError(f"{path}.seeds: must be nonempty")
    out = data.get("output_dir")
    max_points = int(data.get("max_points", DEFAULT_MAX_POINTS))
    return name, rounds, seeds, out, max_points


def _check_domain_cap(domain: DomainSpec, max_points: int) -> None:
    if domain.kind == "grid" and domain.size > max_points:
        raise ConfigError(
            f"domain: {domain.size} points exceed max_points={max_points} "
            "(the dense covariance must fit in memory)"
        )


@dataclass(frozen=True)
class GpExperimentConfig:
    name: str
    rounds: int
    seeds: tuple
    rules: tuple
    batch_size: int
    batch_mode: str
    output_dir: str | None
    max_points: int
    domain: DomainSpec
    kernel: Kernel
    noise: NoiseSpec
    sample_space: SpaceSpec
    target_space: SpaceSpec

    @classmethod
    def parse(cls, data: dict) -> "GpExperimentConfig":
        _check_keys(
            data,
            _BASE_KEYS
            | {"rules", "batch_size", "batch_mode", "domain", "kernel", "noise",
               "sample_space", "target_space"},
            "config",
        )
        name, rounds, seeds, out, max_points = _parse_base(data, "config")
        rules = tuple(str(r) for r in _require(data, "rules", "config"))
        if not rules:
            raise ConfigError("config.rules: must be nonempty")
        batch_size = int(data.get("batch_size", 1))
        if batch_size < 1:
            raise ConfigError("config.batch_size: must be >= 1")
        batch_mode = str(data.get("batch_mode", "bace"))
        if batch_mode not in ("bace", "topb"):
            raise ConfigError("config.batch_mode: must be 'bace' or 'topb'")
        domain = DomainSpec.parse(_require(data, "domain", "config"))
        _check_domain_cap(domain, max_points)
        try:
            kernel = kernel_from_config(_require(data, "kernel", "config"))
        except ValueError as exc:
            raise ConfigError(f"config.kernel: {exc}") from None
        noise = NoiseSpec.parse(_require(data, "noise", "config"))
        sample_space = SpaceSpec.parse(_require(data, "sample_space", "config"), "sample_space")
        target_space = SpaceSpec.parse(_require(data, "target_space", "config"), "target_space")
        return cls(
            name=name, rounds=rounds, seeds=seeds, rules=rules,
            batch_size=batch_size, batch_mode=batch_mode, output_dir=out,
            max_points=max_points, domain=domain, kernel=kernel, noise=noise,
            sample_space=sample_space, target_space=target_space,
        )


@dataclass(frozen=True)
class SafeBoConfig:
    name: str
    rounds: int
    seeds: tuple
    methods: tuple
    beta: float
    target_mode: str
    thompson_samples: int
    target_subsample: int
    seed_observations: int
    output_dir: str | None
    max_points: int
    task: str
    domain: DomainSpec
    kernel: Kernel
    noise: NoiseSpec

    @classmethod
    def parse(cls, data: dict) -> "SafeBoConfig":
        _check_keys(
            data,
            _BASE_KEYS
            | {"methods", "beta", "target_mode", "thompson_samples",
               "target_subsample", "seed_observations", "task", "domain",
               "kernel", "noise"},
            "config",
        )
        name, rounds, seeds, out, max_points = _parse_base(data, "config")
        methods = tuple(str(mn) for mn in _require(data, "methods", "config"))
        if not methods:
            raise ConfigError("config.methods: must be nonempty")
        beta = float(data.get("beta", 3.0))
        if beta < 0:
            raise ConfigError("config.beta: must be >= 0")
        target_mode = str(data.get("target_mode", "maximizers"))
        if target_mode not in ("maximizers", "expanders", "thompson"):
            raise ConfigError("config.target_mode: unknown mode")
        thompson = int(data.get("thompson_samples", 5))
        subsample = int(data.get("target_subsample", 0))
        seed_obs = int(data.get("seed_observations", 3))
        task_table = _require(data, "task", "config")
        _check_keys(task_table, {"name"}, "task")
        task = str(_require(task_table, "name", "task"))
        domain = DomainSpec.parse(_require(data, "domain", "config"))
        _check_domain_cap(domain, max_points)
        try:
            kernel = kernel_from_config(_require(data, "kernel", "config"))
        except ValueError as exc:
            raise ConfigError(f"config.kernel: {exc}") from None
        noise = NoiseSpec.parse(_require(data, "noise", "config"))
        return cls(
            name=name, rounds=rounds, seeds=seeds, methods=methods, beta=beta,
            target_mode=target_mode, thompson_samples=thompson,
            target_subsample=subsample, seed_observations=seed_obs,
            output_dir=out, max_points=max_points, task=task, domain=domain,
            kernel=kernel, noise=noise,
        )


@dataclass(frozen=True)
class TheoryConfig:
    name: str
    rounds: int
    seeds: tuple
    capacity_rounds: int
    excess_threshold: float
    output_dir: str | None
    max_points: int
    domain: DomainSpec
    kernel: Kernel
    noise: NoiseSpec
    sample_space: SpaceSpec
    target_space: SpaceSpec

    @classmethod
    def parse(cls, data: dict) -> "TheoryConfig":
        _check_keys(
            data,
            _BASE_KEYS
            | {"capacity_rounds", "excess_threshold", "domain", "kernel",
               "noise", "sample_space", "target_space"},
            "config",
        )
        name, rounds, seeds, out, max_points = _parse_base(data, "config")
        cap_rounds = int(data.get("capacity_rounds", 10))
        if cap_rounds < 1:
            raise ConfigError("config.capacity_rounds: must be >= 1")
        threshold = float(data.get("excess_threshold", 0.05))
        domain = DomainSpec.parse(_require(data, "domain", "config"))
        _check_domain_cap(domain, max_points)
        try:
            kernel = kernel_from_config(_require(data, "kernel", "config"))
        except ValueError as exc:
            raise ConfigError(f"config.kernel: {exc}") from None
        noise = NoiseSpec.parse(_require(data, "noise", "config"))
        sample_space = SpaceSpec.parse(_require(data, "sample_space", "config"), "sample_space")
        target_space = SpaceSpec.parse(_require(data, "target_space", "config"), "target_space")
        return cls(
            name=name, rounds=rounds, seeds=seeds, capacity_rounds=cap_rounds,
            excess_threshold=threshold, output_dir=out, max_points=max_points,
            domain=domain, kernel=kernel, noise=noise,
            sample_space=sample_space, target_space=target_space,
        )


_KIND_PARSERS = {
    "gp": GpExperimentConfig,
    "safebo": SafeBoConfig,
    "theory": TheoryConfig,
}


def load_config(path, expected_kind: str | None = None):
    """Load and validate a TOML experiment config."""
    raw = Path(path).read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    kind = data.get("kind")
    if kind not in _KIND_PARSERS:
        raise ConfigError(f"config.kind: expected one of {sorted(_KIND_PARSERS)}, got {kind!r}")
    if expected_kind is not None and kind != expected_kind:
        raise ConfigError(f"config.kind: expected {expected_kind!r}, got {kind!r}")
    return _KIND_PARSERS[kind].parse(data)
