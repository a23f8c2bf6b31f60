"""Run configuration: nested dataclasses, JSON round-trip, validation and packaged presets."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .coupling import KINDS
from .integrate import SCHEMES, n_steps
from .models import CATALOG, ModelError


class ConfigError(ValueError):
    pass


@dataclass
class CouplingConfig:
    kind: str = "mixed"
    switch_threshold: Optional[float] = None
    q_switch: Optional[float] = None
    window_multiplier: float = 2.5


@dataclass
class DistanceConfig:
    cap: float = 1.0
    exponent: float = 1.0


@dataclass
class ValidateConfig:
    resolution: int = 256
    box_lower: Optional[list] = None       # defaults to the model's Omega (projected on axes)
    box_upper: Optional[list] = None
    axes: Optional[list] = None            # coordinates to histogram; None = all
    n_chains: int = 1000
    n_steps: int = 100000
    burn_in: int = 40000
    thin: int = 4
    chains_per_chunk: int = 125
    split_point: Optional[float] = None    # 1D only: also report mass below this point


@dataclass
class RunConfig:
    model: str = "ring"
    params: dict = field(default_factory=dict)
    scheme: str = "euler-maruyama"
    order: Optional[float] = None          # strong order p; None = inferred from model and scheme
    h: float = 1e-3
    T: float = 10.0
    mode: str = "certified"                # which bound `certify`/`reproduce` reports first
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    distance: DistanceConfig = field(default_factory=DistanceConfig)
    omega_lower: Optional[list] = None     # None = derived from the finite-error trajectory
    omega_upper: Optional[list] = None
    omega_margin: float = 0.05
    epsilon: Optional[float] = None        # None = 1 / (trajectory length)
    sample_interval: float = 1.0
    n_segments: int = 1000
    n_chains: Optional[int] = None         # parallel Algorithm-1 chains; None = min(N, 1024)
    burn_in_segments: int = 1
    n_pairs: int = 200
    m_replicates: int = 100
    exceedance_fraction: float = 0.05
    tail_window: list = field(default_factory=lambda: [0.01, 0.5])
    tail_horizon: Optional[float] = None   # coupling horizon for `tail-rate`/`rough`; None = T
    seed: int = 0
    workers: Optional[int] = None          # None = $SDECERT_WORKERS or 1
    out: str = "runs/out"
    validation: ValidateConfig = field(default_factory=ValidateConfig)

    # ------------------------------------------------------------ serialization

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return _build(cls, data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    def config_hash(self) -> str:
        """Hash of everything that can change the numbers (not workers or output path)."""
        d = self.to_dict()
        d.pop("workers")
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def updated(self, **changes) -> "RunConfig":
        d = self.to_dict()
        for k, v in changes.items():
            if v is not None:
                d[k] = v
        return RunConfig.from_dict(d)

    # ------------------------------------------------------------ validation

    def make_model(self):
        entry = CATALOG.get(self.model)
        if entry is None:
            raise ConfigError(f"unknown model {self.model!r}; choose from {sorted(CATALOG)}")
        try:
            return entry.make(**self.params)
        except (TypeError, ModelError) as err:
            raise ConfigError(f"bad parameters for {self.model}: {err}") from None

    def check(self) -> "RunConfig":
        """Raise ConfigError on any inconsistent setting; returns self."""
        model = self.make_model()
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {sorted(SCHEMES)}")
        if self.order is not None and self.order <= 0:
            raise ConfigError("strong order must be positive")
        try:
            n_steps(self.T, self.h, multiple=2)
        except ValueError as err:
            raise ConfigError(str(err)) from None
        if self.mode not in ("certified", "rough"):
            raise ConfigError("mode must be 'certified' or 'rough'")
        if self.coupling.kind not in KINDS:
            raise ConfigError(f"unknown coupling {self.coupling.kind!r}; choose from {KINDS}")
        for name in ("switch_threshold", "q_switch"):
            v = getattr(self.coupling, name)
            if v is not None and v < 0:
                raise ConfigError(f"coupling.{name} must be nonnegative")
        if self.coupling.window_multiplier <= 0:
            raise ConfigError("coupling.window_multiplier must be positive")
        if self.distance.cap <= 0 or self.distance.exponent <= 0:
            raise ConfigError("distance cap and exponent must be positive")
        if (self.omega_lower is None) != (self.omega_upper is None):
            raise ConfigError("give both omega_lower and omega_upper, or neither")
        if self.omega_lower is not None:
            lo, hi = list(self.omega_lower), list(self.omega_upper)
            if len(lo) != model.dim or len(hi) != model.dim:
                raise ConfigError(f"Omega must have {model.dim} coordinates")
            if any(a >= b for a, b in zip(lo, hi)):
                raise ConfigError("Omega needs lower < upper componentwise")
        if self.omega_margin < 0:
            raise ConfigError("omega_margin must be nonnegative")
        if self.epsilon is not None and self.epsilon < 0:
            raise ConfigError("epsilon must be nonnegative")
        for name in ("n_segments", "n_pairs", "m_replicates"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.n_chains is not None and self.n_chains < 1:
            raise ConfigError("n_chains must be at least 1")
        if self.burn_in_segments < 0:
            raise ConfigError("burn_in_segments must be nonnegative")
        if self.sample_interval <= 0:
            raise ConfigError("sample_interval must be positive")
        if not 0 < self.exceedance_fraction < 1:
            raise ConfigError("exceedance_fraction must lie in (0, 1)")
        lo, hi = self.tail_window
        if not 0 < lo < hi <= 1:
            raise ConfigError("tail_window must satisfy 0 < lo < hi <= 1")
        if self.tail_horizon is not None:
            try:
                n_steps(self.tail_horizon, self.h)
            except ValueError as err:
                raise ConfigError(f"tail_horizon: {err}") from None
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be at least 1")
        v = self.validation
        if v.resolution < 1 or v.n_chains < 1 or v.n_steps < 1 or v.burn_in < 0 or v.thin < 1:
            raise ConfigError("validate: resolution, n_chains, n_steps, thin must be positive")
        if v.axes is not None and any(not 0 <= a < model.dim for a in v.axes):
            raise ConfigError("validation.axes out of range")
        return self


def _build(cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kw = {}
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        kw[name] = _build(sub, value) if sub is not None else copy.deepcopy(value)
    try:
        return cls(**kw)
    except TypeError as err:
        raise ConfigError(str(err)) from None


_NESTED = {(RunConfig, "coupling"): CouplingConfig, (RunConfig, "distance"): DistanceConfig,
           (RunConfig, "validation"): ValidateConfig}
