"""Run configuration: one JSON file drives every command.

Unknown keys are rejected rather than ignored, and the effective
configuration is echoed at startup so runs are reproducible from logs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .pipeline import FusionMode
from .rescore import DecayParams, RescoreConfig, TimeNorm
from .frames import SelectorConfig


@dataclass(frozen=True)
class ProviderConfig:
    """Which provider backs each external call, plus endpoint overrides.

    URLs and keys default to the TEMPORAG_* environment variables; values
    here override them.
    """

    lvlm: str = "stub"  # stub | http
    embed: str = "hash"  # hash | http | file
    detector: str = "stub"  # stub | http | fixture
    embed_dim: int = 64
    embed_seed: int = 7
    lvlm_url: str | None = None
    embed_url: str | None = None
    detector_url: str | None = None
    embeddings_file: str | None = None
    fixtures_file: str | None = None


@dataclass(frozen=True)
class RunConfig:
    """Union of all module settings. Defaults follow the reference setup:

    acceptance threshold 0.3 for both dense retrieval and keyframe gating,
    unit decay strengths, top 10 snippets from a 3x candidate pool, a
    2048-token prompt budget, and 64 uniformly sampled frames.
    """

    tau: float = 0.3
    lambda0: float = 1.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    time_norm: str = TimeNorm.NORMALIZED_BY_DURATION.value
    top_k: int = 10
    pool_multiplier: int = 3
    fusion: str = FusionMode.LEXICAL.value
    budget_tokens: int = 2048
    n_bins: int = 8
    max_frames: int = 16
    n_frames: int = 64
    providers: ProviderConfig = field(default_factory=ProviderConfig)

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda0, self.lambda1, self.lambda2)

    def decay_params(self) -> DecayParams:
        return DecayParams(lambdas=self.lambdas, time_norm=TimeNorm(self.time_norm))

    def rescore_config(self) -> RescoreConfig:
        return RescoreConfig(top_k=self.top_k, pool_multiplier=self.pool_multiplier)

    def selector_config(self) -> SelectorConfig:
        return SelectorConfig(
            max_frames=self.max_frames, sim_threshold=self.tau, n_bins=self.n_bins
        )

    def fusion_mode(self) -> FusionMode:
        return FusionMode(self.fusion)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    def replace(self, **overrides) -> "RunConfig":
        return dataclasses.replace(self, **overrides)


_RUN_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}
_PROVIDER_FIELDS = {f.name for f in dataclasses.fields(ProviderConfig)}
_VALID_FUSIONS = {m.value for m in FusionMode}
_VALID_TIME_NORMS = {m.value for m in TimeNorm}


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
    unknown = set(data) - _RUN_FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    providers_data = data.get("providers", {})
    if not isinstance(providers_data, dict):
        raise ConfigError("providers must be an object")
    unknown = set(providers_data) - _PROVIDER_FIELDS
    if unknown:
        raise ConfigError(f"unknown provider keys: {', '.join(sorted(unknown))}")
    try:
        providers = ProviderConfig(**providers_data)
        cfg = RunConfig(**{**{k: v for k, v in data.items() if k != "providers"},
                           "providers": providers})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.fusion not in _VALID_FUSIONS:
        raise ConfigError(f"fusion must be one of {sorted(_VALID_FUSIONS)}, got {cfg.fusion!r}")
    if cfg.time_norm not in _VALID_TIME_NORMS:
        raise ConfigError(
            f"time_norm must be one of {sorted(_VALID_TIME_NORMS)}, got {cfg.time_norm!r}"
        )
    for name in ("top_k", "pool_multiplier", "budget_tokens", "n_bins", "max_frames", "n_frames"):
        value = getattr(cfg, name)
        if not isinstance(value, int) or value < 1:
            raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    for name in ("lambda0", "lambda1", "lambda2"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be non-negative")
    if cfg.providers.lvlm not in ("stub", "http"):
        raise ConfigError(f"providers.lvlm must be stub or http, got {cfg.providers.lvlm!r}")
    if cfg.providers.embed not in ("hash", "http", "file"):
        raise ConfigError(f"providers.embed must be hash, http or file, got {cfg.providers.embed!r}")
    if cfg.providers.detector not in ("stub", "http", "fixture"):
        raise ConfigError(
            f"providers.detector must be stub, http or fixture, got {cfg.providers.detector!r}"
        )
    if cfg.n_bins > cfg.max_frames:
        raise ConfigError(f"n_bins ({cfg.n_bins}) must not exceed max_frames ({cfg.max_frames})")


def load_config(path: str | None) -> RunConfig:
    """Load a config file; None loads pure defaults."""
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return config_from_dict(data)
