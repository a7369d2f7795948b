"""Run configuration: built-in defaults, config-file loading, and flag
merging with a fixed precedence of flags > config file > defaults.

The built-in defaults form the "reference" profile: segments of 128
tokens, documents truncated to 32768 tokens (so 256 segments), 5000
sampled pairs, unit combination weights, gate threshold 0.05, and a 50%
retention fraction.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .jsonio import fingerprint, read_json
from .lds import LdsConfig

REFERENCE_PROFILE: dict = {
    "segment_len": 128,
    "truncate_len": 32768,
    "tau": 0.05,
    "alpha": 1.0,
    "beta": 1.0,
    "gamma": 1.0,
    "mode": "sampled",
    "sample_size": 5000,
    "dsp_variant": "multiplicative",
    "seed": 0,
    "fraction": 0.5,
    "workers": 1,
    "tokenizer": "whitespace",
    "input_format": "jsonl",
    "order": 3,
    "k": 0.01,
}

_LDS_KEYS = (
    "segment_len",
    "truncate_len",
    "tau",
    "alpha",
    "beta",
    "gamma",
    "mode",
    "sample_size",
    "dsp_variant",
    "seed",
)


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs beyond the input paths themselves."""

    lds: LdsConfig
    fraction: float = 0.5
    workers: int = 1
    tokenizer: str = "whitespace"
    input_format: str = "jsonl"
    order: int = 3
    k: float = 0.01
    backend: str = ""

    def to_dict(self) -> dict:
        out = dict(self.lds.to_dict())
        out.update(
            {
                "fraction": self.fraction,
                "workers": self.workers,
                "tokenizer": self.tokenizer,
                "input_format": self.input_format,
                "order": self.order,
                "k": self.k,
                "backend": self.backend,
            }
        )
        return out

    def fingerprint(self) -> str:
        return fingerprint(self.to_dict())


def load_config_file(path: str) -> dict:
    try:
        raw = read_json(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path!r} must hold a JSON object")
    unknown = set(raw) - set(REFERENCE_PROFILE) - {"backend"}
    if unknown:
        raise ConfigError(f"unknown config keys in {path!r}: {sorted(unknown)}")
    return raw


def resolve_config(
    flags: dict | None = None, config_path: str | None = None
) -> RunConfig:
    """Merge the three layers.

    ``flags`` holds only explicitly supplied values (argparse sentinels
    already stripped); the config file fills what flags leave open; the
    reference profile fills the rest.
    """
    flags = {k: v for k, v in (flags or {}).items() if v is not None}
    file_cfg = load_config_file(config_path) if config_path else {}
    merged = dict(REFERENCE_PROFILE)
    merged["backend"] = ""
    merged.update(file_cfg)
    merged.update(flags)

    try:
        lds = LdsConfig(**{k: merged[k] for k in _LDS_KEYS})
    except TypeError as exc:
        raise ConfigError(f"bad scoring parameters: {exc}") from exc
    if merged["workers"] < 1:
        raise ConfigError(f"workers must be >= 1, got {merged['workers']}")
    if not (0.0 < merged["fraction"] <= 1.0):
        raise ConfigError(f"fraction must be in (0, 1], got {merged['fraction']}")
    return RunConfig(
        lds=lds,
        fraction=merged["fraction"],
        workers=merged["workers"],
        tokenizer=merged["tokenizer"],
        input_format=merged["input_format"],
        order=merged["order"],
        k=merged["k"],
        backend=merged["backend"],
    )
