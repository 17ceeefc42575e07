"""Flat key-value run configuration shared by the CLI and the service.

File format: ``key = value`` lines, '#' comments, unknown keys rejected.
CLI flags override file values. The effective configuration hashes to a
stable hex digest that stamps every derived artifact, so stale artifacts
are detectable after a config change.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .textprep import NormalizationConfig, Normalizer

_BOOL_VALUES = {"true": True, "on": True, "1": True,
                "false": False, "off": False, "0": False}


@dataclass
class RunConfig:
    # ingestion
    min_chars: int = 20
    # normalization
    lowercase: bool = True
    stopwords: str = "sv"      # path, builtin name, or "none"
    stem: bool = True
    stem_rules: str = "sv"
    min_len: int = 2
    keep_numeric: bool = True
    lexicon: str = "none"
    lexicon_strict: bool = False
    # embedding backend
    backend: str = "tfidf"     # tfidf | pvdbow | import:<name>
    dim: int = 100
    epochs: int = 50
    negative: int = 5
    lr0: float = 0.025
    min_count: int = 2
    infer_steps: int = 50
    # topics
    k: int = 10
    k_min: int = 2
    k_max: int = 10
    alpha: float = 0.0         # 0 means the 50/k default
    beta: float = 0.01
    iterations: int = 1000
    top_n: int = 10
    theta_threshold: float = 0.2
    # retrieval
    top_k: int = 20
    threshold: float = 0.8
    min_size: int = 2
    # reproducibility
    seed: int = 1

    def normalizer(self) -> Normalizer:
        return Normalizer(NormalizationConfig(
            lowercase=self.lowercase,
            stopword_path=None if self.stopwords == "none" else self.stopwords,
            stem=self.stem,
            stem_rules_path=None if self.stem_rules == "none" else self.stem_rules,
            min_len=self.min_len,
            keep_numeric=self.keep_numeric,
            content_lexicon_path=None if self.lexicon == "none" else self.lexicon,
            lexicon_strict=self.lexicon_strict,
        ))

    def lines(self, keys: tuple[str, ...] | None = None) -> list[str]:
        out = []
        for f in sorted(fields(self), key=lambda f: f.name):
            if keys is not None and f.name not in keys:
                continue
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            out.append(f"{f.name} = {value}")
        return out

    def config_hash(self, keys: tuple[str, ...] | None = None) -> str:
        """Hash of the selected config keys (all keys when None).

        Artifacts are stamped with the hash of just the keys that influence
        them, so changing an unrelated knob does not mark them stale.
        """
        text = "\n".join(self.lines(keys)) + "\n"
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _coerce(name: str, raw: str, target_type: type) -> object:
    try:
        if target_type is bool:
            key = raw.strip().lower()
            if key not in _BOOL_VALUES:
                raise ValueError(f"not a boolean: {raw!r}")
            return _BOOL_VALUES[key]
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"config key {name!r}: {exc}") from exc


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    config = base or RunConfig()
    known = {f.name: f.type for f in fields(RunConfig)}
    types = {f.name: type(getattr(config, f.name)) for f in fields(RunConfig)}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        name, _, raw = stripped.partition("=")
        name = name.strip()
        raw = raw.strip()
        if name not in known:
            raise ConfigError(f"line {lineno}: unknown config key {name!r}")
        setattr(config, name, _coerce(name, raw, types[name]))
    return config


def load_config(path: str | Path | None = None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def save_config(config: RunConfig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(config.lines()) + "\n", encoding="utf-8")
    return path
