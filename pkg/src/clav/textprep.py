"""Deterministic tokenization and normalization feeding every analysis stage.

The pipeline is: tokenize -> lowercase -> stopword drop -> length filter ->
suffix stemming -> post-stem stopword drop -> optional content-word filter.
All steps are pure functions of their inputs, so results are reproducible
and safe to compute concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError

_DATA_DIR = Path(__file__).parent / "data"

# Bundled Swedish defaults, used when a config names "sv" instead of a path.
BUILTIN_STOPWORDS = {"sv": _DATA_DIR / "stopwords_sv.txt"}
BUILTIN_STEM_RULES = {"sv": _DATA_DIR / "stem_rules_sv.txt"}


@dataclass(frozen=True)
class Token:
    """A surface form plus its normalized form.

    normalized equals lowercase(surface) straight out of the tokenizer;
    stemming may shorten it further.
    """

    surface: str
    normalized: str


@dataclass
class NormalizationConfig:
    """Settings for :func:`normalize`; paths are loaded by :class:`Normalizer`."""

    lowercase: bool = True
    stopword_path: str | Path | None = None
    stem: bool = True
    stem_rules_path: str | Path | None = None
    min_len: int = 2
    keep_numeric: bool = True
    content_lexicon_path: str | Path | None = None
    lexicon_strict: bool = False

    def __post_init__(self) -> None:
        if self.min_len < 1:
            raise ConfigError(f"min_len must be >= 1, got {self.min_len}")


def _is_numeric(text: str) -> bool:
    # '%' counts as numeric content so quantity tokens ("4,6", "%") survive
    # the min_len filter.
    return text == "%" or any(ch.isdigit() for ch in text)


def tokenize(text: str) -> list[Token]:
    """Split text into tokens on non-alphanumeric characters.

    A '.' or ',' inside a digit sequence does not split ("4,6" is one
    token), and '%' is always emitted as its own token. Order is preserved.
    """
    tokens: list[Token] = []
    buf: list[str] = []
    buf_digits = True  # buffer contains only digits and internal separators

    def flush() -> None:
        nonlocal buf_digits
        if buf:
            surface = "".join(buf)
            tokens.append(Token(surface, surface.lower()))
            buf.clear()
        buf_digits = True

    n = len(text)
    for i, ch in enumerate(text):
        if ch.isalnum():
            if not ch.isdigit():
                buf_digits = False
            buf.append(ch)
        elif ch == "%":
            flush()
            tokens.append(Token("%", "%"))
        elif (
            ch in ".,"
            and buf
            and buf_digits
            and buf[-1].isdigit()
            and i + 1 < n
            and text[i + 1].isdigit()
        ):
            buf.append(ch)
        else:
            flush()
    flush()
    return tokens


def _read_lines(path: Path, what: str) -> list[str]:
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {what} file {path}: {exc}") from exc
    lines = []
    for line in raw.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            lines.append(line)
    return lines


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Load a stopword file: one token per line, '#' comments."""
    path = BUILTIN_STOPWORDS.get(str(path), Path(path))
    return frozenset(_read_lines(path, "stopword"))


def load_stem_rules(path: str | Path) -> list[tuple[str, str]]:
    """Load suffix rules: lines of the form ``suffix→replacement``.

    Rules are returned longest-suffix-first; '#' comment lines are skipped.
    """
    path = BUILTIN_STEM_RULES.get(str(path), Path(path))
    rules: list[tuple[str, str]] = []
    for line in _read_lines(path, "stem rules"):
        if "→" in line:
            suffix, _, replacement = line.partition("→")
        elif "->" in line:
            suffix, _, replacement = line.partition("->")
        else:
            raise ConfigError(f"stem rule without '→' separator: {line!r}")
        suffix = suffix.strip()
        replacement = replacement.strip()
        if not suffix:
            raise ConfigError(f"stem rule with empty suffix: {line!r}")
        rules.append((suffix, replacement))
    rules.sort(key=lambda r: (-len(r[0]), r[0]))
    return rules


def load_lexicon(path: str | Path) -> frozenset[str]:
    """Load a content-word lexicon: one normalized token per line."""
    return frozenset(_read_lines(Path(path), "lexicon"))


class Normalizer:
    """A NormalizationConfig with its referenced files loaded.

    Downstream modules hold one of these rather than re-reading the
    stopword/rule files for every paragraph.
    """

    def __init__(self, config: NormalizationConfig | None = None) -> None:
        self.config = config or NormalizationConfig()
        cfg = self.config
        self.stopwords = (
            load_stopwords(cfg.stopword_path) if cfg.stopword_path else frozenset()
        )
        if cfg.stem:
            rules_path = cfg.stem_rules_path or "sv"
            self.stem_rules = load_stem_rules(rules_path)
        else:
            self.stem_rules = []
        self.lexicon = (
            load_lexicon(cfg.content_lexicon_path)
            if cfg.content_lexicon_path
            else frozenset()
        )

    def _stem(self, word: str) -> str:
        # Longest matching rule wins; a rule that would empty the token is
        # skipped so no empty normalized form can ever be emitted.
        for suffix, replacement in self.stem_rules:
            if word.endswith(suffix):
                cand = word[: len(word) - len(suffix)] + replacement
                if cand:
                    return cand
        return word

    def normalize(self, tokens: list[Token]) -> list[Token]:
        cfg = self.config
        out: list[Token] = []
        for tok in tokens:
            norm = tok.surface.lower() if cfg.lowercase else tok.surface
            if not norm or norm in self.stopwords:
                continue
            if len(norm) < cfg.min_len and not (
                cfg.keep_numeric and _is_numeric(norm)
            ):
                continue
            if cfg.stem and self.stem_rules:
                norm = self._stem(norm)
            out.append(Token(tok.surface, norm))
        return out

    def content_filter(self, tokens: list[Token]) -> list[Token]:
        return content_filter(tokens, self.lexicon, self.config.lexicon_strict)

    def prep(self, text: str) -> list[str]:
        """Full pipeline: normalized token strings for a piece of text."""
        tokens = self.normalize(tokenize(text))
        if self.lexicon:
            tokens = self.content_filter(tokens)
        return [t.normalized for t in tokens]


def normalize(tokens: list[Token], config: NormalizationConfig) -> list[Token]:
    """Functional wrapper around :meth:`Normalizer.normalize`."""
    return Normalizer(config).normalize(tokens)


def content_filter(
    tokens: list[Token], lexicon: frozenset[str] | set[str], strict: bool = False
) -> list[Token]:
    """Keep lexicon members; in non-strict mode unknown tokens pass through."""
    if not strict:
        return list(tokens)
    return [t for t in tokens if t.normalized in lexicon]
