"""Run configuration parsing, hashing, and workspace staleness stamps."""

import pytest

from clav.config import RunConfig, load_config, parse_config_text, save_config
from clav.errors import ClavError, ConfigError, NotFoundError
from clav.workspace import Workspace


class TestRunConfig:
    def test_parse_and_override(self):
        config = parse_config_text("top_k = 5\nbackend = pvdbow\nstem = off\n")
        assert config.top_k == 5
        assert config.backend == "pvdbow"
        assert config.stem is False

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config_text("no_such_key = 1\n")

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("just words\n")

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("top_k = banana\n")
        with pytest.raises(ConfigError):
            parse_config_text("stem = maybe\n")

    def test_comments_and_blanks_ignored(self):
        config = parse_config_text("# comment\n\nseed = 9\n")
        assert config.seed == 9

    def test_hash_stable_and_sensitive(self):
        a = RunConfig()
        b = RunConfig()
        assert a.config_hash() == b.config_hash()
        b.seed = 2
        assert a.config_hash() != b.config_hash()

    def test_save_load_round_trip(self, tmp_path):
        config = RunConfig(top_k=7, backend="pvdbow", seed=33)
        path = save_config(config, tmp_path / "run.cfg")
        again = load_config(path)
        assert again == config
        assert again.config_hash() == config.config_hash()


class TestWorkspaceStamps:
    def test_stamp_matches_until_config_changes(self, tmp_path):
        ws = Workspace(tmp_path / "ws", RunConfig())
        ws.initialize()
        artifact = ws.root / "thing.bin"
        artifact.write_bytes(b"payload")
        ws.stamp(artifact)
        assert not ws.is_stale(artifact)
        ws.config.seed = 99
        assert ws.is_stale(artifact)

    def test_require_missing_names_producer(self, tmp_path):
        ws = Workspace(tmp_path / "ws", RunConfig())
        ws.initialize()
        with pytest.raises(NotFoundError, match="clav ingest"):
            ws.load_corpus()

    def test_require_stale_errors(self, tmp_path):
        ws = Workspace(tmp_path / "ws", RunConfig())
        ws.initialize()
        artifact = ws.root / "thing.bin"
        artifact.write_bytes(b"payload")
        ws.stamp(artifact)
        ws.config.top_k = 3
        with pytest.raises(ClavError, match="stale"):
            ws.require(artifact, "ingest")
