"""Run-config layering, validation, backend construction, run manifests."""

from __future__ import annotations

import json

import pytest

from turnsmith.backends import HttpChatBackend, MockBackend
from turnsmith.config import (
    RunConfig,
    build_chat_backend,
    build_embedding_backend,
    load_config,
    write_run_manifest,
)
from turnsmith.errors import ConfigError


def test_defaults_are_mock_and_documented_values():
    config = load_config(None, env={})
    assert config.backend == "mock"
    assert config.temperature == 0.9
    assert config.judge_temperature == 0.0
    assert config.max_in_flight == 8
    assert config.max_attempts == 5
    assert config.api_key_env == "TURNSMITH_API_KEY"


def test_env_layer_applies_with_prefix():
    env = {"TURNSMITH_BACKEND": "openai", "TURNSMITH_BASE_URL": "http://x/v1", "TURNSMITH_WORKERS": "3"}
    config = load_config(None, env=env)
    assert config.backend == "openai"
    assert config.base_url == "http://x/v1"
    assert config.workers == 3


def test_flags_beat_env(tmp_path):
    env = {"TURNSMITH_SEED": "7"}
    config = load_config(None, {"seed": 9}, env=env)
    assert config.seed == 9


def test_invalid_values_are_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="backend"):
        load_config(None, {"backend": "carrier-pigeon"}, env={})
    with pytest.raises(ConfigError, match="turn bounds"):
        load_config(None, {"min_turns": 9, "max_turns": 8}, env={})
    with pytest.raises(ConfigError, match="failure_threshold"):
        load_config(None, {"failure_threshold": 1.5}, env={})
    with pytest.raises(ConfigError, match="invalid value"):
        load_config(None, {"seed": "not-a-number"}, env={})


def test_missing_taxonomy_path_rejected(tmp_path):
    with pytest.raises(ConfigError, match="taxonomy"):
        load_config(None, {"taxonomy": str(tmp_path / "nope.yaml")}, env={})


def test_build_backends_mock_and_live():
    mock = build_chat_backend(load_config(None, env={}))
    assert isinstance(mock, MockBackend)
    live_config = load_config(None, {"backend": "openai", "base_url": "http://x/v1", "chat_model": "m"}, env={})
    live = build_chat_backend(live_config)
    assert isinstance(live, HttpChatBackend)
    live.close()
    with pytest.raises(ConfigError, match="chat-model"):
        build_chat_backend(load_config(None, {"backend": "openai", "base_url": "http://x/v1"}, env={}))


def test_judge_backend_falls_back_to_chat_model():
    config = load_config(
        None, {"backend": "openai", "base_url": "http://x/v1", "chat_model": "m"}, env={}
    )
    judge = build_chat_backend(config, judge=True)
    assert judge.model == "m"
    judge.close()
    config2 = load_config(
        None,
        {"backend": "openai", "base_url": "http://x/v1", "chat_model": "m", "judge_model": "j"},
        env={},
    )
    judge2 = build_chat_backend(config2, judge=True)
    assert judge2.model == "j"
    judge2.close()


def test_live_embedder_requires_model():
    config = load_config(None, {"backend": "openai", "base_url": "http://x/v1", "chat_model": "m"}, env={})
    with pytest.raises(ConfigError, match="embed-model"):
        build_embedding_backend(config, "live")
    assert isinstance(build_embedding_backend(config, "mock"), MockBackend)


def test_api_key_read_from_named_env_var(monkeypatch):
    monkeypatch.setenv("MY_OWN_KEY", "sk-abc")
    config = load_config(None, {"api_key_env": "MY_OWN_KEY"})
    assert config.api_key() == "sk-abc"
    monkeypatch.delenv("MY_OWN_KEY")
    assert config.api_key() is None


def test_run_manifest_captures_config_seed_and_inputs(tmp_path):
    config = RunConfig(seed=42)
    path = write_run_manifest(tmp_path, "synth corpus", config, inputs={"a.jsonl": "deadbeef"}, outputs=["x"])
    manifest = json.loads(path.read_text())
    assert manifest["command"] == "synth corpus"
    assert manifest["seed"] == 42
    assert manifest["config"]["seed"] == 42
    assert manifest["inputs"] == {"a.jsonl": "deadbeef"}
    assert manifest["outputs"] == ["x"]
    assert "created_at" in manifest
