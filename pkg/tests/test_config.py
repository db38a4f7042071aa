#!/usr/bin/python3

import pathlib

import msgspec
import pytest
from roofbox.config import (
    AlphaConfig,
    ToolConfig,
    Tolerances,
    get_tolerances,
    load_config,
    override_tolerances,
    use_tolerances,
)


def test_defaults_without_file(monkeypatch: pytest.MonkeyPatch):
    monkeypatch.delenv("ROOFBOX_CONFIG", raising=False)
    config = load_config()
    assert config == ToolConfig()
    assert config.tolerances.gap_pure == 1e-6
    assert config.tolerances.gap_mixed == 1e-3
    assert config.optimizer.restarts == 32


def test_missing_env_file_falls_back(monkeypatch: pytest.MonkeyPatch, tmp_path: pathlib.Path):
    monkeypatch.setenv("ROOFBOX_CONFIG", str(tmp_path / "absent.toml"))
    assert load_config() == ToolConfig()


def test_load_toml(tmp_path: pathlib.Path):
    path = tmp_path / "config.toml"
    path.write_text(
        "\n".join(
            [
                "log_level = 10",
                'database = "audits.db3"',
                "[tolerances]",
                "gap_pure = 1e-5",
                "[optimizer]",
                "restarts = 4",
                "members = 6",
                "patience = 0",
                "threads = 2",
            ]
        )
    )
    config = load_config(path)
    assert config.log_level == 10
    assert config.database == pathlib.Path("audits.db3")
    assert config.tolerances.gap_pure == 1e-5
    assert config.tolerances.norm == Tolerances().norm
    assert config.optimizer.restarts == 4
    assert config.optimizer.members == 6
    assert config.optimizer.patience == 0
    assert config.optimizer.threads == 2
    assert config.optimizer.agreement == 1e-6


@pytest.mark.parametrize(
    "text",
    [
        "[optimizer]\nrestarts = 0",
        "[optimizer]\nthreads = 0",
        "[optimizer]\npatience = -1",
        "[tolerances]\naudit = -1.0",
        # mixed-state gap tighter than the pure-state one
        "[tolerances]\ngap_pure = 1e-2\ngap_mixed = 1e-4",
        "[alpha]\nlow = 0.01",
        "[alpha]\nlow = 2.0\nhigh = 1.0",
    ],
)
def test_invalid_config(tmp_path: pathlib.Path, text: str):
    path = tmp_path / "config.toml"
    path.write_text(text)
    with pytest.raises(ValueError):
        load_config(path)


def test_override_tolerances():
    tolerances = override_tolerances(Tolerances(), ["audit=1e-4", "gap-mixed=0.01"])
    assert tolerances.audit == 1e-4
    assert tolerances.gap_mixed == 0.01
    assert tolerances.norm == Tolerances().norm


@pytest.mark.parametrize("item", ["audit", "bogus=1e-3", "audit=zero"])
def test_override_rejects(item: str):
    with pytest.raises(ValueError):
        override_tolerances(Tolerances(), [item])


def test_override_validates_range():
    with pytest.raises(msgspec.ValidationError):
        override_tolerances(Tolerances(), ["psd=-1e-9"])


def test_use_tolerances_is_scoped():
    default = get_tolerances()
    loose = Tolerances(norm=1e-6)
    with use_tolerances(loose):
        assert get_tolerances() is loose
    assert get_tolerances() is default


def test_alpha_range():
    assert AlphaConfig().low == 0.05
    with pytest.raises(ValueError):
        AlphaConfig(low=0.04)
