#!/usr/bin/python3

import pathlib
import sqlite3

import msgspec
import pytest
from roofbox.app import EXIT_IO, EXIT_NUMERIC, EXIT_USAGE, main


def _main(*argv: str) -> int:
    with pytest.raises(SystemExit) as exc:
        main(list(argv))
    return exc.value.code


def _lines(path: pathlib.Path) -> list[dict]:
    return [msgspec.json.decode(line) for line in path.read_bytes().splitlines()]


@pytest.fixture
def config(tmp_path: pathlib.Path) -> pathlib.Path:
    path = tmp_path / "config.toml"
    path.write_text("[optimizer]\nrestarts = 2\n")
    return path


def test_measure_bell(tmp_path: pathlib.Path):
    out = tmp_path / "out.json"
    assert _main("--out", str(out), "measure", "--family", "bell", "--spec", "eoe") == 0
    (document,) = _lines(out)
    assert document["result"]["value"] == pytest.approx(1.0)
    assert document["result"]["cut"] == "A|B"
    assert document["run"]["tool"] == "roofbox"
    assert document["run"]["config"]["seed"] == 0
    assert document["run"]["config"]["ensemble"]["family"] == "bell"


def test_measure_w_tangle(tmp_path: pathlib.Path):
    out = tmp_path / "out.json"
    argv = ["measure", "--family", "w", "--cut", "A|BC", "--spec", "tangle"]
    assert _main("--out", str(out), *argv) == 0
    assert _lines(out)[0]["result"]["value"] == pytest.approx(8 / 9)


def test_tolerance_override_is_embedded(tmp_path: pathlib.Path):
    out = tmp_path / "out.json"
    assert _main("--tol", "audit=1e-4", "--out", str(out), "measure", "--family", "bell") == 0
    assert _lines(out)[0]["run"]["config"]["tolerances"]["audit"] == 1e-4


@pytest.mark.parametrize(
    "argv",
    [
        ["measure"],
        ["bogus"],
        ["measure", "--family", "bell", "--spec", "bogus"],
        ["measure", "--family", "bell", "--cut", "A|C"],
        ["measure", "--family", "haar-pure"],
        ["--tol", "nope=1", "measure", "--family", "bell"],
        ["--threads", "0", "measure", "--family", "bell"],
        ["roof", "--family", "bell", "--g", "log"],
        ["alpha", "--family", "w", "--low", "0.01"],
    ],
)
def test_usage_errors(argv: list[str]):
    assert _main(*argv) == EXIT_USAGE


def test_numeric_contract_error():
    argv = ["audit", "--family", "ginibre", "--dims", "2,2,2", "--rank", "2", "--spec", "neg"]
    assert _main(*argv) == EXIT_NUMERIC


def test_malformed_state_file(tmp_path: pathlib.Path):
    path = tmp_path / "states.jsonl"
    path.write_text('{"signature": [2], "re": [1, 0]}\n')
    assert _main("audit", "--file", str(path)) == EXIT_IO
    assert _main("audit", "--file", str(tmp_path / "absent.jsonl")) == EXIT_IO


def test_ckw_w(tmp_path: pathlib.Path):
    out = tmp_path / "out.json"
    assert _main("--out", str(out), "ckw", "--family", "w") == 0
    result = _lines(out)[0]["result"]
    assert result["tau_abc"] == pytest.approx(8 / 9)
    assert result["residual"] == pytest.approx(0.0, abs=1e-8)


def test_audit_is_reproducible(tmp_path: pathlib.Path, config: pathlib.Path):
    argv = ["audit", "--family", "product-family", "--dims", "2,4,2", "--count", "3"]
    first, second = tmp_path / "first.jsonl", tmp_path / "second.jsonl"
    assert _main("--config", str(config), "--seed", "5", "--out", str(first), *argv) == 0
    assert _main("--config", str(config), "--seed", "5", "--out", str(second), *argv) == 0
    header, *records = _lines(first)
    assert header["run"]["config"]["seed"] == 5
    assert header["run"]["config"]["optimizer"]["restarts"] == 2
    assert len(records) == 3
    assert all(record["disentangled"] for record in records)
    assert all(record["witness"] == "factored" for record in records)
    assert records == _lines(second)[1:]


def test_gen_then_audit(tmp_path: pathlib.Path, config: pathlib.Path):
    states, out = tmp_path / "states.jsonl", tmp_path / "out.jsonl"
    argv = ["gen", "--family", "haar-pure", "--dims", "2,2,2", "--count", "3"]
    assert _main("--seed", "4", "--out", str(states), *argv) == 0
    assert len(states.read_bytes().splitlines()) == 3
    argv = ["audit", "--file", str(states), "--spec", "tangle"]
    assert _main("--config", str(config), "--out", str(out), *argv) == 0
    header, *records = _lines(out)
    assert header["run"]["config"]["state_file"] == str(states)
    assert [record["descriptor"] for record in records] == [
        "states.jsonl:1",
        "states.jsonl:2",
        "states.jsonl:3",
    ]


def test_gen_records_run(tmp_path: pathlib.Path, config: pathlib.Path):
    states = tmp_path / "states.jsonl"
    argv = ["gen", "--family", "haar-pure", "--dims", "2,2,2", "--count", "2"]
    assert _main("--config", str(config), "--seed", "9", "--out", str(states), *argv) == 0
    (run,) = _lines(tmp_path / "states.jsonl.run.json")
    assert run["tool"] == "roofbox"
    assert run["version"]
    assert run["config"]["command"] == "gen"
    assert run["config"]["seed"] == 9
    assert run["config"]["optimizer"]["restarts"] == 2
    # the state file stays loadable
    assert len(_lines(states)) == 2
    assert all(set(line) == {"signature", "re", "im"} for line in _lines(states))


def test_audit_database(tmp_path: pathlib.Path, config: pathlib.Path):
    database = tmp_path / "audits.db3"
    argv = ["audit", "--family", "bell-c", "--count", "2", "--spec", "neg"]
    assert _main("--config", str(config), "--db", str(database), *argv) == 0
    with sqlite3.connect(database) as connection:
        assert connection.execute("SELECT COUNT(*) FROM audits").fetchone() == (2,)


def test_alpha_low_endpoint(tmp_path: pathlib.Path, config: pathlib.Path):
    out = tmp_path / "out.json"
    argv = ["alpha", "--family", "bell-c", "--spec", "eoe"]
    assert _main("--config", str(config), "--out", str(out), *argv) == 0
    result = _lines(out)[0]["result"]
    assert result["result"]["found"]
    assert result["result"]["alpha"] == 0.05
    assert result["alphas"] == [0.05]


def test_roof_with_wootters(tmp_path: pathlib.Path):
    out = tmp_path / "out.json"
    argv = ["roof", "--family", "ginibre", "--dims", "2,2", "--rank", "2", "--restarts", "4"]
    assert _main("--seed", "7", "--out", str(out), *argv) == 0
    result = _lines(out)[0]["result"]
    concurrence, eof = result["wootters"]
    assert result["report"]["value"] >= eof - 1e-7
    assert result["report"]["stats"]["restarts"] == 4
    assert result["report"]["stats"]["seed"] == 7


def test_witness_product_family(tmp_path: pathlib.Path):
    out = tmp_path / "out.json"
    argv = ["witness", "--family", "product-family", "--dims", "2,6,3"]
    assert _main("--seed", "1", "--out", str(out), *argv) == 0
    result = _lines(out)[0]["result"]
    assert result["witness"]["found"]
    assert result["witness"]["dims"] == [2, 3]
    assert result["product_ac"]
    assert result["form"] is None


def test_probe(tmp_path: pathlib.Path):
    out = tmp_path / "out.json"
    argv = ["probe", "--entropy", "renyi:0.5", "--dim", "3", "--trials", "200"]
    assert _main("--out", str(out), *argv) == 0
    result = _lines(out)[0]["result"]
    assert result["witness"] is None
    assert result["trials"] == 200
