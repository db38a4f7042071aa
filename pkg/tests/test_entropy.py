#!/usr/bin/python3

import math
import pathlib

import msgspec
import numpy as np
import pytest
from roofbox.entropy import (
    ConcavityReport,
    EntropyKind,
    EntropySpec,
    SpecError,
    concavity_margin,
    concavity_probe,
    entropy,
    entropy_of_spectrum,
)
from roofbox.measures import MeasureSpec, h_value
from roofbox.states import computational_state, density, from_record, random_density

DATA = pathlib.Path(__file__).parent / "data"


@pytest.mark.parametrize(
    "spec, spectrum, expected",
    [
        ("vn", [0.5, 0.5], 1.0),
        ("vn", [1.0, 0.0], 0.0),
        ("vn", [0.25] * 4, 2.0),
        ("linear", [0.5, 0.5], 0.5),
        ("tsallis:2", [0.5, 0.5], 0.5),
        ("renyi:2", [0.5, 0.5], 1.0),
        ("renyi:0", [0.5, 0.5, 0.0], 1.0),
        ("renyi:0.5", [0.25] * 4, 2.0),
        ("g:shannon", [0.5, 0.5], 1.0),
        ("g:linear", [0.5, 0.5], 0.5),
    ],
)
def test_entropy_values(spec: str, spectrum: list[float], expected: float):
    assert entropy_of_spectrum(np.array(spectrum), EntropySpec.parse(spec)) == pytest.approx(
        expected
    )


def test_natural_base():
    rho = density(np.eye(2) / 2, (2,))
    assert entropy(rho, EntropySpec(base=math.e)) == pytest.approx(math.log(2))


def test_pure_state_has_no_entropy():
    assert entropy(computational_state([1], (3,)).projector()) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_limits(seed: int):
    spectrum = random_density(4, seed=seed).spectrum()
    vn = entropy_of_spectrum(spectrum, EntropySpec())
    assert entropy_of_spectrum(spectrum, EntropySpec.parse("renyi:1")) == pytest.approx(vn)
    assert entropy_of_spectrum(spectrum, EntropySpec.parse("g:shannon")) == pytest.approx(vn)
    # the Tsallis limit is in nats
    assert entropy_of_spectrum(spectrum, EntropySpec.parse("tsallis:1")) == pytest.approx(
        vn * math.log(2)
    )
    assert entropy_of_spectrum(spectrum, EntropySpec.parse("linear")) == pytest.approx(
        entropy_of_spectrum(spectrum, EntropySpec.parse("tsallis:2"))
    )


def test_parameter_near_one():
    spectrum = np.array([2 / 3, 1 / 3])
    vn = entropy_of_spectrum(spectrum, EntropySpec())
    assert vn == pytest.approx(0.918296, abs=1e-6)
    renyi = entropy_of_spectrum(spectrum, EntropySpec.parse("renyi:1.00001"))
    tsallis = entropy_of_spectrum(spectrum, EntropySpec.parse("tsallis:1.00001"))
    assert abs(renyi - vn) < 1e-4
    assert abs(tsallis - vn * math.log(2)) < 1e-4


def test_maximally_mixed():
    for dim in (2, 3, 5):
        rho = density(np.eye(dim) / dim, (dim,))
        assert entropy(rho) == pytest.approx(math.log2(dim))
        assert h_value(rho, MeasureSpec.parse("gconc")) == pytest.approx(1.0)
    qubit = density(np.eye(2) / 2, (2,))
    assert h_value(qubit, MeasureSpec.parse("tangle")) == pytest.approx(1.0)


def test_parse():
    spec = EntropySpec.parse("Tsallis:2.5")
    assert spec.kind == EntropyKind.TSALLIS
    assert spec.param == 2.5
    assert spec.name == "tsallis:2.5"
    assert EntropySpec.parse("vn").name == "vn"


@pytest.mark.parametrize(
    "text", ["bogus", "renyi:-1", "tsallis:0", "tsallis", "renyi:abc", "g:nope", "g"]
)
def test_parse_rejects(text: str):
    with pytest.raises(SpecError):
        EntropySpec.parse(text)


def test_invalid_base():
    with pytest.raises(SpecError):
        EntropySpec(base=1.0)


@pytest.mark.parametrize("spec", ["vn", "linear", "tsallis:2", "renyi:0.5", "g:sqrt"])
def test_concave_entropies_show_no_violation(spec: str):
    report = concavity_probe(EntropySpec.parse(spec), dim=3, trials=300, seed=1)
    assert not report.violation_found
    assert report.trials == 300
    assert report.spec == EntropySpec.parse(spec).name


@pytest.mark.slow
@pytest.mark.parametrize(
    "spec, dim",
    [
        ("vn", 2),
        ("vn", 3),
        ("vn", 4),
        ("tsallis:0.5", 3),
        ("tsallis:2", 3),
        ("tsallis:3", 3),
        ("renyi:0.3", 3),
        ("renyi:0.7", 3),
        ("linear", 3),
    ],
)
def test_strict_concavity_margins(spec: str, dim: int):
    report = concavity_probe(EntropySpec.parse(spec), dim=dim, trials=1000, seed=0)
    assert report.min_margin > 0


def test_renyi_two_search_reports():
    report = concavity_probe(EntropySpec.parse("renyi:2"), dim=3, trials=500, seed=0)
    assert report.trials == 500
    assert report.violation_found == (report.witness is not None)


def test_probe_is_deterministic():
    spec = EntropySpec.parse("renyi:4")
    first = concavity_probe(spec, dim=3, trials=200, seed=7)
    second = concavity_probe(spec, dim=3, trials=200, seed=7)
    assert first.min_margin == second.min_margin
    assert first.violation_found == second.violation_found
    if first.witness is not None:
        assert first.witness.margin < 0


def test_gconc_concavity_agrees_with_flag():
    spec = MeasureSpec.parse("gconc")
    report = concavity_probe(
        EntropySpec(), dim=2, trials=300, seed=3, evaluate=lambda rho: h_value(rho, spec)
    )
    assert report.violation_found != spec.strictly_concave


def test_probe_needs_trials():
    with pytest.raises(ValueError):
        concavity_probe(EntropySpec(), dim=2, trials=0)


def test_concavity_witness_fixture():
    # pure qutrit against the maximally mixed one, mixed half and half
    decoder = msgspec.json.Decoder(ConcavityReport)
    lines = (DATA / "concavity_witnesses.jsonl").read_bytes().splitlines()
    reports = [decoder.decode(line) for line in lines if line.strip()]
    assert [report.spec for report in reports] == ["renyi:4", "renyi:8", "renyi:16"]
    for report in reports:
        spec = EntropySpec.parse(report.spec)
        witness = report.witness
        assert witness is not None and report.violation_found
        rho1, rho2 = from_record(witness.rho1), from_record(witness.rho2)
        margin = concavity_margin(rho1, rho2, witness.weight, lambda rho: entropy(rho, spec))
        assert margin < 0
        assert margin == pytest.approx(witness.margin, abs=1e-9)
        assert not MeasureSpec.parse(report.spec).strictly_concave
