#!/usr/bin/python3

import pathlib

import numpy as np
import pytest
from roofbox.ensembles import (
    EnsembleSpec,
    Family,
    StateFileError,
    generate,
    load_states,
    write_states,
)
from roofbox.states import (
    DensityMatrix,
    PureState,
    SignatureError,
    bell_state,
    encode_state,
    partial_trace,
    random_density,
    random_pure,
)
from roofbox.structure import is_product


def test_generate_is_reproducible():
    spec = EnsembleSpec(family=Family.HAAR_PURE, dims=(2, 2, 2), count=5)
    first = generate(spec, seed=3)
    second = generate(spec, seed=3)
    assert [s.descriptor for s in first] == [f"haar-pure:2x2x2[{i}]" for i in range(5)]
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.state.amplitudes, b.state.amplitudes)
    assert all(sample.seed == 3 for sample in first)


def test_member_does_not_depend_on_count():
    short = generate(EnsembleSpec(family=Family.HAAR_PURE, dims=(2, 3), count=2), seed=1)
    long = generate(EnsembleSpec(family=Family.HAAR_PURE, dims=(2, 3), count=6), seed=1)
    np.testing.assert_array_equal(short[1].state.amplitudes, long[1].state.amplitudes)


def test_random_family_needs_seed():
    with pytest.raises(ValueError):
        generate(EnsembleSpec(family=Family.GINIBRE, dims=(2, 2)))


@pytest.mark.parametrize(
    "family, dims",
    [
        (Family.GHZ, (2, 2, 2)),
        (Family.W, (2, 2, 2)),
        (Family.BELL, (2, 2)),
        (Family.BELL_C, (2, 2, 2)),
    ],
)
def test_fixed_families(family: Family, dims: tuple[int, ...]):
    (sample,) = generate(EnsembleSpec(family=family))
    assert isinstance(sample.state, PureState)
    assert sample.state.dims == dims
    assert sample.seed is None


def test_bell_c_with_larger_c():
    (sample,) = generate(EnsembleSpec(family=Family.BELL_C, dims=(2, 2, 3)))
    assert sample.state.dims == (2, 2, 3)


@pytest.mark.parametrize(
    "family, dims",
    [
        (Family.GHZ, (2, 2)),
        (Family.BELL, (3, 3)),
        (Family.BELL_C, (2, 3, 2)),
        (Family.PRODUCT_FAMILY, (2, 4)),
    ],
)
def test_fixed_dims_are_enforced(family: Family, dims: tuple[int, ...]):
    with pytest.raises(SignatureError):
        EnsembleSpec(family=family, dims=dims)


def test_random_families_need_dims():
    with pytest.raises(SignatureError):
        EnsembleSpec(family=Family.HAAR_PURE)


@pytest.mark.parametrize(
    "dims, split",
    [
        ((2, 4, 2), (2, 2)),
        ((2, 6, 3), (2, 3)),
        ((3, 9, 3), (3, 3)),
        ((2, 3, 2), (2, 1)),
    ],
)
def test_product_family_split(dims: tuple[int, int, int], split: tuple[int, int]):
    spec = EnsembleSpec(family=Family.PRODUCT_FAMILY, dims=dims, count=2)
    assert spec.resolved_split == split
    for sample in generate(spec, seed=0):
        assert sample.state.dims == dims
        assert is_product(partial_trace(sample.state, "AC")).is_product


def test_product_family_split_too_large():
    with pytest.raises(SignatureError):
        EnsembleSpec(family=Family.PRODUCT_FAMILY, dims=(2, 3, 2), b_split=(2, 2))


def test_ginibre_rank():
    spec = EnsembleSpec(family=Family.GINIBRE, dims=(2, 2, 2), rank=3, count=3)
    for sample in generate(spec, seed=5):
        assert isinstance(sample.state, DensityMatrix)
        assert sample.state.rank() == 3
    with pytest.raises(SignatureError):
        EnsembleSpec(family=Family.GINIBRE, dims=(2, 2), rank=5)


def test_write_and_load_jsonl(tmp_path: pathlib.Path):
    path = tmp_path / "states.jsonl"
    states = [random_pure((2, 2, 2), seed=0), random_density((2, 2), 2, seed=1)]
    assert write_states(path, states) == 2
    samples = load_states(path)
    assert [s.descriptor for s in samples] == ["states.jsonl:1", "states.jsonl:2"]
    np.testing.assert_allclose(samples[0].state.amplitudes, states[0].amplitudes)
    np.testing.assert_allclose(samples[1].state.matrix, states[1].matrix)


def test_load_json_document(tmp_path: pathlib.Path):
    single = tmp_path / "single.json"
    single.write_bytes(encode_state(bell_state()))
    assert len(load_states(single)) == 1

    listing = tmp_path / "list.json"
    record = encode_state(bell_state())
    listing.write_bytes(b"[" + record + b"," + record + b"]")
    assert len(load_states(listing)) == 2


@pytest.mark.parametrize(
    "lines, message",
    [
        ([b'{"signature": [2], "re": [1, 0], "im": [0, 0]}', b"{not json"], "line 2"),
        ([b'{"signature": [2], "re": [1, 0]}'], "line 1"),
        ([b'{"signature": [2, 2], "re": [1, 0, 0], "im": [0, 0, 0]}'], "line 1"),
        ([b'{"signature": [2], "re": [1, 1], "im": [0, 0]}'], "line 1"),
        ([b""], "no states"),
    ],
)
def test_malformed_state_files(tmp_path: pathlib.Path, lines: list[bytes], message: str):
    path = tmp_path / "bad.jsonl"
    path.write_bytes(b"\n".join(lines))
    with pytest.raises(StateFileError, match=message):
        load_states(path)


def test_missing_state_file(tmp_path: pathlib.Path):
    with pytest.raises(StateFileError):
        load_states(tmp_path / "absent.jsonl")
    with pytest.raises(OSError):
        load_states(tmp_path / "absent.json")
