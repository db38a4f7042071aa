#!/usr/bin/python3

import enum
import logging
import pathlib
import typing

import msgspec
import numpy as np

from .config import PositiveInt
from .states import (
    PureState,
    SignatureError,
    State,
    StateRecord,
    bell_state,
    computational_state,
    from_record,
    ghz_state,
    make_product_family,
    product_state,
    random_density,
    random_pure,
    random_unitary,
    to_record,
    w_state,
)

logger = logging.getLogger(__name__)


class StateFileError(OSError):
    pass


class Family(enum.StrEnum):
    HAAR_PURE = "haar-pure"
    GINIBRE = "ginibre"
    PRODUCT_FAMILY = "product-family"
    GHZ = "ghz"
    W = "w"
    BELL = "bell"

    # Bell pair on AB with C in |0>
    BELL_C = "bell-c"


_FIXED_DIMS = {
    Family.GHZ: (2, 2, 2),
    Family.W: (2, 2, 2),
    Family.BELL: (2, 2),
}


class EnsembleSpec(msgspec.Struct, frozen=True, kw_only=True):
    family: Family
    dims: tuple[PositiveInt, ...] | None = None
    count: PositiveInt = 1

    # Ginibre rank; full rank when omitted
    rank: PositiveInt | None = None

    # (dim B1, dim B2) for the product family
    b_split: tuple[PositiveInt, PositiveInt] | None = None

    def __post_init__(self) -> None:
        dims = self.resolved_dims
        match self.family:
            case Family.GHZ | Family.W | Family.BELL:
                expected = _FIXED_DIMS[self.family]
                if dims != expected:
                    raise SignatureError(f"{self.family} has dims {expected}, got {dims}")
            case Family.BELL_C:
                if len(dims) != 3 or dims[:2] != (2, 2):
                    raise SignatureError(f"{self.family} needs dims (2, 2, d), got {dims}")
            case Family.PRODUCT_FAMILY:
                if len(dims) != 3:
                    raise SignatureError(f"Family {self.family} needs tripartite dims")
                dim_b1, dim_b2 = self.resolved_split
                if dim_b1 * dim_b2 > dims[1]:
                    raise SignatureError(
                        f"dim B = {dims[1]} cannot hold dim B1 * dim B2 = {dim_b1 * dim_b2}"
                    )
            case Family.GINIBRE:
                total = int(np.prod(dims))
                if self.rank is not None and self.rank > total:
                    raise SignatureError(f"Rank {self.rank} exceeds dimension {total}")

    @property
    def resolved_dims(self) -> tuple[int, ...]:
        if self.dims:
            return tuple(self.dims)
        if self.family in _FIXED_DIMS:
            return _FIXED_DIMS[self.family]
        if self.family == Family.BELL_C:
            return (2, 2, 2)
        raise SignatureError(f"Family {self.family} needs explicit dims")

    @property
    def resolved_split(self) -> tuple[int, int]:
        """
        (dim B1, dim B2); defaults to the largest factors the A and C sides can use.
        """
        if self.b_split:
            return self.b_split
        dim_a, dim_b, dim_c = self.resolved_dims
        dim_b1 = min(dim_a, dim_b)
        return dim_b1, max(1, min(dim_c, dim_b // dim_b1))

    @property
    def randomized(self) -> bool:
        return self.family in (Family.HAAR_PURE, Family.GINIBRE, Family.PRODUCT_FAMILY)

    def describe(self) -> str:
        return f"{self.family}:{'x'.join(str(d) for d in self.resolved_dims)}"


class Sample(typing.NamedTuple):
    descriptor: str
    seed: int | None
    state: State


def _product_family_member(spec: EnsembleSpec, rng: np.random.Generator) -> PureState:
    dim_a, dim_b, dim_c = spec.resolved_dims
    dim_b1, dim_b2 = spec.resolved_split
    phi = random_pure((dim_a, dim_b1), rng)
    eta = random_pure((dim_b2, dim_c), rng)
    return make_product_family(phi, eta, random_unitary(dim_b, rng))


def _member(spec: EnsembleSpec, rng: np.random.Generator) -> State:
    dims = spec.resolved_dims
    match spec.family:
        case Family.HAAR_PURE:
            return random_pure(dims, rng)
        case Family.GINIBRE:
            return random_density(dims, spec.rank, rng)
        case Family.PRODUCT_FAMILY:
            return _product_family_member(spec, rng)
        case Family.GHZ:
            return ghz_state(3)
        case Family.W:
            return w_state(3)
        case Family.BELL:
            return bell_state()
        case Family.BELL_C:
            return product_state(bell_state(), computational_state([0], dims[2:]))
    raise SignatureError(f"Unknown family {spec.family}")


def generate(spec: EnsembleSpec, seed: int | None = None) -> list[Sample]:
    """
    Draws `spec.count` states.  Every member gets its own spawned seed stream, so member k is
    the same whatever the count.
    """
    if spec.randomized and seed is None:
        raise ValueError(f"Family {spec.family} needs a seed")
    streams = np.random.SeedSequence(seed or 0).spawn(spec.count)
    label = spec.describe()
    samples = [
        Sample(f"{label}[{index}]", seed, _member(spec, np.random.default_rng(stream)))
        for index, stream in enumerate(streams)
    ]
    logger.info(f"Generated {len(samples)} states from {label}")
    return samples


def load_states(path: pathlib.Path) -> list[Sample]:
    """
    Reads a `.jsonl` file with one record per line, or any other file as a JSON document
    holding one record or a list of records.  Decoding problems are reported with the file,
    line and field.
    """
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise StateFileError(f"Cannot read state file {path}: {exc}") from exc

    numbered: list[tuple[int, StateRecord]] = []
    if path.suffix != ".jsonl":
        try:
            document = msgspec.json.decode(text, type=StateRecord | list[StateRecord])
        except msgspec.ValidationError as exc:
            raise StateFileError(f"{path}: {exc}") from exc
        except msgspec.DecodeError as exc:
            raise StateFileError(f"{path}: malformed JSON ({exc})") from exc
        records = [document] if isinstance(document, StateRecord) else document
        numbered = list(enumerate(records, start=1))
        unit = "record"
    else:
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                numbered.append((lineno, msgspec.json.decode(line, type=StateRecord)))
            except msgspec.DecodeError as exc:
                raise StateFileError(f"{path}, line {lineno}: {exc}") from exc
        unit = "line"

    if not numbered:
        raise StateFileError(f"{path} contains no states")
    samples = []
    for index, record in numbered:
        try:
            state = from_record(record)
        except ValueError as exc:
            raise StateFileError(f"{path}, {unit} {index}: {exc}") from exc
        samples.append(Sample(f"{path.name}:{index}", None, state))
    return samples


def write_states(path: pathlib.Path, states: typing.Iterable[State]) -> int:
    """
    Writes states as JSON lines.  Returns the number written.
    """
    encoder = msgspec.json.Encoder()
    count = 0
    with path.open("wb") as output:
        for state in states:
            output.write(encoder.encode(to_record(state)) + b"\n")
            count += 1
    return count
