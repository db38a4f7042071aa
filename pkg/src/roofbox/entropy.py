#!/usr/bin/python3

import enum
import logging
import math
import typing

import msgspec
import numpy as np

from .config import get_tolerances
from .states import DensityMatrix, StateRecord, random_density, to_record

logger = logging.getLogger(__name__)


class SpecError(ValueError):
    pass


class EntropyKind(enum.StrEnum):
    VON_NEUMANN = "vn"
    TSALLIS = "tsallis"
    RENYI = "renyi"
    LINEAR = "linear"
    G_TRACE = "g"


# concave scalar functions on [0, 1] with g(0) = g(1) = 0, usable in H_g = sum_j g(p_j)
G_TRACE_FUNCTIONS: dict[str, typing.Callable[[np.ndarray], np.ndarray]] = {
    "shannon": lambda p: -p * np.log2(np.where(p > 0, p, 1.0)),
    "linear": lambda p: p * (1 - p),
    "sqrt": lambda p: np.sqrt(p) - p,
    "cubic": lambda p: p - p**3,
}


class EntropySpec(msgspec.Struct, frozen=True, kw_only=True):
    kind: EntropyKind = EntropyKind.VON_NEUMANN

    # q for Tsallis, alpha for Renyi
    param: float | None = None

    # name of a G_TRACE_FUNCTIONS entry
    g: str | None = None
    base: float = 2.0

    def __post_init__(self) -> None:
        if self.base <= 0 or self.base == 1:
            raise SpecError(f"Invalid logarithm base {self.base}")
        match self.kind:
            case EntropyKind.TSALLIS:
                if self.param is None or self.param <= 0:
                    raise SpecError(f"Tsallis entropy requires q > 0 (got {self.param})")
            case EntropyKind.RENYI:
                if self.param is None or self.param < 0:
                    raise SpecError(f"Renyi entropy requires alpha >= 0 (got {self.param})")
            case EntropyKind.G_TRACE:
                if self.g not in G_TRACE_FUNCTIONS:
                    raise SpecError(
                        f"Unknown g-trace function {self.g!r}; "
                        f"expected one of {sorted(G_TRACE_FUNCTIONS)}"
                    )

    @classmethod
    def parse(cls, text: str) -> "EntropySpec":
        """
        Parses "vn", "linear", "tsallis:q", "renyi:alpha" or "g:name".
        """
        name, _, arg = text.strip().lower().partition(":")
        try:
            kind = EntropyKind(name)
        except ValueError:
            raise SpecError(f"Unknown entropy {text!r}") from None
        if kind == EntropyKind.G_TRACE:
            return cls(kind=kind, g=arg)
        if kind in (EntropyKind.TSALLIS, EntropyKind.RENYI):
            try:
                return cls(kind=kind, param=float(arg))
            except ValueError:
                raise SpecError(f"Entropy {text!r} needs a numeric parameter") from None
        return cls(kind=kind)

    @property
    def name(self) -> str:
        match self.kind:
            case EntropyKind.TSALLIS | EntropyKind.RENYI:
                return f"{self.kind}:{self.param:g}"
            case EntropyKind.G_TRACE:
                return f"{self.kind}:{self.g}"
        return str(self.kind)


def _log(values: np.ndarray, base: float) -> np.ndarray:
    return np.log(values) / math.log(base)


def entropy_of_spectra(spectra: np.ndarray, spec: EntropySpec) -> np.ndarray:
    """
    Evaluates the entropy along the last axis of an array of eigenvalue lists.  0 log 0 is
    taken as 0 and the q = 1 / alpha = 1 cases evaluate the von Neumann limit.
    """
    p = np.clip(np.asarray(spectra, dtype=float), 0.0, None)
    support = p > get_tolerances().eig
    p = np.where(support, p, 0.0)
    # log(1) = 0 outside the support
    safe = np.where(support, p, 1.0)
    match spec.kind:
        case EntropyKind.VON_NEUMANN:
            value = -np.sum(p * _log(safe, spec.base), axis=-1)
        case EntropyKind.TSALLIS:
            assert spec.param is not None
            if spec.param == 1:
                # the limit is taken in nats
                value = -np.sum(p * np.log(safe), axis=-1)
            else:
                value = (1 - np.sum(p**spec.param, axis=-1)) / (spec.param - 1)
        case EntropyKind.RENYI:
            assert spec.param is not None
            if spec.param == 1:
                value = -np.sum(p * _log(safe, spec.base), axis=-1)
            elif spec.param == 0:
                value = _log(np.count_nonzero(support, axis=-1).astype(float), spec.base)
            else:
                power_sum = np.sum(np.where(support, safe**spec.param, 0.0), axis=-1)
                value = _log(power_sum, spec.base) / (1 - spec.param)
        case EntropyKind.LINEAR:
            value = 1 - np.sum(p**2, axis=-1)
        case EntropyKind.G_TRACE:
            assert spec.g is not None
            value = np.sum(G_TRACE_FUNCTIONS[spec.g](p), axis=-1)
    return np.maximum(value, 0.0)


def entropy_of_spectrum(spectrum: np.ndarray, spec: EntropySpec) -> float:
    return float(entropy_of_spectra(np.asarray(spectrum).reshape(-1), spec))


def entropy(rho: DensityMatrix, spec: EntropySpec | None = None) -> float:
    return entropy_of_spectrum(rho.spectrum(), spec or EntropySpec())


class ConcavityWitness(msgspec.Struct):
    rho1: StateRecord
    rho2: StateRecord
    weight: float
    margin: float


class ConcavityReport(msgspec.Struct):
    spec: str
    dim: int
    trials: int
    seed: int
    min_margin: float
    witness: ConcavityWitness | None = None

    @property
    def violation_found(self) -> bool:
        return self.witness is not None


def concavity_margin(
    rho1: DensityMatrix,
    rho2: DensityMatrix,
    weight: float,
    evaluate: typing.Callable[[DensityMatrix], float],
) -> float:
    """
    h(l r1 + (1 - l) r2) - l h(r1) - (1 - l) h(r2); negative where h fails to be concave.
    """
    mixed = DensityMatrix(weight * rho1.matrix + (1 - weight) * rho2.matrix, rho1.signature)
    return evaluate(mixed) - weight * evaluate(rho1) - (1 - weight) * evaluate(rho2)


def concavity_probe(
    spec: EntropySpec,
    dim: int,
    trials: int,
    seed: int = 0,
    evaluate: typing.Callable[[DensityMatrix], float] | None = None,
) -> ConcavityReport:
    """
    Samples pairs of random states and mixing weights and records the smallest concavity
    margin h(l r1 + (1 - l) r2) - l h(r1) - (1 - l) h(r2).  A margin below -tau_eig is kept as a
    violation witness.  `evaluate` replaces the entropy by another function of the state (the
    reduction function of a measure, for instance).
    """
    if trials < 1:
        raise ValueError("Concavity probe needs at least one trial")
    evaluate = evaluate or (lambda rho: entropy(rho, spec))
    tol = get_tolerances()

    min_margin = math.inf
    witness: ConcavityWitness | None = None
    for trial_seed in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.default_rng(trial_seed)
        # full-rank and rank-deficient states are both of interest
        rank1, rank2 = rng.integers(1, dim + 1, size=2)
        rho1 = random_density(dim, int(rank1), rng)
        rho2 = random_density(dim, int(rank2), rng)
        weight = float(rng.uniform(0.0, 1.0))
        margin = concavity_margin(rho1, rho2, weight, evaluate)
        min_margin = min(min_margin, margin)
        if margin < -tol.eig and (witness is None or margin < witness.margin):
            witness = ConcavityWitness(to_record(rho1), to_record(rho2), weight, margin)

    if witness:
        logger.info(f"Concavity violation for {spec.name} in dim {dim}: {witness.margin:.3e}")
    return ConcavityReport(spec.name, dim, trials, seed, float(min_margin), witness)

