#!/usr/bin/python3

import enum

import msgspec
import numpy as np

from .config import get_tolerances
from .entropy import EntropyKind, EntropySpec, SpecError, entropy_of_spectra
from .states import (
    Cut,
    DensityMatrix,
    DimSignature,
    PureState,
    SeedLike,
    State,
    apply_local,
    as_density,
    parse_cut,
    partial_transpose,
    random_unitary,
)


class MeasureKind(enum.StrEnum):
    ENTROPY_OF_ENTANGLEMENT = "eoe"
    CONCURRENCE = "concurrence"
    TANGLE = "tangle"
    G_CONCURRENCE = "gconc"
    NEGATIVITY = "neg"
    RENYI = "renyi"
    TSALLIS = "tsallis"


class MeasureSpec(msgspec.Struct, frozen=True, kw_only=True):
    kind: MeasureKind

    # alpha for renyi, q for tsallis
    param: float | None = None

    # entropy used by the eoe kind; von Neumann when omitted
    entropy: EntropySpec | None = None

    def __post_init__(self) -> None:
        if self.kind in (MeasureKind.RENYI, MeasureKind.TSALLIS):
            # validates the parameter range
            self.entropy_spec()

    @classmethod
    def parse(cls, text: str) -> "MeasureSpec":
        """
        Parses the command-line names "eoe", "concurrence", "tangle", "gconc", "neg",
        "renyi:alpha" and "tsallis:q".
        """
        name, _, arg = text.strip().lower().partition(":")
        try:
            kind = MeasureKind(name)
        except ValueError:
            raise SpecError(f"Unknown measure {text!r}") from None
        if kind in (MeasureKind.RENYI, MeasureKind.TSALLIS):
            try:
                return cls(kind=kind, param=float(arg))
            except ValueError:
                raise SpecError(f"Measure {text!r} needs a numeric parameter") from None
        if arg:
            raise SpecError(f"Measure {name!r} takes no parameter")
        return cls(kind=kind)

    @property
    def name(self) -> str:
        if self.param is not None:
            return f"{self.kind}:{self.param:g}"
        return str(self.kind)

    def entropy_spec(self) -> EntropySpec | None:
        match self.kind:
            case MeasureKind.ENTROPY_OF_ENTANGLEMENT:
                return self.entropy or EntropySpec()
            case MeasureKind.RENYI:
                return EntropySpec(kind=EntropyKind.RENYI, param=self.param)
            case MeasureKind.TSALLIS:
                return EntropySpec(kind=EntropyKind.TSALLIS, param=self.param)
        return None

    @property
    def strictly_concave(self) -> bool:
        """
        Whether the reduction function is strictly concave.  Renyi entropies above alpha = 1
        are not; negativity is not an h-type measure here.
        """
        match self.kind:
            case MeasureKind.NEGATIVITY:
                return False
            case MeasureKind.RENYI:
                assert self.param is not None
                return self.param <= 1
            case MeasureKind.ENTROPY_OF_ENTANGLEMENT if self.entropy is not None:
                if self.entropy.kind == EntropyKind.RENYI:
                    assert self.entropy.param is not None
                    return self.entropy.param <= 1
        return True


class UnsupportedMeasure(SpecError):
    pass


def h_from_spectra(
    spectra: np.ndarray, spec: MeasureSpec, dim: int | None = None
) -> np.ndarray:
    """
    Reduction function evaluated along the last axis of an array of reduced-state spectra.
    `dim` is the local dimension d of the G-concurrence; it defaults to the number of
    eigenvalues given.
    """
    p = np.clip(np.asarray(spectra, dtype=float), 0.0, None)
    tol = get_tolerances()
    match spec.kind:
        case MeasureKind.CONCURRENCE | MeasureKind.TANGLE:
            # 4 sum_{i<j} p_i p_j over the support, exactly 0 for a single eigenvalue
            support = np.where(p > tol.eig, p, 0.0)
            tangle = np.maximum(
                2 * (np.sum(support, axis=-1) ** 2 - np.sum(support**2, axis=-1)), 0.0
            )
            return np.sqrt(tangle) if spec.kind == MeasureKind.CONCURRENCE else tangle
        case MeasureKind.G_CONCURRENCE:
            d = dim or p.shape[-1]
            if p.shape[-1] < d:
                return np.zeros(p.shape[:-1])
            # the d largest eigenvalues; the rest vanish on a state of local rank d
            top = np.sort(p, axis=-1)[..., -d:]
            full_rank = np.all(top > tol.eig, axis=-1)
            mean_log = np.mean(np.log(np.where(full_rank[..., None], top, 1.0)), axis=-1)
            return np.where(full_rank, d * np.exp(mean_log), 0.0)
        case MeasureKind.NEGATIVITY:
            raise UnsupportedMeasure("Negativity is not given by a reduction function")
    entropy_spec = spec.entropy_spec()
    assert entropy_spec is not None
    return entropy_of_spectra(p, entropy_spec)


def h_from_spectrum(spectrum: np.ndarray, spec: MeasureSpec, dim: int | None = None) -> float:
    return float(h_from_spectra(np.asarray(spectrum).reshape(-1), spec, dim))


def pure_values(spectra: np.ndarray, spec: MeasureSpec, dim: int) -> np.ndarray:
    """
    Measure of pure states given the spectra of their reduced states (last axis).  `dim` is
    the smaller dimension of the two sides of the cut.
    """
    if spec.kind == MeasureKind.NEGATIVITY:
        p = np.clip(np.asarray(spectra, dtype=float), 0.0, None)
        c = np.sqrt(np.where(p > get_tolerances().eig, p, 0.0))
        return np.maximum((np.sum(c, axis=-1) ** 2 - 1) / 2, 0.0)
    return h_from_spectra(spectra, spec, dim)


def pure_value_from_schmidt(coefficients: np.ndarray, spec: MeasureSpec, dim: int) -> float:
    """
    Measure of a pure state given its Schmidt coefficients across a cut; `dim` is the smaller
    dimension of the two sides.
    """
    c = np.abs(np.asarray(coefficients, dtype=float)).reshape(-1)
    return float(pure_values(c**2, spec, dim))


def h_value(rho_a: DensityMatrix, spec: MeasureSpec) -> float:
    return h_from_spectrum(rho_a.spectrum(), spec, rho_a.signature.total)


def cut_rank_bound(signature: DimSignature, cut: str | Cut | None) -> int:
    """
    Largest possible Schmidt rank across the cut: the smaller of the two side dimensions.
    """
    parsed = parse_cut(cut, signature)
    return min(signature.dim_of(parsed.left), signature.dim_of(parsed.right))


def pure_measure(state: PureState, cut: str | Cut | None, spec: MeasureSpec) -> float:
    """
    E(|psi><psi|) across a cut, evaluated from the Schmidt coefficients, so both sides of the
    cut give the same value.
    """
    parsed = parse_cut(cut, state.signature)
    singular_values = np.linalg.svd(state.bipartite_matrix(parsed), compute_uv=False)
    return pure_value_from_schmidt(
        singular_values, spec, cut_rank_bound(state.signature, parsed)
    )


def negativity(state: State, cut: str | Cut | None = None) -> float:
    """
    (||rho^{T_right}||_1 - 1) / 2.
    """
    rho = as_density(state)
    parsed = parse_cut(cut, rho.signature)
    transposed = partial_transpose(rho, parsed.right)
    eigenvalues = np.linalg.eigvalsh((transposed + transposed.conj().T) / 2)
    return max((float(np.sum(np.abs(eigenvalues))) - 1) / 2, 0.0)


def measure(state: State, cut: str | Cut | None, spec: MeasureSpec) -> float:
    """
    Non-roof evaluation: the pure-state measure, or the negativity of a mixed state.
    """
    if isinstance(state, PureState):
        return pure_measure(state, cut, spec)
    if spec.kind == MeasureKind.NEGATIVITY:
        return negativity(state, cut)
    raise UnsupportedMeasure(f"{spec.name} of a mixed state needs the convex roof")


def lu_invariance_check(
    spec: MeasureSpec,
    state: PureState,
    cut: str | Cut | None = None,
    trials: int = 100,
    seed: SeedLike = 0,
) -> float:
    """
    Largest deviation |E(psi) - E((U_left (x) U_right) psi)| over random local unitaries.
    """
    if trials < 1:
        raise ValueError("Invariance check needs at least one trial")
    parsed = parse_cut(cut, state.signature)
    dim_left = state.signature.dim_of(parsed.left)
    dim_right = state.signature.dim_of(parsed.right)
    reference = pure_measure(state, parsed, spec)
    rng = np.random.default_rng(seed)

    deviation = 0.0
    for _ in range(trials):
        rotated = apply_local(
            state, parsed, random_unitary(dim_left, rng), random_unitary(dim_right, rng)
        )
        deviation = max(deviation, abs(pure_measure(rotated, parsed, spec) - reference))
    return deviation
