#!/usr/bin/python3

import enum
import logging
import typing

import msgspec
import numpy as np
import scipy.linalg

from .config import get_tolerances
from .states import (
    ContractError,
    Cut,
    DensityMatrix,
    DimSignature,
    Isometry,
    PureState,
    SignatureError,
    State,
    StateRecord,
    as_density,
    eigh_descending,
    ket,
    make_product_family,
    parse_cut,
    partial_trace,
    partial_transpose,
    schmidt,
    tensor_densities,
    to_record,
    trace_distance,
)

logger = logging.getLogger(__name__)


class FailureStage(enum.StrEnum):
    MARGINAL_EQUALITY = "marginal-equality"
    GRAM = "gram"
    RECONSTRUCTION = "reconstruction"


class FactorizationWitness(msgspec.Struct, eq=False):
    """
    |psi>^{ABC} = (I (x) U_B (x) I) |phi>^{AB1} |eta>^{B2C}.
    """

    dims: tuple[int, int]
    phi: PureState
    eta: PureState
    u_b: Isometry
    error: float

    def rebuild(self) -> PureState:
        return make_product_family(self.phi, self.eta, self.u_b)


class FactorizationAttempt(typing.NamedTuple):
    witness: FactorizationWitness | None
    stage: FailureStage | None
    residual: float


class WitnessRecord(msgspec.Struct):
    found: bool
    stage: FailureStage | None = None
    residual: float = 0.0
    dims: tuple[int, int] | None = None
    phi: StateRecord | None = None
    eta: StateRecord | None = None
    u_b_re: list[list[float]] | None = None
    u_b_im: list[list[float]] | None = None
    error: float | None = None


def to_witness_record(attempt: FactorizationAttempt) -> WitnessRecord:
    witness = attempt.witness
    if witness is None:
        return WitnessRecord(False, attempt.stage, attempt.residual)
    return WitnessRecord(
        True,
        residual=attempt.residual,
        dims=witness.dims,
        phi=to_record(witness.phi),
        eta=to_record(witness.eta),
        u_b_re=witness.u_b.matrix.real.tolist(),
        u_b_im=witness.u_b.matrix.imag.tolist(),
        error=witness.error,
    )


def attempt_factorization(state: PureState, eps: float | None = None) -> FactorizationAttempt:
    """
    Follows the structure argument for pure states meeting the disentangling condition:

    1. spectral decomposition {p_j, psi_j} of rho^{AB};
    2. every psi_j must have the marginal rho^A;
    3. psi_j = (I (x) V_j)|phi> for a fixed purification |phi>^{AB1} of rho^A, with
       V_j = sum_k |v_kj><k|;
    4. the vectors v_kj must be orthonormal across both k and j;
    5. U_B maps |k>^{B1}|j>^{B2} to v_kj and eta collects the C-side Schmidt vectors;
    6. the rebuilt state must reproduce the input.

    The first failing stage is reported together with its residual.
    """
    if len(state.dims) != 3:
        raise SignatureError(f"Factorization needs a tripartite state, got {state.dims}")
    tol = get_tolerances()
    eps = tol.witness if eps is None else eps
    dim_a, dim_b, dim_c = state.dims

    rho_ab = partial_trace(state, "AB")
    values, vectors = eigh_descending(rho_ab.matrix)
    n = max(1, int(np.count_nonzero(values > tol.psd)))
    members = vectors[:, :n]

    rho_a = partial_trace(state, "A")
    a_values, a_vectors = eigh_descending(rho_a.matrix)
    r = max(1, int(np.count_nonzero(a_values > tol.psd)))
    support_values, support = a_values[:r], a_vectors[:, :r]

    residual = 0.0
    for j in range(n):
        member = members[:, j].reshape(dim_a, dim_b)
        residual = max(residual, trace_distance(member @ member.conj().T, rho_a.matrix))
    if residual >= eps:
        return FactorizationAttempt(None, FailureStage.MARGINAL_EQUALITY, residual)

    # V_j^T = diag(1/sqrt(l)) E^dagger M_j on the support of rho^A, so columns of V_j are v_kj
    inverse_root = support.conj().T / np.sqrt(support_values)[:, None]
    isometries = [inverse_root @ members[:, j].reshape(dim_a, dim_b) for j in range(n)]
    # column k * n + j holds v_kj, matching the B1 (x) B2 ordering of make_product_family
    basis = np.stack([isometries[j].T for j in range(n)], axis=2).reshape(dim_b, r * n)
    if r * n > dim_b:
        return FactorizationAttempt(None, FailureStage.GRAM, 1.0)
    residual = float(np.max(np.abs(basis.conj().T @ basis - np.eye(r * n))))
    if residual >= eps:
        return FactorizationAttempt(None, FailureStage.GRAM, residual)

    complement = scipy.linalg.null_space(basis.conj().T) if r * n < dim_b else None
    completed = basis if complement is None else np.hstack([basis, complement])
    # nearest exact isometry; the Gram check above only holds to eps
    u_b = Isometry.of(scipy.linalg.polar(completed)[0])
    phi = ket((support * np.sqrt(support_values)).reshape(-1), (dim_a, r))

    # eta_j = <psi_j|psi> restricted to C, weights sqrt(p_j) included
    eta_matrix = members.conj().T @ state.amplitudes.reshape(dim_a * dim_b, dim_c)
    eta = ket(eta_matrix.reshape(-1), (n, dim_c))

    rebuilt = make_product_family(phi, eta, u_b)
    error = float(np.linalg.norm(rebuilt.amplitudes - state.amplitudes))
    if error >= eps:
        return FactorizationAttempt(None, FailureStage.RECONSTRUCTION, error)
    return FactorizationAttempt(FactorizationWitness((r, n), phi, eta, u_b, error), None, error)


def witness_factorization(
    state: PureState, eps: float | None = None
) -> FactorizationWitness | None:
    return attempt_factorization(state, eps).witness


class ProductCheck(typing.NamedTuple):
    is_product: bool
    distance: float


def product_distance(state: State) -> float:
    """
    Trace distance between a bipartite state and the product of its marginals.
    """
    rho = as_density(state)
    if len(rho.dims) != 2:
        raise SignatureError(f"Product check needs a bipartite state, got {rho.dims}")
    marginals = tensor_densities(partial_trace(rho, "A"), partial_trace(rho, "B"))
    return trace_distance(rho.matrix, marginals.matrix)


def is_product(state: State, eps: float | None = None) -> ProductCheck:
    eps = get_tolerances().recon if eps is None else eps
    distance = product_distance(state)
    return ProductCheck(distance < eps, distance)


class SeparabilityVerdict(enum.StrEnum):
    SEPARABLE = "separable"
    ENTANGLED = "entangled"
    INCONCLUSIVE = "inconclusive"


def ppt_separable(
    state: State, cut: str | Cut | None = None, shortcuts: bool = False
) -> SeparabilityVerdict:
    """
    PPT test across a cut.  PPT is sufficient for separability only in 2x2 and 2x3; elsewhere
    a PPT state is inconclusive unless `shortcuts` recognizes it as maximally mixed or as a
    product of its marginals.
    """
    rho = as_density(state)
    parsed = parse_cut(cut, rho.signature)
    transposed = partial_transpose(rho, parsed.right)
    smallest = np.linalg.eigvalsh((transposed + transposed.conj().T) / 2)[0]
    if smallest < -get_tolerances().psd:
        return SeparabilityVerdict.ENTANGLED

    dim_left, dim_right = rho.signature.dim_of(parsed.left), rho.signature.dim_of(parsed.right)
    sides = sorted((dim_left, dim_right))
    if sides[0] == 1 or sides in ([2, 2], [2, 3]):
        return SeparabilityVerdict.SEPARABLE
    if shortcuts:
        dim = rho.signature.total
        if np.max(np.abs(rho.matrix - np.eye(dim) / dim)) < get_tolerances().recon:
            return SeparabilityVerdict.SEPARABLE
        grouped = DensityMatrix(_cut_ordered(rho, parsed), DimSignature((dim_left, dim_right)))
        if is_product(grouped).is_product:
            return SeparabilityVerdict.SEPARABLE
    logger.debug(f"PPT state of dims {sides} is inconclusive")
    return SeparabilityVerdict.INCONCLUSIVE


def _cut_ordered(rho: DensityMatrix, cut: Cut) -> np.ndarray:
    order = cut.left + cut.right
    n = len(order)
    perm = order + tuple(n + p for p in order)
    tensor = rho.matrix.reshape(rho.dims + rho.dims).transpose(perm)
    return tensor.reshape(rho.signature.total, rho.signature.total)


class BiseparableForm(enum.StrEnum):
    A_BC_PRODUCT = "A|BC"
    AB_C_PRODUCT = "AB|C"
    FULLY_PRODUCT = "A|B|C"
    NEITHER = "neither"


def biseparable_form_check(state: PureState, eps: float | None = None) -> BiseparableForm:
    """
    Tests whether a pure tripartite state with dim B <= 3 is |phi>^A|eta>^{BC} or
    |phi>^{AB}|eta>^C (Schmidt rank one across the cut, up to eps on the discarded weight).
    """
    if len(state.dims) != 3:
        raise SignatureError(f"Biseparability check needs a tripartite state, got {state.dims}")
    if state.dims[1] > 3:
        raise ContractError("The biseparable form is only guaranteed for dim B <= 3")
    eps = get_tolerances().witness if eps is None else eps

    def rank_one(cut: str) -> bool:
        leading = schmidt(state, cut).coefficients[0]
        return 1 - leading**2 < eps

    a_bc, ab_c = rank_one("A|BC"), rank_one("AB|C")
    if a_bc and ab_c:
        return BiseparableForm.FULLY_PRODUCT
    if a_bc:
        return BiseparableForm.A_BC_PRODUCT
    if ab_c:
        return BiseparableForm.AB_C_PRODUCT
    return BiseparableForm.NEITHER
