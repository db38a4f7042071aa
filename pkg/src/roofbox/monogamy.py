#!/usr/bin/python3

"""
Monogamy audits of tripartite states: the disentangling gap E(A|BC) - E(AB), the additive
three-qubit tangle check, and the search for the smallest power alpha at which
E^alpha(A|BC) >= E^alpha(AB) + E^alpha(AC) holds on a sample.
"""

import enum
import logging
import typing

import msgspec

from .config import AlphaConfig, OptimizerConfig, Tolerances, get_tolerances
from .measures import MeasureKind, MeasureSpec, negativity, pure_measure
from .roof import roof_value, wootters_eof
from .states import (
    ContractError,
    DensityMatrix,
    PureState,
    SignatureError,
    State,
    partial_trace,
)
from .structure import (
    SeparabilityVerdict,
    attempt_factorization,
    is_product,
    ppt_separable,
    product_distance,
)

logger = logging.getLogger(__name__)


class WitnessOutcome(enum.StrEnum):
    FACTORED = "factored"
    PRODUCT_AC = "product_AC"
    SEPARABLE_AC_PPT = "separable_AC_ppt"
    NONE = "none"


class AuditRecord(msgspec.Struct, frozen=True, kw_only=True):
    descriptor: str
    seed: int | None
    measure: str
    signature: list[int]
    pure: bool
    e_abc: float
    e_ab: float
    e_ac: float
    gap: float
    disentangled: bool

    # trace distance of rho^AC from the product of its marginals
    product_distance: float
    witness: WitnessOutcome | None = None
    alpha: float | None = None
    tolerances: Tolerances = msgspec.field(default_factory=Tolerances)
    flags: list[str] = msgspec.field(default_factory=list)


def _pair_value(
    rho: DensityMatrix, spec: MeasureSpec, cfg: OptimizerConfig, flags: set[str]
) -> float:
    if spec.kind == MeasureKind.NEGATIVITY:
        return negativity(rho, "A|B")
    result = roof_value(rho, "A|B", spec, cfg)
    flags.update(result.flags)
    return result.value


def _witness_outcome(state: State, rho_ac: DensityMatrix, tol: Tolerances) -> WitnessOutcome:
    if isinstance(state, PureState) and attempt_factorization(state, tol.witness).witness:
        return WitnessOutcome.FACTORED
    if is_product(rho_ac, tol.witness).is_product:
        return WitnessOutcome.PRODUCT_AC
    if ppt_separable(rho_ac, "A|B") == SeparabilityVerdict.SEPARABLE:
        return WitnessOutcome.SEPARABLE_AC_PPT
    return WitnessOutcome.NONE


def disentangling_gap(
    state: State,
    spec: MeasureSpec,
    cfg: OptimizerConfig | None = None,
    descriptor: str = "",
    seed: int | None = None,
) -> AuditRecord:
    """
    Audits E(A|BC), E(AB) and E(AC) for a tripartite state.  Pure inputs evaluate E(A|BC)
    exactly; mixed inputs use the convex roof across A|BC.  The two-party values are convex
    roofs, except for negativity, which is only audited on pure states and evaluated directly
    on the marginals there.
    """
    if len(state.dims) != 3:
        raise SignatureError(f"Audits need a tripartite state, got {state.dims}")
    cfg = cfg or OptimizerConfig()
    tol = get_tolerances()
    pure = isinstance(state, PureState)
    flags: set[str] = set()

    if isinstance(state, PureState):
        e_abc = pure_measure(state, "A|BC", spec)
    elif spec.kind == MeasureKind.NEGATIVITY:
        raise ContractError("Negativity is only audited on pure tripartite states")
    else:
        result = roof_value(state, "A|BC", spec, cfg)
        flags.update(result.flags)
        e_abc = result.value

    rho_ac = partial_trace(state, "AC")
    e_ab = _pair_value(partial_trace(state, "AB"), spec, cfg, flags)
    e_ac = _pair_value(rho_ac, spec, cfg, flags)
    gap = e_abc - e_ab
    disentangled = abs(gap) < (tol.gap_pure if pure else tol.gap_mixed)

    if gap < -tol.audit:
        # E(A|BC) >= E_F(AB) up to the roof's slack
        logger.warning(f"Monotonicity guard failed for {descriptor or 'state'}: gap {gap:.3e}")
        flags.add("monotonicity")

    witness = None
    if disentangled:
        witness = _witness_outcome(state, rho_ac, tol)
        if not pure and ppt_separable(rho_ac, "A|B") == SeparabilityVerdict.ENTANGLED:
            flags.add("ac-entangled")

    return AuditRecord(
        descriptor=descriptor,
        seed=seed,
        measure=spec.name,
        signature=list(state.dims),
        pure=pure,
        e_abc=e_abc,
        e_ab=e_ab,
        e_ac=e_ac,
        gap=gap,
        disentangled=disentangled,
        product_distance=product_distance(rho_ac),
        witness=witness,
        tolerances=tol,
        flags=sorted(flags),
    )


class CKWResult(typing.NamedTuple):
    tau_abc: float
    tau_ab: float
    tau_ac: float

    @property
    def residual(self) -> float:
        return self.tau_abc - self.tau_ab - self.tau_ac


def ckw_check(psi: PureState) -> CKWResult:
    """
    tau(A|BC) - tau(AB) - tau(AC) for a three-qubit pure state, the two-party tangles coming
    from the Wootters concurrence.
    """
    if not isinstance(psi, PureState) or psi.dims != (2, 2, 2):
        raise SignatureError(f"The tangle check needs a pure three-qubit state, got {psi.dims}")
    result = CKWResult(
        pure_measure(psi, "A|BC", MeasureSpec(kind=MeasureKind.TANGLE)),
        wootters_eof(partial_trace(psi, "AB")).concurrence ** 2,
        wootters_eof(partial_trace(psi, "AC")).concurrence ** 2,
    )
    if result.residual < -get_tolerances().audit:
        logger.warning(f"Tangle residual {result.residual:.3e} below zero")
    return result


def power_residual(record: AuditRecord, alpha: float) -> float:
    return record.e_abc**alpha - record.e_ab**alpha - record.e_ac**alpha


def _ratios(record: AuditRecord) -> tuple[float, float]:
    # relative to E(A|BC), clipped to [0, 1]
    return (
        min(max(record.e_ab / record.e_abc, 0.0), 1.0),
        min(max(record.e_ac / record.e_abc, 0.0), 1.0),
    )


def _feasible(record: AuditRecord, slack: float) -> bool:
    """
    Whether some finite alpha satisfies the record.  A pair that saturates E(A|BC) while the
    other pair is entangled fails at every alpha.
    """
    if record.e_abc <= slack:
        return True
    ratio_ab, ratio_ac = _ratios(record)
    return min(ratio_ab, ratio_ac) <= slack or max(ratio_ab, ratio_ac) < 1 - slack


def _holds(record: AuditRecord, alpha: float, slack: float) -> bool:
    if record.e_abc <= slack:
        return True
    ratio_ab, ratio_ac = _ratios(record)
    if min(ratio_ab, ratio_ac) <= slack:
        return True
    if max(ratio_ab, ratio_ac) >= 1 - slack:
        return False
    # exact; an absolute slack would pass any record at large alpha
    return ratio_ab**alpha + ratio_ac**alpha <= 1.0


class AlphaResult(msgspec.Struct, kw_only=True):
    found: bool

    # smallest alpha (to within the resolution) at which every sample satisfies the inequality
    alpha: float | None
    low: float
    high: float
    resolution: float
    samples: int
    measure: str


def alpha_from_records(
    records: typing.Sequence[AuditRecord], search: AlphaConfig | None = None
) -> AlphaResult:
    """
    Bisects on the predicate "E^alpha(A|BC) >= E^alpha(AB) + E^alpha(AC) on every record",
    which is monotone in alpha once E(A|BC) >= max(E(AB), E(AC)) holds per record.
    """
    if not records:
        raise ValueError("Alpha search needs at least one sample")
    if len({tuple(r.signature) for r in records}) > 1:
        raise SignatureError("Alpha search samples must share one signature")
    search = search or AlphaConfig()
    tol = get_tolerances()

    for index, record in enumerate(records):
        slack = tol.audit if record.pure else tol.gap_mixed
        if record.e_abc < max(record.e_ab, record.e_ac) - slack:
            raise ContractError(
                f"Sample {index} ({record.descriptor}) breaks E(A|BC) >= max(E(AB), E(AC)): "
                f"{record.e_abc:.6f} < {max(record.e_ab, record.e_ac):.6f}"
            )

    slacks = [tol.audit if record.pure else tol.gap_mixed for record in records]

    def holds(alpha: float) -> bool:
        return all(_holds(record, alpha, slack) for record, slack in zip(records, slacks))

    low, high = search.low, search.high
    result = AlphaResult(
        found=False,
        alpha=None,
        low=low,
        high=high,
        resolution=search.resolution,
        samples=len(records),
        measure=records[0].measure,
    )
    blocked = [
        record.descriptor
        for record, slack in zip(records, slacks)
        if not _feasible(record, slack)
    ]
    if blocked:
        logger.info(f"{len(blocked)} sample(s) fail at every alpha, e.g. {blocked[0]}")
        return result
    if holds(low):
        return msgspec.structs.replace(result, found=True, alpha=low)
    if not holds(high):
        logger.info(f"No alpha in ({low}, {high}] satisfies every sample")
        return result
    while high - low > search.resolution:
        mid = (low + high) / 2
        if holds(mid):
            high = mid
        else:
            low = mid
    return msgspec.structs.replace(result, found=True, alpha=high)


def alpha_search(
    samples: typing.Sequence[State],
    spec: MeasureSpec,
    cfg: OptimizerConfig | None = None,
    search: AlphaConfig | None = None,
) -> AlphaResult:
    if not samples:
        raise ValueError("Alpha search needs at least one sample")
    records = [
        disentangling_gap(state, spec, cfg, f"sample-{i}") for i, state in enumerate(samples)
    ]
    return alpha_from_records(records, search)


class CalibrationPoint(msgspec.Struct):
    eps: float
    count: int

    # largest product distance among records with |gap| < eps, None when there are none
    delta: float | None


def calibration_curve(
    records: typing.Iterable[AuditRecord], eps_grid: typing.Sequence[float]
) -> list[CalibrationPoint]:
    """
    delta(eps): the largest distance of rho^AC from a product state among records whose
    disentangling gap is below eps.
    """
    records = list(records)
    curve = []
    for eps in sorted(eps_grid, reverse=True):
        hits = [r.product_distance for r in records if abs(r.gap) < eps]
        curve.append(CalibrationPoint(eps, len(hits), max(hits) if hits else None))
    return curve
