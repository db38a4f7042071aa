#!/usr/bin/python3

"""
Convex-roof extensions

    E_F(rho) = min sum_k q_k E(phi_k)

over pure-state decompositions.  Every decomposition with n members is reached from the
spectral one through an n x r isometry U:  sqrt(q_k) |phi_k> = sum_j u_kj sqrt(p_j) |psi_j>.
The optimizer searches over U with derivative-free Givens rotations on pairs of rows, so each
step only re-evaluates the two members it mixes.  A rotation acts on the reduced states of
the pair through their Gram blocks, and the disjoint pairs of a round-robin schedule are
line-searched together on a zooming grid.
"""

import dataclasses
import logging
import math
import typing

import msgspec
import numpy as np

from .config import OptimizerConfig, get_tolerances
from .entropy import SpecError
from .measures import MeasureSpec, pure_measure, pure_values
from .states import (
    ContractError,
    Cut,
    DensityMatrix,
    DimSignature,
    PureState,
    SignatureError,
    State,
    StateRecord,
    eigh_descending,
    is_isometry,
    parse_cut,
    random_isometry,
    to_record,
)

logger = logging.getLogger(__name__)

# members lighter than this are dropped from decompositions
MIN_WEIGHT = 1e-12


class Decomposition(msgspec.Struct, eq=False):
    weights: np.ndarray
    states: list[PureState]

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=float).reshape(-1)
        tol = get_tolerances().norm
        if weights.size != len(self.states) or not self.states:
            raise ContractError("Decomposition needs one weight per member state")
        if np.any(weights < -tol) or abs(weights.sum() - 1) > tol:
            raise ContractError(f"Decomposition weights are not a distribution: {weights}")
        signature = self.states[0].signature
        if any(state.signature != signature for state in self.states):
            raise SignatureError("Decomposition members have different signatures")
        weights.flags.writeable = False
        self.weights = weights

    def density(self) -> DensityMatrix:
        matrix = sum(
            w * np.outer(s.amplitudes, s.amplitudes.conj())
            for w, s in zip(self.weights, self.states)
        )
        return DensityMatrix(matrix, self.states[0].signature)

    def reconstruction_error(self, rho: DensityMatrix) -> float:
        return float(np.max(np.abs(self.density().matrix - rho.matrix)))

    def average(
        self, cut: str | Cut | None, spec: MeasureSpec, g: "GFunction | None" = None
    ) -> float:
        values = (pure_measure(s, cut, spec) for s in self.states)
        if g is not None:
            values = (g(v) for v in values)
        return float(sum(w * v for w, v in zip(self.weights, values)))


class DecompositionRecord(msgspec.Struct):
    weights: list[float]
    states: list[StateRecord]


def to_decomposition_record(decomposition: Decomposition) -> DecompositionRecord:
    return DecompositionRecord(
        decomposition.weights.tolist(), [to_record(s) for s in decomposition.states]
    )


def _spectral_columns(rho: DensityMatrix) -> tuple[np.ndarray, np.ndarray]:
    # eigenvalues above tau_psd and the matching sqrt(p_j)-weighted eigenvectors as columns
    values, vectors = eigh_descending(rho.matrix)
    rank = max(1, int(np.count_nonzero(values > get_tolerances().psd)))
    return values[:rank], vectors[:, :rank] * np.sqrt(values[:rank])


def _members_to_decomposition(members: np.ndarray, signature: DimSignature) -> Decomposition:
    weights = np.real(np.einsum("ik,ik->k", members.conj(), members))
    keep = weights >= MIN_WEIGHT
    weights, members = weights[keep], members[:, keep]
    states = [
        PureState(members[:, k] / math.sqrt(weights[k]), signature)
        for k in range(members.shape[1])
    ]
    return Decomposition(weights / weights.sum(), states)


def spectral_decomposition(rho: DensityMatrix) -> Decomposition:
    _, columns = _spectral_columns(rho)
    return _members_to_decomposition(columns, rho.signature)


def decomposition_from_unitary(rho: DensityMatrix, u: np.ndarray) -> Decomposition:
    """
    Decomposition sqrt(q_k)|phi_k> = sum_j u_kj sqrt(p_j)|psi_j> built from the spectral
    decomposition {p_j, psi_j} of rho and an n x rank(rho) matrix with orthonormal columns.
    """
    u = np.asarray(u, dtype=complex)
    _, columns = _spectral_columns(rho)
    rank = columns.shape[1]
    if u.ndim != 2 or u.shape[1] != rank:
        raise ContractError(f"U must have rank(rho) = {rank} columns, got shape {u.shape}")
    if not is_isometry(u):
        raise ContractError("U does not have orthonormal columns")
    return _members_to_decomposition(columns @ u.T, rho.signature)


class GFunction(msgspec.Struct, frozen=True):
    """
    Convex, increasing g with g(0) = 0, applied to pure-state values in E_g.
    """

    name: str
    power: float | None = None

    @classmethod
    def parse(cls, text: str) -> "GFunction":
        name, _, arg = text.strip().lower().partition(":")
        powers = {"identity": 1.0, "square": 2.0, "cube": 3.0}
        if name in powers and not arg:
            return cls(name, powers[name])
        if name == "expm1" and not arg:
            return cls(name)
        if name == "power":
            try:
                power = float(arg)
            except ValueError:
                raise SpecError(f"g {text!r} needs a numeric exponent") from None
            if power < 1:
                raise SpecError(f"x^{power} is not convex; E_g needs a convex g")
            return cls(f"power:{power:g}", power)
        raise SpecError(f"Unknown or non-admissible g {text!r}")

    def __call__(self, x: float | np.ndarray) -> float | np.ndarray:
        if self.power is None:
            return np.expm1(x)
        return np.power(x, self.power)


class OptimizerStats(msgspec.Struct):
    restarts: int
    members: int
    iterations: int
    evaluations: int
    best_restart: int
    seed: int
    converged: bool

    # objective after each sweep of the winning restart
    history: list[float] = msgspec.field(default_factory=list)

    # restarts actually optimized; fewer than `restarts` after an early stop
    restarts_run: int = 0


class RoofResult(msgspec.Struct, eq=False):
    value: float
    certificate: Decomposition
    stats: OptimizerStats

    @property
    def flags(self) -> list[str]:
        return [] if self.stats.converged else ["not-converged"]


class RoofReport(msgspec.Struct):
    value: float
    certificate: DecompositionRecord
    stats: OptimizerStats


def to_roof_report(result: RoofResult) -> RoofReport:
    return RoofReport(result.value, to_decomposition_record(result.certificate), result.stats)


# pure-state value as a function of reduced-state spectra along the last axis
SpectrumValue = typing.Callable[[np.ndarray], np.ndarray]

# grid of the pair line search: points per axis, zoom levels and shrink factor per level
GRID_POINTS = 9
GRID_LEVELS = 6
GRID_SHRINK = 4.0


def _gram_spectra(grams: np.ndarray) -> np.ndarray:
    """
    Eigenvalues of a stack of Hermitian matrices, in closed form for 2 x 2.
    """
    if grams.shape[-1] != 2:
        return np.linalg.eigvalsh(grams)
    a, d = np.real(grams[..., 0, 0]), np.real(grams[..., 1, 1])
    off = np.abs(grams[..., 0, 1]) ** 2
    mean = (a + d) / 2
    radius = np.sqrt(np.maximum(((a - d) / 2) ** 2 + off, 0.0))
    return np.stack([mean - radius, mean + radius], axis=-1)


def _terms(grams: np.ndarray, value: SpectrumValue) -> np.ndarray:
    # q_k E(phi_k) for unnormalized reduced states q_k rho_k
    weights = np.real(np.trace(grams, axis1=-2, axis2=-1))
    heavy = weights >= MIN_WEIGHT
    safe = np.where(heavy, weights, 1.0)
    spectra = _gram_spectra(grams) / safe[..., None]
    return np.where(heavy, weights * value(spectra), 0.0)


def _pair_rounds(n: int) -> list[list[tuple[int, int]]]:
    """
    Round-robin schedule: every pair of members exactly once, disjoint pairs within a round.
    """
    players = list(range(n)) + ([-1] if n % 2 else [])
    rounds = []
    for _ in range(len(players) - 1):
        half = len(players) // 2
        pairs = [
            (min(a, b), max(a, b))
            for a, b in zip(players[:half], reversed(players[half:]))
            if a >= 0 and b >= 0
        ]
        rounds.append(pairs)
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


@dataclasses.dataclass
class _RoofProblem:
    """
    Members of a decomposition as matrices on the smaller side of the cut, so the reduced
    state of member k is A_k A_k^dagger, plus the pure-state value of a spectrum.
    """

    columns: np.ndarray
    dim_left: int
    dim_right: int
    value: SpectrumValue

    def blocks(self, members: np.ndarray) -> np.ndarray:
        # members as columns -> (n, small, large) stack
        n = members.shape[1]
        stack = members.T.reshape(n, self.dim_left, self.dim_right)
        if self.dim_left > self.dim_right:
            stack = stack.transpose(0, 2, 1)
        return np.ascontiguousarray(stack)

    def pure_value(self, member: np.ndarray) -> float:
        singular_values = np.linalg.svd(
            member.reshape(self.dim_left, self.dim_right), compute_uv=False
        )
        return float(self.value(singular_values**2))


class _RestartOutcome(typing.NamedTuple):
    value: float
    u: np.ndarray
    sweeps: int
    evaluations: int
    converged: bool
    history: list[float]


def _givens(
    a: np.ndarray, b: np.ndarray, theta: np.ndarray, phi: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    c, s, phase = np.cos(theta), np.sin(theta), np.exp(1j * phi)
    return c * a - phase * s * b, np.conj(phase) * s * a + c * b


def _pair_search(
    gaa: np.ndarray, gbb: np.ndarray, gab: np.ndarray, value: SpectrumValue
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, int]:
    """
    Zooming grid search for the Givens angles minimizing q_a E(phi_a) + q_b E(phi_b) on a
    batch of disjoint pairs, given the Gram blocks G_aa, G_bb and G_ab = A_a A_b^dagger.
    Returns the angles, the value at the identity, the best value and the number of batched
    evaluations.  The objective has period pi/2 in theta and 2 pi in phi.
    """
    pairs = gaa.shape[0]
    offsets = np.linspace(-0.5, 0.5, GRID_POINTS)
    grid_theta, grid_phi = (axis.reshape(-1) for axis in np.meshgrid(offsets, offsets))
    center = (GRID_POINTS * GRID_POINTS) // 2
    theta, phi = np.zeros(pairs), np.zeros(pairs)
    span_theta, span_phi = math.pi / 2, 2 * math.pi
    gaa, gbb, gab = gaa[:, None], gbb[:, None], gab[:, None]
    cross = gab.conj().swapaxes(-1, -2)

    start = best = np.zeros(pairs)
    for level in range(GRID_LEVELS):
        thetas = theta[:, None] + span_theta * grid_theta
        phis = phi[:, None] + span_phi * grid_phi
        c, s = np.cos(thetas)[..., None, None], np.sin(thetas)[..., None, None]
        phase = np.exp(1j * phis)[..., None, None]
        mixed = np.conj(phase) * gab + phase * cross
        new_a = c * c * gaa + s * s * gbb - c * s * mixed
        new_b = s * s * gaa + c * c * gbb + c * s * mixed
        totals = _terms(new_a, value) + _terms(new_b, value)
        pick = np.argmin(totals, axis=1)
        if level == 0:
            start = totals[:, center]
        best = totals[np.arange(pairs), pick]
        theta = thetas[np.arange(pairs), pick]
        phi = phis[np.arange(pairs), pick]
        span_theta /= GRID_SHRINK
        span_phi /= GRID_SHRINK
    return theta, phi, start, best, GRID_LEVELS


def _run_restart(problem: _RoofProblem, u: np.ndarray, cfg: OptimizerConfig) -> _RestartOutcome:
    u = u.copy()
    blocks = problem.blocks(problem.columns @ u.T)
    n = blocks.shape[0]
    grams = blocks @ blocks.conj().transpose(0, 2, 1)
    terms = _terms(grams, problem.value)
    evaluations = 1
    total = float(terms.sum())
    history = [total]
    sweeps = 0
    converged = n < 2
    rounds = _pair_rounds(n)

    while not converged and evaluations < cfg.max_evals:
        before = total
        for pairs in rounds:
            ks = np.array([first for first, _ in pairs])
            ls = np.array([second for _, second in pairs])
            gab = blocks[ks] @ blocks[ls].conj().transpose(0, 2, 1)
            theta, phi, start, best, used = _pair_search(
                grams[ks], grams[ls], gab, problem.value
            )
            evaluations += used
            # only strict improvements; the identity is on the grid
            accept = best < start
            if np.any(accept):
                ks, ls, theta, phi = ks[accept], ls[accept], theta[accept], phi[accept]
                angle, phase = theta[:, None, None], phi[:, None, None]
                blocks[ks], blocks[ls] = _givens(blocks[ks], blocks[ls], angle, phase)
                u[ks], u[ls] = _givens(u[ks], u[ls], theta[:, None], phi[:, None])
                for index in (ks, ls):
                    grams[index] = blocks[index] @ blocks[index].conj().transpose(0, 2, 1)
                    terms[index] = _terms(grams[index], problem.value)
            if evaluations >= cfg.max_evals:
                break
        sweeps += 1
        total = float(terms.sum())
        history.append(total)
        converged = before - total <= cfg.tol * max(before, np.finfo(float).tiny)

    return _RestartOutcome(total, u, sweeps, evaluations, converged, history)


def _member_count(rank: int, cfg: OptimizerConfig) -> int:
    if cfg.members is not None:
        if cfg.members < rank:
            raise ContractError(f"A decomposition needs at least rank(rho) = {rank} members")
        return cfg.members
    return min(rank + cfg.n_extra, rank * rank)


def _optimize_roof(
    rho: DensityMatrix, cut: str | Cut | None, value: SpectrumValue, cfg: OptimizerConfig
) -> RoofResult:
    # imported here, tasks depends on this module through monogamy
    from .tasks import BatchRunner

    parsed = parse_cut(cut, rho.signature)
    signature = rho.signature
    order = parsed.left + parsed.right
    _, columns = _spectral_columns(rho)
    rank = columns.shape[1]
    cut_columns = (
        columns.reshape(signature.dims + (rank,))
        .transpose(order + (len(order),))
        .reshape(signature.total, rank)
    )
    problem = _RoofProblem(
        cut_columns, signature.dim_of(parsed.left), signature.dim_of(parsed.right), value
    )

    if rank == 1:
        certificate = _members_to_decomposition(columns, signature)
        stats = OptimizerStats(1, 1, 0, 1, 0, cfg.seed, True, restarts_run=1)
        return RoofResult(problem.pure_value(cut_columns[:, 0]), certificate, stats)

    n = _member_count(rank, cfg)
    starts = [
        # the first restart starts from the spectral decomposition itself
        np.eye(n, rank, dtype=complex) if index == 0 else random_isometry(n, rank, seed)
        for index, seed in enumerate(np.random.SeedSequence(cfg.seed).spawn(cfg.restarts))
    ]
    runner = BatchRunner(cfg.threads)

    best: _RestartOutcome | None = None
    best_index = streak = restarts_run = 0
    total_sweeps = total_evaluations = 0
    stopped = False
    for chunk_start in range(0, cfg.restarts, cfg.threads):
        chunk = starts[chunk_start : chunk_start + cfg.threads]
        outcomes = runner.map(lambda u0: _run_restart(problem, u0, cfg), chunk)
        # outcomes are folded in restart order, so the result does not depend on threads
        for index, outcome in enumerate(outcomes, chunk_start):
            restarts_run += 1
            total_sweeps += outcome.sweeps
            total_evaluations += outcome.evaluations
            logger.debug(
                f"Restart {index}: value {outcome.value:.10f} after {outcome.sweeps} sweeps "
                f"({'converged' if outcome.converged else 'budget exhausted'})"
            )
            if best is not None and abs(outcome.value - best.value) <= cfg.agreement:
                streak += 1
            else:
                streak = 0
            # ties keep the lowest restart index
            if best is None or outcome.value < best.value:
                best, best_index = outcome, index
            if cfg.patience and streak >= cfg.patience:
                stopped = True
                break
        if stopped:
            logger.debug(f"{streak} restarts agree with the best value, stopping early")
            break
    assert best is not None

    if not best.converged:
        logger.warning(f"Roof optimizer did not converge (best value {best.value:.10f})")
    certificate = decomposition_from_unitary(rho, best.u)
    stats = OptimizerStats(
        cfg.restarts,
        n,
        total_sweeps,
        total_evaluations,
        best_index,
        cfg.seed,
        best.converged,
        best.history,
        restarts_run=restarts_run,
    )
    return RoofResult(best.value, certificate, stats)


def _schmidt_dim(rho: DensityMatrix, cut: str | Cut | None) -> int:
    parsed = parse_cut(cut, rho.signature)
    return min(rho.signature.dim_of(parsed.left), rho.signature.dim_of(parsed.right))


def roof_value(
    rho: State,
    cut: str | Cut | None,
    spec: MeasureSpec,
    cfg: OptimizerConfig | None = None,
) -> RoofResult:
    """
    Upper bound on the convex roof of `spec` at rho, with the decomposition that attains it.
    """
    if isinstance(rho, PureState):
        rho = rho.projector()
    dim = _schmidt_dim(rho, cut)
    return _optimize_roof(
        rho, cut, lambda spectra: pure_values(spectra, spec, dim), cfg or OptimizerConfig()
    )


def e_g_roof(
    rho: State,
    cut: str | Cut | None,
    spec: MeasureSpec,
    g: GFunction | str,
    cfg: OptimizerConfig | None = None,
) -> RoofResult:
    """
    E_g(rho) = min sum_k q_k g(E(phi_k)).
    """
    if isinstance(g, str):
        g = GFunction.parse(g)
    if isinstance(rho, PureState):
        rho = rho.projector()
    dim = _schmidt_dim(rho, cut)
    g_function = g
    return _optimize_roof(
        rho,
        cut,
        lambda spectra: g_function(pure_values(spectra, spec, dim)),
        cfg or OptimizerConfig(),
    )


class SpreadReport(typing.NamedTuple):
    minimum: float
    maximum: float

    @property
    def width(self) -> float:
        return self.maximum - self.minimum


def decomposition_spread(
    rho: DensityMatrix,
    cut: str | Cut | None,
    spec: MeasureSpec,
    samples: int = 100,
    seed: int = 0,
    members: int | None = None,
) -> SpreadReport:
    """
    Range of the average entanglement over random decompositions of rho.  It collapses to a
    point when every decomposition has the same average, as happens for the two-party
    marginal of a pure state meeting the disentangling condition.
    """
    _, columns = _spectral_columns(rho)
    rank = columns.shape[1]
    n = members or rank
    averages = [spectral_decomposition(rho).average(cut, spec)]
    for sample_seed in np.random.SeedSequence(seed).spawn(samples):
        u = random_isometry(n, rank, sample_seed)
        averages.append(decomposition_from_unitary(rho, u).average(cut, spec))
    return SpreadReport(min(averages), max(averages))


class WoottersResult(typing.NamedTuple):
    concurrence: float
    eof: float


def binary_entropy(x: float) -> float:
    if x <= 0 or x >= 1:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


_SPIN_FLIP = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def wootters_eof(rho: State) -> WoottersResult:
    """
    Two-qubit concurrence max(0, l1 - l2 - l3 - l4) from the square roots of the eigenvalues of
    sqrt(rho) rho~ sqrt(rho), and the entanglement of formation H2((1 + sqrt(1 - C^2)) / 2).
    The l_i are taken as the singular values of sqrt(rho) sqrt(rho~).
    """
    if isinstance(rho, PureState):
        rho = rho.projector()
    if rho.dims != (2, 2):
        raise SignatureError(f"Wootters formula needs a two-qubit state, got {rho.dims}")
    values, vectors = np.linalg.eigh(rho.matrix)
    values = np.where(values > get_tolerances().psd, values, 0.0)
    root = (vectors * np.sqrt(values)) @ vectors.conj().T
    flipped_root = _SPIN_FLIP @ root.conj() @ _SPIN_FLIP
    lambdas = np.linalg.svd(root @ flipped_root, compute_uv=False)
    concurrence = max(0.0, float(lambdas[0] - lambdas[1:].sum()))
    eof = binary_entropy((1 + math.sqrt(max(1 - concurrence**2, 0.0))) / 2)
    return WoottersResult(min(concurrence, 1.0), eof)
