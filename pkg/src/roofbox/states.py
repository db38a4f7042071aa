#!/usr/bin/python3

"""
Finite-dimensional multipartite states.

Subsystems are labelled A, B, C, ... in signature order.  All reshapes follow one row-major
convention: the flat index of a basis vector |i_0 i_1 ... i_{n-1}> is

    i = sum_k i_k * prod_{l > k} d_l

so `amplitudes.reshape(dims)` and `matrix.reshape(dims + dims)` expose the subsystem axes.
"""

import math
import string
import typing

import msgspec
import numpy as np

from .config import get_tolerances

SeedLike = int | np.random.SeedSequence | np.random.Generator | None

LABELS = string.ascii_uppercase


class SignatureError(ValueError):
    pass


class ContractError(ValueError):
    pass


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class DimSignature(msgspec.Struct, frozen=True):
    dims: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.dims:
            raise SignatureError("Signature must have at least one subsystem")
        if len(self.dims) > len(LABELS):
            raise SignatureError(f"Too many subsystems ({len(self.dims)})")
        if any(d < 1 for d in self.dims):
            raise SignatureError(f"Subsystem dimensions must be positive: {self.dims}")

    @classmethod
    def of(cls, dims: typing.Iterable[int]) -> "DimSignature":
        return cls(tuple(int(d) for d in dims))

    @property
    def labels(self) -> str:
        return LABELS[: len(self.dims)]

    @property
    def total(self) -> int:
        return math.prod(self.dims)

    def __len__(self) -> int:
        return len(self.dims)

    def resolve(self, labels: typing.Iterable[str | int]) -> tuple[int, ...]:
        """
        Maps subsystem labels (or positional indices) to sorted, unique positions.
        """
        positions = set()
        for label in labels:
            if isinstance(label, str):
                if label not in self.labels:
                    raise SignatureError(f"Unknown subsystem {label!r} for {self.labels}")
                positions.add(self.labels.index(label))
            else:
                if not 0 <= label < len(self.dims):
                    raise SignatureError(f"Unknown subsystem index {label} for {self.labels}")
                positions.add(int(label))
        return tuple(sorted(positions))

    def dim_of(self, positions: typing.Iterable[int]) -> int:
        return math.prod(self.dims[p] for p in positions)


class Cut(typing.NamedTuple):
    left: tuple[int, ...]
    right: tuple[int, ...]

    def describe(self, signature: DimSignature) -> str:
        return (
            "".join(signature.labels[p] for p in self.left)
            + "|"
            + "".join(signature.labels[p] for p in self.right)
        )


def parse_cut(cut: "str | Cut | None", signature: DimSignature) -> Cut:
    """
    Parses a bipartition written as "A|BC".  `None` means "first subsystem | the rest".
    """
    if isinstance(cut, Cut):
        left, right = cut
    elif cut is None:
        left, right = (0,), tuple(range(1, len(signature)))
    else:
        left_text, sep, right_text = cut.partition("|")
        if not sep:
            raise SignatureError(f"Cut {cut!r} must be written as 'LEFT|RIGHT'")
        left = signature.resolve(left_text.strip())
        right = signature.resolve(right_text.strip())
    if not left or not right:
        raise SignatureError("Degenerate cut: both sides must be non-empty")
    if set(left) & set(right):
        raise SignatureError("Cut sides overlap")
    if set(left) | set(right) != set(range(len(signature))):
        raise SignatureError(f"Cut does not cover every subsystem of {signature.labels}")
    return Cut(tuple(sorted(left)), tuple(sorted(right)))


class PureState(msgspec.Struct, eq=False):
    amplitudes: np.ndarray
    signature: DimSignature

    def __post_init__(self) -> None:
        amplitudes = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amplitudes.size != self.signature.total:
            raise SignatureError(
                f"State of length {amplitudes.size} does not match dims {self.signature.dims}"
            )
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1) > get_tolerances().norm:
            raise ContractError(f"State is not normalized (norm {norm})")
        self.amplitudes = _frozen(amplitudes)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.signature.dims

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def projector(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), self.signature)

    def bipartite_matrix(self, cut: "str | Cut | None") -> np.ndarray:
        """
        Amplitudes arranged as a (dim left) x (dim right) matrix across the cut.
        """
        parsed = parse_cut(cut, self.signature)
        tensor = self.tensor().transpose(parsed.left + parsed.right)
        return tensor.reshape(
            self.signature.dim_of(parsed.left), self.signature.dim_of(parsed.right)
        )


class DensityMatrix(msgspec.Struct, eq=False):
    matrix: np.ndarray
    signature: DimSignature

    def __post_init__(self) -> None:
        tol = get_tolerances()
        matrix = np.array(self.matrix, dtype=complex)
        n = self.signature.total
        if matrix.shape != (n, n):
            raise SignatureError(
                f"Matrix of shape {matrix.shape} does not match dims {self.signature.dims}"
            )
        if np.max(np.abs(matrix - matrix.conj().T), initial=0.0) > tol.herm:
            raise ContractError("Density matrix is not Hermitian")
        matrix = (matrix + matrix.conj().T) / 2
        trace = np.trace(matrix).real
        if abs(trace - 1) > tol.norm:
            raise ContractError(f"Density matrix does not have unit trace ({trace})")
        smallest = np.linalg.eigvalsh(matrix)[0]
        if smallest < -tol.psd:
            raise ContractError(f"Density matrix is not positive (eigenvalue {smallest})")
        self.matrix = _frozen(matrix)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.signature.dims

    def spectrum(self) -> np.ndarray:
        """
        Eigenvalues in descending order; PSD drift in [-tau_psd, 0) is clamped to zero.
        """
        return clamp_spectrum(np.linalg.eigvalsh(self.matrix)[::-1])

    def rank(self) -> int:
        return int(np.count_nonzero(self.spectrum() > get_tolerances().psd))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))


State = PureState | DensityMatrix


class Isometry(msgspec.Struct, eq=False):
    matrix: np.ndarray
    source_dim: int
    target_dim: int

    def __post_init__(self) -> None:
        matrix = np.array(self.matrix, dtype=complex)
        if matrix.shape != (self.target_dim, self.source_dim):
            raise SignatureError(
                f"Isometry shape {matrix.shape} is not {self.target_dim}x{self.source_dim}"
            )
        if not is_isometry(matrix):
            raise ContractError("Matrix columns are not orthonormal")
        self.matrix = _frozen(matrix)

    @classmethod
    def of(cls, matrix: np.ndarray) -> "Isometry":
        rows, cols = np.shape(matrix)
        return cls(matrix, source_dim=cols, target_dim=rows)


def is_isometry(matrix: np.ndarray, tol: float | None = None) -> bool:
    rows, cols = matrix.shape
    if rows < cols:
        return False
    tol = get_tolerances().iso if tol is None else tol
    gram = matrix.conj().T @ matrix
    return bool(np.max(np.abs(gram - np.eye(cols)), initial=0.0) <= tol)


def clamp_spectrum(eigenvalues: np.ndarray) -> np.ndarray:
    tol = get_tolerances().psd
    eigenvalues = np.real(np.asarray(eigenvalues, dtype=complex))
    return np.where((eigenvalues < 0) & (eigenvalues >= -tol), 0.0, eigenvalues)


def fix_phases(vectors: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """
    Column-wise phase convention: the first component with magnitude above `tol` is made real
    and positive.
    """
    vectors = np.array(vectors, dtype=complex)
    for col in range(vectors.shape[1]):
        significant = np.flatnonzero(np.abs(vectors[:, col]) > tol)
        if significant.size:
            pivot = vectors[significant[0], col]
            vectors[:, col] *= abs(pivot) / pivot
    return vectors


def eigh_descending(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Hermitian eigendecomposition with eigenvalues in descending order and the phase convention
    of `fix_phases` applied to the eigenvectors.
    """
    values, vectors = np.linalg.eigh(matrix)
    return clamp_spectrum(values[::-1]), fix_phases(vectors[:, ::-1])


def as_density(state: State) -> DensityMatrix:
    if isinstance(state, PureState):
        return state.projector()
    return state


def ket(
    amplitudes: typing.Sequence[complex] | np.ndarray, dims: typing.Iterable[int]
) -> PureState:
    """
    Builds a state from amplitudes, normalizing them first.
    """
    vector = np.asarray(amplitudes, dtype=complex).reshape(-1)
    norm = np.linalg.norm(vector)
    if norm == 0:
        raise ContractError("Cannot normalize the zero vector")
    return PureState(vector / norm, DimSignature.of(dims))


def density(matrix: np.ndarray, dims: typing.Iterable[int]) -> DensityMatrix:
    return DensityMatrix(np.asarray(matrix, dtype=complex), DimSignature.of(dims))


def computational_state(digits: typing.Sequence[int], dims: typing.Iterable[int]) -> PureState:
    signature = DimSignature.of(dims)
    vector = np.zeros(signature.total, dtype=complex)
    vector[np.ravel_multi_index(tuple(digits), signature.dims)] = 1
    return PureState(vector, signature)


def bell_state() -> PureState:
    return ket([1, 0, 0, 1], (2, 2))


def ghz_state(parties: int = 3) -> PureState:
    vector = np.zeros(2**parties, dtype=complex)
    vector[0] = vector[-1] = 1
    return ket(vector, (2,) * parties)


def w_state(parties: int = 3) -> PureState:
    vector = np.zeros(2**parties, dtype=complex)
    for k in range(parties):
        vector[1 << k] = 1
    return ket(vector, (2,) * parties)


def product_state(*states: PureState) -> PureState:
    vector = np.ones(1, dtype=complex)
    dims: tuple[int, ...] = ()
    for state in states:
        vector = np.kron(vector, state.amplitudes)
        dims += state.dims
    return PureState(vector, DimSignature(dims))


def partial_trace(state: State, keep: typing.Iterable[str | int]) -> DensityMatrix:
    """
    Reduces a state onto the kept subsystems (kept in signature order).
    """
    signature = state.signature
    kept = signature.resolve(keep)
    if not kept:
        raise SignatureError("At least one subsystem must be kept")
    traced = tuple(p for p in range(len(signature)) if p not in kept)
    dim_kept, dim_traced = signature.dim_of(kept), signature.dim_of(traced)
    reduced_signature = DimSignature(tuple(signature.dims[p] for p in kept))

    if isinstance(state, PureState):
        m = state.tensor().transpose(kept + traced).reshape(dim_kept, dim_traced)
        return DensityMatrix(m @ m.conj().T, reduced_signature)

    n = len(signature)
    tensor = state.matrix.reshape(signature.dims + signature.dims)
    perm = kept + traced + tuple(n + p for p in kept) + tuple(n + p for p in traced)
    m = tensor.transpose(perm).reshape(dim_kept, dim_traced, dim_kept, dim_traced)
    return DensityMatrix(np.einsum("ajbj->ab", m), reduced_signature)


def partial_transpose(state: State, labels: typing.Iterable[str | int]) -> np.ndarray:
    """
    Partial transpose on the given subsystems.  The result need not be a state, so the raw
    matrix is returned.
    """
    rho = as_density(state)
    signature = rho.signature
    positions = signature.resolve(labels)
    n = len(signature)
    perm = list(range(2 * n))
    for p in positions:
        perm[p], perm[n + p] = n + p, p
    tensor = rho.matrix.reshape(signature.dims + signature.dims).transpose(perm)
    return tensor.reshape(signature.total, signature.total)


def trace_norm(matrix: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh((matrix + matrix.conj().T) / 2))))


def trace_distance(a: State | np.ndarray, b: State | np.ndarray) -> float:
    ma = a if isinstance(a, np.ndarray) else as_density(a).matrix
    mb = b if isinstance(b, np.ndarray) else as_density(b).matrix
    return trace_norm(ma - mb) / 2


def tensor_densities(*states: DensityMatrix) -> DensityMatrix:
    matrix = np.ones((1, 1), dtype=complex)
    dims: tuple[int, ...] = ()
    for state in states:
        matrix = np.kron(matrix, state.matrix)
        dims += state.dims
    return DensityMatrix(matrix, DimSignature(dims))


def purify(rho: DensityMatrix) -> PureState:
    """
    Spectral purification sum_i sqrt(l_i) |e_i>|i> with an ancilla of dimension rank(rho),
    appended as the last subsystem.
    """
    values, vectors = eigh_descending(rho.matrix)
    rank = max(1, int(np.count_nonzero(values > get_tolerances().psd)))
    amplitudes = (vectors[:, :rank] * np.sqrt(values[:rank])).reshape(-1)
    return ket(amplitudes, rho.dims + (rank,))


class SchmidtDecomposition(typing.NamedTuple):
    coefficients: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def rank(self) -> int:
        return len(self.coefficients)


def schmidt(state: PureState, cut: "str | Cut | None" = None) -> SchmidtDecomposition:
    """
    Schmidt decomposition across a cut.  Coefficients are descending and non-negative, with
    those below tau_norm dropped; `left`/`right` hold the Schmidt vectors as columns, with the
    left side ordered as the cut's left labels.
    """
    u, s, vh = np.linalg.svd(state.bipartite_matrix(cut), full_matrices=False)
    keep = max(1, int(np.count_nonzero(s > get_tolerances().norm)))
    return SchmidtDecomposition(s[:keep], u[:, :keep], vh[:keep].T)


def apply_local(
    state: PureState, cut: "str | Cut | None", u_left: np.ndarray, u_right: np.ndarray
) -> PureState:
    """
    Applies U_left (x) U_right across a cut, returning the state in its original ordering.
    """
    parsed = parse_cut(cut, state.signature)
    order = parsed.left + parsed.right
    m = u_left @ state.bipartite_matrix(parsed) @ u_right.T
    tensor = m.reshape(tuple(state.dims[p] for p in order)).transpose(np.argsort(order))
    return PureState(tensor.reshape(-1), state.signature)


def _complex_gaussian(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    return (rng.normal(size=shape) + 1j * rng.normal(size=shape)) / np.sqrt(2)


def random_unitary(dim: int, seed: SeedLike = None) -> np.ndarray:
    """
    Haar-random unitary from the QR decomposition of a Ginibre matrix, with the phases of R's
    diagonal folded back into Q.
    """
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(_complex_gaussian(rng, (dim, dim)))
    diagonal = np.diagonal(r)
    return q * (diagonal / np.abs(diagonal))


def random_isometry(rows: int, cols: int, seed: SeedLike = None) -> np.ndarray:
    if cols > rows:
        raise ValueError(f"Isometry cannot map {cols} dimensions into {rows}")
    return random_unitary(rows, seed)[:, :cols]


def random_pure(dims: typing.Iterable[int] | DimSignature, seed: SeedLike = None) -> PureState:
    signature = dims if isinstance(dims, DimSignature) else DimSignature.of(dims)
    rng = np.random.default_rng(seed)
    return ket(_complex_gaussian(rng, (signature.total,)), signature.dims)


def random_density(
    dims: int | typing.Iterable[int] | DimSignature,
    rank: int | None = None,
    seed: SeedLike = None,
) -> DensityMatrix:
    """
    Ginibre-ensemble density matrix G G^dagger / Tr(G G^dagger) with G of shape dim x rank.
    """
    if isinstance(dims, DimSignature):
        signature = dims
    elif isinstance(dims, int):
        signature = DimSignature((dims,))
    else:
        signature = DimSignature.of(dims)
    dim = signature.total
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise ValueError(f"Rank {rank} is outside 1..{dim}")
    rng = np.random.default_rng(seed)
    g = _complex_gaussian(rng, (dim, rank))
    matrix = g @ g.conj().T
    return DensityMatrix(matrix / np.trace(matrix).real, signature)


def make_product_family(
    phi: PureState,
    eta: PureState,
    u_b: Isometry | np.ndarray | None = None,
    dim_b: int | None = None,
) -> PureState:
    """
    Builds (I (x) U_B (x) I) |phi>^{AB1} |eta>^{B2C}, embedding B1 (x) B2 into the first
    dim B1 * dim B2 basis vectors of B.  `u_b` may be a dim B x dim B unitary or a
    dim B x (dim B1 * dim B2) isometry; without it B = B1 (x) B2 and U_B = I.
    """
    if len(phi.dims) != 2 or len(eta.dims) != 2:
        raise SignatureError("phi and eta must both be bipartite")
    (dim_a, dim_b1), (dim_b2, dim_c) = phi.dims, eta.dims
    inner = dim_b1 * dim_b2

    if u_b is None:
        dim_b = inner if dim_b is None else dim_b
        if dim_b < inner:
            raise SignatureError(f"dim B = {dim_b} cannot hold dim B1 * dim B2 = {inner}")
        u_b = Isometry.of(np.eye(dim_b, inner, dtype=complex))
    elif not isinstance(u_b, Isometry):
        u_b = Isometry.of(u_b)
    if u_b.target_dim < inner:
        raise SignatureError(f"dim B = {u_b.target_dim} cannot hold dim B1 * dim B2 = {inner}")
    if u_b.source_dim < inner:
        raise ContractError(f"U_B maps {u_b.source_dim} dimensions, B1 (x) B2 needs {inner}")
    embedding = u_b.matrix[:, :inner]

    joint = np.einsum("ab,mc->abmc", phi.tensor(), eta.tensor()).reshape(dim_a, inner, dim_c)
    out = np.einsum("bm,amc->abc", embedding, joint)
    return ket(out.reshape(-1), (dim_a, u_b.target_dim, dim_c))


class StateRecord(msgspec.Struct):
    """
    Wire form of a state: row-major real and imaginary parts.  A record whose length equals
    the product of the signature is a pure state; its square, a density matrix.
    """

    signature: list[typing.Annotated[int, msgspec.Meta(gt=0)]]
    re: list[float]
    im: list[float]


def to_record(state: State) -> StateRecord:
    flat = state.amplitudes if isinstance(state, PureState) else state.matrix.reshape(-1)
    return StateRecord(list(state.dims), flat.real.tolist(), flat.imag.tolist())


def from_record(record: StateRecord) -> State:
    if len(record.re) != len(record.im):
        raise SignatureError("Real and imaginary parts have different lengths")
    signature = DimSignature.of(record.signature)
    flat = np.asarray(record.re, dtype=float) + 1j * np.asarray(record.im, dtype=float)
    if flat.size == signature.total:
        return PureState(flat, signature)
    if flat.size == signature.total**2:
        return DensityMatrix(flat.reshape(signature.total, signature.total), signature)
    raise SignatureError(
        f"{flat.size} entries match neither a state nor a density matrix of {signature.dims}"
    )


def encode_state(state: State) -> bytes:
    return msgspec.json.encode(to_record(state))


def decode_state(payload: bytes | str) -> State:
    return from_record(msgspec.json.decode(payload, type=StateRecord))
