#!/usr/bin/python3

import argparse
import contextlib
import datetime
import importlib.metadata
import logging
import pathlib
import statistics
import sys
import typing

import msgspec
import numpy as np

from .config import (
    AlphaConfig,
    OptimizerConfig,
    ToolConfig,
    Tolerances,
    load_config,
    override_tolerances,
    use_tolerances,
)
from .database import database_ctx, open_database
from .ensembles import (
    EnsembleSpec,
    Family,
    Sample,
    generate,
    load_states,
    write_states,
)
from .entropy import EntropySpec, SpecError, concavity_probe
from .measures import MeasureKind, MeasureSpec, measure
from .monogamy import AlphaResult, AuditRecord, alpha_from_records, calibration_curve
from .roof import (
    GFunction,
    RoofReport,
    WoottersResult,
    decomposition_spread,
    e_g_roof,
    roof_value,
    to_roof_report,
    wootters_eof,
)
from .states import (
    ContractError,
    PureState,
    SignatureError,
    as_density,
    parse_cut,
    partial_trace,
    to_record,
)
from .structure import (
    BiseparableForm,
    WitnessRecord,
    attempt_factorization,
    biseparable_form_check,
    is_product,
    to_witness_record,
)
from .tasks import BatchRunner, audit_batch, ckw_batch

logger = logging.getLogger(__name__)

try:
    __version__ = importlib.metadata.version("roofbox")
except importlib.metadata.PackageNotFoundError:
    __version__ = "0+unknown"

EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


class ExperimentConfig(msgspec.Struct, kw_only=True):
    """
    Everything needed to replay a run; embedded in every output.
    """

    command: str
    seed: int
    ensemble: EnsembleSpec | None = None
    state_file: str | None = None
    measure: str | None = None
    cut: str | None = None
    options: dict[str, typing.Any] = msgspec.field(default_factory=dict)
    tolerances: Tolerances
    optimizer: OptimizerConfig
    alpha: AlphaConfig


class RunInfo(msgspec.Struct):
    version: str
    started: datetime.datetime
    config: ExperimentConfig
    tool: str = "roofbox"


class MeasureOutput(msgspec.Struct):
    descriptor: str
    measure: str
    cut: str
    value: float
    method: str
    flags: list[str] = msgspec.field(default_factory=list)


class RoofOutput(msgspec.Struct):
    descriptor: str
    measure: str
    cut: str
    g: str | None
    report: RoofReport
    spread: tuple[float, float] | None = None
    wootters: WoottersResult | None = None


class CKWOutput(msgspec.Struct):
    descriptor: str
    tau_abc: float
    tau_ab: float
    tau_ac: float
    residual: float


class WitnessOutput(msgspec.Struct):
    descriptor: str
    witness: WitnessRecord
    product_ac: bool
    product_distance: float
    form: BiseparableForm | None = None


class AlphaOutput(msgspec.Struct):
    result: AlphaResult
    alphas: list[float | None]


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> typing.NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_tuple(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.replace("x", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError(f"dimensions must be positive, got {text!r}")
    return values


class Output:
    """
    Serial writer for --out (or stdout): one JSON object per call.
    """

    def __init__(self, stream: typing.BinaryIO) -> None:
        self.stream = stream
        self.encoder = msgspec.json.Encoder()

    def write(self, obj: typing.Any) -> None:
        self.stream.write(self.encoder.encode(obj) + b"\n")


def _ensemble(args: argparse.Namespace) -> EnsembleSpec | None:
    if not args.family:
        return None
    return EnsembleSpec(
        family=args.family,
        dims=args.dims,
        count=args.count,
        rank=args.rank,
        b_split=args.b_split,
    )


def _samples(args: argparse.Namespace, experiment: ExperimentConfig) -> list[Sample]:
    if experiment.state_file:
        return load_states(pathlib.Path(experiment.state_file))
    if experiment.ensemble:
        return generate(experiment.ensemble, experiment.seed)
    raise SpecError(f"{args.command} needs --family or --file")


def _emit(out: Output, run: RunInfo, results: typing.Sequence[typing.Any]) -> None:
    """
    A single result becomes one JSON object embedding the run; batches are written as JSON
    lines after a header line holding the run.
    """
    if len(results) == 1:
        out.write({"run": run, "result": results[0]})
        return
    out.write({"run": run})
    for result in results:
        out.write(result)


def cmd_measure(args: argparse.Namespace, run: RunInfo, out: Output) -> None:
    experiment = run.config
    spec = MeasureSpec.parse(args.spec)

    def evaluate(sample: Sample) -> MeasureOutput:
        state = sample.state
        if isinstance(state, PureState) or spec.kind == MeasureKind.NEGATIVITY:
            value, method, flags = measure(state, args.cut, spec), "direct", []
        else:
            result = roof_value(state, args.cut, spec, experiment.optimizer)
            value, method, flags = result.value, "roof", result.flags
        cut = parse_cut(args.cut, state.signature).describe(state.signature)
        return MeasureOutput(sample.descriptor, spec.name, cut, value, method, flags)

    results = BatchRunner(args.threads).map(evaluate, _samples(args, experiment))
    for result in results:
        print(f"{result.descriptor}\t{result.measure}\t{result.value:.10g}", file=sys.stderr)
    _emit(out, run, results)


def cmd_roof(args: argparse.Namespace, run: RunInfo, out: Output) -> None:
    experiment = run.config
    spec = MeasureSpec.parse(args.spec)
    g = GFunction.parse(args.g) if args.g else None

    def evaluate(sample: Sample) -> RoofOutput:
        rho = as_density(sample.state)
        if g is None:
            result = roof_value(rho, args.cut, spec, experiment.optimizer)
        else:
            result = e_g_roof(rho, args.cut, spec, g, experiment.optimizer)
        spread = None
        if args.spread:
            report = decomposition_spread(rho, args.cut, spec, args.spread, experiment.seed)
            spread = (report.minimum, report.maximum)
        wootters = wootters_eof(rho) if rho.dims == (2, 2) else None
        return RoofOutput(
            sample.descriptor,
            spec.name,
            parse_cut(args.cut, rho.signature).describe(rho.signature),
            g.name if g else None,
            to_roof_report(result),
            spread,
            wootters,
        )

    results = BatchRunner(args.threads).map(evaluate, _samples(args, experiment))
    for result in results:
        print(
            f"{result.descriptor}\t{result.measure}\t{result.report.value:.10g}"
            f"\t{'-' if result.report.stats.converged else 'not-converged'}",
            file=sys.stderr,
        )
    _emit(out, run, results)


def _audit_summary(records: typing.Sequence[AuditRecord]) -> str:
    gaps = [r.gap for r in records]
    disentangled = [r for r in records if r.disentangled]
    outcomes: dict[str, int] = {}
    for record in disentangled:
        outcomes[str(record.witness)] = outcomes.get(str(record.witness), 0) + 1
    lines = [
        f"{'states':>12} {len(records)}",
        f"{'min gap':>12} {min(gaps):.3e}",
        f"{'median gap':>12} {statistics.median(gaps):.3e}",
        f"{'disentangled':>12} {len(disentangled)}",
    ]
    lines.extend(f"{outcome:>12} {count}" for outcome, count in sorted(outcomes.items()))
    return "\n".join(lines)


def cmd_audit(args: argparse.Namespace, run: RunInfo, out: Output) -> None:
    experiment = run.config
    spec = MeasureSpec.parse(args.spec)
    records = audit_batch(_samples(args, experiment), spec, experiment.optimizer, args.threads)
    print(_audit_summary(records), file=sys.stderr)
    if args.calibrate:
        for point in calibration_curve(records, args.calibrate):
            delta = "-" if point.delta is None else f"{point.delta:.3e}"
            line = f"{'eps':>12} {point.eps:.1e}  n={point.count}  delta={delta}"
            print(line, file=sys.stderr)
    out.write({"run": run})
    for record in records:
        out.write(record)


def cmd_alpha(args: argparse.Namespace, run: RunInfo, out: Output) -> None:
    experiment = run.config
    spec = MeasureSpec.parse(args.spec)
    records = audit_batch(_samples(args, experiment), spec, experiment.optimizer, args.threads)
    result = alpha_from_records(records, experiment.alpha)
    per_record = [alpha_from_records([record], experiment.alpha).alpha for record in records]
    if result.found:
        print(f"alpha = {result.alpha:.4f} over {result.samples} samples", file=sys.stderr)
    else:
        print(f"no alpha in ({result.low}, {result.high}]", file=sys.stderr)
    out.write({"run": run, "result": AlphaOutput(result, per_record)})


def cmd_ckw(args: argparse.Namespace, run: RunInfo, out: Output) -> None:
    samples = _samples(args, run.config)
    results = [
        CKWOutput(sample.descriptor, *check, check.residual)
        for sample, check in zip(samples, ckw_batch(samples, args.threads))
    ]
    residuals = [r.residual for r in results]
    print(f"{'states':>12} {len(results)}", file=sys.stderr)
    print(f"{'min residual':>12} {min(residuals):.3e}", file=sys.stderr)
    _emit(out, run, results)


def cmd_witness(args: argparse.Namespace, run: RunInfo, out: Output) -> None:
    def evaluate(sample: Sample) -> WitnessOutput:
        state = sample.state
        if not isinstance(state, PureState):
            raise SignatureError(f"{sample.descriptor}: the witness needs a pure state")
        attempt = attempt_factorization(state, args.eps)
        check = is_product(partial_trace(state, "AC"), args.eps)
        form = biseparable_form_check(state, args.eps) if state.dims[1] <= 3 else None
        return WitnessOutput(
            sample.descriptor,
            to_witness_record(attempt),
            check.is_product,
            check.distance,
            form,
        )

    results = BatchRunner(args.threads).map(evaluate, _samples(args, run.config))
    for result in results:
        found = "found" if result.witness.found else f"none ({result.witness.stage})"
        print(f"{result.descriptor}\t{found}", file=sys.stderr)
    _emit(out, run, results)


def cmd_probe(args: argparse.Namespace, run: RunInfo, out: Output) -> None:
    report = concavity_probe(
        EntropySpec.parse(args.entropy), args.dim, args.trials, run.config.seed
    )
    verdict = "violation found" if report.violation_found else "no violation"
    print(
        f"{report.spec} dim {report.dim}: min margin {report.min_margin:.3e}, {verdict}",
        file=sys.stderr,
    )
    out.write({"run": run, "result": report})


def cmd_gen(args: argparse.Namespace, run: RunInfo, out: Output) -> None:
    samples = _samples(args, run.config)
    run_info = msgspec.json.encode(run)
    if args.out:
        # the state file itself has no run header so it can be read back with --file
        count = write_states(args.out, (sample.state for sample in samples))
        sidecar = args.out.with_name(f"{args.out.name}.run.json")
        sidecar.write_bytes(run_info + b"\n")
    else:
        for sample in samples:
            out.write(to_record(sample.state))
        count = len(samples)
        sys.stderr.write(run_info.decode() + "\n")
    print(f"wrote {count} states", file=sys.stderr)


COMMANDS: dict[str, typing.Callable[[argparse.Namespace, RunInfo, Output], None]] = {
    "measure": cmd_measure,
    "roof": cmd_roof,
    "audit": cmd_audit,
    "alpha": cmd_alpha,
    "ckw": cmd_ckw,
    "witness": cmd_witness,
    "probe": cmd_probe,
    "gen": cmd_gen,
}


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="roofbox", description="Entanglement measures, convex roofs and monogamy audits"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=pathlib.Path, help="TOML configuration file")
    parser.add_argument("--seed", type=int, help="global seed (default: optimizer.seed)")
    parser.add_argument(
        "--tol", action="append", default=[], metavar="NAME=VALUE", help="tolerance override"
    )
    parser.add_argument("--out", type=pathlib.Path, help="output file (default: stdout)")
    parser.add_argument("--threads", type=int, help="worker threads")
    parser.add_argument("--db", type=pathlib.Path, help="sqlite database for audit records")

    sources = ArgumentParser(add_help=False)
    sources.add_argument("--family", type=Family, choices=list(Family))
    sources.add_argument("--dims", type=_int_tuple, help="local dimensions, e.g. 2,4,2")
    sources.add_argument("--count", type=int, default=1)
    sources.add_argument("--rank", type=int, help="Ginibre rank")
    sources.add_argument("--b-split", type=_int_tuple, help="dim B1,dim B2 (product-family)")
    sources.add_argument("--file", type=pathlib.Path, help="JSON or JSON-lines state file")

    measured = ArgumentParser(add_help=False)
    measured.add_argument("--spec", default="eoe", help="measure, e.g. eoe, tangle, renyi:2")
    measured.add_argument("--cut", help="bipartition such as A|BC (default: A|rest)")

    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("measure", parents=[sources, measured], help="pure-state measures")

    roof = subparsers.add_parser("roof", parents=[sources, measured], help="convex roof")
    roof.add_argument("--g", help="E_g composition: identity, square, cube, expm1, power:k")
    roof.add_argument("--restarts", type=int)
    roof.add_argument("--members", type=int)
    roof.add_argument("--spread", type=int, default=0, help="random decompositions to sample")

    audit = subparsers.add_parser(
        "audit", parents=[sources, measured], help="disentangling gap audit"
    )
    audit.add_argument("--calibrate", type=float, nargs="+", metavar="EPS")

    alpha = subparsers.add_parser("alpha", parents=[sources, measured], help="minimal alpha")
    alpha.add_argument("--low", type=float)
    alpha.add_argument("--high", type=float)
    alpha.add_argument("--resolution", type=float)

    subparsers.add_parser("ckw", parents=[sources], help="three-qubit tangle residual")

    witness = subparsers.add_parser("witness", parents=[sources], help="factorization witness")
    witness.add_argument("--eps", type=float)

    probe = subparsers.add_parser("probe", help="concavity probe")
    probe.add_argument(
        "--entropy", required=True, help="vn, linear, tsallis:q, renyi:a or g:name"
    )
    probe.add_argument("--dim", type=int, required=True)
    probe.add_argument("--trials", type=int, default=1000)

    subparsers.add_parser("gen", parents=[sources], help="write an ensemble as a state file")
    return parser


def _experiment(args: argparse.Namespace, config: ToolConfig) -> ExperimentConfig:
    tolerances = override_tolerances(config.tolerances, args.tol)
    seed = config.optimizer.seed if args.seed is None else args.seed

    optimizer_changes: dict[str, typing.Any] = {"seed": seed}
    if getattr(args, "restarts", None):
        optimizer_changes["restarts"] = args.restarts
    if getattr(args, "members", None):
        optimizer_changes["members"] = args.members
    optimizer = msgspec.convert(
        msgspec.to_builtins(config.optimizer) | optimizer_changes, type=OptimizerConfig
    )

    alpha_changes = {
        name: getattr(args, name)
        for name in ("low", "high", "resolution")
        if getattr(args, name, None) is not None
    }
    alpha = msgspec.convert(msgspec.to_builtins(config.alpha) | alpha_changes, type=AlphaConfig)

    options = {
        name: value
        for name, value in vars(args).items()
        if name in ("g", "spread", "calibrate", "eps", "entropy", "dim", "trials")
    }
    state_file = getattr(args, "file", None)
    ensemble = _ensemble(args) if hasattr(args, "family") and not state_file else None
    return ExperimentConfig(
        command=args.command,
        seed=seed,
        ensemble=ensemble,
        state_file=str(state_file) if state_file else None,
        measure=getattr(args, "spec", None),
        cut=getattr(args, "cut", None),
        options=options,
        tolerances=tolerances,
        optimizer=optimizer,
        alpha=alpha,
    )


def run(argv: typing.Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = load_config(args.config)
    logging.basicConfig(
        level=config.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s"
    )
    args.threads = config.threads if args.threads is None else args.threads
    if args.threads < 1:
        raise SpecError("--threads must be positive")

    experiment = _experiment(args, config)
    run_info = RunInfo(__version__, datetime.datetime.now(tz=datetime.UTC), experiment)

    with contextlib.ExitStack() as stack:
        stack.enter_context(use_tolerances(experiment.tolerances))
        database_path = args.db or config.database
        if database_path:
            database = open_database(database_path)
            stack.callback(database_ctx.set, None)
            stack.callback(database.close)
        if args.out and args.command != "gen":
            stream = stack.enter_context(args.out.open("wb"))
        else:
            stream = sys.stdout.buffer
        COMMANDS[args.command](args, run_info, Output(stream))
    return 0


def main(argv: typing.Sequence[str] | None = None) -> None:
    try:
        code = run(argv)
    except (SpecError, SignatureError, msgspec.ValidationError) as exc:
        logger.error(f"{exc}")
        code = EXIT_USAGE
    except (ContractError, np.linalg.LinAlgError, ArithmeticError) as exc:
        logger.error(f"Numeric contract violation: {exc}")
        code = EXIT_NUMERIC
    except OSError as exc:
        logger.error(f"{exc}")
        code = EXIT_IO
    except ValueError as exc:
        logger.error(f"{exc}")
        code = EXIT_USAGE
    sys.exit(code)


if __name__ == "__main__":
    main()
