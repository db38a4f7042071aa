#!/usr/bin/python3

import contextlib
import os
import pathlib
import typing
from contextvars import ContextVar

import msgspec

PositiveInt = typing.Annotated[int, msgspec.Meta(gt=0)]
NonNegativeInt = typing.Annotated[int, msgspec.Meta(ge=0)]
PositiveFloat = typing.Annotated[float, msgspec.Meta(gt=0)]

# type signature for msgspec decode hook
TypeConversionMap = dict[typing.Type, typing.Callable]
MsgspecDecodeHookCallable = typing.Callable[[typing.Type, typing.Any], typing.Any]


# builds a function that takes a mapping of types to callables that can build them
def build_decode_hook(conversions: TypeConversionMap) -> MsgspecDecodeHookCallable:
    def dec_hook(type: typing.Type, obj: typing.Any) -> typing.Any:
        if type in conversions:
            return conversions[type](obj)
        raise NotImplementedError(f"Objects of type {type} are not supported")

    return dec_hook


_config_decode_hook = build_decode_hook(
    {
        pathlib.Path: pathlib.Path,
    }
)


class Tolerances(msgspec.Struct, frozen=True, kw_only=True):
    """
    Numerical tolerances shared by every module.  The active set is held in `tolerances_ctx`.
    """

    norm: PositiveFloat = 1e-10
    herm: PositiveFloat = 1e-10
    psd: PositiveFloat = 1e-9
    recon: PositiveFloat = 1e-8
    eig: PositiveFloat = 1e-8
    iso: PositiveFloat = 1e-10
    audit: PositiveFloat = 1e-6
    gap_pure: PositiveFloat = 1e-6
    gap_mixed: PositiveFloat = 1e-3
    witness: PositiveFloat = 1e-6


class OptimizerConfig(msgspec.Struct, frozen=True, kw_only=True):
    restarts: PositiveInt = 32
    max_evals: PositiveInt = 10_000
    n_extra: NonNegativeInt = 2

    # explicit decomposition size; overrides n_extra when set
    members: PositiveInt | None = None
    tol: PositiveFloat = 1e-8
    seed: int = 0

    # stop once this many consecutive restarts land within `agreement` of the best; 0 runs all
    patience: NonNegativeInt = 3
    agreement: PositiveFloat = 1e-6

    # restarts evaluated at the same time
    threads: PositiveInt = 1


class AlphaConfig(msgspec.Struct, frozen=True, kw_only=True):
    low: PositiveFloat = 0.05
    high: PositiveFloat = 16.0
    resolution: PositiveFloat = 1e-3

    def __post_init__(self) -> None:
        if self.low < 0.05:
            raise ValueError(f"Alpha range below 0.05 is not meaningful (got {self.low})")
        if self.high <= self.low:
            raise ValueError(f"Empty alpha range ({self.low}, {self.high}]")


class ToolConfig(msgspec.Struct, kw_only=True):
    log_level: NonNegativeInt = 30
    threads: PositiveInt = 1
    database: pathlib.Path | None = None
    tolerances: Tolerances = msgspec.field(default_factory=Tolerances)
    optimizer: OptimizerConfig = msgspec.field(default_factory=OptimizerConfig)
    alpha: AlphaConfig = msgspec.field(default_factory=AlphaConfig)

    def __post_init__(self) -> None:
        tol = self.tolerances
        if tol.gap_mixed < tol.gap_pure:
            raise ValueError(
                f"Mixed-state gap tolerance {tol.gap_mixed} is tighter than pure {tol.gap_pure}"
            )


tolerances_ctx: ContextVar[Tolerances] = ContextVar("tolerances", default=Tolerances())


def get_tolerances() -> Tolerances:
    return tolerances_ctx.get()


@contextlib.contextmanager
def use_tolerances(tolerances: Tolerances) -> typing.Iterator[Tolerances]:
    token = tolerances_ctx.set(tolerances)
    try:
        yield tolerances
    finally:
        tolerances_ctx.reset(token)


def override_tolerances(base: Tolerances, overrides: typing.Iterable[str]) -> Tolerances:
    """
    Applies `name=value` overrides (as given on the command line) to a tolerance set.
    """
    changes: dict[str, float] = {}
    for item in overrides:
        name, sep, value = item.partition("=")
        name = name.strip().replace("-", "_")
        if not sep or name not in Tolerances.__struct_fields__:
            raise ValueError(f"Invalid tolerance override {item!r}")
        changes[name] = float(value)
    return msgspec.convert(msgspec.to_builtins(base) | changes, type=Tolerances)


def load_config(config_path: pathlib.Path | None = None) -> ToolConfig:
    """
    Loads the TOML configuration.  Falls back to the ROOFBOX_CONFIG environment variable, then
    to the built-in defaults if no file is present.
    """
    if config_path is None:
        env_path = os.getenv("ROOFBOX_CONFIG")
        if not env_path:
            return ToolConfig()
        config_path = pathlib.Path(env_path)
        if not config_path.exists():
            return ToolConfig()
    return msgspec.toml.decode(
        config_path.read_bytes(), type=ToolConfig, dec_hook=_config_decode_hook
    )
