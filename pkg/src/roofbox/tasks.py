#!/usr/bin/python3

import asyncio
import dataclasses
import logging
import typing

from .config import OptimizerConfig
from .database import store_audits
from .ensembles import Sample
from .measures import MeasureSpec
from .monogamy import AuditRecord, CKWResult, ckw_check, disentangling_gap
from .states import PureState, SignatureError

logger = logging.getLogger(__name__)

T = typing.TypeVar("T")
R = typing.TypeVar("R")


@dataclasses.dataclass
class BatchRunner:
    """
    Evaluates a function over a batch in worker threads, at most `threads` at a time.  Results
    come back in input order regardless of completion order.
    """

    threads: int = 1

    async def _run(self, func: typing.Callable[[T], R], items: typing.Sequence[T]) -> list[R]:
        # limit the number of simultaneous evaluations
        sem = asyncio.Semaphore(self.threads)

        async def run_one(item: T) -> R:
            async with sem:
                return await asyncio.to_thread(func, item)

        return await asyncio.gather(*(run_one(item) for item in items))

    def map(self, func: typing.Callable[[T], R], items: typing.Sequence[T]) -> list[R]:
        if not items:
            return []
        if self.threads == 1:
            return [func(item) for item in items]
        return asyncio.run(self._run(func, items))


def audit_batch(
    samples: typing.Sequence[Sample],
    spec: MeasureSpec,
    cfg: OptimizerConfig | None = None,
    threads: int = 1,
) -> list[AuditRecord]:
    if not samples:
        raise ValueError("Audit batch is empty")
    logger.info(f"Auditing {len(samples)} states with {spec.name} on {threads} threads")

    def audit(sample: Sample) -> AuditRecord:
        return disentangling_gap(sample.state, spec, cfg, sample.descriptor, sample.seed)

    records = BatchRunner(threads).map(audit, samples)
    stored = store_audits(records)
    if stored:
        logger.info(f"Stored {stored} new audit records")
    return records


def ckw_batch(samples: typing.Sequence[Sample], threads: int = 1) -> list[CKWResult]:
    def check(sample: Sample) -> CKWResult:
        if not isinstance(sample.state, PureState):
            raise SignatureError(f"{sample.descriptor} is not a pure state")
        return ckw_check(sample.state)

    return BatchRunner(threads).map(check, samples)
