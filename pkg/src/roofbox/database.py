#!/usr/bin/python3

import hashlib
import logging
import pathlib
import sqlite3
import typing
from contextvars import ContextVar

import msgspec

from .monogamy import AuditRecord

logger = logging.getLogger(__name__)

# holds the database context so it can be used across modules without circular imports
database_ctx: ContextVar[sqlite3.Connection | None] = ContextVar("database", default=None)


def open_database(path: pathlib.Path) -> sqlite3.Connection:
    database = sqlite3.connect(path)
    database.execute("CREATE TABLE IF NOT EXISTS audits (id TEXT PRIMARY KEY, payload TEXT)")
    database.commit()
    database_ctx.set(database)
    return database


def audit_id(payload: bytes) -> str:
    # identical audits collapse onto one row
    return hashlib.sha256(payload).hexdigest()[:16]


def store_audits(records: typing.Iterable[AuditRecord]) -> int:
    """
    Persists audit records to the active database, if any.  Returns the number of new rows.
    """
    database = database_ctx.get()
    if not database:
        return 0
    encoder = msgspec.json.Encoder()
    payloads = [encoder.encode(record) for record in records]
    cur = database.executemany(
        "INSERT OR IGNORE INTO audits (id, payload) VALUES (?, ?)",
        ((audit_id(payload), payload.decode()) for payload in payloads),
    )
    database.commit()
    return cur.rowcount


def load_audits() -> list[AuditRecord]:
    database = database_ctx.get()
    if not database:
        return []
    records = []
    cur = database.cursor()
    cur.execute("SELECT id, payload FROM audits")
    for id, payload in cur.fetchall():
        try:
            # records written by older versions may not decode; they are skipped
            records.append(msgspec.json.decode(payload, type=AuditRecord))
        except msgspec.DecodeError as exc:
            logger.warning(f"Error loading audit {id} from the database: {exc}")
    return records
