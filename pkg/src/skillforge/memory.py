"""Life-long experience store.

Per execution two matrices are kept: sensor channel values per tick and the
number of simultaneously active instances of every instrumented function per
tick. Both are persisted to an embedded SQLite database as packed binary
blobs so that fetches round-trip bit-exactly across process restarts.
"""

import json
import sqlite3
import struct
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import RecordingError, SchemaConflictError, StorageError

BLOB_MAGIC = b"KDMX"
BLOB_VERSION = 1


# ---------------------------------------------------------------------------
# Matrices


@dataclass
class SensorMatrix:
    channels: tuple            # row names, length M
    values: np.ndarray         # float64, M x T
    tick_length: int = 1

    def __post_init__(self):
        self.channels = tuple(self.channels)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] != len(self.channels):
            raise ValueError("sensor matrix must be M x T with one row per channel")

    @property
    def ticks(self):
        return self.values.shape[1]

    def __eq__(self, other):
        return (isinstance(other, SensorMatrix)
                and self.channels == other.channels
                and self.values.shape == other.values.shape
                and np.array_equal(self.values, other.values))


@dataclass
class CallProfileMatrix:
    functions: tuple           # row names, length F
    counts: np.ndarray         # uint32, F x T

    def __post_init__(self):
        self.functions = tuple(self.functions)
        self.counts = np.asarray(self.counts, dtype=np.uint32)
        if self.counts.ndim != 2 or self.counts.shape[0] != len(self.functions):
            raise ValueError("profile matrix must be F x T with one row per function")

    @property
    def ticks(self):
        return self.counts.shape[1]

    def row(self, function_id):
        return self.counts[self.functions.index(function_id)]

    def __eq__(self, other):
        return (isinstance(other, CallProfileMatrix)
                and self.functions == other.functions
                and self.counts.shape == other.counts.shape
                and np.array_equal(self.counts, other.counts))


def profile_from_intervals(intervals, ticks, functions=None):
    """Rebuild a CallProfileMatrix from closed [enter, exit] tick intervals.

    `intervals` is an iterable of (function_id, enter_tick, exit_tick) with
    ticks already relative to the execution start. Functions default to the
    ones observed, in first-seen order.
    """
    if functions is None:
        functions = []
        for fid, _, _ in intervals:
            if fid not in functions:
                functions.append(fid)
    counts = np.zeros((len(functions), ticks), dtype=np.uint32)
    index = {fid: i for i, fid in enumerate(functions)}
    for fid, enter, exit_ in intervals:
        if exit_ < enter:
            raise ValueError(f"exit before enter for {fid}")
        counts[index[fid], enter:exit_ + 1] += 1
    return CallProfileMatrix(tuple(functions), counts)


# ---------------------------------------------------------------------------
# Binary blob codec
#
# Layout: "KDMX" | version u8 | elem u8 (8 = float64, 4 = uint32)
#         | rows u32 LE | cols u32 LE | per row: name length u16 LE + utf-8
#         | cells little-endian row-major.


def encode_matrix(names, array):
    array = np.ascontiguousarray(array)
    if array.dtype == np.float64:
        elem = 8
    elif array.dtype == np.uint32:
        elem = 4
    else:
        raise ValueError(f"unsupported matrix dtype {array.dtype}")
    rows, cols = array.shape
    out = bytearray()
    out += BLOB_MAGIC
    out += struct.pack("<BB", BLOB_VERSION, elem)
    out += struct.pack("<II", rows, cols)
    for name in names:
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded)) + encoded
    out += array.astype("<f8" if elem == 8 else "<u4", copy=False).tobytes(order="C")
    return bytes(out)


def decode_matrix(blob):
    if blob[:4] != BLOB_MAGIC:
        raise StorageError("bad matrix blob magic")
    version, elem = struct.unpack_from("<BB", blob, 4)
    if version != BLOB_VERSION:
        raise StorageError(f"unsupported blob version {version}")
    rows, cols = struct.unpack_from("<II", blob, 6)
    offset = 14
    names = []
    for _ in range(rows):
        (length,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        names.append(blob[offset:offset + length].decode("utf-8"))
        offset += length
    dtype = "<f8" if elem == 8 else "<u4"
    cells = np.frombuffer(blob, dtype=dtype, count=rows * cols, offset=offset)
    array = cells.reshape(rows, cols).astype(np.float64 if elem == 8 else np.uint32)
    return names, array


# ---------------------------------------------------------------------------
# Profiling and recording sessions


@dataclass
class TraceEvent:
    kind: str            # enter | exit
    function: str
    tick: int


@dataclass
class FaultEvent:
    function: str
    mode: str
    tick: int


@dataclass
class CallTrace:
    events: list = field(default_factory=list)
    fault_events: list = field(default_factory=list)

    def intervals(self, t0):
        """Pair enter/exit events into [enter, exit] intervals relative to t0."""
        stacks = {}
        out = []
        for ev in self.events:
            if ev.kind == "enter":
                stacks.setdefault(ev.function, []).append(ev.tick)
            else:
                if not stacks.get(ev.function):
                    raise RecordingError(f"exit without matching enter for {ev.function}")
                enter = stacks[ev.function].pop()
                out.append((ev.function, enter - t0, ev.tick - t0))
        dangling = [fid for fid, stack in stacks.items() if stack]
        if dangling:
            raise RecordingError(f"unmatched enters: {sorted(dangling)}")
        return out

    def functions_entered(self):
        seen = []
        for ev in self.events:
            if ev.kind == "enter" and ev.function not in seen:
                seen.append(ev.function)
        return seen


class ProfilingRecorder:
    """Token-pairing enter/exit recorder feeding one CallProfileMatrix."""

    def __init__(self):
        self._next_token = 0
        self._open = {}
        self._closed = []          # (function, enter_tick, exit_tick)
        self.trace = CallTrace()

    def enter(self, function_id, tick):
        token = self._next_token
        self._next_token += 1
        self._open[token] = (function_id, tick)
        self.trace.events.append(TraceEvent("enter", function_id, tick))
        return token

    def exit(self, token, tick):
        if token not in self._open:
            raise RecordingError(f"exit with unknown token {token}")
        function_id, enter_tick = self._open.pop(token)
        if tick < enter_tick:
            raise RecordingError("exit tick precedes enter tick")
        self._closed.append((function_id, enter_tick, tick))
        self.trace.events.append(TraceEvent("exit", function_id, tick))

    def force_close(self, tick):
        """Close every open instance at `tick`; used when an execution aborts."""
        for token in sorted(self._open, reverse=True):
            self.exit(token, tick)

    def to_matrix(self, t0, ticks):
        if self._open:
            raise RecordingError("profiling instances still open")
        intervals = [(fid, a - t0, b - t0) for fid, a, b in self._closed]
        return profile_from_intervals(intervals, ticks)


class RecordingSession:
    """Collects one execution's sensor columns and profiling events.

    Channels are fixed when the session opens (the union of the execution's
    hardware channels, in hardware-registration order); every tick must supply
    one value per channel before the next tick is recorded.
    """

    def __init__(self, handles, start_tick):
        self.handles = list(handles)
        self.channels = tuple(ch for h in self.handles for ch in h.channels)
        self._row_of = {ch: i for i, ch in enumerate(self.channels)}
        self.start_tick = start_tick
        self._columns = {}
        self._last_tick = start_tick - 1
        self.profiler = ProfilingRecorder()
        self.closed = False

    def _require_open(self):
        if self.closed:
            raise RecordingError("recording session is closed")

    def mark_tick(self, tick):
        """Open the column for a tick; keeps zero-channel executions on the grid."""
        self._require_open()
        if tick < self.start_tick or tick < self._last_tick:
            raise RecordingError("snapshot tick out of order")
        column = self._columns.setdefault(tick, np.full(len(self.channels), np.nan))
        self._last_tick = max(self._last_tick, tick)
        return column

    def record_snapshot(self, handle, values, tick):
        """Append one handle's channel block for a tick."""
        column = self.mark_tick(tick)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(handle.channels),):
            raise RecordingError(
                f"{handle.name} expects {len(handle.channels)} values, got {values.shape}")
        for ch, value in zip(handle.channels, values):
            column[self._row_of[ch]] = value

    def profile_enter(self, function_id, tick):
        self._require_open()
        return self.profiler.enter(function_id, tick)

    def profile_exit(self, token, tick):
        self._require_open()
        self.profiler.exit(token, tick)

    def abort(self, tick):
        self._require_open()
        self.profiler.force_close(tick)

    def close(self):
        """Finish recording; end tick is exclusive (start + T)."""
        self._require_open()
        self.closed = True
        end_tick = self._last_tick + 1
        ticks = end_tick - self.start_tick
        values = np.zeros((len(self.channels), ticks))
        for t in range(self.start_tick, end_tick):
            column = self._columns.get(t)
            if column is None or np.isnan(column).any():
                raise RecordingError(f"missing sensor values at tick {t}")
            values[:, t - self.start_tick] = column
        sensor = SensorMatrix(self.channels, values)
        profile = self.profiler.to_matrix(self.start_tick, ticks)
        return sensor, profile, self.profiler.trace, end_tick


# ---------------------------------------------------------------------------
# Execution records and the SQLite store


@dataclass
class ExecutionRecord:
    ref_id: str                 # skill or behaviour or program id
    kind: str                   # skill | behaviour | program
    start_tick: int
    end_tick: int
    success: bool
    sensor: SensorMatrix
    profile: CallProfileMatrix
    hardware: tuple
    situation: dict
    id: int | None = None
    # transient, set by the engine on freshly produced records; not persisted
    trace: CallTrace | None = None
    failure_reason: str | None = None

    def validate(self):
        if self.end_tick < self.start_tick:
            raise ValueError("end tick precedes start tick")
        if self.sensor.ticks != self.profile.ticks:
            raise ValueError("sensor and profile matrices must share T")

    def __eq__(self, other):
        return (isinstance(other, ExecutionRecord)
                and self.ref_id == other.ref_id and self.kind == other.kind
                and self.start_tick == other.start_tick and self.end_tick == other.end_tick
                and self.success == other.success and self.hardware == other.hardware
                and self.situation == other.situation
                and self.sensor == other.sensor and self.profile == other.profile)


CORE_SCHEMA = [
    """CREATE TABLE IF NOT EXISTS executions (
        id INTEGER PRIMARY KEY AUTOINCREMENT,
        ref_id TEXT NOT NULL,
        kind TEXT NOT NULL,
        start_tick INTEGER NOT NULL,
        end_tick INTEGER NOT NULL,
        success INTEGER NOT NULL,
        hardware TEXT NOT NULL,
        situation TEXT NOT NULL,
        sensor_blob BLOB NOT NULL,
        profile_blob BLOB NOT NULL
    )""",
    """CREATE TABLE IF NOT EXISTS skills (
        id TEXT PRIMARY KEY,
        basic_behaviour TEXT,
        predicate TEXT NOT NULL,
        hardware TEXT NOT NULL,
        ecm_json TEXT,
        promoted INTEGER NOT NULL DEFAULT 0
    )""",
    """CREATE TABLE IF NOT EXISTS schema_extensions (
        owner TEXT NOT NULL,
        version INTEGER NOT NULL,
        tables TEXT NOT NULL,
        PRIMARY KEY (owner, version)
    )""",
    """CREATE TABLE IF NOT EXISTS table_owners (
        table_name TEXT PRIMARY KEY,
        owner TEXT NOT NULL
    )""",
    # Experience is append-only: reject updates at the storage layer.
    """CREATE TRIGGER IF NOT EXISTS executions_append_only
        BEFORE UPDATE ON executions
        BEGIN SELECT RAISE(ABORT, 'execution records are immutable'); END""",
]


@dataclass(frozen=True)
class SchemaExtension:
    """Extra tables contributed by a hardware or skill controller."""

    owner: str
    version: int
    tables: dict    # table name -> list of (column name, sql type)


class ExperienceStore:
    """Embedded relational store with one serialized writer."""

    def __init__(self, path=":memory:"):
        self.path = path
        self._lock = threading.RLock()
        try:
            self._db = sqlite3.connect(path, check_same_thread=False)
        except sqlite3.Error as exc:
            raise StorageError(f"cannot open store at {path}: {exc}") from exc
        with self._lock, self._db:
            for statement in CORE_SCHEMA:
                self._db.execute(statement)

    def close(self):
        self._db.close()

    # -- executions ---------------------------------------------------------

    def persist_execution(self, record):
        record.validate()
        with self._lock, self._db:
            cur = self._db.execute(
                "INSERT INTO executions (ref_id, kind, start_tick, end_tick, success,"
                " hardware, situation, sensor_blob, profile_blob)"
                " VALUES (?,?,?,?,?,?,?,?,?)",
                (record.ref_id, record.kind, record.start_tick, record.end_tick,
                 int(record.success), json.dumps(list(record.hardware)),
                 json.dumps(record.situation, sort_keys=True),
                 encode_matrix(record.sensor.channels, record.sensor.values),
                 encode_matrix(record.profile.functions, record.profile.counts)))
            record.id = cur.lastrowid
        return record.id

    def _row_to_record(self, row):
        channels, values = decode_matrix(row[8])
        functions, counts = decode_matrix(row[9])
        return ExecutionRecord(
            id=row[0], ref_id=row[1], kind=row[2], start_tick=row[3], end_tick=row[4],
            success=bool(row[5]), hardware=tuple(json.loads(row[6])),
            situation=json.loads(row[7]),
            sensor=SensorMatrix(channels, values),
            profile=CallProfileMatrix(functions, counts.astype(np.uint32)))

    def fetch_executions(self, ref_id=None, success=None, limit=None, record_id=None):
        """Conjunctive filters, newest (largest start tick, then id) first."""
        clauses, args = [], []
        if record_id is not None:
            clauses.append("id = ?")
            args.append(record_id)
        if ref_id is not None:
            clauses.append("ref_id = ?")
            args.append(ref_id)
        if success is not None:
            clauses.append("success = ?")
            args.append(int(success))
        sql = ("SELECT id, ref_id, kind, start_tick, end_tick, success, hardware,"
               " situation, sensor_blob, profile_blob FROM executions")
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        sql += " ORDER BY start_tick DESC, id DESC"
        if limit is not None:
            if limit < 0:
                raise StorageError("limit must be non-negative")
            sql += f" LIMIT {int(limit)}"
        with self._lock:
            rows = self._db.execute(sql, args).fetchall()
        return [self._row_to_record(row) for row in rows]

    def fetch_execution(self, record_id):
        records = self.fetch_executions(record_id=record_id)
        if not records:
            raise StorageError(f"no execution with id {record_id}")
        return records[0]

    def count_executions(self):
        with self._lock:
            return self._db.execute("SELECT COUNT(*) FROM executions").fetchone()[0]

    # -- skills -------------------------------------------------------------

    def save_skill(self, skill_id, basic_behaviour, predicate, hardware,
                   ecm_json=None, promoted=False):
        with self._lock, self._db:
            self._db.execute(
                "INSERT INTO skills (id, basic_behaviour, predicate, hardware, ecm_json, promoted)"
                " VALUES (?,?,?,?,?,?)"
                " ON CONFLICT(id) DO UPDATE SET ecm_json=excluded.ecm_json,"
                " promoted=excluded.promoted",
                (skill_id, basic_behaviour, predicate, json.dumps(sorted(hardware)),
                 ecm_json, int(promoted)))

    # -- schema extensions ----------------------------------------------------

    def installed_version(self, owner):
        with self._lock:
            row = self._db.execute(
                "SELECT MAX(version) FROM schema_extensions WHERE owner = ?", (owner,)
            ).fetchone()
        return row[0]

    def install_schema(self, extension):
        """Install an owner's schema extension; idempotent per (owner, version)."""
        with self._lock, self._db:
            installed = self.installed_version(extension.owner)
            if installed is not None and extension.version < installed:
                raise SchemaConflictError(
                    f"{extension.owner} already at version {installed};"
                    f" downgrade to {extension.version} rejected")
            if installed is not None and extension.version == installed:
                return  # no-op re-install
            for table, columns in extension.tables.items():
                row = self._db.execute(
                    "SELECT owner FROM table_owners WHERE table_name = ?", (table,)
                ).fetchone()
                if row is not None and row[0] != extension.owner:
                    raise SchemaConflictError(
                        f"table {table!r} already owned by {row[0]!r}")
            for table, columns in extension.tables.items():
                if not all(col.isidentifier() for col, _ in columns) or not table.isidentifier():
                    raise SchemaConflictError(f"invalid identifier in table {table!r}")
                cols = ", ".join(f"{col} {sqltype}" for col, sqltype in columns)
                self._db.execute(f"CREATE TABLE IF NOT EXISTS {table} ({cols})")
                self._db.execute(
                    "INSERT OR REPLACE INTO table_owners (table_name, owner) VALUES (?,?)",
                    (table, extension.owner))
            self._db.execute(
                "INSERT INTO schema_extensions (owner, version, tables) VALUES (?,?,?)",
                (extension.owner, extension.version,
                 json.dumps({t: cols for t, cols in extension.tables.items()})))
