"""Tamper-evident single-writer hash chain, content-addressed checkpoint store,
and commitment/replay execution proofs.

Byte layouts are fixed so that digests are stable across runs and platforms:
all integers little-endian, floats little-endian IEEE-754 binary64, string
maps canonicalised with lexicographically sorted keys and explicit u32 length
prefixes. The on-disk ledger is one compact JSON record per line; a line that
is not byte-for-byte the canonical serialization of its parsed entry counts
as corruption.
"""
from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .learning import Dataset, ModelParams, param_count

GENESIS_PREV_HASH = "0" * 64

EVENT_TYPES = (
    "RequestSubmitted",
    "ConsensusReached",
    "UnlearningExecuted",
    "Aggregated",
    "ProofRecorded",
    "VerificationCompleted",
    "RequestRevoked",
    "Restored",
)

# Required lifecycle order per request; RequestRevoked/Restored are optional
# and only valid after VerificationCompleted.
EXPECTED_EVENT_ORDER = EVENT_TYPES[:6]
OPTIONAL_EVENT_ORDER = EVENT_TYPES[6:]

_HEX64 = re.compile(r"^[0-9a-f]{64}$")


class CheckpointMissingError(KeyError):
    """No snapshot stored under the requested digest."""


class CheckpointCorruptError(ValueError):
    """Stored blob no longer hashes to its key."""


def _u32(x: int) -> bytes:
    return struct.pack("<I", x)


def _u64(x: int) -> bytes:
    return struct.pack("<Q", x)


def _f64(x: float) -> bytes:
    return struct.pack("<d", x)


def digest(data: bytes) -> str:
    """SHA-256 as 64 lowercase hex chars."""
    return hashlib.sha256(data).hexdigest()


def canonical_bytes(params: ModelParams) -> bytes:
    """Injective byte encoding of model parameters.

    Layer count as u32, each layer dim as u32, then the flat coefficient
    vector as little-endian float64.
    """
    if not np.all(np.isfinite(params.coefficients)):
        raise ValueError("cannot serialize non-finite coefficients")
    parts = [_u32(len(params.arch))]
    parts.extend(_u32(d) for d in params.arch)
    parts.append(np.ascontiguousarray(params.coefficients, dtype="<f8").tobytes())
    return b"".join(parts)


def params_from_bytes(blob: bytes) -> ModelParams:
    if len(blob) < 4:
        raise ValueError("truncated params blob")
    (layers,) = struct.unpack_from("<I", blob, 0)
    head = 4 + 4 * layers
    if layers < 2 or len(blob) < head:
        raise ValueError("malformed params blob header")
    arch = tuple(struct.unpack_from(f"<{layers}I", blob, 4))
    expected = head + 8 * param_count(arch)
    if len(blob) != expected:
        raise ValueError(f"params blob length {len(blob)}, arch implies {expected}")
    coef = np.frombuffer(blob, dtype="<f8", offset=head).astype(np.float64)
    return ModelParams(arch=arch, coefficients=coef)


def dataset_bytes(dataset: Dataset) -> bytes:
    parts = [
        _u32(len(dataset)),
        _u32(dataset.feature_dim),
        _u32(dataset.num_classes),
        np.ascontiguousarray(dataset.sample_ids, dtype="<i8").tobytes(),
        np.ascontiguousarray(dataset.labels, dtype="<i8").tobytes(),
        np.ascontiguousarray(dataset.features, dtype="<f8").tobytes(),
    ]
    return b"".join(parts)


def canonical_map_bytes(payload: Mapping[str, str]) -> bytes:
    """Sorted-key, length-prefixed encoding of a string map; removes hash ambiguity."""
    parts = []
    for key in sorted(payload):
        value = payload[key]
        if not isinstance(key, str) or not isinstance(value, str):
            raise ValueError("payload keys and values must be strings")
        kb = key.encode("utf-8")
        vb = value.encode("utf-8")
        parts.extend((_u32(len(kb)), kb, _u32(len(vb)), vb))
    return b"".join(parts)


def params_digest(params: ModelParams) -> str:
    return digest(canonical_bytes(params))


def dataset_digest(dataset: Dataset) -> str:
    return digest(dataset_bytes(dataset))


def datasets_digest(datasets: Sequence[Dataset]) -> str:
    parts = [_u32(len(datasets))]
    parts.extend(bytes.fromhex(dataset_digest(ds)) for ds in datasets)
    return digest(b"".join(parts))


def map_digest(payload: Mapping[str, str]) -> str:
    return digest(canonical_map_bytes(payload))


@dataclass(frozen=True)
class LedgerEntry:
    index: int
    sim_timestamp: float
    event_type: str
    payload: dict[str, str]
    payload_digest: str
    prev_hash: str
    entry_hash: str


def _entry_hash(prev_hash: str, payload: Mapping[str, str], index: int, event_type: str, sim_timestamp: float) -> str:
    et = event_type.encode("utf-8")
    preimage = (
        prev_hash.encode("ascii")
        + canonical_map_bytes(payload)
        + _u64(index)
        + _u32(len(et))
        + et
        + _f64(sim_timestamp)
    )
    return digest(preimage)


class Ledger:
    """Append-only hash chain. Entries are immutable once appended; the only
    mutation is growth through append()."""

    def __init__(self) -> None:
        self.entries: list[LedgerEntry] = []

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def head_hash(self) -> str:
        return self.entries[-1].entry_hash if self.entries else GENESIS_PREV_HASH

    def append(self, event_type: str, payload: Mapping[str, str], sim_timestamp: float) -> LedgerEntry:
        if event_type not in EVENT_TYPES:
            raise ValueError(f"unknown event type {event_type!r}")
        sim_timestamp = float(sim_timestamp)
        if not np.isfinite(sim_timestamp) or sim_timestamp < 0:
            raise ValueError("sim_timestamp must be finite and non-negative")
        if self.entries and sim_timestamp < self.entries[-1].sim_timestamp:
            raise ValueError(
                f"timestamp regression: {sim_timestamp} < {self.entries[-1].sim_timestamp}"
            )
        payload = {str(k): str(v) for k, v in payload.items()}
        index = len(self.entries)
        prev = self.head_hash
        entry = LedgerEntry(
            index=index,
            sim_timestamp=sim_timestamp,
            event_type=event_type,
            payload=payload,
            payload_digest=map_digest(payload),
            prev_hash=prev,
            entry_hash=_entry_hash(prev, payload, index, event_type, sim_timestamp),
        )
        self.entries.append(entry)
        return entry


@dataclass(frozen=True)
class ChainStatus:
    valid: bool
    broken_at: int | None = None


def verify_chain(ledger: Ledger | Sequence[LedgerEntry]) -> ChainStatus:
    """Recompute every entry hash and linkage; corruption is a return value, never a crash."""
    entries = ledger.entries if isinstance(ledger, Ledger) else list(ledger)
    prev = GENESIS_PREV_HASH
    last_ts = 0.0
    for i, e in enumerate(entries):
        ok = (
            e.index == i
            and e.event_type in EVENT_TYPES
            and isinstance(e.payload, dict)
            and all(isinstance(k, str) and isinstance(v, str) for k, v in e.payload.items())
            and bool(_HEX64.match(e.prev_hash))
            and bool(_HEX64.match(e.entry_hash))
            and bool(_HEX64.match(e.payload_digest))
            and e.prev_hash == prev
            and np.isfinite(e.sim_timestamp)
            and e.sim_timestamp >= (last_ts if i else 0.0)
        )
        if ok:
            ok = (
                e.payload_digest == map_digest(e.payload)
                and e.entry_hash == _entry_hash(e.prev_hash, e.payload, e.index, e.event_type, e.sim_timestamp)
            )
        if not ok:
            return ChainStatus(valid=False, broken_at=i)
        prev = e.entry_hash
        last_ts = e.sim_timestamp
    return ChainStatus(valid=True)


_ENTRY_KEYS = frozenset(
    {"index", "sim_timestamp", "event_type", "payload", "payload_digest", "prev_hash", "entry_hash"}
)


def entry_to_line(entry: LedgerEntry) -> str:
    record = {
        "index": entry.index,
        "sim_timestamp": entry.sim_timestamp,
        "event_type": entry.event_type,
        "payload": entry.payload,
        "payload_digest": entry.payload_digest,
        "prev_hash": entry.prev_hash,
        "entry_hash": entry.entry_hash,
    }
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def parse_entry_line(line: str) -> LedgerEntry:
    """Strict inverse of entry_to_line: unknown keys, wrong types, or any
    non-canonical byte sequence are rejected."""
    record = json.loads(line)
    if not isinstance(record, dict) or set(record) != _ENTRY_KEYS:
        raise ValueError("unexpected ledger record shape")
    if not isinstance(record["index"], int) or isinstance(record["index"], bool):
        raise ValueError("index must be an integer")
    if not isinstance(record["sim_timestamp"], (int, float)) or isinstance(record["sim_timestamp"], bool):
        raise ValueError("sim_timestamp must be a number")
    if not isinstance(record["event_type"], str):
        raise ValueError("event_type must be a string")
    payload = record["payload"]
    if not isinstance(payload, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in payload.items()
    ):
        raise ValueError("payload must be a string map")
    for key in ("payload_digest", "prev_hash", "entry_hash"):
        if not isinstance(record[key], str):
            raise ValueError(f"{key} must be a string")
    entry = LedgerEntry(
        index=record["index"],
        sim_timestamp=float(record["sim_timestamp"]),
        event_type=record["event_type"],
        payload=payload,
        payload_digest=record["payload_digest"],
        prev_hash=record["prev_hash"],
        entry_hash=record["entry_hash"],
    )
    if entry_to_line(entry) != line:
        raise ValueError("non-canonical ledger line")
    return entry


def write_ledger(ledger: Ledger | Sequence[LedgerEntry], path: str | Path) -> None:
    entries = ledger.entries if isinstance(ledger, Ledger) else list(ledger)
    data = "".join(entry_to_line(e) + "\n" for e in entries)
    Path(path).write_bytes(data.encode("utf-8"))


def verify_ledger_bytes(data: bytes) -> tuple[ChainStatus, list[LedgerEntry]]:
    """Verify a serialized ledger. Any parse failure, canonical-form mismatch,
    or chain violation reports the first broken line index."""
    if data == b"":
        return ChainStatus(valid=True), []
    lines = data.split(b"\n")
    if lines and lines[-1] == b"":
        lines.pop()
    entries: list[LedgerEntry] = []
    for i, raw in enumerate(lines):
        try:
            entries.append(parse_entry_line(raw.decode("utf-8")))
        except (ValueError, UnicodeDecodeError):
            return ChainStatus(valid=False, broken_at=i), entries
    return verify_chain(entries), entries


def read_ledger(path: str | Path) -> list[LedgerEntry]:
    status, entries = verify_ledger_bytes(Path(path).read_bytes())
    if not status.valid:
        raise ValueError(f"ledger unparseable or broken at entry {status.broken_at}")
    return entries


PROOF_INPUT_KEYS = ("pre_params", "target_data", "retained_data", "config")


@dataclass(frozen=True)
class ExecutionProof:
    """Commitment tuple for one unlearning execution: which algorithm ran,
    digests of everything it consumed, its seed, and the output digest."""

    algorithm_id: str
    input_digests: dict[str, str]
    seed: int
    output_digest: str

    def __post_init__(self) -> None:
        if set(self.input_digests) != set(PROOF_INPUT_KEYS):
            raise ValueError(f"input_digests must have exactly keys {PROOF_INPUT_KEYS}")
        for name, value in [*self.input_digests.items(), ("output_digest", self.output_digest)]:
            if not isinstance(value, str) or not _HEX64.match(value):
                raise ValueError(f"{name} is not a 64-char lowercase hex digest")
        if not self.algorithm_id:
            raise ValueError("algorithm_id must be non-empty")


@dataclass(frozen=True)
class ReplayInputs:
    """The full inputs a verifier replays an execution proof against.

    config must expose canonical_map() -> Mapping[str, str]; the digest is
    taken over that canonical form.
    """

    pre_params: ModelParams
    target_data: Dataset
    retained_data: tuple[Dataset, ...]
    config: object


def replay_input_digests(inputs: ReplayInputs) -> dict[str, str]:
    return {
        "pre_params": params_digest(inputs.pre_params),
        "target_data": dataset_digest(inputs.target_data),
        "retained_data": datasets_digest(inputs.retained_data),
        "config": map_digest(inputs.config.canonical_map()),
    }


@dataclass(frozen=True)
class ReplayResult:
    accepted: bool
    reason: str | None = None


def verify_proof_by_replay(
    proof: ExecutionProof,
    replay_inputs: ReplayInputs,
    registry: Mapping[str, Callable],
) -> ReplayResult:
    """Deterministically re-execute the committed algorithm and compare digests.

    The registry maps algorithm_id to a callable
    (pre_params, target_data, retained_data, config) -> ModelParams.
    """
    if proof.algorithm_id not in registry:
        raise KeyError(f"unregistered algorithm_id {proof.algorithm_id!r}")
    if replay_input_digests(replay_inputs) != proof.input_digests:
        return ReplayResult(accepted=False, reason="input_mismatch")
    output = registry[proof.algorithm_id](
        replay_inputs.pre_params,
        replay_inputs.target_data,
        replay_inputs.retained_data,
        replay_inputs.config,
    )
    if params_digest(output) != proof.output_digest:
        return ReplayResult(accepted=False, reason="output_mismatch")
    return ReplayResult(accepted=True)


def record_proof(
    ledger: Ledger,
    proof: ExecutionProof,
    sim_timestamp: float,
    extra: Mapping[str, str] | None = None,
) -> LedgerEntry:
    payload = {
        "algorithm_id": proof.algorithm_id,
        "seed": str(proof.seed),
        "input_pre_params_digest": proof.input_digests["pre_params"],
        "input_target_data_digest": proof.input_digests["target_data"],
        "input_retained_data_digest": proof.input_digests["retained_data"],
        "input_config_digest": proof.input_digests["config"],
        "output_digest": proof.output_digest,
    }
    if extra:
        payload.update({str(k): str(v) for k, v in extra.items()})
    return ledger.append("ProofRecorded", payload, sim_timestamp)


def proof_from_entry(entry: LedgerEntry) -> ExecutionProof:
    if entry.event_type != "ProofRecorded":
        raise ValueError("entry is not a ProofRecorded event")
    p = entry.payload
    return ExecutionProof(
        algorithm_id=p["algorithm_id"],
        input_digests={
            "pre_params": p["input_pre_params_digest"],
            "target_data": p["input_target_data_digest"],
            "retained_data": p["input_retained_data_digest"],
            "config": p["input_config_digest"],
        },
        seed=int(p["seed"]),
        output_digest=p["output_digest"],
    )


class CheckpointStore:
    """Content-addressed model snapshots: digest -> canonical parameter bytes.

    load() re-hashes the blob before returning, so silent corruption surfaces
    as CheckpointCorruptError rather than a wrong model.
    """

    def __init__(self) -> None:
        self._blobs: dict[str, bytes] = {}

    def __contains__(self, key: str) -> bool:
        return key in self._blobs

    def __len__(self) -> int:
        return len(self._blobs)

    def digests(self) -> list[str]:
        return sorted(self._blobs)

    def store(self, params: ModelParams) -> str:
        blob = canonical_bytes(params)
        key = digest(blob)
        self._blobs[key] = blob
        return key

    def load(self, key: str) -> ModelParams:
        blob = self._blobs.get(key)
        if blob is None:
            raise CheckpointMissingError(key)
        if digest(blob) != key:
            raise CheckpointCorruptError(f"blob for {key} fails content addressing")
        return params_from_bytes(blob)

    def delete(self, key: str) -> None:
        self._blobs.pop(key, None)

    def write_dir(self, path: str | Path) -> None:
        root = Path(path)
        root.mkdir(parents=True, exist_ok=True)
        for key, blob in self._blobs.items():
            (root / key).write_bytes(blob)

    @classmethod
    def read_dir(cls, path: str | Path) -> "CheckpointStore":
        store = cls()
        root = Path(path)
        if not root.is_dir():
            raise FileNotFoundError(f"checkpoint directory {root} does not exist")
        for f in sorted(root.iterdir()):
            if f.is_file():
                store._blobs[f.name] = f.read_bytes()
        return store
