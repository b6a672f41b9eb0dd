"""Append-only, hash-chained submission ledger.

Mirrors the medical-data submission contract: patients append submissions,
only the submitting address may verify a submission, and only once. Off-chain
gate certificates are appended alongside. Nothing already written is ever
modified; current state (e.g. ``is_verified``) is derived by replaying the
chain.

Chain file format
-----------------
A sequence of frames, one per entry::

    <4-byte big-endian unsigned length N><N bytes of UTF-8 canonical JSON>

The JSON object has keys ``index``, ``prev_hash``, ``payload_hash`` and
``payload``, serialized with sorted keys and no whitespace. Hashes are
lowercase hex SHA-256. ``payload_hash = sha256(canonical(payload))``; the
entry hash is ``sha256(canonical({"index", "prev_hash", "payload_hash"}))``
and becomes the next entry's ``prev_hash``. The genesis ``prev_hash`` is 64
zeros. For example, submitting ``("ab" * 32, "bio", "eval")`` at unix time
1700000000 to an empty ledger writes a 372-byte file whose frame starts
``00 00 01 70 7b 22 69 6e 64 65 78 22 3a 30``: length 368, then
``{"index":0``.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from adexpert.anomaly.certificate import SmartCertificate, canonical_json

HASH_NAME = "sha256"
GENESIS_HASH = "0" * 64
_FRAME = struct.Struct(">I")
_ADDRESS = re.compile(r"^(0[xX])?[0-9a-fA-F]{64}$")

MSG_EMPTY_BIO = "Biological information cannot be empty."
MSG_EMPTY_EVAL = "Evaluation cannot be empty."
MSG_NOT_FOUND = "Submission does not exist."
MSG_NOT_PATIENT = "Only the patient can verify the submission."
MSG_ALREADY = "Submission is already verified."


class LedgerError(Exception):
    pass


class EmptyFieldError(LedgerError, ValueError):
    pass


class SubmissionNotFound(LedgerError, LookupError):
    pass


class NotSubmitterError(LedgerError, PermissionError):
    pass


class AlreadyVerifiedError(LedgerError):
    pass


def normalize_address(address: str) -> str:
    """Addresses are opaque 32-byte identities written as 64 hex digits."""
    if not isinstance(address, str) or not _ADDRESS.match(address.strip()):
        raise ValueError(f"address must be 32-byte hex text, got {address!r}")
    address = address.strip().lower()
    return address[2:] if address.startswith("0x") else address


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SubmissionRecord:
    submission_id: int
    submitter: str
    biological_info: str
    evaluation: str
    timestamp: int
    is_verified: bool = False

    def to_dict(self) -> dict:
        return {
            "submission_id": self.submission_id,
            "submitter": self.submitter,
            "biological_info": self.biological_info,
            "evaluation": self.evaluation,
            "timestamp": self.timestamp,
            "is_verified": self.is_verified,
        }


@dataclass(frozen=True)
class DataSubmitted:
    submission_id: int
    submitter: str
    timestamp: int


@dataclass(frozen=True)
class ChainEntry:
    index: int
    prev_hash: str
    payload_hash: str
    payload: Mapping[str, Any]

    def header(self) -> dict:
        return {"index": self.index, "prev_hash": self.prev_hash, "payload_hash": self.payload_hash}

    @property
    def entry_hash(self) -> str:
        return sha256_hex(canonical_json(self.header()))

    def to_dict(self) -> dict:
        return {**self.header(), "payload": self.payload}

    def to_bytes(self) -> bytes:
        return canonical_json(self.to_dict()).encode("utf-8")


def _entry_problem(entry: ChainEntry, index: int, prev_hash: str) -> bool:
    return (
        entry.index != index
        or entry.prev_hash != prev_hash
        or entry.payload_hash != sha256_hex(canonical_json(entry.payload))
    )


def check_integrity(chain: Iterable[ChainEntry]) -> int | None:
    """Index of the first entry whose payload hash or back-link fails, or
    ``None`` when the whole chain verifies."""
    prev = GENESIS_HASH
    for i, entry in enumerate(chain):
        if _entry_problem(entry, i, prev):
            return i
        prev = entry.entry_hash
    return None


def _parse_frames(data: bytes):
    """Yield one ``ChainEntry`` per frame, or ``None`` for a frame that is
    truncated, undecodable or not in canonical form (and stop there)."""
    pos = 0
    while pos < len(data):
        if pos + _FRAME.size > len(data):
            yield None
            return
        (size,) = _FRAME.unpack_from(data, pos)
        body = data[pos + _FRAME.size : pos + _FRAME.size + size]
        pos += _FRAME.size + size
        if len(body) != size:
            yield None
            return
        try:
            doc = json.loads(body.decode("utf-8"))
            entry = ChainEntry(doc["index"], doc["prev_hash"], doc["payload_hash"], doc["payload"])
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError):
            yield None
            return
        # byte-level canonical form: any edit that leaves the JSON meaning intact still shows
        if entry.to_bytes() != body or len(doc) != 4:
            yield None
            return
        yield entry


def check_chain_bytes(data: bytes) -> int | None:
    prev = GENESIS_HASH
    for i, entry in enumerate(_parse_frames(data)):
        if entry is None or _entry_problem(entry, i, prev):
            return i
        prev = entry.entry_hash
    return None


def check_chain_file(path: str | Path) -> int | None:
    return check_chain_bytes(Path(path).read_bytes())


def read_chain_file(path: str | Path) -> list[ChainEntry]:
    entries = []
    for i, entry in enumerate(_parse_frames(Path(path).read_bytes())):
        if entry is None:
            raise LedgerError(f"{path}: undecodable frame at entry {i}")
        entries.append(entry)
    return entries


@dataclass
class _State:
    submissions: list[SubmissionRecord] = field(default_factory=list)
    verified: set[int] = field(default_factory=set)
    certificates: dict[int, list[tuple[int, SmartCertificate]]] = field(default_factory=dict)
    n_certificates: int = 0
    events: list[DataSubmitted] = field(default_factory=list)


class Ledger:
    """Single-writer ledger. Appends are serialized by a lock; readers see
    immutable entries. With ``path`` set, every entry is also appended to the
    chain file and flushed before the call returns."""

    def __init__(self, path: str | Path | None = None, clock: Callable[[], float] = time.time):
        self._entries: list[ChainEntry] = []
        self._state = _State()
        self._lock = threading.Lock()
        self._clock = clock
        self.path = Path(path) if path is not None else None
        if self.path is not None and self.path.exists():
            for entry in read_chain_file(self.path):
                self._apply(entry.payload)
                self._entries.append(entry)
            bad = check_integrity(self._entries)
            if bad is not None:
                raise LedgerError(f"{self.path}: integrity check fails at entry {bad}")

    # --- reads ----------------------------------------------------------

    @property
    def entries(self) -> tuple[ChainEntry, ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def events(self) -> tuple[DataSubmitted, ...]:
        return tuple(self._state.events)

    @property
    def submission_count(self) -> int:
        return len(self._state.submissions)

    def get_submission(self, submission_id: int) -> SubmissionRecord:
        self._require(submission_id)
        rec = self._state.submissions[submission_id]
        if submission_id in self._state.verified:
            rec = SubmissionRecord(**{**rec.to_dict(), "is_verified": True})
        return rec

    def certificates_for(self, submission_id: int) -> list[tuple[int, SmartCertificate]]:
        self._require(submission_id)
        return list(self._state.certificates.get(submission_id, []))

    def check_integrity(self) -> int | None:
        return check_integrity(self._entries)

    def export(self) -> list[dict]:
        return [e.to_dict() for e in self._entries]

    def export_json(self) -> str:
        return json.dumps(self.export(), sort_keys=True, indent=1, ensure_ascii=False)

    # --- contract operations ---------------------------------------------

    def submit_data(self, submitter: str, biological_info: str, evaluation: str, clock=None) -> int:
        submitter = normalize_address(submitter)
        if not biological_info:
            raise EmptyFieldError(MSG_EMPTY_BIO)
        if not evaluation:
            raise EmptyFieldError(MSG_EMPTY_EVAL)
        with self._lock:
            sid = len(self._state.submissions)
            self._append(
                {
                    "kind": "submission",
                    "submission_id": sid,
                    "submitter": submitter,
                    "biological_info": biological_info,
                    "evaluation": evaluation,
                    "timestamp": self._now(clock),
                }
            )
            return sid

    def verify_submission(self, caller: str, submission_id: int, clock=None) -> None:
        caller = normalize_address(caller)
        with self._lock:
            self._require(submission_id)
            if caller != self._state.submissions[submission_id].submitter:
                raise NotSubmitterError(MSG_NOT_PATIENT)
            if submission_id in self._state.verified:
                raise AlreadyVerifiedError(MSG_ALREADY)
            self._append(
                {
                    "kind": "verification",
                    "submission_id": submission_id,
                    "caller": caller,
                    "timestamp": self._now(clock),
                }
            )

    def record_certificate(self, cert: SmartCertificate, submission_id: int) -> int:
        with self._lock:
            self._require(submission_id)
            cid = self._state.n_certificates
            self._append(
                {
                    "kind": "certificate",
                    "certificate_id": cid,
                    "submission_id": submission_id,
                    "certificate": cert.to_dict(),
                }
            )
            return cid

    # --- internals --------------------------------------------------------

    def _now(self, clock) -> int:
        return int((clock or self._clock)())

    def _require(self, submission_id: int) -> None:
        if not isinstance(submission_id, int) or not 0 <= submission_id < len(self._state.submissions):
            raise SubmissionNotFound(MSG_NOT_FOUND)

    def _append(self, payload: dict) -> ChainEntry:
        # fails before mutating anything if the payload cannot be serialized
        payload_hash = sha256_hex(canonical_json(payload))
        prev = self._entries[-1].entry_hash if self._entries else GENESIS_HASH
        entry = ChainEntry(len(self._entries), prev, payload_hash, json.loads(canonical_json(payload)))
        if self.path is not None:
            body = entry.to_bytes()
            with self.path.open("ab") as fh:
                fh.write(_FRAME.pack(len(body)) + body)
                fh.flush()
        self._entries.append(entry)
        self._apply(entry.payload)
        return entry

    def _apply(self, payload: Mapping[str, Any]) -> None:
        st = self._state
        kind = payload["kind"]
        if kind == "submission":
            rec = SubmissionRecord(
                payload["submission_id"],
                payload["submitter"],
                payload["biological_info"],
                payload["evaluation"],
                payload["timestamp"],
            )
            st.submissions.append(rec)
            st.events.append(DataSubmitted(rec.submission_id, rec.submitter, rec.timestamp))
        elif kind == "verification":
            st.verified.add(payload["submission_id"])
        elif kind == "certificate":
            cert = SmartCertificate.from_dict(payload["certificate"])
            st.certificates.setdefault(payload["submission_id"], []).append((payload["certificate_id"], cert))
            st.n_certificates += 1
        else:
            raise LedgerError(f"unknown payload kind {kind!r}")


def replay_events(events: Iterable[DataSubmitted]) -> dict[int, str]:
    """Submission id -> submitter, rebuilt from the event log alone."""
    return {ev.submission_id: ev.submitter for ev in events}
