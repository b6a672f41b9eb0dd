import json

import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from adexpert.anomaly.certificate import SmartCertificate
from adexpert.ledger import (
    GENESIS_HASH,
    MSG_ALREADY,
    MSG_EMPTY_BIO,
    MSG_EMPTY_EVAL,
    MSG_NOT_FOUND,
    MSG_NOT_PATIENT,
    AlreadyVerifiedError,
    ChainEntry,
    EmptyFieldError,
    Ledger,
    LedgerError,
    NotSubmitterError,
    SubmissionNotFound,
    check_chain_bytes,
    check_chain_file,
    check_integrity,
    normalize_address,
    read_chain_file,
    replay_events,
)
from conftest import ADDR_A, ADDR_B
from ledger_ops import run_random_operations

CLOCK = lambda: 1_700_000_000  # noqa: E731


def populated(path=None, n=3):
    led = Ledger(path, clock=CLOCK)
    for i in range(n):
        led.submit_data(ADDR_A if i % 2 == 0 else ADDR_B, f"bio {i}", f"eval {i}")
    return led


def test_first_submission():
    led = Ledger(clock=CLOCK)
    assert led.submit_data(ADDR_A, "bio", "eval") == 0
    assert led.events[0].submission_id == 0 and led.events[0].submitter == ADDR_A
    rec = led.get_submission(0)
    assert (rec.biological_info, rec.evaluation, rec.timestamp, rec.is_verified) == ("bio", "eval", 1_700_000_000, False)
    assert led.entries[0].prev_hash == GENESIS_HASH


def test_two_submissions_same_submitter():
    led = Ledger(clock=CLOCK)
    assert [led.submit_data(ADDR_A, "b", "e"), led.submit_data(ADDR_A, "b2", "e2")] == [0, 1]
    assert led.get_submission(1).biological_info == "b2"


def test_contract_failures_leave_ledger_unchanged():
    led = populated()
    led.verify_submission(ADDR_A, 0)
    snapshot = led.export_json()
    with pytest.raises(EmptyFieldError, match=MSG_EMPTY_BIO):
        led.submit_data(ADDR_A, "", "e")
    with pytest.raises(EmptyFieldError, match=MSG_EMPTY_EVAL):
        led.submit_data(ADDR_A, "b", "")
    with pytest.raises(SubmissionNotFound, match=MSG_NOT_FOUND):
        led.verify_submission(ADDR_A, 99)
    with pytest.raises(NotSubmitterError, match=MSG_NOT_PATIENT):
        led.verify_submission(ADDR_B, 2)
    with pytest.raises(AlreadyVerifiedError, match=MSG_ALREADY):
        led.verify_submission(ADDR_A, 0)
    with pytest.raises(SubmissionNotFound):
        led.record_certificate(SmartCertificate("none", 1), 999)
    assert led.export_json() == snapshot


def test_verification_flow():
    led = populated()
    led.verify_submission(ADDR_B, 1)
    assert led.get_submission(1).is_verified
    assert not led.get_submission(0).is_verified
    assert led.entries[-1].payload["kind"] == "verification"


def test_certificates_in_order():
    led = populated(n=1)
    c1 = SmartCertificate("none", 10, {"score": 0.2}, "initial")
    c2 = SmartCertificate("incorrect_data", 11, {"score": -0.5}, "re-scan")
    assert led.record_certificate(c1, 0) == 0
    assert led.record_certificate(c2, 0) == 1
    assert [c for _, c in led.certificates_for(0)] == [c1, c2]


def test_addresses():
    assert normalize_address("0x" + "AB" * 32) == ADDR_A
    for bad in ("ab" * 31, "zz" * 32, "", None):
        with pytest.raises(ValueError):
            normalize_address(bad)
    led = Ledger(clock=CLOCK)
    led.submit_data("0X" + "AB" * 32, "b", "e")
    led.verify_submission(ADDR_A, 0)


def test_integrity_examples():
    led = populated(n=5)
    entries = list(led.entries)
    assert check_integrity(entries) is None
    tampered = list(entries)
    p = dict(tampered[3].payload)
    p["biological_info"] = p["biological_info"] + "!"
    tampered[3] = ChainEntry(3, entries[3].prev_hash, entries[3].payload_hash, p)
    assert check_integrity(tampered) == 3
    swapped = list(entries)
    swapped[2], swapped[3] = swapped[3], swapped[2]
    assert check_integrity(swapped) == 2


def frame_spans(data: bytes):
    spans, pos = [], 0
    while pos < len(data):
        size = int.from_bytes(data[pos : pos + 4], "big")
        spans.append((pos, pos + 4 + size))
        pos += 4 + size
    return spans


def test_every_single_byte_tamper_is_localized(tmp_path):
    path = tmp_path / "chain.bin"
    led = populated(path, n=3)
    led.verify_submission(ADDR_A, 0)
    led.record_certificate(SmartCertificate("bad_image", 5, {"mse": 0.02}), 1)
    data = path.read_bytes()
    assert check_chain_bytes(data) is None
    spans = frame_spans(data)
    for pos in range(len(data)):
        frame = next(i for i, (a, b) in enumerate(spans) if a <= pos < b)
        for delta in (0x01, 0xFF):
            buf = bytearray(data)
            buf[pos] ^= delta
            assert check_chain_bytes(bytes(buf)) == frame, (pos, delta)


def test_truncation_detected(tmp_path):
    path = tmp_path / "chain.bin"
    populated(path, n=2)
    data = path.read_bytes()
    assert check_chain_bytes(data[:-1]) == 1
    assert check_chain_bytes(data[:3]) == 0


def test_file_persistence_and_reload(tmp_path):
    path = tmp_path / "chain.bin"
    led = populated(path, n=3)
    led.verify_submission(ADDR_B, 1)
    led.record_certificate(SmartCertificate("none", 9), 2)
    again = Ledger(path, clock=CLOCK)
    assert again.export() == led.export()
    assert again.get_submission(1).is_verified
    assert check_chain_file(path) is None
    assert [e.to_dict() for e in read_chain_file(path)] == led.export()
    with pytest.raises(AlreadyVerifiedError):
        again.verify_submission(ADDR_B, 1)
    # appends continue the same file
    again.submit_data(ADDR_A, "b", "e")
    assert len(Ledger(path)) == len(led) + 1


def test_tampered_file_refused_on_load(tmp_path):
    path = tmp_path / "chain.bin"
    populated(path, n=2)
    data = bytearray(path.read_bytes())
    data[-5] ^= 0x01
    path.write_bytes(bytes(data))
    with pytest.raises(LedgerError):
        Ledger(path)


def test_pinned_file_bytes(tmp_path):
    path = tmp_path / "chain.bin"
    Ledger(path, clock=CLOCK).submit_data(ADDR_A, "bio", "eval")
    data = path.read_bytes()
    assert len(data) == 372
    assert data[:14] == bytes.fromhex("00000170" "7b22696e646578223a30")
    body = json.loads(data[4:])
    assert list(body) == ["index", "payload", "payload_hash", "prev_hash"]


def test_export_json_is_full_chain():
    led = populated(n=2)
    doc = json.loads(led.export_json())
    assert [e["index"] for e in doc] == [0, 1]
    assert doc[1]["prev_hash"] == led.entries[0].entry_hash


def test_random_workload_1000_ops():
    outcomes = run_random_operations(Ledger(clock=CLOCK), 1000, seed=7)
    for key in ("submit", "verify", "certify", "rejected_empty", "rejected_missing", "rejected_caller", "rejected_repeat"):
        assert outcomes.get(key, 0) > 0, key


class LedgerMachine(RuleBasedStateMachine):
    def __init__(self):
        super().__init__()
        self.ledger = Ledger(clock=CLOCK)
        self.owners: list[str] = []
        self.verified: set[int] = set()
        self.length = 0

    @rule(who=st.sampled_from([ADDR_A, ADDR_B]), bio=st.text(max_size=5), ev=st.text(max_size=5))
    def submit(self, who, bio, ev):
        if bio and ev:
            assert self.ledger.submit_data(who, bio, ev) == len(self.owners)
            self.owners.append(who)
            self.length += 1
        else:
            with pytest.raises(EmptyFieldError):
                self.ledger.submit_data(who, bio, ev)

    @precondition(lambda self: self.owners)
    @rule(data=st.data(), who=st.sampled_from([ADDR_A, ADDR_B]))
    def verify(self, data, who):
        sid = data.draw(st.integers(0, len(self.owners)))
        if sid >= len(self.owners):
            with pytest.raises(SubmissionNotFound):
                self.ledger.verify_submission(who, sid)
        elif self.owners[sid] != who:
            with pytest.raises(NotSubmitterError):
                self.ledger.verify_submission(who, sid)
        elif sid in self.verified:
            with pytest.raises(AlreadyVerifiedError):
                self.ledger.verify_submission(who, sid)
        else:
            self.ledger.verify_submission(who, sid)
            self.verified.add(sid)
            self.length += 1

    @invariant()
    def chain_is_consistent(self):
        assert len(self.ledger) == self.length
        assert self.ledger.check_integrity() is None
        assert replay_events(self.ledger.events) == dict(enumerate(self.owners))
        for sid in range(len(self.owners)):
            assert self.ledger.get_submission(sid).is_verified == (sid in self.verified)


TestLedgerMachine = LedgerMachine.TestCase
TestLedgerMachine.settings = settings(max_examples=30, stateful_step_count=30, deadline=None)
