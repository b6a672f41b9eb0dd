"""Randomized ledger workload shared by the unit and acceptance suites."""

import numpy as np

from adexpert.anomaly.certificate import SmartCertificate
from adexpert.ledger import (
    AlreadyVerifiedError,
    EmptyFieldError,
    Ledger,
    NotSubmitterError,
    SubmissionNotFound,
    check_integrity,
    replay_events,
)

ADDRESSES = [f"{i:02x}" * 32 for i in (1, 2, 3, 4)]


def run_random_operations(ledger: Ledger, n_ops: int, seed: int) -> dict:
    """Apply ``n_ops`` random legal and illegal calls, checking after each
    that the chain only grew, earlier entries are untouched, verification
    happened at most once per id and only by the submitter, and the chain
    verifies. Returns counts of each outcome."""
    rng = np.random.default_rng(seed)
    owners: dict[int, str] = {}
    verified: set[int] = set()
    outcomes: dict[str, int] = {}
    for step in range(n_ops):
        before = ledger.entries
        op = rng.choice(["submit", "submit_empty", "verify", "certify", "verify_missing"], p=[0.35, 0.1, 0.3, 0.15, 0.1])
        who = ADDRESSES[rng.integers(len(ADDRESSES))]
        expect_growth = 0
        try:
            if op == "submit":
                sid = ledger.submit_data(who, f"bio-{step}", f"eval-{step}")
                assert sid == len(owners)
                owners[sid] = who
                expect_growth = 1
            elif op == "submit_empty":
                if rng.random() < 0.5:
                    ledger.submit_data(who, "", "eval")
                else:
                    ledger.submit_data(who, "bio", "")
                raise AssertionError("empty field accepted")
            elif op == "certify":
                sid = int(rng.integers(0, len(owners) + 2))
                ledger.record_certificate(SmartCertificate("none", 1 + step), sid)
                assert sid in owners
                expect_growth = 1
            else:
                sid = int(rng.integers(0, len(owners) + 1)) if op == "verify" else len(owners) + int(rng.integers(0, 5))
                if op == "verify" and sid in owners and rng.random() < 0.6:
                    who = owners[sid]
                ledger.verify_submission(who, sid)
                assert sid in owners and owners[sid] == who and sid not in verified
                verified.add(sid)
                expect_growth = 1
            key = op
        except EmptyFieldError:
            assert op == "submit_empty"
            key = "rejected_empty"
        except SubmissionNotFound:
            assert sid not in owners
            key = "rejected_missing"
        except NotSubmitterError:
            assert owners[sid] != who
            key = "rejected_caller"
        except AlreadyVerifiedError:
            assert sid in verified
            key = "rejected_repeat"
        outcomes[key] = outcomes.get(key, 0) + 1
        after = ledger.entries
        assert len(after) == len(before) + expect_growth
        assert after[: len(before)] == before
        if step % 100 == 0:
            assert check_integrity(after) is None
    # every earlier state is a prefix of the final chain, and a chain verifies
    # only if each of its prefixes does, so one final check covers all steps
    assert check_integrity(ledger.entries) is None
    for sid, who in owners.items():
        rec = ledger.get_submission(sid)
        assert rec.submitter == who and rec.is_verified == (sid in verified)
    assert replay_events(ledger.events) == owners
    return outcomes
