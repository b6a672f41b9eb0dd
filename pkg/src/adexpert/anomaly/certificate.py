"""Smart certificates: the off-chain gate's verdict in a canonical,
hashable form."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping


class AnomalyType(str, Enum):
    INCORRECT_DATA = "incorrect_data"
    BAD_IMAGE = "bad_image"
    NONE = "none"


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


@dataclass(frozen=True)
class SmartCertificate:
    anomaly_type: AnomalyType
    timestamp: int
    metadata: Mapping[str, Any] = field(default_factory=dict)
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "anomaly_type", AnomalyType(self.anomaly_type))
        if int(self.timestamp) <= 0:
            raise ValueError("certificate timestamp must be positive")
        object.__setattr__(self, "timestamp", int(self.timestamp))
        object.__setattr__(self, "metadata", dict(self.metadata))
        md = self.metadata
        if (
            self.anomaly_type is AnomalyType.NONE
            and md.get("comparison") == "score<threshold"
            and md["score"] < md["threshold"]
        ):
            raise ValueError("a clean certificate must record score >= threshold")

    def to_dict(self) -> dict:
        return {
            "anomaly_type": self.anomaly_type.value,
            "timestamp": self.timestamp,
            "metadata": dict(self.metadata),
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SmartCertificate":
        return cls(doc["anomaly_type"], doc["timestamp"], doc.get("metadata", {}), doc.get("notes", ""))

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SmartCertificate":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def certify(result, clock: Callable[[], float] = time.time, notes: str = "") -> SmartCertificate:
    """Certificate for an ``AnomalyReport`` (tabular) or ``ImageCheck``."""
    # local imports: tabular/image import this module
    from adexpert.anomaly.image import ImageCheck
    from adexpert.anomaly.tabular import AnomalyReport

    if isinstance(result, AnomalyReport):
        kind = AnomalyType.INCORRECT_DATA if result.flagged else AnomalyType.NONE
        metadata = {
            "detector": "isolation_forest",
            "comparison": "score<threshold",
            "score": float(result.score),
            "threshold": float(result.threshold),
            "sample_index": int(result.sample_index),
        }
        default_note = (
            f"decision value {result.score:.6f} below threshold {result.threshold}"
            if result.flagged
            else "no anomaly detected in tabular data"
        )
    elif isinstance(result, ImageCheck):
        kind = AnomalyType.BAD_IMAGE if result.flagged else AnomalyType.NONE
        metadata = {
            "detector": "reconstruction_mse",
            "comparison": "mse>threshold",
            "mse": float(result.mse),
            "threshold": float(result.threshold),
        }
        default_note = (
            f"reconstruction MSE {result.mse:.6g} above threshold {result.threshold}"
            if result.flagged
            else "no anomaly detected in image"
        )
    else:
        raise TypeError(f"cannot certify {type(result).__name__}")
    return SmartCertificate(kind, int(clock()), metadata, notes or default_note)
