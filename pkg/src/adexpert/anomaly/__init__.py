"""Off-chain anomaly gates (tabular isolation forest, image reconstruction)
and the certificates they emit."""

from adexpert.anomaly.certificate import AnomalyType, SmartCertificate, canonical_json, certify
from adexpert.anomaly.iforest import (
    IsolationForestModel,
    IsolationForestParams,
    anomaly_scores,
    c_factor,
    fit_isolation_forest,
)
from adexpert.anomaly.image import ImageCheck, ImageGateModel, fit_image_gate, image_anomaly
from adexpert.anomaly.tabular import (
    AnomalyReport,
    GateConfig,
    TabularGate,
    detect_tabular,
    fit_tabular_gate,
)

__all__ = [
    "AnomalyReport",
    "AnomalyType",
    "GateConfig",
    "ImageCheck",
    "ImageGateModel",
    "IsolationForestModel",
    "IsolationForestParams",
    "SmartCertificate",
    "TabularGate",
    "anomaly_scores",
    "c_factor",
    "canonical_json",
    "certify",
    "detect_tabular",
    "fit_image_gate",
    "fit_isolation_forest",
    "fit_tabular_gate",
    "image_anomaly",
]
