"""HTTP API: accept submissions, gate them off-chain, record the submission
and its certificate on the ledger, and serve forest predictions.

Identity is a stub: the submitter address travels in the request body (or a
``Authorization: Bearer <address>`` header) and is trusted as given.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np
from fastapi import FastAPI, Header, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, field_validator

from adexpert.anomaly.certificate import AnomalyType, SmartCertificate, canonical_json, certify
from adexpert.anomaly.iforest import IsolationForestParams
from adexpert.anomaly.image import ImageGateModel, fit_image_gate, image_anomaly, load_corpus
from adexpert.anomaly.tabular import GateConfig, TabularGate, fit_tabular_gate
from adexpert.datamodel import (
    ADNI_COUNTS,
    N_CLASSES,
    DataError,
    Dataset,
    Label,
    SyntheticSpec,
    generate_synthetic,
    load_dataset_csv,
    split_indices,
)
from adexpert.graphfeat import ConnectivityMatrix, matrix_to_feature_row
from adexpert.ledger import (
    AlreadyVerifiedError,
    EmptyFieldError,
    Ledger,
    NotSubmitterError,
    SubmissionNotFound,
    normalize_address,
)
from adexpert.mlcore.forest import ForestParams, RandomForestModel, fit_random_forest
from adexpert.mlcore.metrics import Metrics, evaluate

ENV_PORT = "ADEXPERT_PORT"
ENV_CONFIG = "ADEXPERT_CONFIG"


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    ledger_path: str | None = None  # None keeps the chain in memory
    model_dir: str | None = None  # each deployed forest is written here as JSON
    seed: int = 0
    seed_corpus: str | None = None  # dataset CSV; None uses ``synthetic``
    synthetic: dict = field(
        default_factory=lambda: {
            "class_counts": {lab.name: n for lab, n in ADNI_COUNTS.items()},
            "n_features": 90,
            "n_informative": 6,
            "class_separation": 2.5,
            "seed": 42,
        }
    )
    n_trees: int = 100
    holdout_fraction: float = 0.25
    min_train_samples: int = 20
    tabular_threshold: float = 0.0
    contamination: float = 0.05
    image_components: int = 3
    mse_threshold: float = 0.01
    max_matrix_size: int = 256
    max_image_size: int = 256
    tau: float = 0.3

    @classmethod
    def from_dict(cls, doc: dict) -> "ServiceConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise DataError(f"unknown service config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path: str | Path | None = None, environ: dict | None = None) -> "ServiceConfig":
        """Read the JSON config at ``path`` (or ``$ADEXPERT_CONFIG``), then
        apply ``$ADEXPERT_PORT``."""
        env = os.environ if environ is None else environ
        path = path or env.get(ENV_CONFIG)
        cfg = cls()
        if path:
            cfg = cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        if env.get(ENV_PORT):
            cfg = replace(cfg, port=int(env[ENV_PORT]))
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Deployment:
    """Everything a request needs from the current model, swapped as one
    reference so a request never sees parts of two versions."""

    version: int
    feature_names: tuple[str, ...]
    model: RandomForestModel
    gate: TabularGate
    metrics: Metrics
    n_train: int


# --- wire schema ----------------------------------------------------------


class SubmissionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    submitter: str | None = None
    biological_features: dict[str, float] | None = None
    connectivity_matrix: list[list[float]] | None = None
    image: list[list[float]] | None = None
    label: str | None = None  # optional outcome, used only for retraining

    @field_validator("label")
    @classmethod
    def _label(cls, v):
        if v is not None:
            Label.parse(v)
        return v


class VerifyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    caller: str | None = None


class RetrainRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int | None = None
    n_trees: int | None = None


def _bearer(authorization: str | None) -> str | None:
    if authorization and authorization.lower().startswith("bearer "):
        return authorization[7:].strip()
    return None


class BadRequest(Exception):
    pass


class FeatureMismatch(Exception):
    pass


class InsufficientData(Exception):
    pass


# --- service core ----------------------------------------------------------


class ExpertService:
    """Transport-independent service logic; ``create_app`` wraps it in HTTP."""

    def __init__(self, config: ServiceConfig | None = None, clock: Callable[[], float] = time.time):
        self.config = config or ServiceConfig()
        self.clock = clock
        self.ledger = Ledger(self.config.ledger_path, clock=clock)
        self._swap_lock = threading.Lock()
        self._retrain_lock = threading.Lock()
        self.deployment: Deployment | None = None
        self.seed_data = self._load_seed_corpus()
        self.image_gate: ImageGateModel | None = None
        train_images = load_corpus("train")
        if len(train_images) >= 2:
            self.image_gate = fit_image_gate(train_images, self.config.image_components, self.config.mse_threshold)
        if self.seed_data is not None:
            self._deploy(self.seed_data, self.config.seed, self.config.n_trees)

    def _load_seed_corpus(self) -> Dataset | None:
        cfg = self.config
        if cfg.seed_corpus:
            return load_dataset_csv(cfg.seed_corpus)
        if cfg.synthetic:
            return generate_synthetic(SyntheticSpec.from_dict(cfg.synthetic))
        return None

    # -- model lifecycle

    def _fit(self, ds: Dataset, seed: int, n_trees: int, version: int) -> Deployment:
        if ds.n_samples < self.config.min_train_samples:
            raise InsufficientData(
                f"{ds.n_samples} training samples, at least {self.config.min_train_samples} required"
            )
        try:
            tr, ho = split_indices(ds.labels, self.config.holdout_fraction, seed, stratified=True)
        except DataError as exc:
            raise InsufficientData(str(exc)) from None
        train, hold = ds.subset(tr), ds.subset(ho)
        model = fit_random_forest(
            train.features, train.labels, ForestParams(n_trees=n_trees, seed=seed), n_classes=N_CLASSES
        )
        metrics = evaluate(model.vote_fractions(hold.features).argmax(axis=1), hold.labels, N_CLASSES)
        gate = fit_tabular_gate(
            ds,
            GateConfig(
                threshold=self.config.tabular_threshold,
                forest=IsolationForestParams(contamination=self.config.contamination, seed=seed),
            ),
        )
        return Deployment(version, ds.feature_names, model, gate, metrics, train.n_samples)

    def _deploy(self, ds: Dataset, seed: int, n_trees: int) -> Deployment:
        with self._retrain_lock:
            version = (self.deployment.version if self.deployment else 0) + 1
            dep = self._fit(ds, seed, n_trees, version)
            if self.config.model_dir:
                out = Path(self.config.model_dir)
                out.mkdir(parents=True, exist_ok=True)
                (out / f"model_v{version}.json").write_text(dep.model.to_json(), encoding="utf-8")
            with self._swap_lock:
                self.deployment = dep
            return dep

    def training_data(self) -> Dataset:
        """Seed corpus plus every accepted submission that carries a label."""
        if self.seed_data is None:
            raise InsufficientData("no seed corpus configured")
        rows, labels = [], []
        names = self.seed_data.feature_names
        for sid in range(self.ledger.submission_count):
            certs = self.ledger.certificates_for(sid)
            if not certs or certs[-1][1].anomaly_type is not AnomalyType.NONE:
                continue
            info = json.loads(self.ledger.get_submission(sid).biological_info)
            if info.get("label") is None or tuple(info["features"]) != names:
                continue
            rows.append([info["features"][n] for n in names])
            labels.append(int(Label.parse(info["label"])))
        if not rows:
            return self.seed_data
        return self.seed_data.concat(Dataset(np.array(rows), np.array(labels), names))

    def retrain(self, seed: int | None = None, n_trees: int | None = None) -> Deployment:
        return self._deploy(
            self.training_data(),
            self.config.seed if seed is None else seed,
            self.config.n_trees if n_trees is None else n_trees,
        )

    # -- request handling

    def _feature_row(self, req: SubmissionRequest, dep: Deployment) -> dict[str, float]:
        named: dict[str, float] = {}
        if req.biological_features:
            named.update(req.biological_features)
        if req.connectivity_matrix is not None:
            m = req.connectivity_matrix
            if len(m) > self.config.max_matrix_size:
                raise BadRequest(f"connectivity matrix larger than {self.config.max_matrix_size} ROIs")
            if any(len(r) != len(m) for r in m):
                raise BadRequest("connectivity matrix must be square")
            try:
                row, names = matrix_to_feature_row(ConnectivityMatrix(np.array(m, dtype=float)), self.config.tau)
            except DataError as exc:
                raise BadRequest(str(exc)) from None
            clash = set(names) & set(named)
            if clash:
                raise BadRequest(f"feature names supplied twice: {sorted(clash)}")
            named.update(zip(names, (float(v) for v in row)))
        if len(named) != len(dep.feature_names) or set(named) != set(dep.feature_names):
            missing = sorted(set(dep.feature_names) - set(named))[:5]
            extra = sorted(set(named) - set(dep.feature_names))[:5]
            raise FeatureMismatch(
                f"deployed model expects {len(dep.feature_names)} features, got {len(named)}"
                + (f"; missing e.g. {missing}" if missing else "")
                + (f"; unknown e.g. {extra}" if extra else "")
            )
        return {n: float(named[n]) for n in dep.feature_names}

    def submit(self, req: SubmissionRequest, authorization: str | None = None) -> dict:
        dep = self.deployment
        if dep is None:
            raise LookupError("no model loaded")
        submitter = req.submitter or _bearer(authorization)
        if not submitter:
            raise BadRequest("submitter address required")
        try:
            submitter = normalize_address(submitter)
        except ValueError as exc:
            raise BadRequest(str(exc)) from None
        if not req.biological_features and req.connectivity_matrix is None:
            raise BadRequest("biological_features or connectivity_matrix required")
        features = self._feature_row(req, dep)
        x = np.array([list(features.values())])
        if not np.all(np.isfinite(x)):
            raise BadRequest("feature values must be finite")

        report = dep.gate.reports(x)[0]
        cert = certify(report, clock=self.clock)
        if req.image is not None:
            cert = self._with_image(cert, req.image)
        anomalous = cert.anomaly_type is not AnomalyType.NONE

        info = canonical_json({"features": features, "label": req.label})
        evaluation = canonical_json({"status": "rejected_anomalous" if anomalous else "accepted"})
        sid = self.ledger.submit_data(submitter, info, evaluation)
        self.ledger.record_certificate(cert, sid)

        out: dict[str, Any] = {
            "submission_id": sid,
            "status": "rejected_anomalous" if anomalous else "accepted",
            "certificate": cert.to_dict(),
            "model_version": dep.version,
            "prediction": None,
        }
        if not anomalous:
            fractions = dep.model.vote_fractions(x)[0]
            out["prediction"] = {
                "label": Label(int(np.argmax(fractions))).name,
                "vote_fractions": {Label(i).name: float(f) for i, f in enumerate(fractions)},
            }
        return out

    def _with_image(self, cert: SmartCertificate, image) -> SmartCertificate:
        if self.image_gate is None:
            raise LookupError("no image gate loaded")
        if len(image) > self.config.max_image_size or any(len(r) > self.config.max_image_size for r in image):
            raise BadRequest(f"image larger than {self.config.max_image_size} pixels per side")
        if len({len(r) for r in image}) > 1:
            raise BadRequest("image rows must have equal length")
        img = np.array(image, dtype=float)
        if img.shape != self.image_gate.input_size:
            raise FeatureMismatch(f"image gate expects {self.image_gate.input_size} pixels, got {img.shape}")
        try:
            check = image_anomaly(self.image_gate, img)
        except DataError as exc:
            raise BadRequest(str(exc)) from None
        img_cert = certify(check, clock=self.clock)
        checks = [dict(cert.metadata), dict(img_cert.metadata)]
        # tabular verdict takes precedence; both checks stay in the metadata
        primary = cert if cert.anomaly_type is not AnomalyType.NONE or img_cert.anomaly_type is AnomalyType.NONE else img_cert
        notes = cert.notes if primary is cert else img_cert.notes
        return SmartCertificate(primary.anomaly_type, primary.timestamp, {**primary.metadata, "checks": checks}, notes)

    def record(self, submission_id: int) -> dict:
        rec = self.ledger.get_submission(submission_id)
        return {
            **rec.to_dict(),
            "certificates": [
                {"certificate_id": cid, **cert.to_dict()} for cid, cert in self.ledger.certificates_for(submission_id)
            ],
        }

    def integrity(self) -> dict:
        bad = self.ledger.check_integrity()
        return {"ok": bad is None, "first_bad_index": bad, "length": len(self.ledger)}


def create_app(config: ServiceConfig | None = None, service: ExpertService | None = None) -> FastAPI:
    svc = service or ExpertService(config)
    app = FastAPI(title="adexpert", version="0.1.0")
    app.state.service = svc

    @app.exception_handler(RequestValidationError)
    async def _schema_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": jsonable_errors(exc)})

    @app.post("/submissions")
    def post_submission(req: SubmissionRequest, authorization: str | None = Header(default=None)):
        try:
            return svc.submit(req, authorization)
        except BadRequest as exc:
            raise HTTPException(400, str(exc))
        except FeatureMismatch as exc:
            raise HTTPException(422, str(exc))
        except LookupError as exc:
            raise HTTPException(503, str(exc))
        except EmptyFieldError as exc:
            raise HTTPException(400, str(exc))

    @app.post("/submissions/{submission_id}/verify")
    def verify(submission_id: int, req: VerifyRequest | None = None, authorization: str | None = Header(default=None)):
        caller = (req.caller if req else None) or _bearer(authorization)
        if not caller:
            raise HTTPException(400, "caller address required")
        try:
            svc.ledger.verify_submission(caller, submission_id)
        except SubmissionNotFound as exc:
            raise HTTPException(404, str(exc))
        except NotSubmitterError as exc:
            raise HTTPException(403, str(exc))
        except AlreadyVerifiedError as exc:
            raise HTTPException(409, str(exc))
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        return {"submission_id": submission_id, "is_verified": True}

    @app.get("/submissions/{submission_id}")
    def get_submission(submission_id: int):
        try:
            return svc.record(submission_id)
        except SubmissionNotFound as exc:
            raise HTTPException(404, str(exc))

    @app.post("/admin/retrain")
    def retrain(req: RetrainRequest | None = None):
        req = req or RetrainRequest()
        try:
            dep = svc.retrain(req.seed, req.n_trees)
        except InsufficientData as exc:
            raise HTTPException(409, str(exc))
        return {"model_version": dep.version, "n_train": dep.n_train, "metrics": dep.metrics.to_dict()}

    @app.get("/ledger/integrity")
    def integrity():
        return svc.integrity()

    @app.get("/model")
    def model_info():
        dep = svc.deployment
        if dep is None:
            raise HTTPException(503, "no model loaded")
        return {
            "model_version": dep.version,
            "feature_names": list(dep.feature_names),
            "n_train": dep.n_train,
            "metrics": dep.metrics.to_dict(),
        }

    return app


def jsonable_errors(exc: RequestValidationError) -> list[dict]:
    return [{"loc": list(e.get("loc", ())), "msg": str(e.get("msg", ""))} for e in exc.errors()]


def serve(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
