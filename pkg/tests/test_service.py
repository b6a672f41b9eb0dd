import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from adexpert.anomaly.image import load_corpus, salt_and_pepper
from adexpert.datamodel import Dataset, write_dataset_csv
from adexpert.graphfeat import ConnectivityMatrix, matrix_to_feature_row
from adexpert.ledger import ChainEntry
from adexpert.mlcore.forest import RandomForestModel
from adexpert.service import ExpertService, ServiceConfig, create_app
from conftest import ADDR_A, ADDR_B
from service_helpers import check_swap, feature_dict, outlier_row, run_swap_race, small_config, submit

CLOCK = lambda: 1_700_000_000  # noqa: E731


@pytest.fixture
def service():
    return ExpertService(small_config(), clock=CLOCK)


@pytest.fixture
def client(service):
    with TestClient(create_app(service=service)) as c:
        yield c


def test_clean_submission(client, service):
    before = len(service.ledger)
    r = submit(client, service, service.seed_data.features[0])
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "accepted"
    assert body["certificate"]["anomaly_type"] == "none"
    assert body["prediction"]["label"] in ("CN", "SMC", "MCI")
    assert sum(body["prediction"]["vote_fractions"].values()) == pytest.approx(1.0)
    assert body["model_version"] == 1
    assert len(service.ledger) == before + 2


def test_outlier_submission_recorded_but_rejected(client, service):
    before = len(service.ledger)
    r = submit(client, service, outlier_row(service))
    body = r.json()
    assert r.status_code == 200
    assert body["status"] == "rejected_anomalous"
    assert body["certificate"]["anomaly_type"] == "incorrect_data"
    assert body["certificate"]["metadata"]["score"] < body["certificate"]["metadata"]["threshold"]
    assert body["prediction"] is None
    assert len(service.ledger) == before + 2


def test_bad_image_rejected(client, service):
    img = salt_and_pepper(load_corpus("heldout")[0], 0.1, seed=0)
    r = submit(client, service, service.seed_data.features[1], image=img.tolist())
    body = r.json()
    assert body["status"] == "rejected_anomalous"
    assert body["certificate"]["anomaly_type"] == "bad_image"
    assert [c["detector"] for c in body["certificate"]["metadata"]["checks"]] == ["isolation_forest", "reconstruction_mse"]
    clean = submit(client, service, service.seed_data.features[1], image=load_corpus("heldout")[0].tolist())
    assert clean.json()["status"] == "accepted"


def test_schema_errors_are_400(client, service):
    assert client.post("/submissions", json={"submitter": ADDR_A}).status_code == 400
    assert client.post("/submissions", json={"submitter": ADDR_A, "biological_features": "x"}).status_code == 400
    assert client.post("/submissions", json={"submitter": ADDR_A, "bogus": 1}).status_code == 400
    row = feature_dict(service, service.seed_data.features[0])
    assert client.post("/submissions", json={"submitter": "nobody", "biological_features": row}).status_code == 400
    assert client.post("/submissions", json={"biological_features": row}).status_code == 400
    assert client.post("/submissions", json={"submitter": ADDR_A, "biological_features": row, "label": "AD"}).status_code == 400
    big = np.eye(300).tolist()
    assert client.post("/submissions", json={"submitter": ADDR_A, "connectivity_matrix": big}).status_code == 400
    assert len(service.ledger) == 0


def test_bearer_identity(client, service):
    row = feature_dict(service, service.seed_data.features[0])
    r = client.post("/submissions", json={"biological_features": row}, headers={"Authorization": f"Bearer {ADDR_B}"})
    assert r.status_code == 200
    assert client.get(f"/submissions/{r.json()['submission_id']}").json()["submitter"] == ADDR_B


def test_feature_count_mismatch_is_422(client, service):
    row = feature_dict(service, service.seed_data.features[0])
    row.pop(next(iter(row)))
    assert client.post("/submissions", json={"submitter": ADDR_A, "biological_features": row}).status_code == 422
    row["other"] = 1.0
    assert client.post("/submissions", json={"submitter": ADDR_A, "biological_features": row}).status_code == 422
    assert len(service.ledger) == 0


def test_no_model_is_503():
    svc = ExpertService(ServiceConfig(synthetic={}), clock=CLOCK)
    with TestClient(create_app(service=svc)) as c:
        r = c.post("/submissions", json={"submitter": ADDR_A, "biological_features": {"a": 1.0}})
        assert r.status_code == 503
        assert c.post("/admin/retrain").status_code == 409


def test_verify_error_mapping(client, service):
    sid = submit(client, service, service.seed_data.features[0]).json()["submission_id"]
    assert client.post(f"/submissions/{sid + 5}/verify", json={"caller": ADDR_A}).status_code == 404
    assert client.post(f"/submissions/{sid}/verify", json={"caller": ADDR_B}).status_code == 403
    assert client.post(f"/submissions/{sid}/verify", json={"caller": ADDR_A}).status_code == 200
    r = client.post(f"/submissions/{sid}/verify", json={"caller": ADDR_A})
    assert r.status_code == 409
    assert r.json()["detail"] == "Submission is already verified."
    assert client.get(f"/submissions/{sid}").json()["is_verified"] is True


def test_read_back(client, service):
    sid = submit(client, service, service.seed_data.features[0], label="SMC").json()["submission_id"]
    rec = client.get(f"/submissions/{sid}").json()
    assert rec["submission_id"] == sid and rec["is_verified"] is False
    assert len(rec["certificates"]) == 1
    assert json.loads(rec["biological_info"])["label"] == "SMC"
    assert client.get("/submissions/42").status_code == 404


def test_integrity_endpoint_and_idempotent_reads(client, service):
    for i in range(5):
        submit(client, service, service.seed_data.features[i])
    assert client.get("/ledger/integrity").json() == {"ok": True, "first_bad_index": None, "length": 10}
    for _ in range(3):
        client.get("/submissions/0")
        client.get("/ledger/integrity")
    assert client.get("/ledger/integrity").json()["ok"] is True
    entries = service.ledger._entries
    e = entries[3]
    entries[3] = ChainEntry(e.index, e.prev_hash, e.payload_hash, {**e.payload, "notes": "edited"})
    assert client.get("/ledger/integrity").json()["first_bad_index"] == 3
    entries[3] = e
    entries[2], entries[3] = entries[3], entries[2]
    assert client.get("/ledger/integrity").json()["first_bad_index"] == 2


def test_retrain_without_submissions_reproduces_seed_model(client, service):
    seed_model = service.deployment.model.to_json()
    r = client.post("/admin/retrain")
    assert r.status_code == 200
    assert r.json()["model_version"] == 2
    assert service.deployment.model.to_json() == seed_model


def test_retrain_counts_only_accepted_labeled_submissions(client, service):
    ds = service.seed_data
    accepted = 0
    for i in range(ds.n_samples):
        r = submit(client, service, ds.features[i] + 0.01, label=["CN", "SMC", "MCI"][int(ds.labels[i])])
        if r.json()["status"] == "accepted":
            accepted += 1
        if accepted == 50:
            break
    assert submit(client, service, outlier_row(service), label="MCI").json()["status"] == "rejected_anomalous"
    submit(client, service, ds.features[0])  # unlabeled
    assert service.training_data().n_samples == ds.n_samples + 50
    r = client.post("/admin/retrain")
    assert r.json()["model_version"] == 2
    assert 0.0 <= r.json()["metrics"]["accuracy"] <= 1.0
    info = client.get("/model").json()
    assert info["model_version"] == 2
    assert info["feature_names"] == list(ds.feature_names)
    assert info["metrics"] == r.json()["metrics"]


def test_connectivity_matrix_submission(tmp_path):
    rng = np.random.default_rng(0)
    rows, labels = [], []
    for i in range(60):
        A = rng.uniform(-1, 1, (5, 5))
        W = (A + A.T) / 2
        np.fill_diagonal(W, 1.0)
        rows.append(matrix_to_feature_row(ConnectivityMatrix(W), 0.3)[0])
        labels.append(i % 3)
    path = tmp_path / "seed.csv"
    write_dataset_csv(Dataset(np.array(rows), labels, [f"roi_{j}" for j in range(5)]), path)
    svc = ExpertService(ServiceConfig(seed_corpus=str(path), n_trees=10), clock=CLOCK)
    with TestClient(create_app(service=svc)) as c:
        W = np.eye(5)
        W[0, 1] = W[1, 0] = 0.5
        r = c.post("/submissions", json={"submitter": ADDR_A, "connectivity_matrix": W.tolist()})
        assert r.status_code == 200
        info = json.loads(c.get("/submissions/0").json()["biological_info"])
        assert info["features"] == {"roi_0": 1.0, "roi_1": 1.0, "roi_2": 0.0, "roi_3": 0.0, "roi_4": 0.0}
        ragged = [[1.0, 0.0], [0.0]]
        assert c.post("/submissions", json={"submitter": ADDR_A, "connectivity_matrix": ragged}).status_code == 400


def test_model_files_and_ledger_file(tmp_path):
    cfg = small_config(model_dir=str(tmp_path / "models"), ledger_path=str(tmp_path / "chain.bin"))
    svc = ExpertService(cfg, clock=CLOCK)
    svc.retrain()
    saved = RandomForestModel.from_json((tmp_path / "models" / "model_v2.json").read_text())
    assert saved.to_json() == svc.deployment.model.to_json()
    assert (tmp_path / "models" / "model_v1.json").exists()
    with TestClient(create_app(service=svc)) as c:
        submit(c, svc, svc.seed_data.features[0])
    assert ExpertService(cfg, clock=CLOCK).ledger.submission_count == 1


def test_config_file_and_environment(tmp_path):
    p = tmp_path / "svc.json"
    p.write_text(json.dumps({"port": 9100, "seed": 3, "tabular_threshold": -0.1}))
    cfg = ServiceConfig.load(environ={"ADEXPERT_CONFIG": str(p)})
    assert (cfg.port, cfg.seed, cfg.tabular_threshold) == (9100, 3, -0.1)
    cfg = ServiceConfig.load(p, environ={"ADEXPERT_PORT": "9200"})
    assert cfg.port == 9200
    assert ServiceConfig.load(environ={}).port == 8000
    p.write_text(json.dumps({"prot": 1}))
    with pytest.raises(ValueError):
        ServiceConfig.load(p, environ={})


def test_atomic_swap_under_concurrency(client, service):
    pairs, old, new = run_swap_race(service, client)
    assert {body["model_version"] for body, _ in pairs} == {1, 2}
    assert check_swap(pairs, old, new)
