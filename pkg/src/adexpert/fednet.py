"""Federation simulator: split a cohort across institutions, train forests
locally, aggregate, and compare single-institution, federated, and
pooled-data accuracy."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from adexpert.datamodel import N_CLASSES, DataError, Dataset, split_indices
from adexpert.mlcore.forest import ForestParams, RandomForestModel, fit_random_forest, predict_forest
from adexpert.mlcore.metrics import Metrics, evaluate
from adexpert.mlcore.rng import derive_seed, keyed_rng

PARTITION_MODES = ("iid", "label_skewed")
AGGREGATION_MODES = ("vote_ensemble", "local_eval")

_BOUND_KEY = 2**32 - 1


@dataclass(frozen=True)
class FederationConfig:
    k: int = 5
    partition_mode: str = "iid"
    alpha: float = 1.0  # Dirichlet concentration for label_skewed
    aggregation_mode: str = "vote_ensemble"
    seed: int = 0
    test_fraction: float = 0.25
    local_holdout_fraction: float = 0.25
    forest: ForestParams = field(default_factory=ForestParams)

    def __post_init__(self):
        if self.k < 1:
            raise DataError("k must be >= 1")
        if self.partition_mode not in PARTITION_MODES:
            raise DataError(f"partition_mode must be one of {PARTITION_MODES}")
        if self.aggregation_mode not in AGGREGATION_MODES:
            raise DataError(f"aggregation_mode must be one of {AGGREGATION_MODES}")
        if not self.alpha > 0:
            raise DataError("alpha must be > 0")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "partition_mode": self.partition_mode,
            "alpha": self.alpha,
            "aggregation_mode": self.aggregation_mode,
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "local_holdout_fraction": self.local_holdout_fraction,
            "forest": self.forest.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FederationConfig":
        doc = dict(doc)
        forest = ForestParams(**doc.pop("forest", {}))
        return cls(**doc, forest=forest)


@dataclass(frozen=True)
class Institution:
    node_id: int
    local_data: Dataset
    local_model: RandomForestModel | None = None

    def __post_init__(self):
        if self.local_data.n_samples == 0:
            raise DataError(f"institution {self.node_id} has no samples")

    @property
    def n_samples(self) -> int:
        return self.local_data.n_samples


@dataclass(frozen=True)
class FederationResult:
    p_centralized: float
    p_decentralized: float
    p_bound: float
    per_node_metrics: tuple[Metrics, ...]
    dropped_samples: int
    inequality_report: str
    aggregation_mode: str = "vote_ensemble"
    per_node_accuracy: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "p_centralized": self.p_centralized,
            "p_decentralized": self.p_decentralized,
            "p_bound": self.p_bound,
            "aggregation_mode": self.aggregation_mode,
            "per_node_accuracy": list(self.per_node_accuracy),
            "per_node_metrics": [m.to_dict() for m in self.per_node_metrics],
            "dropped_samples": self.dropped_samples,
            "inequality_report": self.inequality_report,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["mode", "accuracy"])
            writer.writerow(["centralized", repr(self.p_centralized)])
            writer.writerow(["decentralized", repr(self.p_decentralized)])
            writer.writerow(["bound", repr(self.p_bound)])


def shard_indices(ds: Dataset, config: FederationConfig) -> tuple[list[np.ndarray], np.ndarray]:
    """Row indices of each institution's shard (sorted) and of the
    ``n mod K`` rows left out so every shard has ``floor(n / K)`` rows."""
    n, K = ds.n_samples, config.k
    if K > n:
        raise DataError(f"cannot split {n} samples across {K} institutions")
    n_d = n // K
    rng = keyed_rng(config.seed, 0xFED)
    if config.partition_mode == "iid":
        order = rng.permutation(n)
        shards = [order[i * n_d : (i + 1) * n_d] for i in range(K)]
    else:
        shards = _label_skewed(ds.labels, K, n_d, config.alpha, rng)
    used = np.zeros(n, dtype=bool)
    for s in shards:
        used[s] = True
    return [np.sort(s) for s in shards], np.flatnonzero(~used)


def partition_dataset(ds: Dataset, config: FederationConfig) -> list[Institution]:
    shards, _ = shard_indices(ds, config)
    return [Institution(i, ds.subset(s)) for i, s in enumerate(shards)]


def _label_skewed(labels: np.ndarray, K: int, n_d: int, alpha: float, rng: np.random.Generator) -> list[np.ndarray]:
    """Per-node class mix drawn from Dirichlet(alpha * C * global mix), then
    filled from per-class pools; a shortfall is made up from the classes with
    the most samples left."""
    classes = np.unique(labels)
    pools = {int(c): list(rng.permutation(np.flatnonzero(labels == c))) for c in classes}
    prior = np.array([len(pools[int(c)]) for c in classes], dtype=float)
    prior /= prior.sum()
    shards = []
    for _ in range(K):
        q = rng.dirichlet(alpha * classes.size * prior)
        target = np.floor(q * n_d).astype(int)
        # largest remainder so the targets sum to n_d
        rem = n_d - target.sum()
        target[np.argsort(-(q * n_d - target), kind="stable")[:rem]] += 1
        shard = []
        for c, t in zip(classes, target):
            pool = pools[int(c)]
            take = min(t, len(pool))
            shard.extend(pool[:take])
            del pool[:take]
        while len(shard) < n_d:
            c = max(pools, key=lambda k: (len(pools[k]), -k))
            shard.append(pools[c].pop(0))
        shards.append(np.array(shard, dtype=np.int64))
    return shards


def train_local(inst: Institution, hyper: ForestParams, seed: int) -> RandomForestModel:
    ds = inst.local_data
    return fit_random_forest(ds.features, ds.labels, replace(hyper, seed=seed), n_classes=N_CLASSES)


class VoteEnsemble:
    """One vote per institution; ties go to the lowest class index."""

    def __init__(self, models: Sequence[RandomForestModel]):
        if not models:
            raise DataError("cannot aggregate an empty model list")
        if len({m.n_features for m in models}) != 1:
            raise DataError("models disagree on feature count")
        self.models = tuple(models)
        self.n_classes = max(m.n_classes for m in models)

    def votes(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        votes = np.zeros((X.shape[0], self.n_classes), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for m in self.models:
            np.add.at(votes, (rows, predict_forest(m, X)), 1)
        return votes

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1)


class LocalEval:
    """No merged predictor: each model is scored on its own institution's
    held-out slice and the correct counts are pooled."""

    def __init__(self, models: Sequence[RandomForestModel]):
        if not models:
            raise DataError("cannot aggregate an empty model list")
        self.models = tuple(models)

    def counts(self, slices: Sequence[Dataset]) -> tuple[int, int]:
        if len(slices) != len(self.models):
            raise DataError("one evaluation slice per model required")
        correct = sum(int(np.sum(predict_forest(m, s.features) == s.labels)) for m, s in zip(self.models, slices))
        return correct, sum(s.n_samples for s in slices)

    def accuracy(self, slices: Sequence[Dataset]) -> float:
        correct, total = self.counts(slices)
        return correct / total if total else 0.0


def aggregate(models: Sequence[RandomForestModel], mode: str = "vote_ensemble"):
    if mode == "vote_ensemble":
        return VoteEnsemble(models)
    if mode == "local_eval":
        return LocalEval(models)
    raise DataError(f"aggregation mode must be one of {AGGREGATION_MODES}")


def ordering_report(values: dict[str, float]) -> str:
    items = sorted(values.items(), key=lambda kv: -kv[1])
    parts = [f"{items[0][0]} ({items[0][1]:.4f})"]
    for (_, prev), (name, val) in zip(items, items[1:]):
        parts.append(("= " if val == prev else "> ") + f"{name} ({val:.4f})")
    return "observed: " + " ".join(parts)


def _local_split(inst: Institution, config: FederationConfig) -> tuple[Dataset, Dataset]:
    seed = derive_seed(config.seed, inst.node_id, 0x401D)
    labels = inst.local_data.labels
    stratify = np.unique(labels).size > 1 and all(np.sum(labels == c) >= 2 for c in np.unique(labels))
    tr, ho = split_indices(labels, config.local_holdout_fraction, seed, stratified=stratify)
    return inst.local_data.subset(tr), inst.local_data.subset(ho)


class Federation:
    """Stateful simulation: holds the global test set, the institutions and
    their models so new data can be folded in and the comparison rerun."""

    def __init__(self, ds: Dataset, config: FederationConfig | None = None):
        self.config = config or FederationConfig()
        train_idx, test_idx = split_indices(ds.labels, self.config.test_fraction, self.config.seed, stratified=True)
        self.test = ds.subset(test_idx)
        pool = ds.subset(train_idx)
        if self.config.k > pool.n_samples:
            raise DataError(f"cannot split {pool.n_samples} training samples across {self.config.k} institutions")
        shards, left_out = shard_indices(pool, self.config)
        self.dropped = int(left_out.size)
        # rows dropped to equalize shards still count toward the pooled-data bound
        self.extra = pool.subset(left_out)
        self.institutions = [self._train(Institution(i, pool.subset(s))) for i, s in enumerate(shards)]

    def _node_seed(self, node_id: int) -> int:
        return derive_seed(self.config.seed, node_id)

    def _train(self, inst: Institution) -> Institution:
        data = inst.local_data
        if self.config.aggregation_mode == "local_eval":
            data, _ = _local_split(inst, self.config)
        model = train_local(Institution(inst.node_id, data), self.config.forest, self._node_seed(inst.node_id))
        return Institution(inst.node_id, inst.local_data, model)

    @property
    def models(self) -> list[RandomForestModel]:
        return [i.local_model for i in self.institutions]

    def pooled_data(self) -> Dataset:
        ds = self.extra
        for inst in self.institutions:
            ds = ds.concat(inst.local_data)
        return ds

    def result(self) -> FederationResult:
        cfg = self.config
        pooled = self.pooled_data()
        bound_model = fit_random_forest(
            pooled.features, pooled.labels, replace(cfg.forest, seed=derive_seed(cfg.seed, _BOUND_KEY)), n_classes=N_CLASSES
        )
        p_bound = evaluate(predict_forest(bound_model, self.test.features), self.test.labels, N_CLASSES).accuracy
        node_metrics = tuple(
            evaluate(predict_forest(m, self.test.features), self.test.labels, N_CLASSES) for m in self.models
        )
        node_acc = tuple(m.accuracy for m in node_metrics)
        p_central = float(np.mean(node_acc))
        agg = aggregate(self.models, cfg.aggregation_mode)
        if cfg.aggregation_mode == "vote_ensemble":
            p_decentral = evaluate(agg.predict(self.test.features), self.test.labels, N_CLASSES).accuracy
        else:
            p_decentral = agg.accuracy([_local_split(i, cfg)[1] for i in self.institutions])
        report = ordering_report(
            {"P_decentralized": p_decentral, "P_centralized": p_central, "P_bound": p_bound}
        )
        return FederationResult(
            p_centralized=p_central,
            p_decentralized=float(p_decentral),
            p_bound=float(p_bound),
            per_node_metrics=node_metrics,
            dropped_samples=self.dropped,
            inequality_report=report,
            aggregation_mode=cfg.aggregation_mode,
            per_node_accuracy=node_acc,
        )

    def incorporate(self, new: Dataset, assignment: str | Sequence[int] = "round_robin") -> FederationResult:
        """Append ``new`` samples to institutions and retrain the affected
        ones from scratch (forests have no incremental update).

        ``assignment`` is ``"round_robin"``, ``"node:<id>"``, or one node id
        per new sample.
        """
        if new.feature_names != self.test.feature_names:
            raise DataError("new samples do not share the feature schema")
        K = len(self.institutions)
        if isinstance(assignment, str):
            if assignment == "round_robin":
                target = np.arange(new.n_samples) % K
            elif assignment.startswith("node:"):
                target = np.full(new.n_samples, int(assignment.split(":", 1)[1]))
            else:
                raise DataError(f"unknown assignment rule {assignment!r}")
        else:
            target = np.asarray(assignment, dtype=np.int64)
            if target.shape != (new.n_samples,):
                raise DataError("one node id per new sample required")
        if target.size and (target.min() < 0 or target.max() >= K):
            raise DataError("assignment names a node that does not exist")
        updated = []
        for inst in self.institutions:
            mine = np.flatnonzero(target == inst.node_id)
            if mine.size == 0:
                updated.append(inst)
                continue
            grown = Institution(inst.node_id, inst.local_data.concat(new.subset(mine)))
            updated.append(self._train(grown))
        self.institutions = updated
        return self.result()


def run_comparison(ds: Dataset, config: FederationConfig | None = None) -> FederationResult:
    return Federation(ds, config).result()
