"""Numeric core of instance-detection pretraining: contrastive loss over a
memory bank, momentum parameter updates, per-worker query sampling, and a
deterministic simulation of the multi-worker bank-gather protocol.

No neural networks are involved: region embeddings are synthesized from fixed
per-object ground-truth vectors plus controlled noise, which is enough to
exercise and verify the loss, the updates, and the protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class UnknownObject(KeyError):
    """A region was assigned an object id that the memory bank does not hold."""


def l2_normalize(v: np.ndarray, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    if np.any(n == 0.0):
        raise ValueError("cannot normalize zero vector")
    return v / n


# ---------------------------------------------------------------------------
# memory bank


@dataclass
class MemoryBank:
    """One embedding per object id, plus the loss/update hyperparameters."""

    object_ids: tuple[int, ...]
    vectors: np.ndarray                 # (N, D) float64
    momentum: float = 0.999
    tau: float = 0.2
    normalize: bool = True

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if len(self.object_ids) != len(set(self.object_ids)):
            raise ValueError("duplicate object ids")
        if self.vectors.shape[0] != len(self.object_ids):
            raise ValueError("one embedding required per object id")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        self._row = {oid: i for i, oid in enumerate(self.object_ids)}

    @staticmethod
    def init_random(object_ids, dim: int = 256, seed: int = 0,
                    momentum: float = 0.999, tau: float = 0.2,
                    normalize: bool = True) -> "MemoryBank":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        vecs = rng.normal(size=(len(tuple(object_ids)), dim))
        if normalize:
            vecs = l2_normalize(vecs)
        return MemoryBank(tuple(object_ids), vecs, momentum, tau, normalize)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def row(self, object_id: int) -> int:
        try:
            return self._row[object_id]
        except KeyError:
            raise UnknownObject(object_id) from None

    def lookup(self, object_id: int) -> np.ndarray:
        return self.vectors[self.row(object_id)]

    def store(self, object_id: int, embedding: np.ndarray) -> None:
        """Overwrite the entry for ``object_id`` (dictionary semantics)."""
        self.vectors[self.row(object_id)] = embedding

    def copy(self) -> "MemoryBank":
        return MemoryBank(self.object_ids, self.vectors.copy(),
                          self.momentum, self.tau, self.normalize)


@dataclass(frozen=True)
class RegionBatch:
    """Foreground region embeddings with their assigned object ids."""

    embeddings: np.ndarray   # (M, D) float64
    object_ids: tuple[int, ...]

    def __post_init__(self):
        emb = np.ascontiguousarray(self.embeddings, dtype=np.float64)
        object.__setattr__(self, "embeddings", emb)
        if emb.ndim != 2 or emb.shape[0] != len(self.object_ids):
            raise ValueError("need one object id per region embedding")
        if emb.shape[0] == 0:
            raise ValueError("empty region batch")


# ---------------------------------------------------------------------------
# losses


def contrastive_loss(batch: RegionBatch, bank: MemoryBank) -> tuple[float, np.ndarray]:
    """Summed cross-entropy of each region against the whole bank.

    For region i with embedding k_i assigned to object c_i,
        loss = -sum_i log softmax_j(k_i . q_j / tau)[j = c_i]
    Returns (loss, gradient w.r.t. each k_i), the gradient in closed form
    (1/tau) * sum_j (p_ij - [j = c_i]) q_j.
    """
    rows = np.array([bank.row(c) for c in batch.object_ids])
    k = batch.embeddings
    q = bank.vectors
    logits = k @ q.T / bank.tau                         # (M, N)
    m = logits.max(axis=1, keepdims=True)
    logsumexp = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    loss = float(np.sum(logsumexp - logits[np.arange(len(rows)), rows]))
    p = np.exp(logits - logsumexp[:, None])             # softmax probabilities
    p[np.arange(len(rows)), rows] -= 1.0
    grads = p @ q / bank.tau
    return loss, grads


def total_loss(con: float, reg: float, rpn: float) -> float:
    """Full training loss; regression and RPN terms are externally supplied."""
    return con + reg + rpn


def momentum_update(query_params: np.ndarray, key_params: np.ndarray,
                    m: float) -> np.ndarray:
    """Exponential moving average step: m * query + (1 - m) * key."""
    q = np.asarray(query_params, dtype=np.float64)
    k = np.asarray(key_params, dtype=np.float64)
    if q.shape != k.shape:
        raise ValueError(f"parameter shape mismatch: {q.shape} vs {k.shape}")
    if not 0.0 <= m <= 1.0:
        raise ValueError("momentum coefficient must be in [0, 1]")
    return m * q + (1.0 - m) * k


# ---------------------------------------------------------------------------
# per-worker query sampling


def sample_queries(visible_ids, all_ids, n: int, rng: np.random.Generator) -> list[int]:
    """Choose n unique query object ids for one worker's batch.

    With at least n visible objects, a uniform n-subset of them; otherwise all
    visible objects are taken and the remainder is drawn uniformly from the
    objects not in the target images.
    """
    visible = sorted(set(visible_ids))
    universe = sorted(set(all_ids))
    if len(universe) < n:
        raise ValueError(f"universe of {len(universe)} ids cannot supply {n} queries")
    if len(visible) >= n:
        chosen = rng.choice(len(visible), size=n, replace=False)
        return [visible[i] for i in chosen]
    vis = set(visible)
    rest = [i for i in universe if i not in vis]
    extra = rng.choice(len(rest), size=n - len(visible), replace=False)
    return visible + [rest[i] for i in extra]


# ---------------------------------------------------------------------------
# multi-worker gather protocol


@dataclass
class WorkerState:
    """One simulated training process: its bank replica and its rng stream."""

    index: int
    bank: MemoryBank
    rng: np.random.Generator = None
    sampled_ids: tuple[int, ...] = ()


def gather_and_update(workers: list[WorkerState],
                      new_embeddings: list[list[tuple[int, np.ndarray]]]) -> list[WorkerState]:
    """Apply the union of all workers' updates to every replica.

    Updates are applied in ascending (worker index, list position) order;
    the last writer wins on id collisions, and every replica ends identical.
    """
    if len(new_embeddings) != len(workers):
        raise ValueError("one update list required per worker")
    order = sorted(range(len(workers)), key=lambda i: workers[i].index)
    flat: list[tuple[int, np.ndarray]] = []
    for i in order:
        seen = set()
        for oid, _ in new_embeddings[i]:
            if oid in seen:
                raise ValueError(f"worker {workers[i].index} updates id {oid} twice")
            seen.add(oid)
        flat.extend(new_embeddings[i])
    for w in workers:
        for oid, emb in flat:
            w.bank.store(oid, emb)
    return workers


def sequential_reference_update(bank: MemoryBank,
                                update_sequence) -> MemoryBank:
    """Single-process oracle: apply updates one by one to one bank."""
    out = bank.copy()
    for oid, emb in update_sequence:
        out.store(oid, emb)
    return out


# ---------------------------------------------------------------------------
# full-loop simulation


@dataclass(frozen=True)
class SimConfig:
    num_objects: int = 64
    embed_dim: int = 256
    steps: int = 500
    workers: int = 1
    queries_per_worker: int = 8
    visible_per_scene: int = 8
    noise: float = 0.25
    momentum: float = 0.999
    tau: float = 0.2
    normalize: bool = True
    init_at_ground_truth: bool = False
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "num_objects": self.num_objects, "embed_dim": self.embed_dim,
            "steps": self.steps, "workers": self.workers,
            "queries_per_worker": self.queries_per_worker,
            "visible_per_scene": self.visible_per_scene,
            "noise": float(self.noise), "momentum": float(self.momentum),
            "tau": float(self.tau), "normalize": self.normalize,
            "init_at_ground_truth": self.init_at_ground_truth,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "SimConfig":
        return SimConfig(**{k: d[k] for k in SimConfig.__dataclass_fields__ if k in d})


@dataclass
class SimResult:
    losses: np.ndarray                  # (steps,) mean per-region loss
    bank: MemoryBank                    # final replica (all replicas identical)
    workers: list[WorkerState]


def simulate_pretrain(cfg: SimConfig, visible_sets=None) -> SimResult:
    """Deterministic simulation of the pretraining loop.

    Per step, each worker in index order: draws a target "scene" (a set of
    visible object ids), samples its n query ids, scores noisy region
    embeddings against its current replica, and refreshes the query embeddings
    by momentum-interpolating its replica toward the per-object ground truth.
    All refreshed embeddings are then gathered and applied to every replica.

    ``visible_sets``, when given, is cycled through in worker order and makes
    the target stream explicit; otherwise scenes are drawn from the seed.
    """
    ss = np.random.SeedSequence(cfg.seed)
    rng_truth, rng_bank, rng_scenes, rng_sample, rng_regions = \
        [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(5)]

    ids = tuple(range(cfg.num_objects))
    truth = rng_truth.normal(size=(cfg.num_objects, cfg.embed_dim))
    truth = l2_normalize(truth)

    if cfg.init_at_ground_truth:
        vectors = truth.copy()
    else:
        vectors = rng_bank.normal(size=(cfg.num_objects, cfg.embed_dim))
        vectors = l2_normalize(vectors) if cfg.normalize else vectors
    bank0 = MemoryBank(ids, vectors, cfg.momentum, cfg.tau, cfg.normalize)

    workers = [WorkerState(w, bank0.copy()) for w in range(cfg.workers)]
    losses = np.zeros(cfg.steps)
    scene_cursor = 0

    for step in range(cfg.steps):
        loss_sum = 0.0
        n_regions = 0
        updates: list[list[tuple[int, np.ndarray]]] = []
        for w in workers:
            if visible_sets is not None:
                visible = sorted(visible_sets[scene_cursor % len(visible_sets)])
                scene_cursor += 1
            else:
                pick = rng_scenes.choice(cfg.num_objects,
                                         size=min(cfg.visible_per_scene, cfg.num_objects),
                                         replace=False)
                visible = sorted(int(i) for i in pick)
            query_ids = sample_queries(visible, ids, cfg.queries_per_worker, rng_sample)
            w.sampled_ids = tuple(query_ids)

            regions = truth[list(visible)] + cfg.noise * rng_regions.normal(
                size=(len(visible), cfg.embed_dim))
            if cfg.normalize:
                regions = l2_normalize(regions)
            loss, _ = contrastive_loss(RegionBatch(regions, tuple(visible)), w.bank)
            loss_sum += loss
            n_regions += len(visible)

            refreshed = []
            for oid in query_ids:
                blended = momentum_update(w.bank.lookup(oid), truth[oid], cfg.momentum)
                if cfg.normalize:
                    blended = l2_normalize(blended)
                refreshed.append((oid, blended))
            updates.append(refreshed)
        gather_and_update(workers, updates)
        losses[step] = loss_sum / n_regions
    return SimResult(losses, workers[0].bank.copy(), workers)
