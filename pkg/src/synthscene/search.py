"""Random search over layout parameters against target metric profiles.

The proposal sequence is deterministic given the seed and prefix-stable:
candidate 0 is the base configuration, candidates 1..24 enumerate the discrete
design choices (placement, rotation axes, scale mode, background kind), and
later candidates randomly perturb the continuous parameters of an earlier
candidate. A larger budget therefore evaluates a strict superset of a smaller
one, so the best score never gets worse with more budget.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import (MetricsAccumulator, ProxyMetrics, ScaleThresholds,
                      scene_stats)
from .scene import (BackgroundSpec, IntervalScale, LayoutParams,
                    PlacementExhausted, UniformScale, assemble_scene)

_PLACEMENTS = ("random_floor", "occlusion_aware", "floating")
_ROTATIONS = ("z_only", "all_axes")
_SCALE_MODES = ("uniform_range", "intervals")
_BACKGROUNDS = ("white_cube", "room_shell")


@dataclass(frozen=True)
class MetricTarget:
    """Desired proxy-metric profile with per-component weights."""

    avg_occlusion: float = 0.3
    scale_dist: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    object_count: float = 10.0
    min_topbottom_mass: float = 0.0
    weight_occlusion: float = 1.0
    weight_scale: float = 1.0
    weight_count: float = 1.0
    weight_viewpoint: float = 0.0

    def __post_init__(self):
        weights = (self.weight_occlusion, self.weight_scale,
                   self.weight_count, self.weight_viewpoint)
        if any(w < 0 for w in weights) or all(w == 0 for w in weights):
            raise ValueError("weights must be nonnegative and not all zero")
        if abs(sum(self.scale_dist) - 1.0) > 1e-9:
            raise ValueError("target scale distribution must sum to 1")
        if self.object_count <= 0:
            raise ValueError("target object count must be positive")

    def to_dict(self) -> dict:
        return {
            "avg_occlusion": float(self.avg_occlusion),
            "scale_dist": [float(x) for x in self.scale_dist],
            "object_count": float(self.object_count),
            "min_topbottom_mass": float(self.min_topbottom_mass),
            "weight_occlusion": float(self.weight_occlusion),
            "weight_scale": float(self.weight_scale),
            "weight_count": float(self.weight_count),
            "weight_viewpoint": float(self.weight_viewpoint),
        }

    @staticmethod
    def from_dict(d: dict) -> "MetricTarget":
        return MetricTarget(
            avg_occlusion=float(d["avg_occlusion"]),
            scale_dist=tuple(d["scale_dist"]),
            object_count=float(d["object_count"]),
            min_topbottom_mass=float(d.get("min_topbottom_mass", 0.0)),
            weight_occlusion=float(d.get("weight_occlusion", 1.0)),
            weight_scale=float(d.get("weight_scale", 1.0)),
            weight_count=float(d.get("weight_count", 1.0)),
            weight_viewpoint=float(d.get("weight_viewpoint", 0.0)),
        )


def score_metrics(metrics: ProxyMetrics, target: MetricTarget) -> float:
    """Weighted distance of a metric bundle from the target; 0 iff exact."""
    if metrics.empty or metrics.object_count is None:
        return math.inf
    s = 0.0
    if metrics.avg_occlusion is not None:
        s += target.weight_occlusion * abs(metrics.avg_occlusion - target.avg_occlusion)
    elif target.weight_occlusion > 0:
        return math.inf
    if metrics.scale_dist is not None:
        s += target.weight_scale * sum(
            abs(a - b) for a, b in zip(metrics.scale_dist, target.scale_dist))
    elif target.weight_scale > 0:
        return math.inf
    s += target.weight_count * abs(metrics.object_count - target.object_count) \
        / target.object_count
    cov = metrics.topbottom_mass()
    if cov is None:
        cov = 0.0
    s += target.weight_viewpoint * max(0.0, target.min_topbottom_mass - cov)
    return s


@dataclass(frozen=True)
class Candidate:
    index: int
    params: LayoutParams
    metrics: ProxyMetrics | None
    score: float
    scenes_evaluated: int
    scenes_failed: int

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "params_digest": self.params.digest(),
            "params": self.params.to_dict(),
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
            "score": self.score if math.isfinite(self.score) else None,
            "scenes_evaluated": self.scenes_evaluated,
            "scenes_failed": self.scenes_failed,
        }


@dataclass(frozen=True)
class SearchReport:
    target: MetricTarget
    trace: tuple[Candidate, ...]
    best_index: int
    final_metrics: ProxyMetrics | None   # best candidate at full settings

    @property
    def best(self) -> Candidate:
        return self.trace[self.best_index]

    def to_dict(self) -> dict:
        return {
            "target": self.target.to_dict(),
            "budget": len(self.trace),
            "best_index": self.best_index,
            "best_score": self.best.score if math.isfinite(self.best.score) else None,
            "best_params_digest": self.best.params.digest(),
            "final_metrics": None if self.final_metrics is None
                             else self.final_metrics.to_dict(),
            "trace": [c.to_dict() for c in self.trace],
        }


def _with_combo(base: LayoutParams, placement, rotation, scale_kind, bg_kind) -> LayoutParams:
    scale_mode = UniformScale() if scale_kind == "uniform_range" else IntervalScale()
    background = (BackgroundSpec("white_cube", side=10.0) if bg_kind == "white_cube"
                  else BackgroundSpec("room_shell"))
    return base.replace(placement=placement, rotation_axes=rotation,
                        scale_mode=scale_mode, background=background)


def propose_candidates(base: LayoutParams, budget: int,
                       rng: np.random.Generator) -> list[LayoutParams]:
    """First ``budget`` entries of the deterministic proposal sequence."""
    proposals = [base]
    for placement, rotation, scale_kind, bg_kind in itertools.product(
            _PLACEMENTS, _ROTATIONS, _SCALE_MODES, _BACKGROUNDS):
        if len(proposals) >= budget:
            break
        proposals.append(_with_combo(base, placement, rotation, scale_kind, bg_kind))
    while len(proposals) < budget:
        parent = proposals[int(rng.integers(len(proposals)))]
        kw = {}
        kw["p_occlusion"] = float(np.clip(
            parent.p_occlusion + 0.2 * (rng.random() * 2 - 1), 0.0, 1.0))
        kw["target_object_count"] = max(
            1, int(round(parent.target_object_count * (0.7 + 0.7 * rng.random()))))
        if isinstance(parent.scale_mode, IntervalScale):
            probs = np.array([p for _, _, p in parent.scale_mode.intervals])
            probs = np.maximum(probs + 0.1 * (rng.random(len(probs)) * 2 - 1), 0.01)
            probs = probs / probs.sum()
            probs[-1] = 1.0 - float(probs[:-1].sum())  # exact unit sum
            kw["scale_mode"] = IntervalScale(tuple(
                (lo, hi, float(p)) for (lo, hi, _), p in
                zip(parent.scale_mode.intervals, probs)))
        proposals.append(parent.replace(**kw))
    return proposals[:budget]


def evaluate_candidate(params: LayoutParams, catalog, scenes_per_eval: int,
                       target: MetricTarget,
                       resolution: tuple[int, int] = (160, 120),
                       thresholds: ScaleThresholds | None = None) -> Candidate:
    """Generate, rasterize, and score one candidate; failures never abort."""
    if thresholds is None:
        thresholds = ScaleThresholds.for_resolution(*resolution)
    acc = MetricsAccumulator()
    failed = 0
    for s in range(scenes_per_eval):
        try:
            scene = assemble_scene(params, catalog, scene_index=s)
        except PlacementExhausted:
            failed += 1
            continue
        acc.add(scene_stats(scene, resolution=resolution, thresholds=thresholds))
    metrics = acc.finalize()
    score = score_metrics(metrics, target) if not metrics.empty else math.inf
    return Candidate(-1, params, None if metrics.empty else metrics, score,
                     scenes_per_eval - failed, failed)


def search_layouts(target: MetricTarget, base: LayoutParams, catalog,
                   budget: int = 20, scenes_per_eval: int = 50, seed: int = 0,
                   resolution: tuple[int, int] = (160, 120),
                   final_eval: bool = True) -> SearchReport:
    """Evaluate ``budget`` layout candidates and report the full trace.

    Candidate i is generated with params.seed derived from (seed, i) so
    evaluations are independent and reproducible; the best candidate is
    re-evaluated at its own full image resolution when ``final_eval``.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(0xC0FFEE,))))
    proposals = propose_candidates(base, budget, rng)
    trace = []
    for i, params in enumerate(proposals):
        eval_seed = int(np.random.SeedSequence(
            entropy=seed, spawn_key=(1, i)).generate_state(1)[0])
        cand = evaluate_candidate(params.replace(seed=eval_seed), catalog,
                                  scenes_per_eval, target, resolution)
        trace.append(Candidate(i, cand.params, cand.metrics, cand.score,
                               cand.scenes_evaluated, cand.scenes_failed))
    best_index = min(range(len(trace)), key=lambda i: (trace[i].score, i))

    final_metrics = None
    if final_eval:
        best = trace[best_index]
        res = (best.params.image_width, best.params.image_height)
        final_metrics = evaluate_candidate(
            best.params, catalog, scenes_per_eval, target, resolution=res,
            thresholds=ScaleThresholds.for_resolution(*res)).metrics
    return SearchReport(target, tuple(trace), best_index, final_metrics)
