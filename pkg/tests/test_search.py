import math

import numpy as np
import pytest

from synthscene.mesh import default_catalog
from synthscene.metrics import ProxyMetrics
from synthscene.presets import METRIC_TARGETS, PRESETS
from synthscene.scene import LayoutParams
from synthscene.search import (MetricTarget, propose_candidates, score_metrics,
                               search_layouts)

CATALOG = default_catalog()


def metrics_of(occl, scale, count, hist=None):
    if hist is None:
        hist = np.zeros((16, 8), dtype=np.int64)
        hist[0, 4] = 100
    return ProxyMetrics(object_count=count, avg_occlusion=occl,
                        scale_dist=scale, viewpoint_hist=hist,
                        n_scenes=10, n_visible_instances=int(hist.sum()))


class TestScore:
    def test_exact_match_scores_zero(self):
        t = MetricTarget(0.3, (0.2, 0.5, 0.3), 8.0)
        m = metrics_of(0.3, (0.2, 0.5, 0.3), 8.0)
        assert score_metrics(m, t) == 0.0

    def test_single_component(self):
        t = MetricTarget(0.3, (0.2, 0.5, 0.3), 8.0,
                         weight_scale=0.0, weight_count=0.0)
        m = metrics_of(0.4, (0.0, 1.0, 0.0), 16.0)
        assert score_metrics(m, t) == pytest.approx(0.1)

    def test_hand_computed_value(self):
        # independent arithmetic oracle, worked by hand:
        #   occlusion |0.25-0.30|            = 0.05 * w=1.0   -> 0.05
        #   scale L1  |.1-.2|+|.6-.5|+|.3-.3| = 0.20 * w=2.0  -> 0.40
        #   count     |6-8|/8                = 0.25 * w=1.0   -> 0.25
        #   coverage  max(0, 0.10-0.00)      = 0.10 * w=3.0   -> 0.30
        # total = 1.00
        t = MetricTarget(0.30, (0.2, 0.5, 0.3), 8.0, min_topbottom_mass=0.10,
                         weight_occlusion=1.0, weight_scale=2.0,
                         weight_count=1.0, weight_viewpoint=3.0)
        m = metrics_of(0.25, (0.1, 0.6, 0.3), 6.0)
        assert score_metrics(m, t) == pytest.approx(1.0, abs=1e-12)

    def test_empty_metrics_infinite(self):
        empty = ProxyMetrics(None, None, None, np.zeros((16, 8), dtype=np.int64), 0, 0)
        assert math.isinf(score_metrics(empty, MetricTarget()))

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            MetricTarget(weight_occlusion=0, weight_scale=0,
                         weight_count=0, weight_viewpoint=0)
        with pytest.raises(ValueError):
            MetricTarget(scale_dist=(0.5, 0.5, 0.5))


class TestProposals:
    def test_first_candidate_is_base(self):
        base = PRESETS["random_placement"]
        rng = np.random.default_rng(0)
        assert propose_candidates(base, 1, rng) == [base]

    def test_prefix_stability(self):
        base = PRESETS["random_placement"]
        a = propose_candidates(base, 6, np.random.default_rng(1))
        b = propose_candidates(base, 12, np.random.default_rng(1))
        assert [p.to_dict() for p in a] == [p.to_dict() for p in b[:6]]

    def test_enumeration_spans_placements(self):
        base = PRESETS["random_placement"]
        cands = propose_candidates(base, 20, np.random.default_rng(2))
        placements = {c.placement for c in cands}
        assert {"random_floor", "occlusion_aware"} <= placements

    def test_perturbations_valid(self):
        base = PRESETS["scale_distribution"]
        cands = propose_candidates(base, 40, np.random.default_rng(3))
        for c in cands[25:]:
            assert 0.0 <= c.p_occlusion <= 1.0
            assert c.target_object_count >= 1


class TestSearch:
    def test_budget_one_reports_base_only(self):
        base = PRESETS["random_placement"].replace(target_object_count=4)
        report = search_layouts(MetricTarget(), base, CATALOG, budget=1,
                                scenes_per_eval=3, seed=0, resolution=(64, 48),
                                final_eval=False)
        assert len(report.trace) == 1
        assert report.trace[0].params.to_dict()["placement"] == base.placement
        assert report.best_index == 0

    def test_trace_length_and_best_is_min(self):
        base = PRESETS["random_placement"].replace(target_object_count=4)
        report = search_layouts(MetricTarget(), base, CATALOG, budget=5,
                                scenes_per_eval=3, seed=1, resolution=(64, 48),
                                final_eval=False)
        assert len(report.trace) == 5
        finite = [c.score for c in report.trace]
        assert report.best.score == min(finite)

    def test_budget_monotonicity_nested_seeds(self):
        base = PRESETS["random_placement"].replace(target_object_count=4)
        target = METRIC_TARGETS["occlusion"]
        best = []
        for budget in (2, 4, 8):
            report = search_layouts(target, base, CATALOG, budget=budget,
                                    scenes_per_eval=4, seed=7,
                                    resolution=(64, 48), final_eval=False)
            best.append(report.best.score)
        assert best[1] <= best[0] and best[2] <= best[1]

    def test_report_dict_shape(self):
        base = PRESETS["random_placement"].replace(target_object_count=4)
        report = search_layouts(MetricTarget(), base, CATALOG, budget=2,
                                scenes_per_eval=2, seed=2, resolution=(64, 48),
                                final_eval=False)
        d = report.to_dict()
        assert d["budget"] == 2
        assert len(d["trace"]) == 2
        assert d["best_params_digest"] == report.best.params.digest()
        digests = [c["params_digest"] for c in d["trace"]]
        assert len(set(digests)) == len(digests)  # proposals did not collide
