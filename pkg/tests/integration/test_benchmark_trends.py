"""
Trend tests on the seeded synthetic benchmark.

``TestReducedTrends`` runs in the default suite on the 120-node pair with a
small budget. ``TestBenchmarkTrends`` uses five seeds of the full default
configuration; every test reads from one module-scoped set of experiments so
stages are trained once. Expect several minutes of single-core runtime.
"""

import numpy as np
import pytest

from services.act.data.graph import cap_degree
from services.act.data.synthetic import generate_cd_pair
from services.act.schemas.config import RunConfig, SamplerConfig
from services.act.training.ablation import ExperimentRun, get_variant
from services.act.training.pipeline import source_score_gap

SEEDS = (0, 1, 2, 3, 4)
ALPHAS = (2.0, 2.25, 2.5, 2.75, 3.0)


@pytest.fixture(scope="module")
def benchmark():
    """(config, seed -> ExperimentRun) on the default generator, degree-capped."""
    config = RunConfig(seeds=list(SEEDS))
    g_s, g_t = generate_cd_pair(config.data.generator)
    g_s = cap_degree(g_s, config.data.max_degree, config.data.generator.seed)
    g_t = cap_degree(g_t, config.data.max_degree, config.data.generator.seed)
    return config, {seed: ExperimentRun(g_s, g_t, config.for_seed(seed)) for seed in SEEDS}


def _mean_auc(experiments, variant, **kwargs):
    return float(np.mean([run.run_variant(get_variant(variant), **kwargs).metrics.auc_roc for run in experiments.values()]))


@pytest.fixture
def reduced_run(synthetic_config, train_config):
    """One ExperimentRun on the small pair with exact aggregation and a faster schedule."""
    data = synthetic_config.model_copy(update={"structural_extra_edges": 15, "attribute_shift": 4.0})
    g_s, g_t = generate_cd_pair(data)
    cfg = train_config.model_copy(update={
        "source_epochs": 50,
        "source_lr": 1e-2,
        "align_epochs": 10,
        "align_lr": 1e-2,
        "source_hidden": 64,
        "target_hidden": 32,
        "embedding_dim": 16,
        "sampler": SamplerConfig(batch_size=32, negatives=3, fanouts=[None]),
    })
    return ExperimentRun(g_s, g_t, cfg)


@pytest.mark.integration
@pytest.mark.ml
class TestReducedTrends:
    def test_pretraining_separates_source_labels(self, reduced_run):
        gap = source_score_gap(reduced_run.source, reduced_run.g_s, reduced_run.cfg)
        assert gap >= reduced_run.cfg.deviation.margin / 2

    def test_alignment_reduces_divergence(self, reduced_run):
        reduced_run.aligned("dom_only")
        trace = reduced_run.alignments["dom_only"].report.trace
        assert len(trace) == reduced_run.cfg.align_epochs + 1
        assert trace[-1] < trace[0]

    def test_joint_rows_are_eta_s_scores(self, reduced_run):
        joint = reduced_run.run_variant(get_variant("joint"))
        eta_s = reduced_run.run_variant(get_variant("eta_s"))
        np.testing.assert_array_equal(joint.scores.scores, eta_s.scores.scores)
        assert joint.metrics.auc_roc == eta_s.metrics.auc_roc


@pytest.mark.integration
@pytest.mark.slow
@pytest.mark.ml
class TestBenchmarkTrends:
    def test_pretraining_separates_source_labels(self, benchmark):
        config, experiments = benchmark
        run = experiments[0]
        gap = source_score_gap(run.source, run.g_s, run.cfg)
        assert gap >= config.train.deviation.margin / 2

    def test_alignment_halves_divergence(self, benchmark):
        _, experiments = benchmark
        run = experiments[0]
        run.aligned("joint")
        trace = run.alignments["joint"].report.trace
        assert trace[-1] <= 0.5 * trace[0]

    def test_joint_beats_single_objectives(self, benchmark):
        _, experiments = benchmark
        joint = _mean_auc(experiments, "joint")
        assert joint >= _mean_auc(experiments, "con_only") + 0.03
        assert joint >= _mean_auc(experiments, "dom_only") + 0.03

    def test_refit_not_worse_than_direct_scoring(self, benchmark):
        _, experiments = benchmark
        full = _mean_auc(experiments, "full")
        assert full >= _mean_auc(experiments, "eta_s")
        assert full >= _mean_auc(experiments, "act_if")

    def test_alpha_stability(self, benchmark):
        _, experiments = benchmark
        aucs = [_mean_auc(experiments, "full", alpha=alpha) for alpha in ALPHAS]
        assert max(aucs) - min(aucs) <= 0.05

    def test_beats_raw_isolation_forest(self, benchmark):
        _, experiments = benchmark
        assert _mean_auc(experiments, "full") >= _mean_auc(experiments, "raw_if") + 0.05
