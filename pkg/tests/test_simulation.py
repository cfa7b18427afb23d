import json

import numpy as np
import pytest

from nnri.design import stratified_srs_variance
from nnri.errors import ConfigurationError
from nnri.response import mcar
from nnri.simulation import (
    StudyConfig,
    coverage,
    relative_bias,
    run_replicate,
    run_study,
    summarize,
)

FAST = ("NAIVE", "PARAM1", "PARAM2", "PARAM1(M)", "PARAM2(M)")


def test_relative_bias_arithmetic():
    est = np.array([[1.0], [3.0]])  # sample variance 2
    assert relative_bias(np.array([[2.0], [2.0]]), est)[0] == pytest.approx(0.0)
    assert relative_bias(np.array([[3.0], [3.0]]), est)[0] == pytest.approx(0.5)
    assert relative_bias(np.zeros((2, 1)), est)[0] == -1.0
    assert np.isnan(relative_bias(np.ones((2, 1)), np.ones((2, 1)))[0])
    # with truths the error T_hat - T is what varies
    assert relative_bias(np.array([[0.5], [0.5]]), np.array([[1.0], [3.0]]),
                         np.array([[1.0], [2.0]]))[0] == pytest.approx(0.0)
    with pytest.raises(ConfigurationError):
        relative_bias(np.ones((1, 1)), np.ones((1, 1)))


def test_coverage_arithmetic():
    rate, half = coverage(np.zeros((4, 1)), np.full((4, 1), 10.0), np.full((4, 1), 5.0))
    assert rate[0] == 1.0 and half[0] == 0.0
    rate, _ = coverage(np.full((4, 1), 1.0), np.full((4, 1), 1.0), np.full((4, 1), 2.0))
    assert rate[0] == 0.0


def test_study_config_validation():
    with pytest.raises(ConfigurationError):
        StudyConfig(replicates=1)
    with pytest.raises(ConfigurationError):
        StudyConfig(methods=())
    with pytest.raises(ConfigurationError):
        StudyConfig(methods=("PARAM9",))
    assert StudyConfig(methods=("param2:modeled", "naive")).methods == ("PARAM2(M)", "NAIVE")


def test_replicate_deterministic():
    cfg = StudyConfig(scenario="lognormal_small", replicates=5, methods=FAST, seed=3)
    a, b = run_replicate(cfg, 2), run_replicate(cfg, 2)
    np.testing.assert_array_equal(a.estimate, b.estimate)
    for m in FAST:
        np.testing.assert_array_equal(a.variances[m], b.variances[m])
    c = run_replicate(cfg, 3)
    assert not np.allclose(a.truth, c.truth)


def test_threads_do_not_change_report():
    cfg = StudyConfig(scenario="uniform100k", replicates=12, methods=FAST + ("NONPARAM",), seed=5)
    r1 = run_study(cfg, threads=1)
    r3 = run_study(cfg, threads=3)
    assert r1.to_dict() == r3.to_dict()


def test_full_response_pipeline_identity():
    cfg = StudyConfig(scenario="lognormal_small", population_size=20, replicates=2,
                      mechanism=mcar(1.0), methods=("NAIVE", "PARAM1"), seed=1)
    from nnri.design import draw_sample, ht_total
    from nnri.popgen import generate_population
    from nnri.smooth import fit_param1, predict_m
    from nnri.streams import substream

    res = run_replicate(cfg, 0)
    pop = generate_population(cfg.population_config(0))
    s = draw_sample(pop, cfg.design, substream(cfg.seed, 0, "sample"))
    np.testing.assert_allclose(res.estimate, ht_total(s), rtol=1e-12)
    np.testing.assert_allclose(res.variances["NAIVE"], stratified_srs_variance(s), rtol=1e-12)
    m = predict_m(fit_param1(s.x, s.y, np.ones(s.n), s.weight), s.x)
    e2 = (s.y - m) ** 2
    expect = stratified_srs_variance(s, m) + (s.weight**2 - s.weight) @ e2
    np.testing.assert_allclose(res.variances["PARAM1"], expect, rtol=1e-9)


@pytest.mark.parametrize("scenario", ["uniform100k", "lognormal_small", "lognormal_large"])
@pytest.mark.parametrize("mechanism", ["mcar75", "mcar50", "negative_mar", "positive_mar"])
def test_no_failed_replicates_on_preset_configs(scenario, mechanism):
    cfg = StudyConfig(scenario=scenario, mechanism=mechanism, replicates=100, methods=FAST, seed=11)
    rep = run_study(cfg)
    assert rep.failed == 0 and rep.completed == 100
    assert np.all(np.abs(rep.point_bias_z()) <= 3)


@pytest.mark.parametrize("scenario", ["uniform100k", "lognormal_small"])
@pytest.mark.parametrize("mechanism", ["mcar75", "mcar50", "negative_mar", "positive_mar"])
def test_naive_below_param2(scenario, mechanism):
    cfg = StudyConfig(scenario=scenario, mechanism=mechanism, replicates=300,
                      methods=("NAIVE", "PARAM2"), seed=21)
    rep = run_study(cfg)
    assert np.all(rep.relative_bias("NAIVE")[1:] < rep.relative_bias("PARAM2")[1:])


def test_nonparam_underestimates_y5_in_lognormal_large():
    cfg = StudyConfig(scenario="lognormal_large", mechanism="mcar75", replicates=200,
                      methods=("NONPARAM",), seed=31)
    rep = run_study(cfg)
    assert rep.failed == 0
    assert rep.relative_bias("NONPARAM")[4] <= -0.5


def test_report_outputs(tmp_path):
    cfg = StudyConfig(replicates=4, methods=("NAIVE", "PARAM2"), seed=2)
    rep = run_study(cfg)
    rep.write_csv(tmp_path / "r.csv")
    rep.write_json(tmp_path / "r.json")
    rep.write_coverage_plot_data(tmp_path / "c.csv")
    lines = (tmp_path / "r.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("scenario,mechanism,N,B,method,item,relative_bias")
    assert len(lines) == 1 + 2 * 5
    data = json.loads((tmp_path / "r.json").read_text(encoding="utf-8"))
    assert data["completed"] == 4 and len(data["summaries"]) == 10
    for s in rep.summaries:
        assert 0 <= s.coverage <= 1 and s.relative_bias >= -1
    assert "(" in rep.table() or "NAIVE" in rep.table()


def test_summarize_counts_failures():
    from nnri.simulation import ReplicateResult

    cfg = StudyConfig(replicates=3, methods=("NAIVE",))
    ok = [ReplicateResult(b, True, np.ones(5) * b, np.ones(5) * b + 0.1 * b, {"NAIVE": np.ones(5)})
          for b in range(3)]
    rep = summarize(cfg, ok + [ReplicateResult(3, False, error="boom")])
    assert rep.failed == 1 and rep.completed == 3
    with pytest.raises(ConfigurationError):
        summarize(cfg, [ReplicateResult(0, False)])
