import csv
import math

import numpy as np
import pytest
from scipy.integrate import quad

from smile.data import Dataset
from smile.errors import InvalidArgs
from smile.inference import SbllCurve
from smile.selection import ModelStructure
from smile.simulation import (METRIC_COLUMNS, DgpSpec, ExperimentConfig, amse, covered, cv_mspe,
                              fold_ids, generate, phi_am1, phi_quad, phi_trig, pooled_selection_metrics,
                              run_experiment, selection_counts, selection_metrics, truth_for,
                              write_tables)


def test_component_values_and_centering():
    assert phi_trig(0.0) == pytest.approx(-2.25)
    assert phi_quad(0.0) == pytest.approx(-1.5)
    for f in (phi_trig, phi_quad, phi_am1):
        assert abs(quad(f, -0.5, 0.5, epsabs=1e-13)[0]) <= 1e-10


def test_generate_noiseless_and_reproducible():
    spec = DgpSpec(n=100, p1=5, p2=5, sigma=0.0, seed=3)
    ds, truth = generate(spec, 2)
    fitted = ds.z @ truth.alpha + sum(truth.phi(l, ds.x[:, l]) for l in range(5))
    np.testing.assert_allclose(ds.y, fitted, atol=1e-12)
    again, _ = generate(spec, 2)
    assert ds.y.tobytes() == again.y.tobytes() and ds.x.tobytes() == again.x.tobytes()
    other, _ = generate(spec, 3)
    assert not np.array_equal(ds.x, other.x)
    assert set(np.unique(ds.z)) <= {0.0, 1.0}
    assert ds.x.min() >= -0.5 and ds.x.max() <= 0.5


def test_scenarios():
    am = truth_for(DgpSpec(scenario="AM", p1=0, p2=10))
    assert am.structure == ModelStructure((), (), (0, 2), (1,))
    lm = truth_for(DgpSpec(scenario="LM", p1=0, p2=10))
    assert lm.structure.s_x_pl == (0, 1, 2)
    with pytest.raises(InvalidArgs):
        DgpSpec(n=20)
    with pytest.raises(InvalidArgs):
        DgpSpec(scenario="XYZ")


def test_selection_metrics_examples():
    truth = truth_for(DgpSpec(p1=10, p2=10))
    perfect = selection_metrics(truth, truth.structure)
    for k in ("corrZ", "corrZ0", "corrL", "corrN", "corrLN", "corrX0"):
        assert perfect[k] == 100.0
    for k in ("Zto0", "LtoN", "NtoL", "Xto0"):
        assert perfect[k] == 0.0
    # linear-only estimate: the symmetric component is missed, the quadratic read as linear
    slm = selection_metrics(truth, ModelStructure((0, 1, 2), (0, 2)))
    assert slm["Xto0"] == pytest.approx(100 / 3)
    assert slm["NtoL"] == pytest.approx(50.0)
    empty = selection_metrics(truth, ModelStructure())
    assert empty["corrZ"] == 0.0 and empty["corrZ0"] == 100.0
    with pytest.raises(InvalidArgs):
        selection_metrics(truth.structure, ModelStructure())


def test_pooled_metrics_are_per_column_per_replicate():
    t = ModelStructure((0,), (), (), ())
    c1 = selection_counts(t, ModelStructure((0, 1)), 4, 1)
    c2 = selection_counts(t, ModelStructure((0,)), 4, 1)
    pooled = pooled_selection_metrics([c1, c2])
    assert pooled["corrZ0"] == pytest.approx(100 * 5 / 6)
    assert math.isnan(pooled["corrL"])


def test_amse_examples():
    phi = np.array([0.3, -1.0, 2.0])
    assert amse(phi, phi) == 0.0
    assert amse(phi + 0.1, phi) == pytest.approx(0.01)
    assert amse([1.0, 2.0, 4.0], [1.5, 2.0, 3.0]) == pytest.approx((0.25 + 0 + 1) / 3)


def test_fold_ids_partition():
    ids = fold_ids(53, 10, 1)
    counts = np.bincount(ids)
    assert counts.size == 10 and counts.sum() == 53 and counts.max() - counts.min() <= 1
    np.testing.assert_array_equal(ids, fold_ids(53, 10, 1))
    with pytest.raises(InvalidArgs):
        fold_ids(5, 10, 0)


def test_cv_mspe_intercept_only(rng):
    n = 120
    y = 5.0 + rng.standard_normal(n)
    ds = Dataset(y, np.zeros((n, 0)), rng.uniform(-0.5, 0.5, (n, 4)))
    m = cv_mspe(ds, "SMILE", folds=10, seed=0)
    assert 0.7 < m < 1.4


def _band(lo, hi, n=5):
    g = np.linspace(0, 1, n)
    z = np.zeros(n)
    return SbllCurve(g, z, z, z, z, z, np.full(n, lo), np.full(n, hi), 0.1, (0.0, 1.0))


def test_covered_trivial_bands(rng):
    truth = rng.standard_normal(5)
    assert covered(_band(-np.inf, np.inf), truth)
    assert not covered(_band(0.0, 0.0), truth)


def tiny_experiment(**kw):
    base = dict(n=120, p1=6, p2=6, sigma=0.5, reps=2, seed=4, cv_folds=3,
                variants=("SMILE", "SLM", "ORACLE"))
    base.update(kw)
    return ExperimentConfig(**base)


def test_experiment_order_independent_and_tables(tmp_path):
    exp = tiny_experiment()
    rows1, _ = run_experiment(exp, n_jobs=1)
    rows2, _ = run_experiment(exp, n_jobs=2)
    assert rows1 == rows2
    for v in exp.variants:
        for k in METRIC_COLUMNS:
            x = rows1[v][k]
            assert math.isnan(x) or 0.0 <= x <= 100.0
    out = write_tables(exp, rows1, tmp_path)
    with open(out / "table1_selection.csv") as fh:
        header = next(csv.reader(fh))
    assert header[4:] == list(METRIC_COLUMNS)
    for name in ("table2_errors.csv", "table3_estimation.csv", "table4_coverage.csv", "summary.json"):
        assert (out / name).is_file()


def test_experiment_config_errors():
    with pytest.raises(InvalidArgs):
        ExperimentConfig.from_dict({"nonsense": 1})
    exp = ExperimentConfig.from_dict({"variants": ["SMILE"], "reps": 3})
    assert exp.variants == ("SMILE",) and exp.to_dict()["variants"] == ["SMILE"]
