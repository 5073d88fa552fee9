import math

import numpy as np
import pytest

import tndve


def test_version():
    assert tndve.__version__.count(".") == 2


def test_oracle_bridges():
    b = tndve.oracle_bridge("binary")
    assert b["q1"][0] == pytest.approx(20 / 3, abs=1e-12)
    assert b["q1"][1] == pytest.approx(-5 / 3, abs=1e-12)
    c = tndve.oracle_bridge("continuous")
    assert (c["tau0"], c["tau1"], c["tau2"], c["tau3"]) == (-1.001953125, 0.06640625, -0.25, [0.3125])


def test_generate_and_estimate():
    s = tndve.generate("binary", 500_000, seed=11, risk_ratio=0.5)
    assert len(s) == s.n > 1000
    assert set(np.unique(s.a)) == {0.0, 1.0}
    assert [f for f in s.validate() if f[0] == "fatal"] == []
    nc = tndve.estimate(s)
    assert nc["estimator"] == "nc"
    assert nc["ci"]["lower"] <= nc["ve_hat"] <= nc["ci"]["upper"]
    assert nc["ve_hat"] == pytest.approx(1 - math.exp(nc["beta_hat"]), abs=1e-15)
    fit = tndve.fit_bridge(s)
    assert tndve.estimate(s, bridge=fit)["beta_hat"] == nc["beta_hat"]
    lg = tndve.estimate(s, estimator="logistic")
    assert lg["scale"] == "odds-ratio"


def test_sample_from_arrays_matches_csv_route(tmp_path):
    s = tndve.generate("continuous", 200_000, seed=3)
    again = tndve.Sample(s.a, s.y, s.z, s.w, s.x, roles={"covariates": ["X"]})
    assert np.array_equal(again.x, s.x)
    path = tmp_path / "s.csv"
    path.write_text(s.to_csv())
    loaded = tndve.Sample.from_csv(str(path), s.roles)
    a = tndve.estimate(s, form="logistic-gaussian", moment=["linear"])
    b = tndve.estimate(loaded, form="logistic-gaussian", moment=["linear"])
    assert a["beta_hat"] == b["beta_hat"]


def test_errors_carry_categories():
    a = np.array([1.0, 1.0, 0.0, 0.0] * 10)
    y = np.array([1.0, 0.0, 1.0, 0.0] * 10)
    z = np.zeros(40)
    w = np.array([0.0, 1.0] * 20)
    s = tndve.Sample(a, y, z, w)
    with pytest.raises(tndve.IdentifiabilityError):
        tndve.estimate(s)
    assert issubclass(tndve.IdentifiabilityError, tndve.TndveError)
    with pytest.raises(tndve.ConfigError):
        tndve.estimate(s, estimator="nope")
    with pytest.raises(tndve.IoError):
        tndve.Sample.from_csv("/nonexistent.csv", {"nce": ["Z"], "nco": ["W"]})


def test_simulate_and_cli():
    summary, csv = tndve.simulate(
        '[scenario]\nsetting = "binary"\npopulation_size = 100000\nreplications = 2\nrisk_ratios = [0.5]\n'
    )
    assert len(summary["rows"]) == 3
    assert csv.startswith("estimator,beta0_true,mean_bias,sd,mean_se,coverage,n_mean,failures\n")
    code, _, err = tndve.cli(["reproduce", "fig9"])
    assert code == 2 and "fig9" in err
