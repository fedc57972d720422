"""
Tests for dataset loading, holdout policies and run artifacts.
"""

import numpy as np
import pandas as pd
import pytest

from dnngp.cli_io import (
    build_manifest,
    holdout_indices,
    load_dataset,
    load_targets,
    read_json,
    read_posterior,
    resolve_data_path,
    resolve_run_dir,
    write_posterior,
    write_simulation
)
from dnngp.config import HoldoutPolicy, ResponseTransform, parse_run_config
from dnngp.datagen import SyntheticSpec, simulate_dataset
from dnngp.errors import ConfigError, DatasetError
from tests.conftest import make_samples

COMPLETE = """site_id,s1,s2,t,y,x1,x2
1,0.0,0.0,0,4.0,1,0.5
2,1.0,0.0,0,9.0,1,-0.5
1,0.0,0.0,1,16.0,1,0.25
2,1.0,0.0,1,1.0,1,0.0
"""

CONFIG = {
    "m": 1,
    "scheme": "simple",
    "n_iter": 10,
    "n_burn": 0,
    "priors": {
        "sigma2": {"distribution": "inverse_gamma", "shape": 2.0, "rate": 1.0},
        "a": {"lower": 0.5, "upper": 8.0},
        "c": {"lower": 0.2, "upper": 4.0},
        "kappa": {"lower": 0.0, "upper": 1.0}
    }
}

def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path

def panel_csv(n_sites, n_times, seed=0):
    rng = np.random.default_rng(seed)
    rows = ["site_id,s1,s2,t,y,x1"]
    for j in range(n_sites):
        for t in range(n_times):
            rows.append(f"{j},{j * 0.1},{0.0},{t},{rng.normal():.6f},1")
    return "\n".join(rows) + "\n"

def test_complete_file(tmp_path):
    dataset = load_dataset(write(tmp_path, COMPLETE))
    assert dataset.r == 4
    assert dataset.n_obs == 4
    assert dataset.p == 2
    assert dataset.site_ids == ["1", "2"]
    assert dataset.covariate_names == ["x1", "x2"]
    np.testing.assert_allclose(dataset.y, [4.0, 9.0, 16.0, 1.0])
    np.testing.assert_allclose(dataset.x[:, 1], [0.5, -0.5, 0.25, 0.0])

def test_site_ids_sort_numerically(tmp_path):
    text = COMPLETE.replace("\n1,", "\n9,").replace("\n2,", "\n10,")
    dataset = load_dataset(write(tmp_path, text))
    assert dataset.site_ids == ["9", "10"]

def test_empty_response_is_missing(tmp_path):
    text = COMPLETE.replace("1,0.0,0.0,1,16.0", "1,0.0,0.0,1,")
    dataset = load_dataset(write(tmp_path, text))
    assert dataset.n_obs == 3
    assert dataset.observed.tolist() == [0, 1, 3]
    assert np.isnan(dataset.y[2])

def test_sqrt_transform(tmp_path):
    dataset = load_dataset(write(tmp_path, COMPLETE), transform=ResponseTransform.SQRT)
    np.testing.assert_allclose(dataset.y, [2.0, 3.0, 4.0, 1.0])
    np.testing.assert_allclose(dataset.raw_y(), [4.0, 9.0, 16.0, 1.0])
    negative = COMPLETE.replace("9.0", "-9.0")
    with pytest.raises(DatasetError, match="square-root"):
        load_dataset(write(tmp_path, negative), transform=ResponseTransform.SQRT)

def test_duplicate_rows_reported_with_line_numbers(tmp_path):
    text = COMPLETE + "2,1.0,0.0,1,3.0,1,0.0\n"
    with pytest.raises(DatasetError, match=r"duplicate .* rows \[5, 6\]"):
        load_dataset(write(tmp_path, text))

def test_inconsistent_coordinates(tmp_path):
    text = COMPLETE.replace("2,1.0,0.0,1", "2,1.5,0.0,1")
    with pytest.raises(DatasetError, match="differing coordinates"):
        load_dataset(write(tmp_path, text))

def test_absent_cells(tmp_path):
    text = "\n".join(COMPLETE.splitlines()[:-1]) + "\n"
    with pytest.raises(DatasetError, match="allow-missing-cells"):
        load_dataset(write(tmp_path, text))
    dataset = load_dataset(write(tmp_path, text), allow_missing_cells=True)
    assert dataset.r == 4
    assert dataset.n_obs == 3
    assert not dataset.present[3]
    assert np.all(np.isnan(dataset.x[3]))

def test_non_numeric_and_missing_values(tmp_path):
    with pytest.raises(DatasetError, match=r"non-numeric .* 'x2' at rows \[3\]"):
        load_dataset(write(tmp_path, COMPLETE.replace("-0.5", "abc")))
    with pytest.raises(DatasetError, match=r"missing values in column 't' at rows \[2\]"):
        load_dataset(write(tmp_path, COMPLETE.replace("1,0.0,0.0,0,", "1,0.0,0.0,,")))

def test_column_checks(tmp_path):
    with pytest.raises(DatasetError, match="unknown dataset columns"):
        load_dataset(write(tmp_path, COMPLETE.replace("x2", "x3")))
    with pytest.raises(DatasetError, match="missing column 'y'"):
        load_dataset(write(tmp_path, COMPLETE.replace(",y,", ",z,")))
    with pytest.raises(DatasetError, match="not found"):
        load_dataset(tmp_path / "absent.csv")

def test_model_spec_excludes_holdout(tmp_path):
    dataset = load_dataset(write(tmp_path, COMPLETE))
    spec = dataset.model_spec(parse_run_config(CONFIG), holdout=np.array([1]))
    assert spec.observed.tolist() == [0, 2, 3]
    assert spec.n_obs == 3
    assert spec.r == 4

def test_block_days_holdout(tmp_path):
    dataset = load_dataset(write(tmp_path, panel_csv(4, 12)))
    held = holdout_indices(dataset, HoldoutPolicy(kind="block_days", days=5, seed=3))
    assert held.size == 20
    n_sites = dataset.ref.n_sites
    for j in range(n_sites):
        times = np.sort(held[held % n_sites == j] // n_sites)
        assert times.size == 5
        np.testing.assert_array_equal(np.diff(times), 1)
    again = holdout_indices(dataset, HoldoutPolicy(kind="block_days", days=5, seed=3))
    np.testing.assert_array_equal(held, again)
    with pytest.raises(ConfigError):
        holdout_indices(dataset, HoldoutPolicy(kind="block_days", days=13))

def test_random_fraction_holdout(tmp_path):
    dataset = load_dataset(write(tmp_path, panel_csv(5, 10)))
    held = holdout_indices(dataset, HoldoutPolicy(kind="random_fraction", fraction=0.2, seed=1))
    assert held.size == 10
    assert np.unique(held).size == 10
    assert np.all(np.isin(held, dataset.observed))
    assert holdout_indices(dataset, HoldoutPolicy()).size == 0

def test_targets_file(tmp_path):
    path = write(tmp_path, "id,s1,s2,t,x1,x2,y\nA,0.5,0.5,0.5,1,0.1,3.0\nB,0.2,0.1,0.9,1,0.2,4.0\n", "targets.csv")
    targets = load_targets(path, p=2)
    assert targets.ids == ["A", "B"]
    assert targets.points[1].t == 0.9
    np.testing.assert_allclose(targets.y, [3.0, 4.0])
    with pytest.raises(DatasetError, match="covariates"):
        load_targets(path, p=3)

def test_simulation_files(tmp_path, monotone_theta):
    data = simulate_dataset(SyntheticSpec(n_side=2, n_times=3, theta=monotone_theta, n_holdout=3, seed=1))
    paths = write_simulation(data, tmp_path / "sim")
    dataset = load_dataset(paths["data"])
    assert dataset.r == 12
    np.testing.assert_array_equal(dataset.y, data.y)
    holdout = load_targets(paths["holdout"], p=2)
    assert holdout.ids == ["h0", "h1", "h2"]
    np.testing.assert_array_equal(holdout.y, data.holdout_y)
    assert read_json(paths["truth"])["truth"]["c"] == 1.0
    assert resolve_data_path(tmp_path / "sim") == paths["data"]

def test_posterior_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    n = 20
    samples = make_samples(rng.standard_normal((n, 2)), rng.gamma(2.0, size=n), rng.standard_normal((n, 6)),
                           theta=rng.uniform(0.1, 1.0, (n, 4)), chain=np.repeat([0, 1], 10))
    path = tmp_path / "run" / "posterior.csv"
    write_posterior(samples, path, w_subset=[1, 4])
    frame = pd.read_csv(path)
    assert len(frame) == 20
    assert list(frame.columns) == ["chain", "iter", "beta_0", "beta_1", "tau2", "sigma2", "a", "c", "kappa", "w_1", "w_4"]
    back = read_posterior(tmp_path / "run")
    np.testing.assert_array_equal(back.beta, samples.beta)
    np.testing.assert_array_equal(back.tau2, samples.tau2)
    np.testing.assert_array_equal(back.theta, samples.theta)
    np.testing.assert_array_equal(back.w, samples.w)
    np.testing.assert_array_equal(back.chain, samples.chain)
    assert back.acceptance == {0: 0.3}

def test_empty_posterior_is_header_only(tmp_path):
    samples = make_samples(np.zeros((0, 2)), np.zeros(0), np.zeros((0, 6)))
    path = tmp_path / "posterior.csv"
    write_posterior(samples, path)
    lines = path.read_text().splitlines()
    assert lines == ["chain,iter,beta_0,beta_1,tau2,sigma2,a,c,kappa"]
    assert len(read_posterior(path)) == 0

def test_manifest_and_run_dir(tmp_path):
    config = parse_run_config(CONFIG)
    manifest = build_manifest(config, "fit", n_obs=4)
    assert manifest["command"] == "fit"
    assert manifest["config_hash"] == config.config_hash()
    assert manifest["n_obs"] == 4
    assert {"numpy", "scipy", "pandas", "python"} <= set(manifest["versions"])
    assert resolve_run_dir(tmp_path) == (tmp_path, tmp_path / "posterior.csv")
    assert resolve_run_dir(tmp_path / "p.csv") == (tmp_path, tmp_path / "p.csv")
