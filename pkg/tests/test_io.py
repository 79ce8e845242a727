import numpy as np
import pytest
from hypothesis import given, strategies as st

from aclearn.circuit import check_properties
from aclearn.data import (Dataset, dataset_from_rows, format_dataset, load_dataset, parse_dataset,
                          save_dataset, split_dataset)
from aclearn.errors import DataError, ModelFormatError
from aclearn.learner import LearnerConfig, learn
from aclearn.modelio import ModelBundle, dumps_bundle, load_model, loads_bundle, save_model
from aclearn.synth import random_tree_network, sample
from aclearn.tuning import TuningGrid, parse_grid, tune

from conftest import all_assignments


def test_small_file(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("2,2\n0,1\n1,1\n")
    data = load_dataset(path)
    assert data.n_rows == 2 and data.n_vars == 2
    assert data.density == pytest.approx(3 / 4)


@pytest.mark.parametrize("text, where", [
    ("2,2\n0,2\n", ":2:"),
    ("2,2\n0,1\n1\n", ":3:"),
    ("2,2\n0,x\n", ":2:"),
    ("", "empty"),
])
def test_rejections_name_the_line(tmp_path, text, where):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(DataError, match=where):
        load_dataset(path)


def test_wide_file_loads():
    text = ",".join(["2"] * 65) + "\n" + ",".join(["0"] * 65) + "\n"
    assert parse_dataset(text).n_vars == 65


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    data = dataset_from_rows(rng.integers(0, 3, size=(20, 4)).tolist(), (3, 3, 3, 3))
    save_dataset(data, tmp_path / "x.csv")
    again = load_dataset(tmp_path / "x.csv")
    assert again.digest() == data.digest()
    assert format_dataset(again) == format_dataset(data)


def test_values_are_read_only():
    data = dataset_from_rows([[0, 1]], (2, 2))
    with pytest.raises(ValueError):
        data.values[0, 0] = 1


@given(st.integers(2, 200), st.floats(0.05, 0.95), st.integers(0, 1000))
def test_split_conserves_rows(n, frac, seed):
    rng = np.random.default_rng(seed)
    data = Dataset(rng.integers(0, 2, size=(n, 3)), (2, 2, 2))
    train, hold = split_dataset(data, frac, seed)
    assert train.n_rows == int(round(frac * n)) and train.n_rows + hold.n_rows == n
    merged = sorted(map(tuple, np.vstack([train.values, hold.values]).tolist()))
    assert merged == sorted(map(tuple, data.values.tolist()))
    again, _ = split_dataset(data, frac, seed)
    assert again.digest() == train.digest()


def test_split_ninety_ten():
    data = Dataset(np.zeros((100, 2), dtype=int), (2, 2))
    train, hold = split_dataset(data, 0.9, 1)
    assert (train.n_rows, hold.n_rows) == (90, 10)
    with pytest.raises(DataError):
        split_dataset(data, 1.0, 1)


@pytest.fixture(scope="module")
def bundle():
    rng = np.random.default_rng(4)
    data = sample(random_tree_network((2, 3, 2, 2, 2), rng), 400, rng)
    res = learn(data, LearnerConfig(k_e=0.02))
    return ModelBundle(res.bn, res.circuit, {"note": "test", "splits": len(res.trace)})


def test_bundle_round_trip_is_byte_identical(tmp_path, bundle):
    path = tmp_path / "m.ac"
    save_model(bundle, path)
    loaded = load_model(path)
    save_model(loaded, tmp_path / "m2.ac")
    assert (tmp_path / "m2.ac").read_bytes() == path.read_bytes()
    assert loaded.manifest == bundle.manifest
    assert check_properties(loaded.circuit).ok
    for x in list(all_assignments(loaded.bn.arities))[::7]:
        assert loaded.circuit.evaluate(dict(enumerate(x))) == pytest.approx(loaded.bn.joint_probability(x), abs=1e-12)


def test_loaded_circuit_evaluates_identically(bundle):
    loaded = loads_bundle(dumps_bundle(bundle))
    rng = np.random.default_rng(0)
    rows = np.array([[rng.integers(-1, a) for a in bundle.circuit.arities] for _ in range(100)])
    assert (loaded.circuit.evaluate_batch(rows) == bundle.circuit.evaluate_batch(rows)).all()


def test_corruption_is_rejected(bundle):
    text = dumps_bundle(bundle)
    with pytest.raises(ModelFormatError, match="checksum"):
        loads_bundle(text[: len(text) // 2])
    with pytest.raises(ModelFormatError, match="checksum"):
        loads_bundle(text.replace("[bn]\nbn 5", "[bn]\nbn 5 ", 1))
    with pytest.raises(ModelFormatError, match="version"):
        loads_bundle(text.replace("aclearn-model 1", "aclearn-model 2", 1))
    with pytest.raises(ModelFormatError):
        loads_bundle("something else\n")


def test_tuning_grid_validation():
    with pytest.raises(DataError):
        TuningGrid(())
    with pytest.raises(DataError):
        TuningGrid((0.1,), fraction=1.0)
    assert parse_grid("1, 0.5,0.01") == [1.0, 0.5, 0.01]
    with pytest.raises(DataError):
        parse_grid("a,b")


def test_single_cell_grid_retrains():
    rng = np.random.default_rng(2)
    data = sample(random_tree_network((2,) * 5, rng), 300, rng)
    res = tune(data, TuningGrid((0.1,), (0.0,)), LearnerConfig(max_splits=5))
    assert res.best == (0.1, 0.0) and len(res.cells) == 1
    assert res.final.bn.data is data


def test_low_edge_cost_wins_on_dependent_data():
    rng = np.random.default_rng(6)
    data = sample(random_tree_network((2,) * 8, rng, concentration=0.3), 3000, rng)
    res = tune(data, TuningGrid((1.0, 0.01)))
    by_ke = {c.k_e: c.holdout_ll for c in res.cells}
    assert by_ke[0.01] > by_ke[1.0]
    assert res.best == (0.01, 0.0)
