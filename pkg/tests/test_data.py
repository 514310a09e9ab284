import json

import numpy as np
import pytest

from smile.data import Dataset, center, infer_roles, load_csv, make_rng, write_csv
from smile.errors import AlreadyCentered, EmptyFile, InvalidArgs, MissingColumn, NonNumericCell


def test_center_moments(toy_dataset):
    c = center(toy_dataset)
    assert abs(c.y.mean()) <= 1e-10
    assert np.all(np.abs(c.x.mean(axis=0)) <= 1e-10)
    # z is never centered
    assert np.array_equal(c.z, toy_dataset.z)


def test_center_roundtrip_offsets(toy_dataset):
    c = center(toy_dataset)
    np.testing.assert_allclose(c.raw_y(), toy_dataset.y, atol=1e-12)
    np.testing.assert_allclose(c.raw_x(), toy_dataset.x, atol=1e-12)


def test_center_guard(toy_dataset):
    c = center(toy_dataset)
    with pytest.raises(AlreadyCentered):
        center(c)
    # centering a fresh copy changes nothing
    again = center(c.subset(np.arange(c.n)))
    np.testing.assert_allclose(again.y, c.y, atol=1e-12)
    np.testing.assert_allclose(again.x, c.x, atol=1e-12)


def test_dataset_validation():
    with pytest.raises(InvalidArgs):
        Dataset([1.0, np.nan, 2.0], np.zeros((3, 0)), np.zeros((3, 1)))
    with pytest.raises(InvalidArgs):
        Dataset([1.0], np.zeros((1, 0)), np.zeros((1, 1)))
    ds = Dataset([1.0, 2.0, 3.0], np.zeros((3, 0)), np.arange(3.0))
    assert (ds.p1, ds.p2) == (0, 1)
    assert ds.x_names == ("x_1",)


def test_csv_roundtrip(tmp_path, toy_dataset):
    path = tmp_path / "d.csv"
    roles = write_csv(toy_dataset, path)
    back = load_csv(path)
    np.testing.assert_array_equal(back.y, toy_dataset.y)
    np.testing.assert_array_equal(back.z, toy_dataset.z)
    np.testing.assert_array_equal(back.x, toy_dataset.x)
    assert roles == {"response": "y", "z": ["z_1", "z_2"], "x": ["x_1", "x_2", "x_3"]}


def test_role_map_file(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("resp,a,b,ignored\n1,0,0.5,x\n2,1,0.25,y\n3,0,0.75,z\n")
    rpath = tmp_path / "roles.json"
    rpath.write_text(json.dumps({"response": "resp", "z": ["a"], "x": ["b"]}))
    ds = load_csv(path, rpath)
    assert ds.response_name == "resp" and ds.z_names == ("a",) and ds.x_names == ("b",)
    np.testing.assert_array_equal(ds.x[:, 0], [0.5, 0.25, 0.75])


def test_csv_errors(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(EmptyFile):
        load_csv(empty)
    head = tmp_path / "h.csv"
    head.write_text("y,x_1\n")
    with pytest.raises(EmptyFile):
        load_csv(head)
    bad = tmp_path / "b.csv"
    bad.write_text("y,x_1\n1,2\n3,oops\n")
    with pytest.raises(NonNumericCell, match="oops"):
        load_csv(bad)
    with pytest.raises(MissingColumn):
        load_csv(bad, {"response": "y", "z": [], "x": ["x_9"]})
    with pytest.raises(MissingColumn):
        infer_roles(["a", "b"])


def test_rng_streams_reproducible():
    a = make_rng(5, 3).standard_normal(4)
    b = make_rng(5, 3).standard_normal(4)
    c = make_rng(5, 4).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
