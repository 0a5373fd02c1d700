import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from maxstab import DataError, DepParams, ObsCube
from maxstab.cube import cube_to_csv, parse_cube, read_cube, write_cube
from maxstab.likelihood import DesignMask, FitOptions, fit_pmle
from maxstab.reports import SCHEMA, Table, dumps, read_json, to_jsonable, write_report
from maxstab.simulate import simulate_cube

HAND = """# margin=raw
s1,s2,t,value
1,1,1,0.5
1,1,2,1.25
1,2,1,-3.0
1,2,2,2.0
2,1,1,7.5
2,1,2,0.125
2,2,1,1.0
2,2,2,4.0
"""


class TestCube:
    def test_hand_file_round_trip(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text(HAND)
        cube = read_cube(p)
        assert cube.values.shape == (2, 2, 2) and cube.margin == "raw"
        assert cube.values[0, 1, 0] == -3.0
        write_cube(cube, tmp_path / "d.csv")
        assert read_cube(tmp_path / "d.csv") == cube
        assert cube_to_csv(cube) == HAND

    def test_missing_cell(self):
        text = "\n".join(HAND.splitlines()[:-1]) + "\n"
        with pytest.raises(DataError, match="missing"):
            parse_cube(text)

    def test_parse_errors(self):
        with pytest.raises(DataError, match=":3:"):
            parse_cube("# margin=raw\ns1,t,value\n1,1,abc\n")
        with pytest.raises(DataError, match="margin"):
            parse_cube("s1,t,value\n1,1,1.0\n")
        with pytest.raises(DataError, match="header"):
            parse_cube("# margin=raw\nx,t,value\n1,1,1.0\n")
        with pytest.raises(DataError, match="duplicate"):
            parse_cube("# margin=raw\ns1,t,value\n1,1,1.0\n1,1,2.0\n")
        with pytest.raises(DataError, match="positive"):
            parse_cube("# margin=frechet\ns1,t,value\n1,1,-1.0\n")

    def test_any_row_order(self):
        lines = HAND.splitlines()
        shuffled = "\n".join(lines[:2] + lines[2:][::-1]) + "\n"
        assert parse_cube(shuffled) == parse_cube(HAND)

    def test_simulated_round_trip(self, tmp_path):
        cube = simulate_cube(DepParams([1, 1, 1], [1, 1, 1]), 3, 7, seed=2)
        write_cube(cube, tmp_path / "s.csv")
        assert np.array_equal(read_cube(tmp_path / "s.csv").values, cube.values)

    @given(arrays(np.float64, (2, 3), elements=st.floats(-1e300, 1e300)))
    def test_round_trip_property(self, values):
        cube = ObsCube(values, "raw")
        assert parse_cube(cube_to_csv(cube)) == cube

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_cube(tmp_path / "nope.csv")

    def test_cube_validation(self):
        with pytest.raises(DataError):
            ObsCube(np.ones((2, 3, 4)))
        with pytest.raises(DataError):
            ObsCube(np.array([[np.nan, 1.0]]))
        with pytest.raises(DataError):
            ObsCube(np.ones(3))


class TestReports:
    def test_empty_table_header_only(self, tmp_path):
        t = Table(empirical=[], theoretical=[], lower=[], upper=[])
        write_report(t, tmp_path / "qq.csv")
        assert (tmp_path / "qq.csv").read_text() == "empirical,theoretical,lower,upper\n"

    def test_table_round_trip(self):
        t = Table(a=[1.5, -2.0], flag=np.array([True, False]), s=["x", "y"])
        back = Table.from_csv(t.to_csv())
        np.testing.assert_array_equal(back["a"], [1.5, -2.0])
        np.testing.assert_array_equal(back["flag"], [1, 0])
        assert list(back["s"]) == ["x", "y"]

    def test_unequal_columns(self):
        with pytest.raises(ValueError):
            Table(a=[1, 2], b=[1])

    def test_fit_json_round_trip(self, tmp_path):
        cube = simulate_cube(DepParams([1, 1, 1], [1, 1, 1]), 4, 10, seed=1)
        res = fit_pmle(cube, DesignMask((2, 0), 0), opts=FitOptions(restarts=0))
        write_report(res, tmp_path / "fit.json", kind="fit")
        obj = read_json(tmp_path / "fit.json")
        assert obj["schema"] == SCHEMA and obj["kind"] == "fit"
        assert DepParams.from_dict(obj["theta_hat"]) == res.theta_hat
        assert obj["objective"] == res.objective

    def test_non_finite_to_null(self):
        assert json.loads(dumps({"x": np.inf, "y": np.float32(1.5)})) == {
            "schema": SCHEMA, "x": None, "y": 1.5
        }
        assert to_jsonable(np.array([[1, 2]])) == [[1, 2]]

    def test_stable_output(self):
        obj = {"b": 1, "a": [np.float64(0.1)]}
        assert dumps(obj) == dumps(dict(reversed(list(obj.items()))))

    def test_write_error(self, tmp_path):
        with pytest.raises(DataError):
            write_report({"a": 1}, tmp_path / "missing" / "x.json")
