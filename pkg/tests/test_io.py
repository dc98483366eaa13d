import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hodt import CorruptModelError, CSVParseError, Dataset, hodt
from hodt.io import Model, read_csv, write_csv

from conftest import random_dataset


def _model(seed=0, degree=1):
    data = random_dataset(seed, 12, 2)
    sol = hodt(data, 2, degree=degree)
    return Model(sol.tree, degree, 2, {"K": 2, "loss": sol.loss}), data


class TestCSV:
    @given(seed=st.integers(0, 10_000))
    def test_round_trip_is_bit_exact(self, seed, tmp_path_factory):
        data = random_dataset(seed, 5, 3, n_classes=4)
        data = Dataset(data.points * 1e3 - 17.123456789, data.labels, data.n_classes)
        path = tmp_path_factory.mktemp("csv") / "d.csv"
        write_csv(path, data)
        back = read_csv(path, n_classes=4)
        np.testing.assert_array_equal(back.points, data.points)
        np.testing.assert_array_equal(back.labels, data.labels)

    @pytest.mark.parametrize(
        "text,line",
        [
            ("", 1),
            ("x,y,label\n1,2,0\n", 1),
            ("f0,f1,label\n1,2,0\n1,2\n", 3),
            ("f0,f1,label\n1,abc,0\n", 2),
            ("f0,f1,label\n1,2,0\n3,4,-1\n", 3),
            ("f0,f1,label\n1,nan,0\n", 2),
        ],
    )
    def test_errors_carry_line_numbers(self, tmp_path, text, line):
        path = tmp_path / "bad.csv"
        path.write_text(text)
        with pytest.raises(CSVParseError) as info:
            read_csv(path)
        assert info.value.lineno == line
        assert f":{line}:" in str(info.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CSVParseError):
            read_csv(tmp_path / "nope.csv")

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("f0,label\n1.5,1\n\n2.5,0\n")
        data = read_csv(path)
        assert data.n == 2 and data.n_classes == 2


class TestModel:
    def test_round_trip_predictions(self, tmp_path):
        model, data = _model()
        path = tmp_path / "m.json"
        model.save(path)
        back = Model.load(path)
        np.testing.assert_array_equal(back.predict(data.points), model.predict(data.points))
        for r, h in model.tree.hyperplanes.items():
            np.testing.assert_array_equal(back.tree.hyperplanes[r].normal, h.normal)
        assert back.dumps() == model.dumps()

    def test_quadratic_model(self):
        model, data = _model(1, degree=2)
        doc = model.to_dict()
        assert doc["G"] == 5 and len(doc["rules"][0]["normal"]) == 6
        np.testing.assert_array_equal(Model.loads(model.dumps()).predict(data.points), model.predict(data.points))

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda d: d.update(format="other"),
            lambda d: d.update(format_version=99),
            lambda d: d.update(G=7),
            lambda d: d["rules"][0].update(normal=["1.0"]),
            lambda d: d["nodes"][0].update(rule=12345),
            lambda d: d["nodes"][0].update(pos=0),
            lambda d: d.pop("nodes"),
            lambda d: d.update(nodes=[]),
        ],
    )
    def test_corrupt_documents(self, mutate):
        model, _ = _model()
        doc = json.loads(model.dumps())
        mutate(doc)
        with pytest.raises(CorruptModelError):
            Model.from_dict(doc)

    def test_not_json(self):
        with pytest.raises(CorruptModelError):
            Model.loads("{not json")
        with pytest.raises(CorruptModelError):
            Model.loads("[1, 2]")

    def test_wrong_feature_count(self):
        model, _ = _model()
        with pytest.raises(ValueError):
            model.predict(np.zeros((2, 3)))
