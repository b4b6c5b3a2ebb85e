import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from predrep import envs, io, sf, sr
from predrep import mdp as mdplib
from predrep.explore import eigenoption


class TestCSV:
    @given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=6),
                      elements=st.floats(allow_nan=True, allow_infinity=False, width=64)))
    @settings(max_examples=50, deadline=None)
    def test_round_trip(self, a):
        back, meta = io.csv_to_matrix(io.matrix_to_csv(a, {"kind": "test"}))
        np.testing.assert_array_equal(back, a)
        assert meta == {"shape": list(a.shape), "kind": "test"}

    def test_nan_is_empty_cell(self):
        text = io.matrix_to_csv([[1.0, np.nan]])
        assert text.splitlines()[-1] == "1,"

    def test_vector_becomes_row(self):
        back, meta = io.csv_to_matrix(io.matrix_to_csv([1.0, 2.0, 3.0]))
        assert meta["shape"] == [1, 3]
        np.testing.assert_array_equal(back, [[1.0, 2.0, 3.0]])

    def test_rank_three_rejected(self):
        with pytest.raises(ValueError):
            io.matrix_to_csv(np.zeros((2, 2, 2)))

    def test_sr_header(self):
        mdp = envs.swap_chain(0.5)
        m = sr.sr_closed_form(mdp, mdplib.uniform_policy(mdp), "uniform")
        back, meta = io.csv_to_matrix(io.sr_to_csv(m))
        np.testing.assert_array_equal(back, m.m)
        assert meta["gamma"] == 0.5 and meta["policy_id"] == "uniform"

    def test_action_sr_layout(self):
        mdp = envs.swap_chain(0.5)
        h = sr.sr_action_closed_form(mdp, mdplib.uniform_policy(mdp))
        back, meta = io.csv_to_matrix(io.sr_to_csv(h))
        assert meta["layout"] == "state-action rows" and meta["n_actions"] == 2
        np.testing.assert_array_equal(back.reshape(2, 2, 2), np.asarray(h))


class TestJSON:
    def test_numpy_types_and_sorted_keys(self):
        text = io.to_json({"b": np.arange(2), "a": np.float64(1.5), "c": {3, 1}})
        assert json.loads(text) == {"a": 1.5, "b": [0, 1], "c": [1, 3]}
        assert text.index('"a"') < text.index('"b"')

    def test_to_dict_objects(self):
        option = eigenoption(envs.track(3, 0.9), [0.0, 1.0, 2.0])
        assert json.loads(io.to_json(option))["termination"] == [2]

    def test_unknown_type(self):
        with pytest.raises(TypeError):
            io.to_json(object())

    def test_sf_library(self):
        mdp = envs.swap_chain(0.5)
        lib = [sf.sf_closed_form(mdp, mdplib.uniform_policy(mdp), np.eye(2), "u")]
        data = json.loads(io.sf_library_to_json(lib))
        assert data[0]["policy_id"] == "u"
        np.testing.assert_allclose(data[0]["psi"], lib[0].psi)

    def test_write_text_creates_parents(self, tmp_path):
        path = io.write_text(tmp_path / "a" / "b.txt", "hi")
        assert path.read_text() == "hi"
