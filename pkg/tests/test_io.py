import json

import numpy as np
import pytest

from tdsbm.discrete import DiscreteModel
from tdsbm.io import FormatError, load_model, load_network, model_from_dict, model_to_dict, save_model, save_network
from tdsbm.mixed import MixedModel
from tdsbm.network import MultilayerNetwork

from conftest import random_network


class TestNetworkDirectory:
    def test_roundtrip(self, rng, tmp_path):
        net = random_network(rng, 5, 4)
        net = MultilayerNetwork.from_entries(net.src, net.dst, net.layer, net.count, 5, 4,
                                             ["a", "b", "007", "d", "e"], [(1.5, 2.25), None, None, None, (0.1, 0.2)])
        save_network(net, tmp_path / "n")
        back = load_network(tmp_path / "n")
        np.testing.assert_array_equal(back.to_dense(), net.to_dense())
        assert back.node_ids == net.node_ids
        assert back.coords == net.coords

    def test_empty_edges(self, tmp_path):
        net = MultilayerNetwork.from_entries([], [], [], [], 2, 3)
        save_network(net, tmp_path)
        assert load_network(tmp_path).total == 0

    def test_not_a_network(self, tmp_path):
        with pytest.raises(FormatError):
            load_network(tmp_path)
        (tmp_path / "network.json").write_text(json.dumps({"format": "other"}))
        with pytest.raises(FormatError):
            load_network(tmp_path)


class TestModelFile:
    def test_mixed_roundtrip(self, rng, tmp_path):
        m = MixedModel(rng.random((4, 2)), rng.random((2, 2, 3)))
        save_model(tmp_path / "m.json", m, node_ids=list("abcd"), loglik=-12.5, seed=3)
        back, ids = load_model(tmp_path / "m.json")
        np.testing.assert_array_equal(back.C, m.C)
        np.testing.assert_array_equal(back.omega, m.omega)
        assert ids == list("abcd")

    def test_discrete_roundtrip(self, rng):
        m = DiscreteModel([0, 1, 1], [1.0, 0.4, 0.6], rng.random((2, 2, 5)), kind="static")
        back, ids = model_from_dict(json.loads(json.dumps(model_to_dict(m))))
        assert back.kind == "static"
        np.testing.assert_array_equal(back.labels, m.labels)
        assert ids == ["0", "1", "2"]

    def test_non_finite_loglik_stored_as_null(self):
        d = model_to_dict(MixedModel(np.ones((1, 1)), np.ones((1, 1, 1))), loglik=float("-inf"))
        assert d["loglik"] is None

    @pytest.mark.parametrize("patch", [{"schema_version": 99}, {"kind": "hmm"}, {"C": [[1.0]]}])
    def test_bad_files(self, patch):
        d = model_to_dict(MixedModel(np.ones((2, 1)), np.ones((1, 1, 1))))
        d.update(patch)
        with pytest.raises(FormatError):
            model_from_dict(d)
