import json
import socket
import urllib.request
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from mileaks import attacks, datasets, learners
from mileaks.blackbox import BlackBoxModel, RemoteBlackBox, TransportError, http_query, query, query_count, serve
from mileaks.core import TrainConfig, ValidationError
from mileaks.datasets import SyntheticSpec, generate
from mileaks.learners import NeuralNet


def uniform_box(d=3, c=4):
    return BlackBoxModel(NeuralNet.zeros("logistic", [d, c]))


def post(address, body: bytes):
    req = urllib.request.Request(f"http://{address}/predict", data=body, headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=5) as r:
            return r.status, json.loads(r.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


def test_fresh_box_and_counting():
    bb = uniform_box()
    assert query_count(bb) == 0
    p = query(bb, [1.0, 2.0, 3.0])
    assert p.probs.tolist() == [0.25] * 4
    assert query_count(bb) == 1
    assert bb.query([0.5, 0.5, 0.5]) == bb.query([0.5, 0.5, 0.5])
    assert bb.query_count == 3


@pytest.mark.parametrize("bad", [[1.0, 2.0], [1.0, 2.0, 3.0, 4.0], [1.0, float("nan"), 0.0], ["a", 1, 2]])
def test_failed_queries_do_not_count(bad):
    bb = uniform_box()
    with pytest.raises(ValidationError):
        bb.query(bad)
    assert bb.query_count == 0


def test_box_is_opaque():
    bb = uniform_box()
    public = {n for n in dir(bb) if not n.startswith("_")}
    assert public == {"query", "query_with_id", "query_count", "input_dim", "num_classes"}
    with pytest.raises(AttributeError):
        bb.model = None


def test_concurrent_queries_are_counted_exactly():
    bb = uniform_box()
    with ThreadPoolExecutor(8) as pool:
        list(pool.map(lambda _: bb.query([0.0, 0.0, 0.0]), range(400)))
    assert bb.query_count == 400


def test_http_round_trip_is_exact():
    model = learners.train(
        generate(SyntheticSpec(num_points=40, num_classes=3, dimensionality=5, seed=1)), None,
        TrainConfig("mlp", epochs=5, hidden_units=8, seed=2),
    )
    bb = BlackBoxModel(model)
    local = BlackBoxModel(model)
    rng = np.random.default_rng(0)
    with serve(bb) as server:
        for x in rng.random((20, 5)):
            assert http_query(server.address, x) == local.query(x)
        remote = RemoteBlackBox(server.address)
        assert (remote.input_dim, remote.num_classes) == (5, 3)
        assert remote.query_count == 20


def test_uniform_box_over_http():
    bb = uniform_box()
    with serve(bb) as server:
        assert http_query(server.address, [1, 2, 3]).probs.tolist() == [0.25] * 4


@pytest.mark.parametrize("body", [b"{}", b"not json", b'{"features": "abc"}', b'{"features": [1, 2]}', b'{"features": [1, true, 2]}'])
def test_malformed_requests_get_400(body):
    bb = uniform_box()
    with serve(bb) as server:
        status, payload = post(server.address, body)
        assert status == 400 and "error" in payload
        with urllib.request.urlopen(f"http://{server.address}/stats", timeout=5) as r:
            assert json.loads(r.read())["queries"] == 0
    assert bb.query_count == 0


def test_http_query_reports_bad_input_as_validation_error():
    with serve(uniform_box()) as server:
        with pytest.raises(ValidationError):
            http_query(server.address, [1.0])


def test_unreachable_server_is_a_transport_error():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    with pytest.raises(TransportError):
        http_query(f"127.0.0.1:{port}", [1.0, 2.0, 3.0], timeout=1)
    with pytest.raises(TransportError):
        RemoteBlackBox(f"127.0.0.1:{port}", timeout=1)


def test_query_ids_are_sequential():
    bb = uniform_box()
    ids = [bb.query_with_id([0, 0, 0])[1] for _ in range(3)]
    assert ids == [1, 2, 3]


def test_adversary1_over_http_matches_in_process():
    ds = generate(SyntheticSpec(num_points=80, num_classes=4, dimensionality=6, noise=0.5, seed=3))
    plan = datasets.plan_standard_split(ds, 0)
    target = learners.train(ds, plan["target_train"], TrainConfig("mlp", epochs=20, hidden_units=16, seed=1))
    shadow = TrainConfig("mlp", epochs=20, hidden_units=16, seed=5)
    attack = TrainConfig("mlp", epochs=200, batch_size=1000, learning_rate=0.5, hidden_units=8, seed=6)
    local = attacks.adversary1(shadow, attack, ds, plan, BlackBoxModel(target))
    served = BlackBoxModel(target)
    with serve(served) as server:
        remote = RemoteBlackBox(server.address)
        out = attacks.adversary1(shadow, attack, ds, plan, remote)
        assert remote.query_count == plan["target_train"].size + plan["target_out"].size
    assert out.decisions.tolist() == local.decisions.tolist()
    assert np.array_equal(out.scores, local.scores)
