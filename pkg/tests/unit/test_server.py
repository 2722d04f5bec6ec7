from collections import Counter

import numpy as np
import pytest

from ssdsgd.errors import ProtocolError
from ssdsgd.numkernel import Model, ModelKind
from ssdsgd.optim import HyperParams
from ssdsgd.psruntime.message import Message, MessageKind
from ssdsgd.psruntime.server import ParameterServer, ParamShard, server_handle


def push(worker_id, iteration, grad, key=0):
    return Message(kind=MessageKind.PUSH, key=key, worker_id=worker_id, iteration=iteration, payload=np.asarray(grad, dtype=np.float64))


def pull(worker_id, version, key=0):
    return Message(kind=MessageKind.PULL_REQ, key=key, worker_id=worker_id, iteration=version)


@pytest.fixture
def hp():
    return HyperParams(lr=0.1, momentum=0.0, workers=2)


class TestParamShard:
    def test_handle_push_waits_for_all_workers(self, hp):
        shard = ParamShard(key=0, weight=np.zeros(2), hp=hp)
        replies = shard.handle(push(0, 1, [1.0, 1.0]))
        assert [reply.kind for reply in replies] == [MessageKind.PUSH_ACK]
        assert shard.version == 0 and shard.pending_push_count == 1

        shard.handle(push(1, 1, [3.0, 3.0]))
        assert shard.version == 1
        assert np.allclose(shard.read(), [-0.2, -0.2])
        assert shard.updates_folded == Counter({2: 1})

    def test_handle_pull_deferred(self, hp):
        shard = ParamShard(key=0, weight=np.zeros(1), hp=hp)
        shard.handle(push(0, 1, [1.0]))
        assert shard.handle(pull(0, 1)) == []
        assert shard.deferred_pulls == 1

        replies = shard.handle(push(1, 1, [1.0]))
        responses = [reply for reply in replies if reply.kind == MessageKind.PULL_RESP]
        assert len(responses) == 1
        assert responses[0].worker_id == 0 and responses[0].iteration == 1
        assert np.allclose(responses[0].payload, [-0.1])
        assert shard.deferred_pulls == 0

    def test_handle_pull_committed(self, hp):
        shard = ParamShard(key=0, weight=np.ones(1), hp=hp)
        (response,) = shard.handle(pull(1, 0))
        assert response.kind == MessageKind.PULL_RESP and response.iteration == 0
        assert np.array_equal(response.payload, [1.0])

    def test_fold_order_independent_of_arrival(self, hp):
        grads = {0: np.array([0.1, 0.7]), 1: np.array([0.3, 1e-9])}
        results = []
        for order in ([0, 1], [1, 0]):
            shard = ParamShard(key=0, weight=np.zeros(2), hp=hp)
            for worker_id in order:
                shard.handle(push(worker_id, 1, grads[worker_id]))
            results.append(shard.read())
        assert np.array_equal(results[0], results[1])

    def test_handle_duplicate_push(self, hp):
        shard = ParamShard(key=0, weight=np.zeros(1), hp=hp)
        shard.handle(push(0, 1, [1.0]))
        with pytest.raises(ProtocolError):
            shard.handle(push(0, 1, [1.0]))

    def test_handle_stale_push(self, hp):
        shard = ParamShard(key=0, weight=np.zeros(1), hp=HyperParams(workers=1))
        shard.handle(push(0, 1, [1.0]))
        shard._last_push.clear()
        with pytest.raises(ProtocolError):
            shard.handle(push(0, 1, [1.0]))

    def test_handle_wrong_key(self, hp):
        with pytest.raises(ProtocolError):
            ParamShard(key=0, weight=np.zeros(1), hp=hp).handle(push(0, 1, [1.0], key=1))

    def test_handle_wrong_kind(self, hp):
        with pytest.raises(ProtocolError):
            ParamShard(key=0, weight=np.zeros(1), hp=hp).handle(Message(kind=MessageKind.PUSH_ACK, key=0, worker_id=0, iteration=1))

    def test_handle_payload_size(self, hp):
        with pytest.raises(ProtocolError):
            ParamShard(key=0, weight=np.zeros(2), hp=hp).handle(push(0, 1, [1.0]))

    def test_asynchronous(self, hp):
        shard = ParamShard(key=0, weight=np.zeros(1), hp=hp, synchronous=False, use_momentum=False)
        shard.handle(push(1, 1, [1.0]))
        assert shard.version == 1 and np.allclose(shard.read(), [-0.05])
        (response,) = shard.handle(pull(0, 5))
        assert np.allclose(response.payload, [-0.05])

        shard.handle(push(0, 1, [1.0]))
        assert np.allclose(shard.read(), [-0.1])
        assert shard.updates_folded == Counter({1: 2})

    def test_asynchronous_single_worker(self):
        shard = ParamShard(key=0, weight=np.zeros(1), hp=HyperParams(lr=0.1, momentum=0.0, workers=1), synchronous=False, use_momentum=False)
        shard.handle(push(0, 1, [1.0]))
        assert np.allclose(shard.read(), [-0.1])

    def test_handle_reordered_push(self, hp):
        shard = ParamShard(key=0, weight=np.zeros(1), hp=hp, synchronous=False)
        shard.handle(push(0, 3, [1.0]))
        with pytest.raises(ProtocolError, match="reordered"):
            shard.handle(push(0, 2, [1.0]))
        shard.handle(push(1, 2, [1.0]))
        assert shard.version == 2

    def test_push_bookkeeping_bounded(self, hp):
        shard = ParamShard(key=0, weight=np.zeros(1), hp=hp)
        for iteration in range(1, 201):
            shard.handle(push(0, iteration, [0.0]))
            shard.handle(push(1, iteration, [0.0]))
        assert shard._last_push == {0: 200, 1: 200}
        assert shard.updates_folded == Counter({2: 200})
        assert not shard._buckets

    def test_momentum(self):
        shard = ParamShard(key=0, weight=np.zeros(1), hp=HyperParams(lr=0.1, momentum=0.9, workers=1))
        shard.handle(push(0, 1, [1.0]))
        shard.handle(push(0, 2, [1.0]))
        assert shard.read()[0] == pytest.approx(-0.1 - 0.19)


def test_server_handle(hp):
    shard = ParamShard(key=0, weight=np.zeros(1), hp=hp)
    replaced = HyperParams(lr=1.0, momentum=0.0, workers=1)
    server_handle(shard, push(0, 1, [1.0]), hp=replaced)
    assert np.allclose(shard.read(), [-1.0])


class TestParameterServer:
    def test_build(self, hp):
        model = Model(ModelKind.MLP_2LAYER, input_dim=3, hidden=2)
        weight = np.arange(model.size, dtype=np.float64)
        servers = ParameterServer.build(model.layer_spec, weight, hp, num_servers=3)
        assert [sorted(server.shards) for server in servers] == [[0, 3], [1], [2]]
        assert np.array_equal(servers[0].shards[3].read(), model.layer_spec[3].of(weight))
