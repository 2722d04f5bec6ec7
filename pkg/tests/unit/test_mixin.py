import numpy as np

from ssdsgd.mixin import ReprMixin


class Holder(ReprMixin):
    def __init__(self):
        self.weights = np.zeros((2, 3))
        self.name = "shard"
        self._hidden = 1


class TestReprMixin:
    def test___repr__(self):
        assert repr(Holder()) == "Holder(weights=<float64[2, 3]>, name='shard')"
