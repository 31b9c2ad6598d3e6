import json
import os
import subprocess
import sys

import numpy as np
import pytest

PROBE = r"""
import json
import numpy as np
from hessae import _backend, neural as nn, svm, wlppd

g = np.random.default_rng(0)
X = g.random((40, 6))
enc, dec, hist = nn.train_autoencoder(X, 4, nn.SparsityConfig(0.05, 3.0, 1e-4),
                                      nn.TrainConfig(epochs=3), np.random.default_rng(1))
y = np.where(X[:, 0] + X[:, 1] > 1.0, 1.0, -1.0)
m = svm.train_binary(X, y, 1.0, svm.KernelSpec("rbf", 0.5))
print(json.dumps({
    "backend": _backend.BACKEND,
    "losses": hist.losses,
    "enc": enc.weights.ravel().tolist(),
    "support": m.support.tolist(),
    "bias": m.bias,
    "knn": wlppd.knn_indices(np.round(X, 1), 3).tolist(),
}))
"""


def _probe(backend):
    env = {**os.environ, "HESSAE_BACKEND": backend}
    out = subprocess.run([sys.executable, "-c", PROBE], env=env, capture_output=True, text=True,
                         timeout=600, check=True)
    return json.loads(out.stdout)


@pytest.fixture(scope="module")
def both():
    return _probe("numba"), _probe("numpy")


def test_backend_flag_is_honoured(both):
    fast, slow = both
    assert (fast["backend"], slow["backend"]) == ("numba", "numpy")


def test_backends_agree(both):
    fast, slow = both
    np.testing.assert_allclose(fast["losses"], slow["losses"], rtol=1e-9)
    np.testing.assert_allclose(fast["enc"], slow["enc"], rtol=1e-8, atol=1e-12)
    assert fast["support"] == slow["support"]
    assert fast["bias"] == pytest.approx(slow["bias"], rel=1e-9)
    assert fast["knn"] == slow["knn"]
