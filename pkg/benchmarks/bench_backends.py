"""Time the compiled (numba) and interpreted (numpy) kernel backends.

Each backend runs in its own interpreter because the choice is fixed at import
time. The numba column excludes compilation: every workload is warmed up once
before the timed repetitions.

    python benchmarks/bench_backends.py [--repeats 3] [--json out.json]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from hessae import _backend, neural as nn, svm, wlppd

repeats = int(sys.argv[1])
g = np.random.default_rng(0)

X_ae = g.random((2000, 16))
sp = nn.SparsityConfig(0.05, 4.0, 1e-4)

def ae():
    nn.train_autoencoder(X_ae, 80, sp, nn.TrainConfig(epochs=2), np.random.default_rng(1))

X_svm = g.normal(size=(400, 10))
y_svm = np.where(X_svm[:, 0] * X_svm[:, 1] > 0, 1.0, -1.0)

def smo():
    svm.train_binary(X_svm, y_svm, 10.0, svm.KernelSpec("rbf", 0.1))

X_knn = g.random((2000, 16))

def knn():
    wlppd.knn_indices(X_knn, 5)

out = {"backend": _backend.BACKEND}
for name, fn in (("autoencoder 2 epochs, 2000x16 -> 80", ae),
                 ("SMO binary, 400 rows rbf", smo),
                 ("kNN table, 2000 rows k=5", knn)):
    fn()
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    out[name] = min(times)
print(json.dumps(out))
"""


def run(backend: str, repeats: int) -> dict:
    env = {**os.environ, "HESSAE_BACKEND": backend}
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeats)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--json", help="also write the raw timings here")
    args = ap.parse_args(argv)
    fast, slow = run("numba", args.repeats), run("numpy", args.repeats)
    names = [k for k in fast if k != "backend"]
    width = max(map(len, names))
    print(f"{'workload':<{width}}  {'numba (s)':>10}  {'numpy (s)':>10}  {'speed-up':>8}")
    for k in names:
        print(f"{k:<{width}}  {fast[k]:>10.4f}  {slow[k]:>10.4f}  {slow[k] / fast[k]:>7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"numba": fast, "numpy": slow}, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
