"""Tail-index recovery: fit kappa on synthetic samples for several true values."""

import numpy as np

from _common import run

result = run("fit", {"kappa": [1.5, 3.0, 10.0], "n": 100_000, "repetitions": 20}, __doc__)
fits = result.documents["fits"]["fits"]
for k in sorted({f["kappa_true"] for f in fits}):
    hats = np.array([f["kappa_hat"] for f in fits if f["kappa_true"] == k])
    hits = int(np.sum(np.abs(hats / k - 1) <= 0.1))
    print(f"kappa {k:>5}: median kappa_hat {np.median(hats):.3f}, within 10% in {hits}/{hats.size}")
