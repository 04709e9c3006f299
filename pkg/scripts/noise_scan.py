"""Minibatch-noise trace along the (1, 1) direction through the toy-loss minimum, with a quadratic fit."""

from _common import run

result = run("noise-scan", {"points": 10, "draws": 2000, "batch_size": 1}, __doc__)
fit = result.documents["fit"]
print(f"R^2 = {fit['r_squared']:.4f}")
print(f"fitted argmin offset = {fit['argmin_offset']:.3g} (grid step {fit['grid_step']:.3g})")
