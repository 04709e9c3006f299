"""Escape success rates on the toy loss: power-law dynamic over lambda1 against SGD, at two loss scales."""

from _common import run

result = run(
    "success-rate",
    {"lambda1": [0.0, 8.0, 16.0, 32.0, 64.0], "scales": [1.0, 0.9], "eta": 0.025, "steps": 500, "runs": 100},
    __doc__,
)
doc = result.documents["rates"]
print(f"lambda2 (matched to batch-1 noise at w*) = {doc['lambda2']:.4f}")
for p in doc["points"]:
    label = f"lambda1={p['lambda1']:g}" if p["dynamic"] == "power_law" else "SGD"
    print(f"scale {p['scale']:<4} {label:<14} rate {p['rate']:.2f}")
