"""Regenerate theta_p07.json: frequency of the origin's cluster reaching radius 64 at p=0.7."""
import json
from pathlib import Path

from scipy.stats import binomtest

from percwalk.env import Environment, in_infinite_cluster, stream_seed

SEED, N = 777, 10_000

hits = sum(in_infinite_cluster(Environment(stream_seed(SEED, i), 0.7, 2), (0, 0), 64) for i in range(N))
ci = binomtest(hits, N).proportion_ci(0.99)
out = {"seed": SEED, "n": N, "value": hits / N, "ci": [ci.low, ci.high]}
(Path(__file__).parent / "theta_p07.json").write_text(json.dumps(out, indent=2) + "\n")
print(out)
