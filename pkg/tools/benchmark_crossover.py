"""Time both interval series across t / a^2 to choose the crossover constant.

Prints one line per ratio with the best-of-N wall time of each series on a
9 x 9 interior grid and the faster method.  The crossover constant should sit
where the faster method changes.
"""

import os
import sys
import time

import numpy as np

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, BASE_DIR)
from heatlab.kernel_core import Interval, evaluate_series, standard_offsets  # noqa: E402


def _best_time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def benchmark(a=0.5, ratios=None, repeats=5):
    dom = Interval(a)
    nodes = -a + 2.0 * a * standard_offsets(9)
    x, y = np.meshgrid(nodes, nodes, indexing="ij")
    ratios = np.geomspace(1e-3, 10.0, 17) if ratios is None else ratios
    rows = []
    for ratio in ratios:
        t = float(ratio) * a * a
        timings = {
            method: _best_time(lambda m=method: evaluate_series(dom, x, y, t, method=m), repeats)
            for method in ("images", "eigen")
        }
        rows.append((float(ratio), timings["images"], timings["eigen"]))
    return rows


def main():
    print(f"{'t/a^2':>10} {'images [s]':>12} {'eigen [s]':>12}  faster")
    for ratio, images, eigen in benchmark():
        faster = "images" if images <= eigen else "eigen"
        print(f"{ratio:10.4g} {images:12.3e} {eigen:12.3e}  {faster}")


if __name__ == "__main__":
    main()
