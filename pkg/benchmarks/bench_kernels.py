"""Compiled core against the numpy fallback on pipeline-sized inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Sizes follow a 30 s clip: about 2600 onset frames by 441 tempo bins for the
periodicity path and pulse synthesis, and 120 tatums by 80 bar states for
Viterbi.
"""

import argparse
import timeit

import numpy as np

from downbeat import kernels


def cases(rng):
    mag = rng.random((2600, 441))
    weights = np.array([0.5, 0.7, 1.0, 0.7, 0.5])
    omega = rng.uniform(0.05, 0.5, 2600)
    offset = rng.uniform(-np.pi, np.pi, 2600)
    window = np.hanning(517)
    n = 80
    log_a = np.log(rng.dirichlet(np.ones(n), size=n))
    log_e = np.log(rng.random((120, n)))
    log_pi = np.full(n, -np.log(n))
    return {
        "periodicity_dp": lambda m: m.periodicity_dp(mag, weights),
        "overlap_add_cosines": lambda m: m.overlap_add_cosines(2600, omega, offset, window),
        "viterbi_decode": lambda m: m.viterbi_decode(log_pi, log_a, log_e),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    compiled = kernels.compiled_backend()
    backends = {"python": kernels.python_backend()}
    if compiled is not None:
        backends["compiled"] = compiled
    print(f"{'kernel':<22}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases(np.random.default_rng(0)).items():
        best = {b: min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat))
                for b, m in backends.items()}
        row = f"{name:<22}" + "".join(f"{1e3 * t:>10.2f}ms" for t in best.values())
        if "compiled" in best:
            row += f"{best['python'] / best['compiled']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
