"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from oiqa_graph.kernels import _pykernels

try:
    from oiqa_graph.kernels import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    erp = np.ascontiguousarray(rng.uniform(size=(512, 1024, 3)))
    lat = np.arcsin(rng.uniform(-1, 1, 1000))
    lon = rng.uniform(-np.pi, np.pi, 1000)
    return {
        "sample_gnomonic 224px": lambda m: m.sample_gnomonic(erp, 0.3, 3.0, np.pi / 2, 224, False),
        "sample_gnomonic 224px nearest": lambda m: m.sample_gnomonic(erp, 0.3, 3.0, np.pi / 2, 224, True),
        "haversine_matrix V=1000": lambda m: m.haversine_matrix(lat, lon),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = {"numpy": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("Cython extension not built; timing the numpy fallback only")
    print(f"{'kernel':<32}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, fn in cases(np.random.default_rng(0)).items():
        times = {b: min(timeit.repeat(lambda: fn(m), number=1, repeat=args.repeat)) for b, m in backends.items()}
        line = f"{name:<32}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values())
        if len(times) == 2:
            line += f"{times['numpy'] / times['cython']:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
