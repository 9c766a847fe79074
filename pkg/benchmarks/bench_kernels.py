"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--sizes 8 64 256] [--repeat 5]

Times the tridiagonal bilinear solve on its own and one objective-plus-gradient
evaluation of the surface subproblem, which is what each BFGS step pays.
"""

import argparse
import timeit

import numpy as np

from bdris import kernels
from bdris.circuit import build_model
from bdris.geometry import FadingSpec, draw_channels, localized_scenario
from bdris.optimizer import InnerProblem, effective_siso


def operands(n, seed=0):
    rng = np.random.default_rng(seed)
    d = 1.0 + np.abs(rng.standard_normal(n)) + 1j * rng.standard_normal(n)
    e = 0.5 * (rng.standard_normal(n - 1) + 1j * rng.standard_normal(n - 1))
    hr = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    ht = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return d, e, hr, ht


def best_of(fn, repeat):
    timer = timeit.Timer(fn)
    loops, _ = timer.autorange()
    return min(timer.repeat(repeat, loops)) / loops


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[8, 64, 256])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)} (selected at import: {kernels.BACKEND})")
    print(f"{'case':<22}{'N':>6}" + "".join(f"{b + ' (us)':>16}" for b in backends) + f"{'speedup':>10}")
    for n in args.sizes:
        ops = operands(n)
        sc = localized_scenario(n)
        model = build_model("half_wave_lossy", "tridiagonal", sc.ris_positions, alpha_db_per_m=0.05)
        eff = effective_siso(draw_channels(sc, FadingSpec("rayleigh", 0)), [1.0], [1.0])
        x = np.random.default_rng(1).uniform(-1, 1, 2 * n - 1)
        cases = {
            "tridiag_bilinear": lambda b: (lambda: kernels.get_backend(b).tridiag_bilinear(*ops)),
            "value_and_grad": lambda b: (lambda prob=InnerProblem(eff, model, 1.0, backend=b):
                                         prob.value_and_grad(x)),
        }
        for name, make in cases.items():
            times = {b: best_of(make(b), args.repeat) for b in backends}
            row = f"{name:<22}{n:>6}" + "".join(f"{1e6 * times[b]:>16.2f}" for b in backends)
            if "cython" in times:
                row += f"{times['python'] / times['cython']:>9.1f}x"
            print(row)


if __name__ == "__main__":
    main()
