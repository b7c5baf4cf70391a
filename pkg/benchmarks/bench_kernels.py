"""Compare the compiled kernels with the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``.  Both backends are imported
directly, so the environment switch is not needed.
"""

import argparse
import timeit

import numpy as np

from dbuofdm import _kernels_py
from dbuofdm.fixedpoint import FixedCascade, FixedComplex
from dbuofdm.unitary import HouseholderParams, normalized_rows

try:
    from dbuofdm import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def bench_chain(mod, n_data, k, batch, repeat):
    rng = np.random.default_rng(0)
    u = normalized_rows(rng.standard_normal((k, n_data)) + 1j * rng.standard_normal((k, n_data)))
    x = rng.standard_normal((batch, n_data)) + 1j * rng.standard_normal((batch, n_data))
    return min(timeit.repeat(lambda: mod.householder_chain(x.copy(), u), number=1, repeat=repeat))


def bench_fixed(mod, n_data, k, batch, repeat):
    rng = np.random.default_rng(1)
    casc = FixedCascade(HouseholderParams.random(n_data, k, 1, rng))
    st = casc._stages["forward"][0]
    f = casc.formats
    x = FixedComplex.from_complex(0.1 * (rng.standard_normal((batch, n_data))
                                         + 1j * rng.standard_normal((batch, n_data))), f.x)

    def run():
        mod.fixed_merged_stages(x.re.copy(), x.im.copy(), *st, f.x.total_bits, f.x.frac_bits,
                                f.u.frac_bits, f.inter.total_bits, f.inter.frac_bits)
    return min(timeit.repeat(run, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=2048)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("numpy", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    print(f"{'kernel':<22}{'N_data':>7}{'K':>5}" + "".join(f"{n:>12}" for n, _ in backends) + "   speedup")
    for name, fn in (("householder_chain", bench_chain), ("fixed_merged_stages", bench_fixed)):
        for n_data, k in ((46, 16), (206, 128)):
            times = [fn(m, n_data, k, args.batch, args.repeat) for _, m in backends]
            row = f"{name:<22}{n_data:>7}{k:>5}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
            if len(times) == 2:
                row += f"   {times[0] / times[1]:7.1f}x"
            print(row)


if __name__ == "__main__":
    main()
