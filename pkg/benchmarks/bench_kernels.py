"""Compiled vs pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Times the two hot loops on the same inputs with each backend and checks
that the outputs agree: building every ladder matrix of a ~2400-state
registry, and inverting a categorical CDF for 10^6 uniforms.
"""
import argparse
import timeit

import numpy as np

from fockcollapse import _kernels_py
from fockcollapse.fock import BOSON, FERMION, Mode, ParticleSpecies, Registry

try:
    from fockcollapse import _kernels as _kernels_cy
except ImportError:  # extension not built
    _kernels_cy = None


def bench_registry() -> Registry:
    species = [ParticleSpecies("b", BOSON, max_occupation=4), ParticleSpecies("f", FERMION)]
    modes = [Mode("b", (k,)) for k in range(5)] + [Mode("f", (k,), s) for k in range(3) for s in (0, 1)]
    return Registry(species, modes, n_max=5)


def ladder_all(backend, reg):
    t = reg._kernel_tables
    return [backend.ladder_matrix(*t, reg.n_max, k, d) for k in range(len(reg.modes)) for d in (True, False)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    reg = bench_registry()
    reg.basis()
    rng = np.random.default_rng(0)
    p = rng.random(16)
    cdf = np.cumsum(p / p.sum())
    cdf[-1] = 1.0
    u = rng.random(1_000_000)

    cases = {
        f"ladder_matrix (dim {reg.dimension()}, {2 * len(reg.modes)} operators)": lambda b: ladder_all(b, reg),
        "draw_categorical (1e6 draws, 16 outcomes)": lambda b: b.draw_categorical(cdf, u),
    }
    backends = {"python": _kernels_py}
    if _kernels_cy is not None:
        backends["cython"] = _kernels_cy
    else:
        print("compiled extension not available; timing the Python fallback only")

    print(f"{'kernel':48s} {'backend':8s} {'best [s]':>10s} {'speedup':>8s}")
    for name, fn in cases.items():
        base = None
        outs = {}
        for label, backend in backends.items():
            best = min(timeit.repeat(lambda: fn(backend), number=1, repeat=args.repeat))
            outs[label] = fn(backend)
            base = best if base is None else base
            print(f"{name:48s} {label:8s} {best:10.4f} {base / best:7.1f}x")
        if len(outs) == 2:
            a, b = outs["python"], outs["cython"]
            same = (all(all(np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(p[:3], q[:3]))
                        for p, q in zip(a, b)) if isinstance(a, list) else np.array_equal(a, np.asarray(b)))
            print(f"{'':48s} outputs identical: {same}")


if __name__ == "__main__":
    main()
