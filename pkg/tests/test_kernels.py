import os
import subprocess
import sys

import numpy as np
import pytest

from fockcollapse import _kernels_py, fock, kernels

cy = pytest.importorskip("fockcollapse._kernels", reason="compiled kernels not built")


def _tables(reg):
    reg.basis()
    return reg._kernel_tables


@pytest.mark.parametrize("seed", range(6))
def test_ladder_backends_agree(seed):
    rng = np.random.default_rng(seed)
    reg = fock.random_registry(rng, max_dim=512)
    t = _tables(reg)
    for k in range(len(reg.modes)):
        for dagger in (True, False):
            a = cy.ladder_matrix(*t, reg.n_max, k, dagger)
            b = _kernels_py.ladder_matrix(*t, reg.n_max, k, dagger)
            for x, y in zip(a[:3], b[:3]):
                assert np.array_equal(np.asarray(x), np.asarray(y))
            assert bool(a[3]) == bool(b[3])


def test_draw_categorical_agree():
    rng = np.random.default_rng(0)
    p = rng.random(7)
    cdf = np.cumsum(p / p.sum())
    cdf[-1] = 1.0
    u = rng.random(10_000)
    u[:3] = [0.0, cdf[2], np.nextafter(1.0, 0)]
    a = np.asarray(cy.draw_categorical(cdf, u))
    b = _kernels_py.draw_categorical(cdf, u)
    assert np.array_equal(a, b)
    assert np.array_equal(b, np.minimum(np.searchsorted(cdf, u, side="right"), 6))


def test_default_backend_is_compiled():
    if os.environ.get("FOCKCOLLAPSE_PURE_PYTHON"):
        pytest.skip("fallback forced by environment")
    assert kernels.BACKEND == "cython"


def test_env_forces_fallback():
    code = "import fockcollapse as f; print(f.BACKEND)"
    env = dict(os.environ, FOCKCOLLAPSE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_fallback_gives_same_physics(tmp_path):
    dest = tmp_path / "s.npy"
    code = ("import sys, numpy as np, fockcollapse as f\n"
            "from fockcollapse import models, dynamics\n"
            "assert f.BACKEND == 'python'\n"
            "S = dynamics.extract_s_matrix(models.pair_production_toy(), 500.0)\n"
            "np.save(sys.argv[1], S.entries)\n")
    env = dict(os.environ, FOCKCOLLAPSE_PURE_PYTHON="1")
    subprocess.run([sys.executable, "-c", code, str(dest)], env=env, check=True)
    from fockcollapse import dynamics, models
    S = dynamics.extract_s_matrix(models.pair_production_toy(), 500.0)
    assert np.abs(np.load(dest) - S.entries).max() < 1e-12
