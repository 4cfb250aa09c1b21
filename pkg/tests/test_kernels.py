import os
import subprocess
import sys

import numpy as np
import pytest

from stokes_biot import _kernels
from stokes_biot.forms import _gauss01


def _rules():
    xg, wg = _gauss01(12)
    vg, vw = _gauss01(16)
    return xg, wg, vg, vw


@pytest.mark.parametrize("seed", range(4))
def test_slobodeckij_variants_agree(seed):
    rng = np.random.default_rng(seed)
    s = np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 1.0, 9))])
    a = _kernels.slobodeckij_gram_numba(s, *_rules())
    b = _kernels.slobodeckij_gram_numpy(s, *_rules())
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(a, a.T, atol=1e-14)


@pytest.mark.parametrize("seed", range(4))
def test_gauss_variants_agree(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(30, 30))
    B = rng.normal(size=(30, 2))
    x1, ok1 = _kernels.gauss_solve_numba(A.copy(), B.copy(), 1e-14)
    x2, ok2 = _kernels.gauss_solve_numpy(A.copy(), B.copy(), 1e-14)
    assert ok1 and ok2
    np.testing.assert_allclose(x1, np.linalg.solve(A, B), rtol=1e-10)
    np.testing.assert_allclose(x1, x2, rtol=1e-12)


def test_gauss_flags_singular():
    A = np.ones((3, 3))
    for fn in (_kernels.gauss_solve_numba, _kernels.gauss_solve_numpy):
        _, ok = fn(A.copy(), np.ones((3, 1)), 1e-14)
        assert not ok


def test_env_flag_selects_numpy():
    code = "from stokes_biot import _kernels as k; print(k.USE_NUMBA, k.gauss_solve is k.gauss_solve_numpy)"
    env = dict(os.environ, STOKES_BIOT_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.split() == ["False", "True"]
