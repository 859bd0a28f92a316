"""Select compiled or numpy kernels at import.

Set ``BELIEFBO_PURE_PYTHON=1`` to force the numpy fallback.
"""
import os

import numpy as np

from . import _kernels_py

if os.environ.get("BELIEFBO_PURE_PYTHON"):
    _impl = _kernels_py
    COMPILED = False
else:
    try:
        from . import _kernels_ext as _impl
        COMPILED = True
    except ImportError:
        _impl = _kernels_py
        COMPILED = False

BACKEND = "cython" if COMPILED else "numpy"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def cos_features(X, psi, b, scale):
    """``scale * cos(X @ psi.T + b)``, shape (k, m)."""
    return _impl.cos_features(_c(X), _c(psi), _c(b), float(scale))


def paired_value_grad(P, idx, W, psi, b, scale):
    """Random-feature value and x-gradient of draw ``idx[p]`` at ``P[p]``."""
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    return _impl.paired_value_grad(_c(P), idx, _c(W), _c(psi), _c(b), float(scale))


def mixture_logpdf(Y, C, logw, sigma):
    """Row-wise Gaussian-mixture log-density, shape of ``Y``."""
    return _impl.mixture_logpdf(_c(Y), _c(C), _c(logw), float(sigma))
