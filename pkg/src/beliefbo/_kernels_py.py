"""Numpy implementations of the hot loops (fallback for ``_kernels_ext``)."""
import numpy as np
from scipy.special import logsumexp


def cos_features(X, psi, b, scale):
    return scale * np.cos(X @ psi.T + b)


def paired_value_grad(P, idx, W, psi, b, scale):
    Z = P @ psi.T + b
    Wp = W[idx]
    vals = scale * np.sum(Wp * np.cos(Z), axis=1)
    grads = -scale * (Wp * np.sin(Z)) @ psi
    return vals, grads


def mixture_logpdf(Y, C, logw, sigma):
    z = logw[:, None, :] - 0.5 * ((Y[:, :, None] - C[:, None, :]) / sigma) ** 2
    return logsumexp(z, axis=2) - np.log(sigma) - 0.5 * np.log(2.0 * np.pi)
