"""Shared independent oracles for the test suite.

These deliberately avoid the package's own quadrature/estimation paths, so
that agreement is a two-route check rather than a tautology.
"""

import math

import numpy as np


def gauss_conv_pdf(mean, cov, h_entries, x) -> float:
    """Closed form for (scaled Gaussian kernel) * N(mean, cov) at x.

    The scaled kernel |h|^-1 K(h^-1 u) with standard Gaussian K is the
    N(0, h h^T) density, so the convolution is N(mean, cov + h h^T).
    """
    h = np.asarray(h_entries, dtype=float)
    cov2 = np.asarray(cov, dtype=float) + h @ h.T
    y = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    d = y.size
    det = np.linalg.det(cov2)
    return float(
        (2.0 * math.pi) ** (-d / 2.0)
        / math.sqrt(det)
        * math.exp(-0.5 * y @ np.linalg.inv(cov2) @ y)
    )


def naive_kde(points, kernel, h_inv, h_det, x) -> float:
    """Scalar double-loop KDE value, summed with math.fsum."""
    total = []
    x = np.asarray(x, dtype=float)
    for row in np.asarray(points, dtype=float):
        z = h_inv @ (x - row)
        total.append(kernel.eval(z) / h_det)
    return math.fsum(total) / len(total)


def random_spd(rng, d, cond_span=2.0):
    """Random SPD matrix with eigenvalues within exp(+-cond_span)."""
    a = rng.normal(size=(d, d))
    q, _ = np.linalg.qr(a)
    eigs = np.exp(rng.uniform(-cond_span, cond_span, size=d))
    return (q * eigs) @ q.T


def mc_integrate_box(fn, lower, upper, n, seed):
    """Plain Monte Carlo box integral; returns (value, standard_error)."""
    rng = np.random.default_rng(seed)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    pts = rng.uniform(size=(n, lower.size)) * (upper - lower) + lower
    vals = fn(pts)
    vol = float(np.prod(upper - lower))
    return vol * float(np.mean(vals)), vol * float(np.std(vals) / math.sqrt(n))
