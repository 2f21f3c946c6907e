"""Shared independent oracles for the test suite.

These deliberately avoid the library's own quadrature/assembly paths: the
Duffy rule below integrates over triangles through a collapsed tensor-Gauss
rule and is used to cross-check projections, norms and estimator values.
"""

import numpy as np


def duffy_quad(tri_pts, f, m=16):
    """High-order integral of f(x, y) over a triangle (tensor Gauss-Legendre
    on the collapsed square)."""
    x, w = np.polynomial.legendre.leggauss(m)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    a, b, c = (np.asarray(p, dtype=float) for p in tri_pts)
    total = 0.0
    for u, wu in zip(x, w):
        for v, wv in zip(x, w):
            lam1, lam2 = u, v * (1.0 - u)
            p = a + lam1 * (b - a) + lam2 * (c - a)
            total += wu * wv * (1.0 - u) * f(p[0], p[1])
    d1, d2 = b - a, c - a
    area2 = abs(d1[0] * d2[1] - d1[1] * d2[0])
    return total * area2


def mesh_integral(mesh, f, m=8):
    """Duffy-rule integral of f over a whole mesh."""
    return sum(
        duffy_quad(mesh.vertices[mesh.triangles[t]], f, m)
        for t in range(mesh.n_triangles)
    )


def segment_integral(a, b, f, m=24):
    """High-order line integral of f(x, y) along segment a-b."""
    x, w = np.polynomial.legendre.leggauss(m)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    a, b = np.asarray(a, float), np.asarray(b, float)
    L = np.linalg.norm(b - a)
    pts = a[None, :] + x[:, None] * (b - a)[None, :]
    return L * float(np.sum(w * np.array([f(p[0], p[1]) for p in pts])))
