"""Independent brute-force references used by the tests.

Nothing here calls into the library's density code.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, stats


def marginal_quadrature(r, sigma2, m_mu, var_mu):
    """log of the integral over mu of prod N(r | mu, sigma2) N(mu | m_mu, var_mu), by adaptive quadrature."""
    r = np.asarray(r, dtype=float)
    if len(r) == 0:
        return 0.0
    # centre the integrand at its mode and factor out its peak so quad sees O(1) values
    prec = 1 / var_mu + len(r) / sigma2
    mode = (m_mu / var_mu + r.sum() / sigma2) / prec
    sd = 1 / math.sqrt(prec)

    def log_f(mu):
        return stats.norm.logpdf(r, mu, math.sqrt(sigma2)).sum() + stats.norm.logpdf(mu, m_mu, math.sqrt(var_mu))

    peak = log_f(mode)
    val, _ = integrate.quad(lambda z: math.exp(log_f(mode + sd * z) - peak), -np.inf, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return peak + math.log(val * sd)


def marginal_mvn(r, sigma2, m_mu, var_mu):
    """Same marginal via the joint Gaussian of the residuals."""
    r = np.asarray(r, dtype=float)
    if len(r) == 0:
        return 0.0
    n = len(r)
    cov = sigma2 * np.eye(n) + var_mu * np.ones((n, n))
    return float(stats.multivariate_normal.logpdf(r, np.full(n, m_mu), cov))


def enumerate_trees(X, residual, sigma2, alpha, beta, m_mu, var_mu):
    """Every tree class on ``X`` with its unnormalised posterior mass.

    A class fixes, at each internal node, the split dimension and the gap
    between consecutive distinct node values holding the threshold; its mass
    integrates the uniform threshold density over that gap. Returns
    ``{key: mass}`` with ``key`` a sorted tuple of ``(node, dim, n_left)``.
    """
    X = np.asarray(X, dtype=float)

    def p_split(depth):
        return alpha / (1 + depth) ** beta

    def rec(node, rows):
        vals_by_dim = []
        for dim in range(X.shape[1]):
            v = np.unique(X[rows, dim])
            if len(v) > 1:
                vals_by_dim.append((dim, v))
        lml = marginal_mvn(residual[rows], sigma2, m_mu, var_mu)
        if not vals_by_dim:
            return [((), math.exp(lml))]
        d = len(node)
        out = [((), (1 - p_split(d)) * math.exp(lml))]
        for dim, v in vals_by_dim:
            span = v[-1] - v[0]
            for a, b in zip(v[:-1], v[1:]):
                w = p_split(d) / len(vals_by_dim) * (b - a) / span
                go_left = X[rows, dim] <= a
                lrows, rrows = rows[go_left], rows[~go_left]
                me = (node, dim, int(go_left.sum()))
                for lk, lm in rec(node + "0", lrows):
                    for rk, rm in rec(node + "1", rrows):
                        out.append((tuple(sorted((me,) + lk + rk)), w * lm * rm))
        return out

    return dict(rec("", np.arange(X.shape[0])))


def tree_key(tree, X):
    """Class key of a library tree, matching :func:`enumerate_trees`."""
    key = []
    stack = [("", np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        if node not in tree.splits:
            continue
        dim, tau = tree.splits[node]
        go_left = X[rows, dim] <= tau
        key.append((node, dim, int(go_left.sum())))
        stack.append((node + "0", rows[go_left]))
        stack.append((node + "1", rows[~go_left]))
    return tuple(sorted(key))


def leaf_blocks(tree, d):
    """``(leaf, lower, upper)`` boxes of every leaf; x is in a box iff lower < x <= upper."""
    out = []
    stack = [("", np.full(d, -np.inf), np.full(d, np.inf))]
    while stack:
        node, lo, hi = stack.pop()
        if node not in tree.splits:
            out.append((node, lo, hi))
            continue
        dim, tau = tree.splits[node]
        hi_l = hi.copy()
        hi_l[dim] = min(hi[dim], tau)
        lo_r = lo.copy()
        lo_r[dim] = max(lo[dim], tau)
        stack.append((node + "0", lo, hi_l))
        stack.append((node + "1", lo_r, hi))
    return out


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
