"""Composite Gauss-Legendre panels for cumulative and exponentially weighted integrals.

Every improper integral in the model has the form

    Q(t) = int_{-inf}^t exp(-(K(t) - K(s))) h(s) ds

with ``K`` an antiderivative of a decay rate whose period average is
positive.  Such integrals are truncated where the exponential envelope
drops below a tolerance and then accumulated panel by panel, so that the
value at many target times comes out of a single sweep.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from numpy.polynomial import legendre


class QuadratureError(RuntimeError):
    """Quadrature failed to meet its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@functools.lru_cache(maxsize=None)
def gauss_rule(order: int):
    """Nodes, weights and spectral integration matrix on ``[-1, 1]``.

    ``S[j, l]`` integrates the Lagrange polynomial through node ``l`` from
    -1 up to node ``j``.
    """
    x, w = legendre.leggauss(order)
    # expansion coefficients of the interpolant: c_n = (2n+1)/2 sum_l w_l P_n(x_l) f_l
    P = np.stack([legendre.Legendre.basis(n)(x) for n in range(order)])
    to_coef = (2 * np.arange(order)[:, None] + 1) / 2.0 * P * w[None, :]
    A = np.stack([legendre.Legendre.basis(n).integ(lbnd=-1)(x) for n in range(order)], axis=1)
    S = A @ to_coef
    return x, w, S


def panel_edges(a, b, period, per_period, breakpoints=(), targets=(), max_length=None):
    """Panel boundaries covering ``[a, b]``.

    Boundaries fall on a uniform subdivision of every period, on every
    periodic image of ``breakpoints`` and on each of ``targets``.
    """
    if not b > a:
        raise ValueError("panel_edges needs b > a")
    step = period / per_period
    if max_length is not None and max_length < step:
        step = period / math.ceil(period / max_length)
    k0 = math.floor(a / step)
    k1 = math.ceil(b / step)
    edges = [np.arange(k0, k1 + 1) * step]
    if breakpoints:
        m = np.arange(math.floor(a / period) - 1, math.ceil(b / period) + 1)
        for bp in breakpoints:
            edges.append(m * period + bp)
    edges.append(np.asarray(targets, dtype=float).ravel())
    edges.append(np.array([a, b]))
    e = np.concatenate(edges)
    e = np.unique(e[(e >= a) & (e <= b)])
    # drop slivers, keeping targets exact
    tiny = 1e-12 * max(period, abs(a), abs(b))
    keep = np.ones(e.size, bool)
    if np.size(targets):
        tset = np.asarray(targets, dtype=float).ravel()
        near_target = np.isin(e, tset)
    else:
        near_target = np.zeros(e.size, bool)
    last = e[0]
    for i in range(1, e.size):
        if e[i] - last < tiny:
            if near_target[i] and not near_target[i - 1]:
                keep[i - 1] = False
                last = e[i]
            else:
                keep[i] = False
        else:
            last = e[i]
    return e[keep]


class PanelGrid:
    """Gauss-Legendre nodes of a fixed order on a set of panels."""

    def __init__(self, edges, order: int = 16):
        self.edges = np.asarray(edges, dtype=float)
        self.order = order
        x, w, S = gauss_rule(order)
        a = self.edges[:-1, None]
        half = 0.5 * np.diff(self.edges)[:, None]
        self.nodes = a + half * (x[None, :] + 1.0)
        self.weights = half * w[None, :]
        self._S = S
        self._half = half

    @property
    def n_panels(self) -> int:
        return self.edges.size - 1

    def integrals(self, f_nodes):
        return np.sum(self.weights * f_nodes, axis=1)

    def cumulative(self, f_nodes):
        """Running integral from ``edges[0]``, at edges and at nodes."""
        panel = self.integrals(f_nodes)
        at_edges = np.concatenate(([0.0], np.cumsum(panel)))
        inner = self._half * np.einsum("jl,pl->pj", self._S, f_nodes)
        at_nodes = at_edges[:-1, None] + inner
        return at_edges, at_nodes

    def exp_weighted(self, K_edges, K_nodes, h_nodes):
        """Accumulate ``Q' = -K' Q + h`` from ``Q(edges[0]) = 0``.

        Returns ``Q`` at edges and nodes.  ``K`` must be supplied at both.
        """
        Ke = K_edges
        Kn = K_nodes
        # contribution of each panel to its right edge
        c = np.sum(self.weights * np.exp(Kn - Ke[1:, None]) * h_nodes, axis=1)
        d = np.exp(Ke[:-1] - Ke[1:])
        Q_edges = np.empty(Ke.size)
        Q_edges[0] = 0.0
        q = 0.0
        for i in range(c.size):
            q = q * d[i] + c[i]
            Q_edges[i + 1] = q
        M = self._S[None, :, :] * np.exp(Kn[:, None, :] - Kn[:, :, None])
        inner = self._half * np.einsum("pjl,pl->pj", M, h_nodes)
        Q_nodes = Q_edges[:-1, None] * np.exp(Ke[:-1, None] - Kn) + inner
        return Q_edges, Q_nodes


def envelope_length(rate_mean: float, excursion: float, tol: float = 1e-12) -> float:
    """Length after which ``exp(-rate_mean*L + excursion)`` falls below ``tol``."""
    if rate_mean <= 0:
        raise QuadratureError("decay envelope does not decay; no convergent truncation")
    return (math.log(1.0 / tol) + excursion) / rate_mean
