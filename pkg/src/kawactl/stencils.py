"""Finite-difference operators for the linear fifth-order part.

The spatial operator L u = -alpha u_x - beta u_xxx + u_xxxxx is discretised on the
nodes x_0..x_N. Interior rows use centred second-order stencils. Rows whose centred
stencil would leave the grid use one-sided closures that also consume derivative
data at the nearby boundary (u_x at the left end; u_x = u_xx = 0 at the right end),
exact for polynomials of degree d+1 (second order for the d-th derivative).

Unknowns are the interior values w = u_1..u_{N-1}; the end values are fixed by the
boundary data (u_0 = mu, u_N = 0), so

    (L u)_interior = A w + b_mu mu + b_nu nu.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack

from .errors import SolverError

# centred stencils, offsets and weights in units of h
CENTRED = {
    1: ((-1, 1), (-0.5, 0.5)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
    5: ((-3, -2, -1, 1, 2, 3), (-0.5, 2.0, -2.5, 2.5, -2.0, 0.5)),
}


def fd_weights(nodes, deriv, hermite=()):
    """Weights at 0 for the deriv-th derivative, in units where h = 1.

    nodes are relative node positions carrying values; hermite lists (order, position)
    pairs of derivative data. The stencil is exact on polynomials of degree
    len(nodes) + len(hermite) - 1. Returns the node weights followed by the
    hermite weights.
    """
    nodes = [float(v) for v in nodes]
    n = len(nodes) + len(hermite)
    M = np.zeros((n, n))
    for m in range(n):
        for i, xi in enumerate(nodes):
            M[m, i] = xi ** m
        for k, (order, xi) in enumerate(hermite):
            if m >= order:
                M[m, len(nodes) + k] = math.perm(m, order) * float(xi) ** (m - order)
    rhs = np.zeros(n)
    rhs[deriv] = math.factorial(deriv)
    return np.linalg.solve(M, rhs)


@lru_cache(maxsize=None)
def _left_closure(j, d):
    # nodes 0..d and the slope datum at node 0
    nodes = tuple(range(d + 1))
    w = fd_weights([i - j for i in nodes], d, [(1, -j)])
    return nodes, tuple(w[:-1]), w[-1]


@lru_cache(maxsize=None)
def _right_closure(k, d):
    # k = N - j; nodes N, N-1, .., N-d+1 (relative offsets) plus u' and u'' at N
    offs = tuple(-i for i in range(d))
    w = fd_weights([k + o for o in offs], d, [(1, k), (2, k)])
    return offs, tuple(w[:-2])


class KawaharaOperator:
    """Discrete linear operator on a uniform grid with N cells (N+1 nodes)."""

    def __init__(self, n_cells, h, alpha, beta):
        if n_cells < 12:
            raise SolverError("need at least 12 cells for the boundary closures")
        self.N = int(n_cells)
        self.h = float(h)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self._build()

    def _build(self):
        N, h = self.N, self.h
        rows, cols, vals = [], [], []
        b_nu = np.zeros(N - 1)
        for d, coef in ((1, -self.alpha), (3, -self.beta), (5, 1.0)):
            if coef == 0.0:
                continue
            r = (d + 1) // 2
            scale = coef / h ** d
            # centred rows
            js = np.arange(max(1, r), N - r + 1)
            for off, w in zip(*CENTRED[d]):
                rows.append(js - 1)
                cols.append(js + off)
                vals.append(np.full(js.size, scale * w))
            for j in range(1, r):
                nodes, w, wb = _left_closure(j, d)
                rows.append(np.full(len(nodes), j - 1))
                cols.append(np.array(nodes))
                vals.append(scale * np.array(w))
                b_nu[j - 1] += coef * wb / h ** (d - 1)
            for j in range(N - r + 1, N):
                offs, w = _right_closure(N - j, d)
                rows.append(np.full(len(offs), j - 1))
                cols.append(N + np.array(offs))
                vals.append(scale * np.array(w))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        full = sp.csr_matrix((vals, (rows, cols)), shape=(N - 1, N + 1))
        full.sum_duplicates()
        self.full = full
        self.A = full[:, 1:N].tocsr()
        self.b_mu = np.asarray(full[:, 0].todense()).ravel()
        self.b_nu = b_nu
        coo = self.A.tocoo()
        self.kl = int(np.max(coo.row - coo.col))
        self.ku = int(np.max(coo.col - coo.row))

    @property
    def n(self):
        return self.N - 1

    def apply(self, w, mu=0.0, nu=0.0):
        """A w + b_mu mu + b_nu nu for interior unknowns w (last axis)."""
        return self.A @ w + self.b_mu * mu + self.b_nu * nu

    def apply_full(self, u, nu=0.0):
        """Operator applied to a full nodal vector u_0..u_N (u_N is ignored if zero)."""
        return self.full @ u + self.b_nu * nu

    def boundary(self, mu, nu):
        return self.b_mu * mu + self.b_nu * nu

    def ddx(self, v):
        """Centred first difference of a full nodal vector, on interior rows."""
        return (v[2:] - v[:-2]) / (2.0 * self.h)

    def stepper(self, tau):
        return CrankNicolson(self, tau)


def to_band(A, kl, ku):
    """LAPACK general-band storage with kl extra rows for the pivoting fill."""
    n = A.shape[0]
    ab = np.zeros((2 * kl + ku + 1, n))
    coo = A.tocoo()
    ab[kl + ku + coo.row - coo.col, coo.col] = coo.data
    return ab


class CrankNicolson:
    """Factorisation of I - tau/2 A, computed once and reused for every step."""

    def __init__(self, op, tau):
        self.op = op
        self.tau = float(tau)
        M = sp.identity(op.n, format="csr") - 0.5 * self.tau * op.A
        ab = to_band(M, op.kl, op.ku)
        lu, ipiv, info = lapack.dgbtrf(ab, op.kl, op.ku)
        if info != 0:
            raise SolverError(self._diagnose(M, info))
        self._lu, self._piv = lu, ipiv

    def _diagnose(self, M, info):
        msg = f"singular banded system: zero pivot at row {info}"
        if M.shape[0] <= 4000:
            cond = np.linalg.cond(M.toarray())
            msg += f"; condition number {cond:.3e}"
        return msg

    def solve(self, rhs, trans=False):
        x, info = lapack.dgbtrs(self._lu, self.op.kl, self.op.ku, np.asarray(rhs, dtype=float),
                                self._piv, trans=1 if trans else 0)
        if info != 0:
            raise SolverError(f"banded back-substitution failed (info={info})")
        return x

    def explicit_half(self, w):
        return w + 0.5 * self.tau * (self.op.A @ w)
