"""Oscillatory time integrals over nested simplex domains.

Two evaluation paths share this module:

 * a closed-form piecewise integrator for depth-one phases, vectorized over
   large batches of linear phase slopes (used by the tree and couple sums);
   the slowly varying gauge factor is exactly piecewise quadratic and is
   expanded to third order per subinterval,
 * a nested panel Gauss-Legendre integrator for arbitrary nesting depth,
   with a refinement check that doubles the panel density until two
   successive answers agree to the requested tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def phase_moments(beta, h, nmax: int):
    """M_n = integral over [0,h] of u^n e^(i beta u) du for n = 0..nmax.

    beta may be any array; a power series is used for small |beta h| and the
    stable downward-division recursion otherwise.
    """
    beta = np.asarray(beta, dtype=float)
    h = float(h)
    small = np.abs(beta) * h < 0.5
    out = np.empty((nmax + 1,) + beta.shape, dtype=complex)

    # series branch: M_n = sum_m (i beta)^m h^(n+m+1) / (m! (n+m+1))
    bs = np.where(small, beta, 0.0)
    for n in range(nmax + 1):
        term = np.full(bs.shape, h ** (n + 1) / (n + 1), dtype=complex)
        acc = term.copy()
        ib = 1j * bs * h
        for m in range(1, 26):
            term = term * ib / m * ((n + m) / (n + m + 1.0))
            acc += term
        out[n] = acc

    # recursion branch
    bl = np.where(~small, beta, 1.0)
    eib = np.exp(1j * bl * h)
    ibl = 1j * bl
    mn = (eib - 1.0) / ibl
    rec = [mn]
    hp = 1.0
    for n in range(1, nmax + 1):
        hp *= h
        mn = (hp * eib - n * rec[-1]) / ibl
        rec.append(mn)
    for n in range(nmax + 1):
        out[n] = np.where(small, out[n], rec[n])
    return out


def segment_integral(alpha, s0, h, psi0, gamma0, gamma1):
    """Integral over [s0, s0+h] of e^(i(alpha s + Psi(s))) with Psi quadratic
    on the segment: Psi(s0+u) = psi0 + gamma0 u + c u^2, c from the slope
    change (gamma1 - gamma0) / (2h)."""
    alpha = np.asarray(alpha, dtype=float)
    c = (np.asarray(gamma1, dtype=float) - np.asarray(gamma0, dtype=float)) / (2.0 * h)
    beta = alpha + np.asarray(gamma0, dtype=float)
    m = phase_moments(beta, h, 6)
    val = m[0] + 1j * c * m[2] - 0.5 * c * c * m[4] - (1j / 6.0) * c ** 3 * m[6]
    return np.exp(1j * (alpha * s0 + np.asarray(psi0, dtype=complex))) * val


def cumulative_phase_integral(alpha, gamma, tgrid):
    """F(t_j) = integral over [0, t_j] of e^(i(alpha s + Psi(s))) ds.

    alpha: (...,) slopes; gamma: (..., P+1) values of Psi' at the grid
    points (piecewise linear in between); tgrid: (P+1,) increasing from 0.
    Returns F with shape (..., P+1); F[..., 0] = 0.
    """
    alpha = np.asarray(alpha, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    tgrid = np.asarray(tgrid, dtype=float)
    P = len(tgrid) - 1
    shape = np.broadcast_shapes(alpha.shape, gamma.shape[:-1])
    F = np.zeros(shape + (P + 1,), dtype=complex)
    psi = 0.0 * np.broadcast_to(gamma[..., 0], shape).astype(float)
    for j in range(P):
        h = tgrid[j + 1] - tgrid[j]
        g0 = gamma[..., j]
        g1 = gamma[..., j + 1]
        F[..., j + 1] = F[..., j] + segment_integral(alpha, tgrid[j], h, psi, g0, g1)
        psi = psi + 0.5 * (g0 + g1) * h
    return F


def linear_phase_integral(alpha, t):
    """Exact (e^(i alpha t) - 1) / (i alpha) with the alpha -> 0 limit."""
    alpha = np.asarray(alpha, dtype=float)
    t = np.asarray(t, dtype=float)
    small = np.abs(alpha * t) < 1e-8
    az = np.where(small, 1.0, alpha)
    main = (np.exp(1j * az * t) - 1.0) / (1j * az)
    lim = t * (1.0 + 0.5j * alpha * t)
    return np.where(small, lim, main)


# ---------------------------------------------------------------------------
# nested integrator


@dataclass
class PhaseNode:
    """One branching node of the time simplex: phase slope alpha, slowly
    varying phase psi(s) (callable, may be None), children below it."""

    alpha: float
    psi: object  # callable s -> float, or None
    children: list


class _Cumulative:
    """Panelized cumulative integral of one node's integrand on [0, t]."""

    def __init__(self, node: PhaseNode, t: float, density: float):
        self.node = node
        self.kids = [_Cumulative(c, t, density) for c in node.children]
        rate = abs(node.alpha) + 4.0 + sum(k.rate for k in self.kids)
        self.rate = rate
        npan = max(1, int(np.ceil(8 * (abs(node.alpha) + 1.0) * t)), int(np.ceil(rate * t * density)))
        npan = min(npan, 200000)
        self.bounds = np.linspace(0.0, t, npan + 1)
        vals = np.zeros(npan + 1, dtype=complex)
        for j in range(npan):
            vals[j + 1] = vals[j] + self._panel(self.bounds[j], self.bounds[j + 1])
        self.cum = vals

    def _integrand(self, s):
        s = np.asarray(s, dtype=float)
        ph = self.node.alpha * s
        if self.node.psi is not None:
            ph = ph + np.asarray([self.node.psi(si) for si in np.atleast_1d(s)]).reshape(s.shape)
        out = np.exp(1j * ph)
        for k in self.kids:
            out = out * k.eval(s)
        return out

    def _panel(self, a, b):
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        return half * np.sum(_GL_W * self._integrand(mid + half * _GL_X))

    def eval(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        idx = np.searchsorted(self.bounds, s, side="right") - 1
        idx = np.clip(idx, 0, len(self.bounds) - 2)
        out = np.empty(s.shape, dtype=complex)
        for i, (si, j) in enumerate(zip(s, idx)):
            lo = self.bounds[j]
            out[i] = self.cum[j] + (self._panel(lo, si) if si > lo else 0.0)
        return out

    def total(self):
        return self.cum[-1]


@dataclass
class TimeIntegralResult:
    value: complex
    converged: bool
    est_error: float


def nested_time_integral(roots: list, t: float, rtol: float = 1e-6) -> TimeIntegralResult:
    """Iterated integral of the product of root factors over the simplex
    0 < t_child < t_parent < t, with one refinement-verified answer.

    roots: list of PhaseNode trees (an empty list gives 1).
    """
    if not roots or t == 0.0:
        return TimeIntegralResult(1.0 + 0.0j if not roots else 0.0j, True, 0.0)

    def evaluate(density):
        val = 1.0 + 0.0j
        for r in roots:
            val *= _Cumulative(r, t, density).total()
        return val

    density = 1.0
    prev = evaluate(density)
    for _ in range(4):
        density *= 2.0
        cur = evaluate(density)
        scale = max(abs(cur), abs(prev), 1e-300)
        err = abs(cur - prev) / scale
        if err <= rtol:
            return TimeIntegralResult(cur, True, err)
        prev = cur
    return TimeIntegralResult(cur, False, err)
