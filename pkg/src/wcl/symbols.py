"""Interaction and normal-form symbols of the cubic theory.

All symbols are total functions of real frequencies, vectorized over numpy
arrays.  The piecewise table and the direct closed forms are kept as two
independent implementations and tested against each other.

Sign conventions fixed here and used everywhere else:
  * Hilbert transform symbol  H0 -> 1j*sign(xi)  (required by the quadratic
    cancellations and by the quadratic normal-form operators below),
  * ntilde(k1,..,kr) = -i n_r(i1 k1,..,ir kr) (2pi)^(1-r),
  * N-node symbols atilde carry the same (2pi)^(1-r) convolution factor.
"""

from __future__ import annotations

import numpy as np

from .lattice import FrequencyLattice, SpectralField, bump, phi_le

TWO_PI = 2.0 * np.pi


def sgn(x):
    return np.sign(np.asarray(x, dtype=float))


def dispersion(k):
    """Half-wave dispersion |k|^(1/2)."""
    return np.sqrt(np.abs(np.asarray(k, dtype=float)))


def hilbert_symbol(xi):
    return 1j * sgn(xi)


# ---------------------------------------------------------------------------
# cubic symbols a3^1, a3^2


def a31_closed(eta, rho, sigma):
    eta = np.asarray(eta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    xi = eta + rho + sigma
    br = (
        np.abs(sigma + eta)
        + np.abs(sigma + rho)
        - np.abs(xi)
        - np.abs(sigma)
        - np.abs(sigma + eta) * sgn(sigma) * sgn(rho)
        - np.abs(sigma + rho) * sgn(sigma) * sgn(eta)
        + (sigma + eta) * sgn(rho)
        + (sigma + rho) * sgn(eta)
    )
    out = 0.5 * np.abs(xi) * np.sqrt(np.abs(sigma)) * br
    return np.where((eta == 0) | (rho == 0) | (sigma == 0), 0.0, out)


def a32_closed(eta, rho, sigma):
    eta = np.asarray(eta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    xi = eta + rho + sigma
    br = (
        np.abs(eta)
        + np.abs(rho)
        + (xi + sigma) * sgn(xi)
        - np.abs(sigma + rho) * (1.0 + sgn(xi) * sgn(rho))
        - np.abs(sigma + eta) * (1.0 + sgn(xi) * sgn(eta))
        - np.abs(eta + rho) * sgn(xi) * sgn(sigma) * (1.0 + sgn(eta) * sgn(rho))
    )
    pref = 0.5 * np.sqrt(np.abs(xi) * np.abs(eta) * np.abs(rho))
    out = pref * br
    return np.where((eta == 0) | (rho == 0) | (sigma == 0), 0.0, out)


def _table_pos(eta, rho, sigma, which):
    """Piecewise table on {xi >= 0}, one explicit formula per sign region."""
    xi = eta + rho + sigma
    se, sr, ss = sgn(eta), sgn(rho), sgn(sigma)
    out = np.zeros_like(xi)
    sq = np.sqrt
    if which == 1:
        # regions where a3^1 is nonzero
        m = (se > 0) & (sr > 0) & (ss < 0)
        out = np.where(
            m,
            np.abs(xi) * sq(np.abs(sigma)) * (np.abs(sigma + eta) + np.abs(sigma + rho) - np.abs(sigma)),
            out,
        )
        m = ((se < 0) & (sr > 0) & (ss < 0)) | ((se > 0) & (sr < 0) & (ss < 0))
        out = np.where(m, -np.abs(xi) ** 2 * sq(np.abs(sigma)), out)
        return out
    # a3^2 regions
    m = (se > 0) & (sr > 0) & (ss > 0)
    out = np.where(m, -np.abs(xi) ** 1.5 * sq(np.abs(eta) * np.abs(rho)), out)
    m = (se < 0) & (sr < 0) & (ss > 0)
    out = np.where(m, np.abs(xi) ** 1.5 * sq(np.abs(eta) * np.abs(rho)), out)
    # eta,rho > 0, sigma < 0: value from the symmetrized derivation; it
    # collapses to 3|xi|^(3/2)sqrt(eta rho) when sigma < -max(eta,rho)
    m = (se > 0) & (sr > 0) & (ss < 0)
    br = xi + eta + rho - np.abs(sigma + eta) - np.abs(sigma + rho)
    out = np.where(m, sq(np.abs(xi) * np.abs(eta) * np.abs(rho)) * br, out)
    return out


def a31_table(eta, rho, sigma):
    """a3^1 from the sign-region table, extended evenly to xi < 0."""
    eta = np.asarray(eta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    xi = eta + rho + sigma
    flip = xi < 0
    e = np.where(flip, -eta, eta)
    r = np.where(flip, -rho, rho)
    s = np.where(flip, -sigma, sigma)
    return _table_pos(e, r, s, which=1)


def a32_table(eta, rho, sigma):
    eta = np.asarray(eta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    xi = eta + rho + sigma
    flip = xi < 0
    e = np.where(flip, -eta, eta)
    r = np.where(flip, -rho, rho)
    s = np.where(flip, -sigma, sigma)
    return _table_pos(e, r, s, which=2)


def cubic_a(j: int, eta, rho, sigma, table: bool = False):
    """Cubic building-block symbol a3^j, j in {1, 2}."""
    if j == 1:
        return (a31_table if table else a31_closed)(eta, rho, sigma)
    if j == 2:
        return (a32_table if table else a32_closed)(eta, rho, sigma)
    raise ValueError("j must be 1 or 2")


# ---------------------------------------------------------------------------
# cubic interaction symbols p


_P_PATTERNS = ("+++", "++-", "+--", "---")


def _a3_sym(which, eta, rho, sigma):
    """a3^j with its first two arguments put in canonical order, making the
    evaluation bitwise symmetric under their exchange."""
    lo = np.minimum(eta, rho)
    hi = np.maximum(eta, rho)
    return (a31_closed if which == 1 else a32_closed)(lo, hi, sigma)


def p_cubic(pattern: str, x1, x2, x3):
    """Cubic interaction symbol for one conjugation pattern; purely imaginary."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    x3 = np.asarray(x3, dtype=float)
    c = 1.0 / (8.0 * 1j)
    if pattern == "+++":
        val = a31_closed(x1, x2, x3) + a32_closed(x1, x2, x3)
    elif pattern == "++-":
        # grouped so the value is bitwise symmetric in (x1, x2)
        val = (_a3_sym(2, x1, x2, x3) - _a3_sym(1, x1, x2, x3)) + (
            (_a3_sym(1, x1, x3, x2) + _a3_sym(1, x2, x3, x1))
            - (_a3_sym(2, x1, x3, x2) + _a3_sym(2, x2, x3, x1))
        )
    elif pattern == "+--":
        val = (
            -a31_closed(x1, x2, x3)
            - a31_closed(x1, x3, x2)
            + a31_closed(x2, x3, x1)
            - a32_closed(x1, x2, x3)
            - a32_closed(x1, x3, x2)
            + a32_closed(x2, x3, x1)
        )
    elif pattern == "---":
        val = -a31_closed(x1, x2, x3) + a32_closed(x1, x2, x3)
    else:
        raise ValueError("unknown pattern %r" % pattern)
    return c * val


# ---------------------------------------------------------------------------
# resonant-set machinery for the (++-) pattern


def upsilon(x1, x2, x3):
    """Scale-invariant separation cutoff; 0 whenever an argument vanishes."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    x3 = np.asarray(x3, dtype=float)
    xi = x1 + x2 + x3
    prod = x1 * x2 * x3 * xi
    sq = np.stack(np.broadcast_arrays(x1 * x1, x2 * x2, x3 * x3, xi * xi))
    num = 2.0 ** 10 * np.sum(sq, axis=0) * np.min(sq, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        quot = np.where(prod != 0.0, num / np.where(prod != 0.0, prod, 1.0), np.inf)
    out = np.where(prod != 0.0, bump(np.where(np.isfinite(quot), quot, 1e12)), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def _in_res_set(x1, x2, x3):
    xi = x1 + x2 + x3
    return (x1 * x2 * x3 * xi) >= 0.0


def _q_ppm_res(x1, x2, x3):
    """Cancelled closed form of the (++-) normal-form symbol on the resonant
    sign regions, assuming xi >= 0; correct limits at vanishing arguments."""
    xi = x1 + x2 + x3
    r1, r2, r3, rx = (np.sqrt(np.abs(v)) for v in (x1, x2, x3, xi))
    allpos = (x1 > 0) & (x2 > 0) & (x3 > 0)
    c1 = (x1 > 0) & (x2 < 0) & (x3 < 0)
    c2 = (x2 > 0) & (x1 < 0) & (x3 < 0)
    c3 = (x3 > 0) & (x1 < 0) & (x2 < 0)
    val = np.where(allpos, rx + r1 + r2 - r3, 0.0)
    val = np.where(c1, rx + r1 - r2 + r3, val)
    val = np.where(c2, rx - r1 + r2 + r3, val)
    val = np.where(c3, rx - r1 - r2 - r3, val)
    zero = (x1 == 0) | (x2 == 0) | (x3 == 0) | (xi == 0)
    return np.where(zero, 0.0, np.abs(xi) ** 1.5 * val / 16.0)


def q_normal(pattern: str, x1, x2, x3):
    """Second normal-form symbol, homogeneous of degree 2.

    For the (++-) pattern the resonant set uses the cancelled closed form
    and the complement uses the separation-protected quotient; the raw
    quotient is never formed near a vanishing denominator.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    x3 = np.asarray(x3, dtype=float)
    xi = x1 + x2 + x3
    if pattern != "++-":
        iota = {"+++": (1, 1, 1), "+--": (1, -1, -1), "---": (-1, -1, -1)}[pattern]
        den = (
            dispersion(xi)
            - iota[0] * dispersion(x1)
            - iota[1] * dispersion(x2)
            - iota[2] * dispersion(x3)
        )
        num = 1j * p_cubic(pattern, x1, x2, x3)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(den != 0.0, np.real(num) / np.where(den != 0.0, den, 1.0), 0.0)
        zero = (x1 == 0) | (x2 == 0) | (x3 == 0) | (xi == 0)
        return np.where(zero, 0.0, out)

    # (++-): evaluate at the sign-flipped triple when xi < 0 (even symbol)
    flip = xi < 0
    y1 = np.where(flip, -x1, x1)
    y2 = np.where(flip, -x2, x2)
    y3 = np.where(flip, -x3, x3)
    res = _in_res_set(y1, y2, y3)
    out = np.where(res, _q_ppm_res(y1, y2, y3), 0.0)

    ups = upsilon(y1, y2, y3)
    active = (~res) & (ups != 0.0)
    if np.any(active):
        den = dispersion(y1 + y2 + y3) - dispersion(y1) - dispersion(y2) + dispersion(y3)
        num = np.real(1j * p_cubic("++-", y1, y2, y3)) * ups
        safe = np.abs(den) > 1e-6
        quot = np.where(active & safe, num / np.where(safe, den, 1.0), 0.0)
        out = np.where(active, quot, out)
    if out.ndim == 0:
        return float(out)
    return out


def n3(x1, x2, x3):
    """Renormalizable cubic kernel, supported in {x1 x2 x3 xi <= 0}; purely
    imaginary and symmetric in its first two arguments."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    x3 = np.asarray(x3, dtype=float)
    outside = ~_in_res_set(x1, x2, x3)
    mult = np.where(outside, 1.0 - upsilon(x1, x2, x3), 0.0)
    return p_cubic("++-", x1, x2, x3) * mult


def ntilde(k1, k2, k3):
    """Rescaled real cubic kernel entering the profile equation."""
    return np.real(-1j * n3(k1, k2, -np.asarray(k3, dtype=float))) / TWO_PI ** 2


# ---------------------------------------------------------------------------
# quadratic cancellation residuals


def n2_1(eta, rho):
    eta = np.asarray(eta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    xi = eta + rho
    return xi * sgn(eta) * np.abs(rho) - np.abs(xi) * sgn(eta) * rho + xi * rho - np.abs(xi) * np.abs(rho)


def n2_2(eta, rho):
    eta = np.asarray(eta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    xi = eta + rho
    return 0.5 * (np.abs(eta) * np.abs(rho) + eta * rho - sgn(xi) * eta * np.abs(rho) - sgn(xi) * np.abs(eta) * rho)


def n2_h(eta, rho):
    """Residual of the surface-elevation quadratic correction."""
    eta = np.asarray(eta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    xi = eta + rho
    return -0.5 * np.abs(xi) * sgn(eta) * sgn(rho) + 0.5 * sgn(xi) * (sgn(eta) * np.abs(rho) + sgn(rho) * np.abs(eta))


def verify_quadratic_cancellation(samples: int = 10 ** 5, seed: int = 7, radius: float = 10.0) -> float:
    """Max modulus of the three quadratic residual symbols on random pairs."""
    rng = np.random.default_rng(seed)
    eta = rng.uniform(-radius, radius, samples)
    rho = rng.uniform(-radius, radius, samples)
    worst = 0.0
    for f in (n2_1, n2_2, n2_h):
        worst = max(worst, float(np.max(np.abs(f(eta, rho)))))
    return worst


# ---------------------------------------------------------------------------
# quadratic normal-form operators


_A2_PAIRS = ("++", "+-", "--")


def a2_symbol(pair: str, eta, rho):
    """Bilinear normal-form symbol; real, homogeneous of degree 1."""
    eta = np.asarray(eta, dtype=float)
    rho = np.asarray(rho, dtype=float)
    xi = eta + rho
    se, sr, sx = sgn(eta), sgn(rho), sgn(xi)
    re, rr = np.sqrt(np.abs(eta)), np.sqrt(np.abs(rho))
    rx = np.sqrt(np.abs(xi))
    if pair == "++":
        return -0.125 * np.abs(xi) * se * sr - 0.125 * rx * sx * (se * rr + re * sr)
    if pair == "+-":
        return -0.25 * np.abs(xi) * se * sr + 0.25 * rx * sx * (se * rr - re * sr)
    if pair == "--":
        return -0.125 * np.abs(xi) * se * sr + 0.125 * rx * sx * (se * rr + re * sr)
    raise ValueError("pair must be one of %r" % (_A2_PAIRS,))


def a2_apply(pair: str, f: SpectralField, g: SpectralField) -> SpectralField:
    """Bilinear operator with symbol a2_symbol as a direct lattice convolution.

    The output is truncated to the stored window.
    """
    lat = f.lattice
    if g.lattice is not lat and (g.lattice.R != lat.R or g.lattice.K_tr != lat.K_tr):
        raise ValueError("lattice mismatch")
    n = lat.n_values
    R = float(lat.R)
    n1 = n[:, None]
    n2 = n[None, :]
    sym = a2_symbol(pair, n1 / R, n2 / R)
    w = f.coeffs[:, None] * g.coeffs[None, :] * sym / (TWO_PI * R)
    nout = (n1 + n2).ravel()
    keep = np.abs(nout) <= lat.nmax
    out = np.zeros(lat.size, dtype=complex)
    np.add.at(out, lat.index(nout[keep]), w.ravel()[keep])
    return SpectralField(lat, out)


def a2_total(u: SpectralField) -> SpectralField:
    """Full quadratic correction A2(u) summed over conjugation patterns."""
    ub = u.conj_field()
    out = a2_apply("++", u, u).coeffs
    out += a2_apply("+-", u, ub).coeffs
    out += a2_apply("--", ub, ub).coeffs
    return SpectralField(u.lattice, out)


def a3_total(u: SpectralField) -> SpectralField:
    """Cubic correction A3(u) built from the q symbols, window-truncated."""
    lat = u.lattice
    n = lat.n_values
    R = float(lat.R)
    fields = {"+": u.coeffs, "-": u.conj_field().coeffs}
    out = np.zeros(lat.size, dtype=complex)
    n12 = n[:, None] + n[None, :]
    for pattern in _P_PATTERNS:
        c12 = fields[pattern[0]][:, None] * fields[pattern[1]][None, :]
        for i3, n3v in enumerate(n):
            nout = n12 + n3v
            keep = np.abs(nout) <= lat.nmax
            if not np.any(keep):
                continue
            sym = q_normal(pattern, n[:, None] / R, n[None, :] / R, n3v / R)
            w = c12 * fields[pattern[2]][i3] * sym / (TWO_PI * R) ** 2
            np.add.at(out, lat.index(nout[keep]), w[keep])
    return SpectralField(lat, out)


# ---------------------------------------------------------------------------
# first renormalization coefficient


def gamma0(k, lattice: FrequencyLattice, psi) -> np.ndarray:
    """Static renormalization frequency shift; real, zero outside the cutoff."""
    k = np.asarray(k, dtype=float)
    scalar = k.ndim == 0
    kflat = np.atleast_1d(k).astype(float)
    k1 = lattice.k_values
    psi1 = np.asarray(psi(k1), dtype=float)
    w1 = psi1 * phi_le(lattice.K_tr, k1) ** 2
    active = w1 != 0.0
    k1a, w1a = k1[active], w1[active]
    out = np.empty(kflat.shape, dtype=float)
    step = max(1, int(4e6 // max(len(k1a), 1)))
    for lo in range(0, len(kflat), step):
        kc = kflat[lo : lo + step]
        diag = ntilde(k1a[None, :], kc[:, None], k1a[None, :])
        out[lo : lo + step] = -(2.0 / lattice.R) * (diag @ w1a)
    out *= phi_le(lattice.K_tr, kflat)
    if scalar:
        return float(out[0])
    return out.reshape(k.shape)


class SymbolTable:
    """Single lookup point for every implemented symbol."""

    dispersion = staticmethod(dispersion)
    a31 = staticmethod(a31_closed)
    a32 = staticmethod(a32_closed)
    a31_table = staticmethod(a31_table)
    a32_table = staticmethod(a32_table)
    p = staticmethod(p_cubic)
    upsilon = staticmethod(upsilon)
    q = staticmethod(q_normal)
    n3 = staticmethod(n3)
    ntilde = staticmethod(ntilde)
    a2 = staticmethod(a2_symbol)
    gamma0 = staticmethod(gamma0)
