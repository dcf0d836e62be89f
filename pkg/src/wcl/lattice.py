"""Frequency lattice, configuration, random data and norm diagnostics.

The lattice is the discrete frequency set {n/R : n integer} with a hard
storage window |k| <= 2**(K_tr+1).  Frequencies are carried around as
integer numerators n so that all momentum bookkeeping is exact; k = n/R
only when a real value is needed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Smooth cutoff: even, 1 on [-5/4, 5/4], 0 outside (-8/5, 8/5), C^2 quintic
# joint in between.
_BUMP_LO = 1.25
_BUMP_HI = 1.6


def bump(x):
    """Fixed even cutoff function, 1 on [-5/4,5/4] and 0 beyond +-8/5."""
    ax = np.abs(np.asarray(x, dtype=float))
    u = np.clip((ax - _BUMP_LO) / (_BUMP_HI - _BUMP_LO), 0.0, 1.0)
    s = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    out = 1.0 - s
    if out.ndim == 0:
        return float(out)
    return out


def phi_le(K: int, x):
    """Littlewood-Paley low-pass symbol at dyadic level K."""
    return bump(np.asarray(x, dtype=float) / 2.0 ** K)


def phi_block(j: int, x):
    """Dyadic block symbol phi_j = bump(x/2^j) - bump(x/2^(j-1))."""
    x = np.asarray(x, dtype=float)
    return bump(x / 2.0 ** j) - bump(x / 2.0 ** (j - 1))


# ---------------------------------------------------------------------------
# spectrum profiles


def psi_rational(x):
    """Default spectrum profile (1+x^2)^-8, smooth and rapidly decaying."""
    x = np.asarray(x, dtype=float)
    return (1.0 + x * x) ** -8


def psi_gaussian(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x)


def psi_from_table(path: str) -> Callable:
    """Piecewise-linear profile interpolated from a two column CSV."""
    data = np.loadtxt(path, delimiter=",")
    xs, vals = data[:, 0], data[:, 1]
    if np.any(vals < 0):
        raise ValueError("table profile must be nonnegative")

    def psi(x):
        return np.interp(np.asarray(x, dtype=float), xs, vals, left=0.0, right=0.0)

    return psi


PSI_PROFILES = {"rational": psi_rational, "gaussian": psi_gaussian}


# ---------------------------------------------------------------------------


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class FrequencyLattice:
    """Stored frequency window of the torus of size R.

    Modes are n/R for integer n with |n/R| <= 2**(K_tr+1); they are
    enumerated ascending in n.
    """

    R: int
    K_tr: int
    nmax: int = field(init=False)

    def __post_init__(self):
        if self.R < 1 or int(self.R) != self.R:
            raise LatticeError("R must be a positive integer, got %r" % (self.R,))
        if self.K_tr < 0:
            raise LatticeError("K_tr must be nonnegative")
        nmax = int(np.floor(2.0 ** (self.K_tr + 1) * self.R))
        if 2 * nmax + 1 > 10 ** 6:
            raise LatticeError("mode window overflow: M = %d" % (2 * nmax + 1))
        object.__setattr__(self, "nmax", nmax)

    @property
    def spacing(self) -> float:
        return 1.0 / self.R

    @property
    def size(self) -> int:
        return 2 * self.nmax + 1

    @property
    def n_values(self) -> np.ndarray:
        return np.arange(-self.nmax, self.nmax + 1)

    @property
    def k_values(self) -> np.ndarray:
        return self.n_values / float(self.R)

    def index(self, n):
        """Array index of integer numerator n."""
        return np.asarray(n) + self.nmax

    def k_of_n(self, n):
        return np.asarray(n, dtype=float) / float(self.R)

    def in_window(self, n):
        return np.abs(np.asarray(n)) <= self.nmax

    def cutoff(self, k=None):
        """phi_{<=K_tr} sampled on the lattice (or at given frequencies)."""
        if k is None:
            k = self.k_values
        return phi_le(self.K_tr, k)


def build_lattice(R, K_tr: int) -> FrequencyLattice:
    if float(R) != int(R):
        raise LatticeError("R must be an integer for exact lattice arithmetic")
    return FrequencyLattice(R=int(R), K_tr=int(K_tr))


# ---------------------------------------------------------------------------


class ConfigError(ValueError):
    pass


@dataclass
class SimConfig:
    """Desk-scale simulation parameters.

    T1 defaults to epsilon**(-8/3).  Only cubic interactions are
    implemented, so A is pinned to 3.
    """

    epsilon: float = 0.1
    R: int = 8
    T1: float | None = None
    A: int = 3
    N: int = 3
    K_tr: int = 3
    seed: int = 0
    psi: Callable = psi_rational
    psi_name: str = "rational"
    theta: float = 0.01
    theta0: float = 0.0
    eta0: float = 1e-6

    def __post_init__(self):
        if self.T1 is None:
            self.T1 = float(self.epsilon) ** (-8.0 / 3.0)
        self.validate()

    def validate(self):
        if not (self.epsilon > 0):
            raise ConfigError("epsilon must be positive")
        if self.R < 1:
            raise ConfigError("R must be >= 1")
        if self.T1 < 1:
            raise ConfigError("T1 must be >= 1")
        if self.A != 3:
            raise ConfigError("only A = 3 is supported")
        if not (1 <= self.N <= 8):
            raise ConfigError("N must lie in [1, 8]")
        if self.K_tr < 0 or self.K_tr > 6:
            raise ConfigError("K_tr must lie in [0, 6]")

    def lattice(self) -> FrequencyLattice:
        return build_lattice(self.R, self.K_tr)


# ---------------------------------------------------------------------------
# random data


def _stream_seed(seed: int, label: str) -> np.random.Generator:
    """Independent generator for (seed, label); stable across runs."""
    h = hashlib.sha256(label.encode()).digest()
    key = int.from_bytes(h[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed & (2 ** 64 - 1), key]))


@dataclass
class RandomDraw:
    """One realization of the i.i.d. normalized complex Gaussians g_k.

    g[index(n)] holds g_{n/R}; the zero mode is never sampled and is pinned
    to 0.  E|g_k|^2 = 1 with independent real and imaginary parts of
    variance 1/2.
    """

    lattice: FrequencyLattice
    seed: int
    label: str
    g: np.ndarray

    def g_of_n(self, n):
        return self.g[self.lattice.index(n)]


def sample_gaussians(lattice: FrequencyLattice, seed: int, label: str = "data") -> RandomDraw:
    rng = _stream_seed(seed, label)
    m = lattice.size
    z = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / np.sqrt(2.0)
    z[lattice.index(0)] = 0.0
    return RandomDraw(lattice=lattice, seed=seed, label=label, g=z)


# ---------------------------------------------------------------------------
# spectral fields


@dataclass
class SpectralField:
    """Fourier coefficients over the stored window, f_hat(n/R) = coeffs[index(n)]."""

    lattice: FrequencyLattice
    coeffs: np.ndarray

    def copy(self) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs.copy())

    def conj_field(self) -> "SpectralField":
        """Coefficients of the complex conjugate, F(conj f)(k) = conj(f_hat(-k))."""
        return SpectralField(self.lattice, np.conj(self.coeffs[::-1]))

    def l2_spectral(self) -> float:
        """L^2(T_R) norm computed from Parseval."""
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2) / (2 * np.pi * self.lattice.R)))

    def physical(self, ngrid: int | None = None):
        """Values on a uniform grid of the torus (inverse transform)."""
        lat = self.lattice
        if ngrid is None:
            ngrid = 4 * lat.size
        if ngrid <= 2 * lat.nmax:
            raise LatticeError("physical grid too coarse for the stored window")
        spec = np.zeros(ngrid, dtype=complex)
        n = lat.n_values
        spec[n % ngrid] = self.coeffs
        x = 2 * np.pi * lat.R * np.arange(ngrid) / ngrid
        f = np.fft.ifft(spec) * ngrid / (2 * np.pi * lat.R)
        return x, f

    def l2_physical(self, ngrid: int | None = None) -> float:
        lat = self.lattice
        if ngrid is None:
            ngrid = 4 * lat.size
        x, f = self.physical(ngrid)
        return float(np.sqrt(np.sum(np.abs(f) ** 2) * (2 * np.pi * lat.R / ngrid)))


def zero_field(lattice: FrequencyLattice) -> SpectralField:
    return SpectralField(lattice, np.zeros(lattice.size, dtype=complex))


def initial_data_u(draw: RandomDraw, config: SimConfig) -> SpectralField:
    """Random initial data u_hat(k) = eps R^(1/2) sqrt(psi(k)) g_k, zero mean mode."""
    lat = draw.lattice
    psivals = np.asarray(config.psi(lat.k_values), dtype=float)
    if np.any(psivals < 0):
        raise ConfigError("psi must be nonnegative on the lattice")
    coeffs = config.epsilon * np.sqrt(float(lat.R)) * np.sqrt(psivals) * draw.g
    coeffs[lat.index(0)] = 0.0
    return SpectralField(lat, coeffs)


# ---------------------------------------------------------------------------
# norms


def _block_range(lattice: FrequencyLattice):
    # dyadic blocks that can intersect the stored window; P_j = 0 if 2^j R <= 1/2
    lo = int(np.floor(np.log2(1.0 / (2 * lattice.R)))) + 1
    hi = int(np.ceil(np.log2(2.0 ** (lattice.K_tr + 1) * 1.7))) + 1
    return range(lo, hi + 1)


def norm_H(f: SpectralField, N: float, b: float) -> float:
    """Dyadic Sobolev norm with low-frequency weight exponent b."""
    if not (-1.0 <= b <= 1.0) or N < max(b, 0.0):
        raise ValueError("need b in [-1,1] and N >= max(b,0)")
    lat = f.lattice
    R = float(lat.R)
    kv = lat.k_values
    mean_part = np.abs(f.coeffs[lat.index(0)]) ** 2 / (2 * np.pi * R) * R ** (-2 * b)
    total = mean_part
    for j in _block_range(lat):
        w = phi_block(j, kv)
        if not np.any(w):
            continue
        blk = np.sum(np.abs(w * f.coeffs) ** 2) / (2 * np.pi * R)
        total += blk * (2.0 ** (2 * N * j) + 2.0 ** (2 * b * j))
    return float(np.sqrt(total))


def norm_W(f: SpectralField, N: float, b: float) -> float:
    """L-infinity based dyadic norm; block sup norms from a fine physical grid."""
    if not (-1.0 <= b <= 1.0) or N < max(b, 0.0):
        raise ValueError("need b in [-1,1] and N >= max(b,0)")
    lat = f.lattice
    R = float(lat.R)
    kv = lat.k_values
    total = np.abs(f.coeffs[lat.index(0)]) / (2 * np.pi * R) * R ** (-b)
    for j in _block_range(lat):
        w = phi_block(j, kv)
        if not np.any(w):
            continue
        g = SpectralField(lat, w * f.coeffs)
        _, vals = g.physical()
        total += np.max(np.abs(vals)) * (2.0 ** (N * j) + 2.0 ** (b * j))
    return float(total)


def parseval_defect(f: SpectralField) -> float:
    """Relative gap between spectral and physical-grid L^2 norms."""
    a = f.l2_spectral()
    bb = f.l2_physical()
    denom = max(a, bb, 1e-300)
    return abs(a - bb) / denom


def dump_field_csv(f: SpectralField, path: str):
    with open(path, "w") as fh:
        fh.write("n,re,im\n")
        for n, c in zip(f.lattice.n_values, f.coeffs):
            fh.write("%d,%.17g,%.17g\n" % (n, c.real, c.imag))


def load_field_csv(lattice: FrequencyLattice, path: str) -> SpectralField:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    out = zero_field(lattice)
    ns = data[:, 0].astype(int)
    out.coeffs[lattice.index(ns)] = data[:, 1] + 1j * data[:, 2]
    return out
