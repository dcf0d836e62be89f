"""Brute-force lattice counting: resonance windows near fixed centers,
scaling regressions in the box size and the inverse window width, and the
broken-chain divergence experiment.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .lattice import FrequencyLattice, build_lattice, psi_rational
from .symbols import dispersion, gamma0


@dataclass
class SigmaSpec:
    """One counting set: r vectors near integer-numerator centers k0 with a
    linear constraint and a dispersive window of width 1/T1 around beta."""

    r: int
    zetas: tuple
    k0_n: tuple            # centers, integer numerators
    kstar_n: int           # linear-constraint target numerator
    beta: float
    T1: float
    R: int
    eps: float = 0.0
    K_tr: int = 2
    psi: object = psi_rational
    radius: float = 1.0

    def __post_init__(self):
        if self.r not in (2, 3):
            raise ValueError("r must be 2 or 3")
        if len(self.zetas) != self.r or len(self.k0_n) != self.r:
            raise ValueError("need one sign and one center per vector")
        if self.R * 3 > 10 ** 4:
            raise ValueError("per-axis budget exceeded")


def _weight_fn(spec: SigmaSpec):
    if spec.eps == 0.0:
        return lambda k: dispersion(k)
    lat = build_lattice(spec.R, spec.K_tr)
    cache = {}

    def w(k):
        key = np.asarray(k).tobytes()
        if key not in cache:
            cache[key] = dispersion(k) + spec.eps ** 2 * gamma0(k, lat, spec.psi)
        return cache[key]

    return w


def sigma_count(spec: SigmaSpec) -> int:
    """Exact size of the counting set; the linear constraint eliminates the
    last vector."""
    R = spec.R
    w = _weight_fn(spec)
    rad = int(np.floor(spec.radius * R))
    win = np.arange(-rad, rad + 1)
    grids = [spec.k0_n[j] + win for j in range(spec.r - 1)]
    mesh = np.meshgrid(*grids, indexing="ij")
    flat = [g.ravel() for g in mesh]
    acc_n = np.zeros_like(flat[0])
    phase = np.zeros(flat[0].shape, dtype=float)
    for j in range(spec.r - 1):
        acc_n = acc_n + spec.zetas[j] * flat[j]
        phase = phase + spec.zetas[j] * w(flat[j] / float(R))
    last_n = spec.zetas[-1] * (spec.kstar_n - acc_n)
    ok = np.abs(last_n - spec.k0_n[-1]) <= rad
    phase = phase + spec.zetas[-1] * w(last_n / float(R))
    ok &= np.abs(phase - spec.beta) <= 1.0 / spec.T1
    return int(np.sum(ok))


def sigma_count_oracle(spec: SigmaSpec) -> int:
    """Permutation-reordered loop: eliminate the first vector instead."""
    perm = list(range(spec.r))[::-1]
    spec2 = SigmaSpec(
        r=spec.r,
        zetas=tuple(spec.zetas[j] for j in perm),
        k0_n=tuple(spec.k0_n[j] for j in perm),
        kstar_n=spec.kstar_n,
        beta=spec.beta,
        T1=spec.T1,
        R=spec.R,
        eps=spec.eps,
        K_tr=spec.K_tr,
        psi=spec.psi,
        radius=spec.radius,
    )
    return sigma_count(spec2)


def resonant_beta(spec: SigmaSpec) -> float:
    """Phase value at the window centers; a natural near-resonant choice."""
    w = _weight_fn(spec)
    return float(
        sum(z * w(np.array(n / spec.R)) for z, n in zip(spec.zetas, spec.k0_n))
    )


# ---------------------------------------------------------------------------
# scaling regressions


@dataclass
class RegressionResult:
    exp_R: float
    exp_T1: float
    table: list
    log_counts: np.ndarray


def scaling_regression(
    family: str,
    R_grid,
    T1_grid,
    samples: int = 8,
    seed: int = 0,
    eps: float = 0.0,
) -> RegressionResult:
    """Log-log least squares exponents of the mean counting-set size over a
    (R, T1) grid for one of the three families:

      '2vec1'  r=2, opposite signs, nonzero shift,
      '2vec2'  r=2, equal signs, window at the stationary configuration,
      '3vec'   r=3, mixed signs.
    """
    rng = np.random.default_rng(seed)
    rows = []
    for R in R_grid:
        for T1 in T1_grid:
            vals = []
            for _ in range(samples):
                if family == "2vec1":
                    base = rng.integers(R, 2 * R)  # center near frequency 1..2
                    spec = SigmaSpec(
                        2, (1, -1), (int(base + R), int(base)), R, 0.0, T1, R, eps=eps
                    )
                    spec.beta = resonant_beta(spec) + (rng.uniform(-0.2, 0.2) / T1)
                elif family == "2vec2":
                    half = rng.integers(R, 2 * R)
                    spec = SigmaSpec(
                        2, (1, 1), (int(half), int(half)), int(2 * half), 0.0, T1, R, eps=eps
                    )
                    spec.beta = resonant_beta(spec) + (rng.uniform(-0.2, 0.2) / T1)
                elif family == "3vec":
                    c = [int(rng.integers(R, 2 * R)) for _ in range(3)]
                    zet = (1, -1, 1)
                    kstar = int(sum(z * n for z, n in zip(zet, c)))
                    spec = SigmaSpec(3, zet, tuple(c), kstar, 0.0, T1, R, eps=eps)
                    spec.beta = resonant_beta(spec) + (rng.uniform(-0.2, 0.2) / T1)
                else:
                    raise ValueError("unknown family %r" % family)
                vals.append(sigma_count(spec))
            mean = float(np.mean(vals))
            rows.append((R, T1, mean))
    rows_pos = [r for r in rows if r[2] > 0]
    A = np.array([[1.0, np.log(r[0]), np.log(r[1])] for r in rows_pos])
    y = np.log(np.array([r[2] for r in rows_pos]))
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return RegressionResult(float(coef[1]), float(coef[2]), rows, y)


# ---------------------------------------------------------------------------
# divergence experiment


@dataclass
class BrokenChain:
    """Ladder of 4q+1 interaction nodes with the fixed-point-free pairing
    of the divergence construction; counts restricted decorations with all
    resonance defects below a multiple of 1/T1."""

    q: int
    R: int
    T1: float
    center_n: int            # common window center (numerator units)
    omega_tol_mult: float = 2.0

    def __post_init__(self):
        if self.q > 3:
            raise ValueError("q budget is 3")

    def reference_count(self) -> float:
        """The heuristic normalization (R^4 / T1)^q."""
        return (float(self.R) ** 4 / self.T1) ** self.q

    def pair_tally(self) -> float:
        """Exact count by the factorized structure of the swap pairing.

        Free variables per rung pair (odd j): an anchored value and a mate
        within 1/T1; the even interior nodes are free in their windows; all
        derived values land inside the doubled windows automatically.
        """
        R, T1, q = self.R, self.T1, self.q
        halfwin = R // 2
        ell = np.arange(self.center_n - halfwin, self.center_n + halfwin + 1)
        width = int(np.floor(R / T1))
        per_pair = 0
        for v in ell:
            lo = max(v - width, ell[0])
            hi = min(v + width, ell[-1])
            per_pair += hi - lo + 1
        n_even = 2 * q
        return float(per_pair) ** q * float(len(ell)) ** n_even

    def brute_count(self, budget: int = 4 * 10 ** 7) -> float | None:
        """Direct enumeration with explicit resonance checks; None above
        budget.  Only implemented for q = 1."""
        if self.q != 1:
            return None
        R, T1 = self.R, self.T1
        halfwin = R // 2
        c = self.center_n
        ell = np.arange(c - halfwin, c + halfwin + 1)
        if len(ell) ** 4 > budget:
            return None
        l1, p1, k2, k4 = np.meshgrid(ell, ell, ell, ell, indexing="ij")
        ok = np.abs(l1 - p1) * T1 <= self.R  # |l1 - p1|/R <= 1/T1
        k0 = p0 = c
        k1 = k2 + p1 - l1
        k3 = k4 + l1 - p1
        l0 = k1 + p0 - k0
        p2 = l0
        l2 = p2 + k3 - k2
        # window checks for the derived values (doubled windows)
        for arr in (k1, k3, l0, l2):
            ok &= np.abs(arr - c) <= R
        # resonance defects
        def w(n):
            return dispersion(n / float(R))

        tol = self.omega_tol_mult / T1
        om0 = w(k0) - w(k1) + w(l0) - w(p0)
        om1 = w(k1) - w(k2) + w(l1) - w(p1)
        om2 = w(k2) - w(k3) + w(l2) - w(p2)
        om3 = w(k3) - w(k4) + w(p1) - w(l1)
        for om in (om0, om1, om2, om3):
            ok &= np.abs(om) <= tol
        return float(np.sum(ok))

    def normalized_quantity(self, eps: float, count: float | None = None) -> float:
        """count times the amplitude prefactor of the embedded structure."""
        if count is None:
            count = self.pair_tally()
        q = self.q
        pref = (eps / np.sqrt(float(self.R))) ** (8 * q) * self.T1 ** (4 * q)
        return float(count) * pref


def divergence_scan(alphas, eps_list, qs, R_of_eps=None, center_freq: float = 2.0):
    """Table of normalized broken-chain sizes over exponent and amplitude
    grids; R is tied to the window width so the mate count stays resolved."""
    rows = []
    for alpha in alphas:
        for q in qs:
            for eps in eps_list:
                T1 = float(eps) ** (-float(alpha))
                R = int(R_of_eps(eps, T1)) if R_of_eps else int(np.ceil(2 * T1))
                chain = BrokenChain(q=q, R=R, T1=T1, center_n=int(center_freq * R))
                count = chain.pair_tally()
                rows.append(
                    {
                        "alpha": alpha,
                        "q": q,
                        "eps": eps,
                        "R": R,
                        "T1": T1,
                        "count": count,
                        "count_over_ref": count / chain.reference_count(),
                        "normalized": chain.normalized_quantity(eps, count),
                    }
                )
    return rows
