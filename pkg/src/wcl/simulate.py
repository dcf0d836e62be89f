"""Direct integration of the truncated renormalized profile system.

The state is the profile vector a_k(s) on the stored window, s in [0, 1]
rescaled time.  The cubic right side is a direct lattice convolution with
precomputed index and weight tensors; oscillatory phases enter through a
single per-mode phase vector so each evaluation costs O(M^2) gathers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .amplitudes import GaugeRecord, a_app_eval
from .lattice import RandomDraw, SimConfig, SpectralField, phi_le, zero_field
from .symbols import TWO_PI, a2_total, a3_total, dispersion, ntilde


def truncate(f: SpectralField, K: int) -> SpectralField:
    return SpectralField(f.lattice, f.coeffs * phi_le(K, f.lattice.k_values))


def normal_form_data(u_in: SpectralField, config: SimConfig) -> SpectralField:
    """Truncated normal-form initial data from the raw random data."""
    K = config.K_tr
    pu = truncate(u_in, K)
    out = pu.coeffs.copy()
    out += truncate(a2_total(pu), K).coeffs
    out += truncate(a3_total(pu), K).coeffs
    return SpectralField(u_in.lattice, out)


# ---------------------------------------------------------------------------


@dataclass
class CubicKernel:
    """Index/weight tensors of the cubic convolution on the effective window."""

    sub_n: np.ndarray        # (Ms,) numerators of the active modes
    sub_idx: np.ndarray      # (Ms,) their storage indices
    pair_i1: np.ndarray      # (P,) indices into sub arrays
    pair_i2: np.ndarray
    weights: np.ndarray      # (P, Ms) i*ntilde, zero where invalid
    third: np.ndarray        # (P, Ms) storage index of the third mode
    max_rate: float

    @classmethod
    def build(cls, config: SimConfig, gauges: GaugeRecord) -> "CubicKernel":
        lat = gauges.lattice
        R = float(lat.R)
        neff = min(int(np.ceil(1.6 * 2.0 ** lat.K_tr * lat.R)) - 1, lat.nmax)
        sub_n = np.arange(-neff, neff + 1)
        Ms = len(sub_n)
        i1, i2 = np.meshgrid(np.arange(Ms), np.arange(Ms), indexing="ij")
        i1 = i1.ravel()
        i2 = i2.ravel()
        n1 = sub_n[i1]
        n2 = sub_n[i2]
        weights = np.zeros((len(i1), Ms), dtype=complex)
        third = np.zeros((len(i1), Ms), dtype=np.int64)
        lam = dispersion(lat.k_values) + config.epsilon ** 2 * gauges.gamma0_vals
        max_rate = 0.0
        for j, kn in enumerate(sub_n):
            n3v = n1 + n2 - kn
            ok = np.abs(n3v) <= neff
            w = np.zeros(len(i1), dtype=complex)
            if np.any(ok):
                w[ok] = 1j * ntilde(n1[ok] / R, n2[ok] / R, n3v[ok] / R)
            w *= phi_le(lat.K_tr, kn / R)
            weights[:, j] = w
            third[:, j] = lat.index(np.clip(n3v, -lat.nmax, lat.nmax))
            nz = w != 0.0
            if np.any(nz):
                rate = np.abs(
                    lam[lat.index(kn)]
                    - lam[lat.index(n1[nz])]
                    - lam[lat.index(n2[nz])]
                    + lam[lat.index(n3v[nz])]
                )
                max_rate = max(max_rate, float(np.max(rate)))
        return cls(sub_n, lat.index(sub_n), i1, i2, weights, third, max_rate)


@dataclass
class ProfileTrajectory:
    ts: np.ndarray           # (nt,)
    a: np.ndarray            # (nt, M) profile coefficients on the full window
    config: SimConfig
    gauges: GaugeRecord
    meta: dict = field(default_factory=dict)

    def at(self, t: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.ts - t)))
        return self.a[j]


class _Phases:
    """Phase and gauge lookups shared by the right side and the Duhamel form."""

    def __init__(self, config: SimConfig, gauges: GaugeRecord):
        self.cfg = config
        self.g = gauges
        lat = gauges.lattice
        self.lam = dispersion(lat.k_values) + config.epsilon ** 2 * gauges.gamma0_vals
        tg = gauges.tgrid
        self.cum_g1 = np.concatenate(
            [
                np.zeros((1, lat.size)),
                np.cumsum(
                    0.5 * (gauges.gamma1[1:] + gauges.gamma1[:-1]) * np.diff(tg)[:, None],
                    axis=0,
                ),
            ]
        )

    def gamma1_at(self, s: float) -> np.ndarray:
        tg = self.g.tgrid
        j = min(int(np.searchsorted(tg, s, side="right")) - 1, len(tg) - 2)
        j = max(j, 0)
        w = (s - tg[j]) / (tg[j + 1] - tg[j])
        return (1 - w) * self.g.gamma1[j] + w * self.g.gamma1[j + 1]

    def int_gamma1(self, s: float) -> np.ndarray:
        tg = self.g.tgrid
        j = min(int(np.searchsorted(tg, s, side="right")) - 1, len(tg) - 2)
        j = max(j, 0)
        dt = s - tg[j]
        gs = self.gamma1_at(s)
        return self.cum_g1[j] + 0.5 * (self.g.gamma1[j] + gs) * dt

    def U(self, s: float) -> np.ndarray:
        """e^{-i T1 (lam s + T1^{-1} int Gamma1)}; maps profiles to scaled
        truncated-solution coefficients."""
        th = self.cfg.T1 * self.lam * s + self.int_gamma1(s)
        return np.exp(-1j * th)


def _rhs_factory(config: SimConfig, gauges: GaugeRecord, kernel: CubicKernel):
    lat = gauges.lattice
    ph = _Phases(config, gauges)
    pref = config.T1 * (config.epsilon ** 2 / float(lat.R))
    sub_idx = kernel.sub_idx

    def rhs(s: float, a: np.ndarray) -> np.ndarray:
        U = ph.U(s)
        v = U * a
        vs = v[sub_idx]
        V2 = vs[kernel.pair_i1] * vs[kernel.pair_i2]
        Vc = np.conj(v)[kernel.third]
        conv = (kernel.weights * Vc * V2[:, None]).sum(axis=0)
        out = np.zeros_like(a)
        out[sub_idx] = pref * np.conj(U[sub_idx]) * conv
        gauge = 1j * config.T1 * (
            config.epsilon ** 2 * gauges.gamma0_vals + ph.gamma1_at(s) / config.T1
        )
        return out + gauge * a

    rhs.phases = ph
    return rhs


def default_step(config: SimConfig, kernel: CubicKernel) -> float:
    rate = max(kernel.max_rate, 1.0) + 8.0 / config.T1
    return 1.0 / (10.0 * config.T1 * rate)


def solve_truncated(
    config: SimConfig,
    draw: RandomDraw,
    gauges: GaugeRecord,
    t_end: float = 1.0,
    dt: float | None = None,
    kernel: CubicKernel | None = None,
    store_every: int = 1,
    initial: np.ndarray | None = None,
) -> ProfileTrajectory:
    """Classical RK4 on the renormalized profile equation."""
    from .lattice import initial_data_u

    lat = gauges.lattice
    kernel = kernel or CubicKernel.build(config, gauges)
    dt = dt or default_step(config, kernel)
    nsteps = max(1, int(np.ceil(t_end / dt)))
    dt = t_end / nsteps
    rhs = _rhs_factory(config, gauges, kernel)

    if initial is None:
        u_in = initial_data_u(draw, config)
        w0 = normal_form_data(u_in, config)
        a = w0.coeffs / (np.sqrt(float(lat.R)) * config.epsilon)
    else:
        a = np.array(initial, dtype=complex)

    ts = [0.0]
    hist = [a.copy()]
    s = 0.0
    for step in range(nsteps):
        k1 = rhs(s, a)
        k2 = rhs(s + dt / 2, a + dt / 2 * k1)
        k3 = rhs(s + dt / 2, a + dt / 2 * k2)
        k4 = rhs(s + dt, a + dt * k3)
        a = a + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        s += dt
        if not np.all(np.isfinite(a)):
            break
        if (step + 1) % store_every == 0 or step == nsteps - 1:
            ts.append(s)
            hist.append(a.copy())
    return ProfileTrajectory(
        np.array(ts),
        np.array(hist),
        config,
        gauges,
        meta={"dt": dt, "method": "rk4", "order": 4, "finite": bool(np.all(np.isfinite(a)))},
    )


# ---------------------------------------------------------------------------
# profile <-> solution transforms


def extract_profile(w_coeffs: np.ndarray, s: float, gauges: GaugeRecord) -> np.ndarray:
    """Profile from truncated-solution coefficients at rescaled time s."""
    cfg = gauges.config
    ph = _Phases(cfg, gauges)
    scale = 1.0 / (np.sqrt(float(gauges.lattice.R)) * cfg.epsilon)
    return scale * np.conj(ph.U(s)) * w_coeffs


def inject_profile(a: np.ndarray, s: float, gauges: GaugeRecord) -> np.ndarray:
    cfg = gauges.config
    ph = _Phases(cfg, gauges)
    scale = np.sqrt(float(gauges.lattice.R)) * cfg.epsilon
    return scale * ph.U(s) * a


# ---------------------------------------------------------------------------
# comparison metric


def weighted_discrepancy(lat, a1: np.ndarray, a2: np.ndarray) -> float:
    """R^{-1} sum <k>^10 |a1 - a2| over the window."""
    w = (1.0 + lat.k_values ** 2) ** 5
    return float(np.sum(w * np.abs(a1 - a2)) / lat.R)


def compare_profiles(
    traj: ProfileTrajectory,
    draw: RandomDraw,
    t_points,
    N: int | None = None,
) -> np.ndarray:
    """Discrepancy series between the solved profile and the tree expansion."""
    cfg = traj.config
    lat = traj.gauges.lattice
    t_points = np.atleast_1d(np.asarray(t_points, dtype=float))
    app = a_app_eval(lat.n_values, t_points, draw, traj.gauges, cfg, N=N)
    out = np.empty(len(t_points))
    for j, t in enumerate(t_points):
        out[j] = weighted_discrepancy(lat, traj.at(t), app[:, j])
    return out


# ---------------------------------------------------------------------------
# Duhamel form, defect and linearization


def _cumulative_simpson(vals: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative integral along axis 0 of uniformly sampled values;
    Simpson on pairs of panels, trapezoid correction on odd tails."""
    n = vals.shape[0]
    out = np.zeros_like(vals)
    if n < 2:
        return out
    for j in range(1, n):
        if j >= 2:
            out[j] = out[j - 2] + dt / 3.0 * (vals[j - 2] + 4 * vals[j - 1] + vals[j])
        else:
            out[j] = out[j - 1] + 0.5 * dt * (vals[j - 1] + vals[j])
    return out


class DuhamelForm:
    """Integral form of the profile equation along a stored time grid."""

    def __init__(self, config: SimConfig, gauges: GaugeRecord, ts: np.ndarray,
                 kernel: CubicKernel | None = None):
        self.cfg = config
        self.g = gauges
        self.ts = np.asarray(ts, dtype=float)
        self.kernel = kernel or CubicKernel.build(config, gauges)
        self.ph = _Phases(config, gauges)
        self.Umat = np.array([self.ph.U(s) for s in self.ts])
        self.g1mat = np.array([self.ph.gamma1_at(s) for s in self.ts])

    def _dt(self):
        d = np.diff(self.ts)
        if d.size and not np.allclose(d, d[0]):
            raise ValueError("Duhamel form requires a uniform grid")
        return d[0] if d.size else 0.0

    def cubic_term(self, a_traj: np.ndarray, slots=(("a", "a", "a"),), b_traj=None) -> np.ndarray:
        """Time integral of the cubic convolution with the given slot fill.

        Each slot triple names which trajectory enters each argument ('a' or
        'b'); summing over the three single-b slots gives the derivative of
        the cubic term at a in the direction b.
        """
        cfg, g, ker = self.cfg, self.g, self.kernel
        lat = g.lattice
        pref = cfg.T1 * (cfg.epsilon ** 2 / float(lat.R))
        nt = len(self.ts)
        vals = np.zeros((nt, lat.size), dtype=complex)
        for m in range(nt):
            U = self.Umat[m]
            va = U * a_traj[m]
            vb = U * b_traj[m] if b_traj is not None else None
            vs = {"a": va[ker.sub_idx], "b": None if vb is None else vb[ker.sub_idx]}
            acc = np.zeros(len(ker.sub_idx), dtype=complex)
            for s1, s2, s3 in slots:
                V2 = vs[s1][ker.pair_i1] * vs[s2][ker.pair_i2]
                Vc = np.conj((va if s3 == "a" else vb))[ker.third]
                acc += (ker.weights * Vc * V2[:, None]).sum(axis=0)
            out = np.zeros(lat.size, dtype=complex)
            out[ker.sub_idx] = pref * np.conj(U[ker.sub_idx]) * acc
            vals[m] = out
        return _cumulative_simpson(vals, self._dt())

    def gauge_term(self, a_traj: np.ndarray) -> np.ndarray:
        cfg, g = self.cfg, self.g
        integrand = 1j * cfg.T1 * (
            cfg.epsilon ** 2 * g.gamma0_vals[None, :] + self.g1mat / cfg.T1
        ) * a_traj
        return _cumulative_simpson(integrand, self._dt())

    def rhs_total(self, a_traj: np.ndarray, a0: np.ndarray) -> np.ndarray:
        """Initial data + cubic Duhamel integral + gauge integral."""
        return a0[None, :] + self.cubic_term(a_traj) + self.gauge_term(a_traj)

    def defect(self, a_traj: np.ndarray, a0: np.ndarray) -> np.ndarray:
        """Residual of the integral equation along the trajectory."""
        return self.rhs_total(a_traj, a0) - a_traj

    def apply_L0(self, b_traj: np.ndarray, a_app_traj: np.ndarray) -> np.ndarray:
        """Linearization at a_app applied to b (R-linear in b)."""
        slots = (("b", "a", "a"), ("a", "b", "a"), ("a", "a", "b"))
        cubic = self.cubic_term(a_app_traj, slots=slots, b_traj=b_traj)
        return cubic + self.gauge_term(b_traj)
