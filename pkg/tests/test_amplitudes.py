import numpy as np
import pytest

from wcl import amplitudes as amp
from wcl import lattice as lt
from wcl import simulate as sim
from wcl import symbols as sym
from wcl import trees as tr

L = lambda s: ("L", s)
I3 = lambda s, kids: ("I", s, tuple(kids))


def test_trivial_tree_value(desk_cfg, desk_gauges, desk_draw):
    pt = tr.PairedTree(L(1), frozenset())
    for n in (0, 1, 3):
        v = amp.eval_JT(pt, n, 0.4, desk_draw, desk_gauges, desk_cfg)
        k = n / desk_cfg.R
        want = lt.phi_le(desk_cfg.K_tr, k) * np.sqrt(desk_cfg.psi(k)) * desk_draw.g_of_n(n)
        assert abs(v - want) <= 1e-15


def test_prefactor_scaling_in_epsilon(desk_gauges, desk_draw):
    # rank-3 interaction tree scales exactly like epsilon^2 at fixed T1
    tree = tr.PairedTree(I3(1, [L(1), L(1), L(-1)]), frozenset())
    vals = {}
    for eps in (0.1, 0.05):
        cfg = lt.SimConfig(epsilon=eps, R=4, K_tr=1, N=3, T1=50.0)
        g = amp.GaugeRecord.build(cfg)
        g.gamma0_vals[:] = 0.0  # isolate the prefactor
        vals[eps] = amp.eval_JT(tree, 1, 0.5, desk_draw, g, cfg)
    assert abs(vals[0.1] / vals[0.05] - 4.0) <= 1e-9


def test_trivial_couple_and_draw_independence(desk_cfg, desk_gauges):
    v = amp.eval_KQ(tr.TRIVIAL_COUPLE, 1, 0.9, desk_gauges, desk_cfg)
    k = 1 / desk_cfg.R
    assert abs(v - desk_cfg.psi(k) * lt.phi_le(desk_cfg.K_tr, k) ** 2) <= 1e-15


def test_fast_and_slow_paths_agree(desk_cfg):
    gauges = amp.GaugeRecord.build(desk_cfg)
    # nonzero gauge to exercise the quadratic-phase machinery
    gauges.gamma1 = 0.3 * np.cos(3 * gauges.tgrid)[:, None] * np.ones((1, gauges.lattice.size))
    couples = amp.moment_couples(3)[:6]
    for c in couples:
        fast = amp.eval_KQ(c, 1, 0.63, gauges, desk_cfg)
        slow = amp.eval_KQ_slow(c, 1, 0.63, gauges, desk_cfg)
        assert abs(fast - slow) <= 1e-8 * max(1.0, abs(slow))


def test_eval_jt_fast_vs_slow(desk_cfg, desk_draw):
    gauges = amp.GaugeRecord.build(desk_cfg)
    gauges.gamma1 = 0.2 * np.sin(2 * gauges.tgrid)[:, None] * np.ones((1, gauges.lattice.size))
    pt = tr.PairedTree(I3(1, [L(1), L(1), L(-1)]), frozenset({frozenset((1, 2))}))
    fast = amp.eval_JT(pt, 2, 0.7, desk_draw, gauges, desk_cfg)
    slow = amp.eval_JT_slow(pt, 2, 0.7, desk_draw, gauges, desk_cfg)
    assert abs(fast - slow) <= 1e-8 * max(1.0, abs(slow))


def test_omega_exact_resonance_and_hand_formula(desk_cfg):
    gauges = amp.GaugeRecord.build(desk_cfg)
    pt = tr.PairedTree(I3(1, [L(1), L(1), L(-1)]), frozenset())
    # trivial resonance: first child carries the root value, others cancel
    deco = {("+", ()): 3, ("+", (0,)): 3, ("+", (1,)): 2, ("+", (2,)): 2}
    om = amp.omega_node(pt, "+", (), deco, 0.8, gauges)
    assert abs(om) <= 1e-15

    # zero gauges reduce to the dispersive mismatch times t
    gauges.gamma0_vals[:] = 0.0
    deco2 = {("+", ()): 4, ("+", (0,)): 1, ("+", (1,)): 4, ("+", (2,)): 1}
    om2 = amp.omega_node(pt, "+", (), deco2, 1.0, gauges)
    R = desk_cfg.R
    want = np.sqrt(4 / R) - np.sqrt(1 / R) - np.sqrt(4 / R) + np.sqrt(1 / R)
    assert abs(om2 - want) <= 1e-15
    deco3 = {("+", ()): 4, ("+", (0,)): 2, ("+", (1,)): 3, ("+", (2,)): 1}
    om3 = amp.omega_node(pt, "+", (), deco3, 0.5, gauges)
    want3 = 0.5 * (np.sqrt(1.0) - np.sqrt(0.5) - np.sqrt(0.75) + np.sqrt(0.25))
    assert abs(om3 - want3) <= 1e-15


def test_time_integral_structure_closed_form(desk_cfg):
    gauges = amp.GaugeRecord.build(desk_cfg)
    gauges.gamma0_vals[:] = 0.0
    pt = tr.PairedTree(I3(1, [L(1), L(1), L(-1)]), frozenset())
    deco = {("+", ()): 4, ("+", (0,)): 2, ("+", (1,)): 3, ("+", (2,)): 1}
    t = 0.9
    res = amp.time_integral(pt, deco, t, gauges)
    om_rate = np.sqrt(1.0) - np.sqrt(0.5) - np.sqrt(0.75) + np.sqrt(0.25)
    alpha = desk_cfg.T1 * om_rate
    want = (np.exp(1j * alpha * t) - 1) / (1j * alpha)
    assert res.converged
    assert abs(res.value - want) <= 1e-7 * abs(want)


def test_initial_data_identity_many_seeds(desk_cfg):
    cfg = lt.SimConfig(epsilon=0.1, R=4, K_tr=2, N=3)
    gauges = amp.GaugeRecord.build(cfg)
    lat = gauges.lattice
    no_I = [
        pt for pt in amp.admissible_paired_trees(3) if tr.n_interaction(pt.tree) == 0
    ]
    for seed in range(3):
        draw = lt.sample_gaussians(lat, seed)
        u = lt.initial_data_u(draw, cfg)
        data = sim.normal_form_data(u, cfg).coeffs / (np.sqrt(float(lat.R)) * cfg.epsilon)
        tot = np.zeros(lat.size, dtype=complex)
        for pt in no_I:
            tot += amp.DecorationTable(pt, cfg, gauges).j_values(draw, gauges, [0.0])[:, 0]
        assert np.max(np.abs(tot - data)) <= 1e-8


def test_a_app_at_t0_equals_data(desk_cfg, desk_gauges, desk_draw):
    lat = desk_gauges.lattice
    u = lt.initial_data_u(desk_draw, desk_cfg)
    data = sim.normal_form_data(u, desk_cfg).coeffs / (np.sqrt(float(lat.R)) * desk_cfg.epsilon)
    app = amp.a_app_eval(lat.n_values, [0.0], desk_draw, desk_gauges, desk_cfg)[:, 0]
    assert np.max(np.abs(app - data)) <= 1e-10


def test_second_moment_identity_small(desk_cfg, desk_gauges):
    lat = desk_gauges.lattice
    rng = np.random.default_rng(99)
    S = 6000
    gmat = (rng.standard_normal((S, lat.size)) + 1j * rng.standard_normal((S, lat.size))) / np.sqrt(2)
    gmat[:, lat.index(0)] = 0.0
    for r in (1, 2, 3):
        kn, t = 1, 0.47
        ptrees = [pt for pt in amp.admissible_paired_trees(r) if tr.rank(pt.tree) == r]
        J = np.zeros(S, dtype=complex)
        for pt in ptrees:
            J += amp.DecorationTable(pt, desk_cfg, desk_gauges, roots_n=[kn]).j_samples(
                gmat, desk_gauges, 0, t
            )
        m2 = np.abs(J) ** 2
        ksum = sum(
            amp.eval_KQ(c, kn, t, desk_gauges, desk_cfg) for c in amp.moment_couples(r)
        )
        se = m2.std() / np.sqrt(S)
        assert abs(m2.mean() - np.real(ksum)) <= 3.5 * se
        assert abs(np.imag(ksum)) <= 1e-12


def test_gamma1_zero_cases(desk_cfg):
    # amplitude prefactor kills the map at tiny epsilon
    cfg = lt.SimConfig(epsilon=1e-8, R=4, K_tr=1, N=3, T1=10.0)
    g = amp.gamma1_solve(cfg, tpoints=16)
    assert g.gamma1_sup <= 1e-12
    # an empty nontrivial-couple set gives zero as well
    g2 = amp.gamma1_solve(desk_cfg, tpoints=16, couples=[])
    assert g2.gamma1_sup == 0.0


def psi_asym(x):
    """Positive decaying profile without the reflection symmetry that makes
    the renormalization vanish identically."""
    x = np.asarray(x, dtype=float)
    return (1.0 + x * x) ** -8 * (1.0 + 0.8 * x / (1.0 + x * x))


def test_gamma0_vanishes_for_even_profile(desk_gauges):
    # the diagonal kernel is odd in the summation variable, so the static
    # shift cancels exactly for reflection-symmetric spectra
    assert np.max(np.abs(desk_gauges.gamma0_vals)) <= 1e-15


def test_gamma1_fixed_point_uniqueness():
    cfg = lt.SimConfig(epsilon=0.15, R=4, K_tr=1, N=3, psi=psi_asym, psi_name="asym")
    couples = amp.gamma1_couples(cfg.N)
    g1 = amp.gamma1_solve(cfg, tpoints=32, couples=couples)
    start = np.full_like(g1.gamma1, 0.5)
    g2 = amp.gamma1_solve(cfg, tpoints=32, couples=couples, start=start)
    assert g1.diagnostics["converged"] and g2.diagnostics["converged"]
    assert np.max(np.abs(g1.gamma1 - g2.gamma1)) <= 1e-6
    assert g1.gamma1_sup > 0.0  # genuinely nontrivial fixed point
    ratios = g2.diagnostics["contraction_ratios"]
    assert ratios and max(ratios) < 1.0
    assert g1.gamma1_sup <= 1.0


def test_gamma1_is_real_and_gauge_accessor(desk_cfg):
    g = amp.gamma1_solve(desk_cfg, tpoints=16)
    assert g.diagnostics["imag_residual"] <= 1e-10
    assert g.Gamma(0.0, 1) == 0.0
    v = g.Gamma(0.5, 1)
    assert np.isfinite(v)


def test_chain_bracket_properties():
    psi = lt.psi_rational
    b, _ = amp.chain_bracket(0.7, 0.7, -0.2, -0.2, 2, psi)
    assert b == 0.0
    # twist exchange: swapping both slots flips the sign
    b1, _ = amp.chain_bracket(0.4, 0.65, 0.3, 0.05, 2, psi)
    b2, _ = amp.chain_bracket(0.65, 0.4, 0.05, 0.3, 2, psi)
    assert abs(b1 + b2) <= 1e-15
    with pytest.raises(ValueError):
        amp.chain_bracket(0.4, 0.65, 0.3, 0.2, 2, psi)


def test_chain_bracket_slope():
    psi = lt.psi_rational
    rng = np.random.default_rng(12)
    base = rng.uniform(-1, 1, (40, 2))
    base = np.vstack([base, [[0.0, 0.6], [0.5, 0.0]]])
    hs = 2.0 ** -np.arange(2, 11)
    maxima = []
    for h in hs:
        vals = []
        for kj, kj1 in base:
            b, _ = amp.chain_bracket(kj - h, kj, kj1, kj1 - h, 2, psi)
            vals.append(abs(b))
        maxima.append(max(vals))
    maxima = np.array(maxima)
    keep = maxima > 0
    slope = np.polyfit(np.log(hs[keep]), np.log(maxima[keep]), 1)[0]
    assert slope >= 0.4


def test_sub_exponential_tails(desk_cfg, desk_gauges):
    # qualitative: cubic chaos has heavier tails than Gaussian
    lat = desk_gauges.lattice
    rng = np.random.default_rng(5)
    S = 10 ** 5
    gmat = (rng.standard_normal((S, lat.size)) + 1j * rng.standard_normal((S, lat.size))) / np.sqrt(2)
    gmat[:, lat.index(0)] = 0.0

    def tail_exponent(samples):
        re = np.real(samples)
        x = np.abs((re - re.mean()) / re.std())
        qs = np.quantile(x, [0.9, 0.97, 0.99, 0.997])
        surv = np.array([np.mean(x > q) for q in qs])
        return np.polyfit(np.log(qs), np.log(-np.log(surv)), 1)[0]

    j1 = gmat[:, lat.index(1)]
    e1 = tail_exponent(j1)
    trees3 = [pt for pt in amp.admissible_paired_trees(3) if tr.rank(pt.tree) == 3]
    J3 = np.zeros(S, dtype=complex)
    for pt in trees3:
        J3 += amp.DecorationTable(pt, desk_cfg, desk_gauges, roots_n=[1]).j_samples(
            gmat, desk_gauges, 0, 0.8
        )
    e3 = tail_exponent(J3)
    assert 1.1 <= e1 <= 2.5       # Gaussian reference (exponent 2 asymptotically)
    assert 0.3 <= e3 <= 1.1       # cubic chaos reference (exponent 2/3)
    assert e3 < e1 - 0.3
