"""Quick invariant suite behind the `verify` command.

Each property is a small self-contained check returning (ok, detail); the
suite is deliberately cheap so it can gate every run.
"""

from __future__ import annotations

import numpy as np

from . import amplitudes as amp
from . import counting as cnt
from . import lattice as lt
from . import molecules as mol
from . import simulate as sim
from . import symbols as sym
from . import timeint
from . import trees as tr


def _cfg(**kw):
    base = dict(epsilon=0.1, R=4, K_tr=1, N=3, seed=7)
    base.update(kw)
    return lt.SimConfig(**base)


def _rand_triples(n, seed=0, radius=4.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-radius, radius, (3, n))


PROPERTIES = []


def prop(name):
    def deco(fn):
        PROPERTIES.append((name, fn))
        return fn

    return deco


@prop("lattice-mode-count")
def _p(quick):
    lat = lt.build_lattice(10, 3)
    return lat.size == 321, "M=%d" % lat.size


@prop("lattice-parseval")
def _p(quick):
    cfg = _cfg(K_tr=2)
    lat = cfg.lattice()
    draw = lt.sample_gaussians(lat, 3)
    f = lt.initial_data_u(draw, cfg)
    d = lt.parseval_defect(f)
    return d <= 1e-10, "defect %.2e" % d


@prop("draw-determinism")
def _p(quick):
    lat = lt.build_lattice(4, 2)
    a = lt.sample_gaussians(lat, 5).g
    b = lt.sample_gaussians(lat, 5).g
    return bool(np.array_equal(a, b)), "bitwise equal"


@prop("draw-zero-mode")
def _p(quick):
    lat = lt.build_lattice(4, 2)
    d = lt.sample_gaussians(lat, 5)
    return d.g_of_n(0) == 0.0, "g_0 = 0"


@prop("draw-variance")
def _p(quick):
    lat = lt.build_lattice(500, 2)
    d = lt.sample_gaussians(lat, 11)
    m = float(np.mean(np.abs(d.g[d.g != 0]) ** 2))
    return abs(m - 1.0) <= 5.0 / np.sqrt(lat.size), "mean|g|^2 %.4f" % m


@prop("symbols-quadratic-cancellation")
def _p(quick):
    worst = sym.verify_quadratic_cancellation(10 ** 4 if quick else 10 ** 5)
    return worst <= 1e-12, "max %.2e" % worst


@prop("symbols-table-vs-closed")
def _p(quick):
    x = _rand_triples(10 ** 4 if quick else 10 ** 5, 1)
    m = (x[0] + x[1] + x[2]) >= 0
    e, r, s = x[0][m], x[1][m], x[2][m]
    d1 = np.max(np.abs(sym.a31_table(e, r, s) - sym.a31_closed(e, r, s)))
    d2 = np.max(np.abs(sym.a32_table(e, r, s) - sym.a32_closed(e, r, s)))
    return max(d1, d2) <= 1e-10, "max %.2e" % max(d1, d2)


@prop("symbols-n3-structure")
def _p(quick):
    x = _rand_triples(10 ** 4, 2)
    v = sym.n3(x[0], x[1], x[2])
    re = np.max(np.abs(v.real))
    sv = np.max(np.abs(v - sym.n3(x[1], x[0], x[2])))  # bitwise symmetric
    prod = x[0] * x[1] * x[2] * x.sum(axis=0)
    supp = np.max(np.abs(v[prod > 0])) if np.any(prod > 0) else 0.0
    hom = np.max(np.abs(sym.n3(4 * x[0], 4 * x[1], 4 * x[2]) - 32.0 * v))
    ok = re == 0.0 and sv == 0.0 and supp == 0.0 and hom <= 1e-9
    return ok, "re %.1e sym %.1e supp %.1e hom %.1e" % (re, sv, supp, hom)


@prop("symbols-q-homogeneity")
def _p(quick):
    v1 = sym.q_normal("++-", 4.0, 4.0, 4.0)
    v2 = 16 * sym.q_normal("++-", 1.0, 1.0, 1.0)
    return abs(v1 - v2) <= 1e-12, "%.3e" % abs(v1 - v2)


@prop("symbols-upsilon-scale-invariance")
def _p(quick):
    rng = np.random.default_rng(3)
    x = rng.uniform(-2, 2, (3, 200))
    d = np.max(np.abs(sym.upsilon(2 * x[0], 2 * x[1], 2 * x[2]) - sym.upsilon(*x)))
    return d == 0.0, "max %.1e" % d


@prop("symbols-a2-homogeneity")
def _p(quick):
    rng = np.random.default_rng(4)
    e, r = rng.uniform(-3, 3, (2, 500))
    d = 0.0
    for pair in ("++", "+-", "--"):
        d = max(d, float(np.max(np.abs(sym.a2_symbol(pair, 2 * e, 2 * r) - 2 * sym.a2_symbol(pair, e, r)))))
    return d <= 1e-12, "max %.1e" % d


@prop("symbols-gamma0-cutoff")
def _p(quick):
    lat = lt.build_lattice(4, 2)
    v = sym.gamma0(100.0, lat, lt.psi_rational)
    w = sym.gamma0(0.5, lat, lt.psi_rational)
    return v == 0.0 and np.isfinite(w), "outside %.1e inside %.3e" % (v, w)


@prop("trees-enumeration-valid")
def _p(quick):
    ok = all(tr.validate(t) for t in tr.enumerate_trees(4, 3, tr.PLUS))
    n = sum(1 for _ in tr.enumerate_trees(3, 3, tr.PLUS, allow_N=False))
    return ok and n == 5, "rank3 no-N count %d" % n


@prop("trees-admissibility")
def _p(quick):
    t3 = ("I", 1, (("L", 1), ("L", 1), ("L", -1)))
    paired = tr.PairedTree(t3, frozenset({frozenset((1, 2))}))
    unpaired = tr.PairedTree(t3, frozenset())
    leaf = tr.PairedTree(("L", 1), frozenset())
    ok = (not tr.is_admissible(paired)) and tr.is_admissible(unpaired) and tr.is_admissible(leaf)
    return ok, "3-leaf pairing rules"


@prop("trees-wick-zero-mean")
def _p(quick):
    rng = np.random.default_rng(5)
    S = 200000
    g = {k: (rng.standard_normal(S) + 1j * rng.standard_normal(S)) / np.sqrt(2) for k in (1, 2)}
    vals = tr.wick([1, 1, -1], [g[1], g[2], np.conj(g[2])], lambda i, j: 1.0 if {i, j} == {1, 2} else 0.0)
    m = abs(np.mean(vals))
    se = np.std(vals) / np.sqrt(S)
    return m <= 4 * se, "mean %.2e vs 4se %.2e" % (m, 4 * se)


@prop("trees-decoration-oracle")
def _p(quick):
    t3 = ("I", 1, (("L", 1), ("L", 1), ("L", -1)))
    pt = tr.PairedTree(t3, frozenset())
    got = sum(1 for _ in tr.decorations(pt, 1, 3))
    # two free leaves in [-3,3], third determined and window-checked
    cnt2 = 0
    for k1 in range(-3, 4):
        for k2 in range(-3, 4):
            k3 = k1 + k2 - 1
            if abs(k3) <= 3:
                cnt2 += 1
    return got == cnt2, "%d vs %d" % (got, cnt2)


@prop("amplitudes-trivial-tree")
def _p(quick):
    cfg = _cfg()
    g = amp.GaugeRecord.build(cfg)
    draw = lt.sample_gaussians(g.lattice, cfg.seed)
    v = amp.eval_JT(tr.PairedTree(("L", 1), frozenset()), 2, 0.3, draw, g, cfg)
    k = 2 / cfg.R
    want = lt.phi_le(cfg.K_tr, k) * np.sqrt(cfg.psi(k)) * draw.g_of_n(2)
    return abs(v - want) <= 1e-14, "err %.1e" % abs(v - want)


@prop("amplitudes-trivial-couple")
def _p(quick):
    cfg = _cfg()
    g = amp.GaugeRecord.build(cfg)
    v = amp.eval_KQ(tr.TRIVIAL_COUPLE, 2, 0.5, g, cfg)
    k = 2 / cfg.R
    want = cfg.psi(k) * lt.phi_le(cfg.K_tr, k) ** 2
    return abs(v - want) <= 1e-14, "err %.1e" % abs(v - want)


@prop("amplitudes-initial-data-identity")
def _p(quick):
    cfg = _cfg(K_tr=2)
    g = amp.GaugeRecord.build(cfg)
    lat = g.lattice
    draw = lt.sample_gaussians(lat, 23)
    u = lt.initial_data_u(draw, cfg)
    data = sim.normal_form_data(u, cfg).coeffs / (np.sqrt(float(lat.R)) * cfg.epsilon)
    tot = np.zeros(lat.size, dtype=complex)
    for pt in amp.admissible_paired_trees(3):
        if tr.n_interaction(pt.tree) > 0:
            continue
        tot += amp.DecorationTable(pt, cfg, g).j_values(draw, g, [0.0])[:, 0]
    err = float(np.max(np.abs(tot - data)))
    return err <= 1e-8, "max err %.1e" % err


@prop("amplitudes-time-integral-closed-form")
def _p(quick):
    res = timeint.nested_time_integral([timeint.PhaseNode(10.0, None, [])], 1.0)
    want = (np.exp(10j) - 1) / 10j
    return res.converged and abs(res.value - want) <= 1e-9, "err %.1e" % abs(res.value - want)


@prop("amplitudes-omega-telescoping")
def _p(quick):
    cfg = _cfg()
    g = amp.GaugeRecord.build(cfg)
    t3 = ("I", 1, (("L", 1), ("L", 1), ("L", -1)))
    pt = tr.PairedTree(t3, frozenset())
    deco = {("+", ()): 2, ("+", (0,)): 3, ("+", (1,)): 1, ("+", (2,)): 2}
    om0 = amp.omega_node(pt, "+", (), deco, 0.7, g)
    g.gamma1 = g.gamma1 + 0.37
    om1 = amp.omega_node(pt, "+", (), deco, 0.7, g)
    return abs(om0 - om1) <= 1e-12, "shift err %.1e" % abs(om0 - om1)


@prop("amplitudes-bracket-h0")
def _p(quick):
    b, _ = amp.chain_bracket(1.3, 1.3, 0.8, 0.8, 2, lt.psi_rational)
    return b == 0.0, "bracket %.1e" % abs(b)


@prop("molecules-chi-identity")
def _p(quick):
    bad = tot = 0
    for c in tr.enumerate_couples(3):
        mm = mol.build_molecule(c)
        if mm.molecule.V == 0 or not mm.molecule.connected():
            continue
        tot += 1
        if c.rank - 2 != 2 * mm.molecule.chi - 2:
            bad += 1
    return bad == 0 and tot > 50, "%d couples, %d violations" % (tot, bad)


@prop("molecules-splice-bookkeeping")
def _p(quick):
    c, chain = _chain_fixture()
    sb = mol.splice(c, [chain])
    ok = c.rank == sb.rank + 2 * chain.q and c.n_I == sb.n_I + chain.q
    return ok, "r %d->%d nI %d->%d" % (c.rank, sb.rank, c.n_I, sb.n_I)


@prop("molecules-twist-invariance")
def _p(quick):
    c, chain = _chain_fixture()
    cls = mol.congruence_class(c, chain)
    ok = len({x.canonical() for x in cls}) == 2 ** chain.q
    adm = len({tr.couple_is_admissible(x) for x in cls}) == 1
    return ok and adm, "class size %d" % len(cls)


@prop("molecules-cut-arithmetic")
def _p(quick):
    c, chain = _chain_fixture()
    mm = mol.build_molecule(c)
    m = mm.molecule
    ok = mol.degree_sum_identity(m)
    return ok, "degree-sum identity"


@prop("molecules-count-oracle")
def _p(quick):
    m = mol.Molecule()
    m.atoms = [mol.Atom("N", 2), mol.Atom("N", 2)]
    m.bonds = [mol.Bond(0, 1, "lp"), mol.Bond(1, 0, "lp")]
    centers = [3, 3]
    a = mol.count_decorations(m, centers, 3, 100.0)
    b = mol.count_decorations_oracle(m, centers, 3, 100.0)
    return a.exact and a.count == b.count, "count %g" % a.count


@prop("counting-sigma-oracle")
def _p(quick):
    rng = np.random.default_rng(9)
    for _ in range(5 if quick else 20):
        R = int(rng.integers(4, 30))
        zetas = tuple(rng.choice([1, -1], 2))
        k0 = tuple(int(x) for x in rng.integers(-2 * R, 2 * R, 2))
        kst = int(zetas[0] * k0[0] + zetas[1] * k0[1] + rng.integers(-2, 3))
        spec = cnt.SigmaSpec(2, zetas, k0, kst, 0.0, 50.0, R)
        spec.beta = cnt.resonant_beta(spec)
        if cnt.sigma_count(spec) != cnt.sigma_count_oracle(spec):
            return False, "mismatch at R=%d" % R
    return True, "oracle matches"


@prop("counting-monotone-T1")
def _p(quick):
    spec = cnt.SigmaSpec(2, (1, -1), (30, 20), 10, 0.0, 20.0, 10)
    spec.beta = cnt.resonant_beta(spec)
    c1 = cnt.sigma_count(spec)
    spec.T1 = 200.0
    c2 = cnt.sigma_count(spec)
    return c2 <= c1, "%d -> %d" % (c1, c2)


@prop("simulate-linear-conservation")
def _p(quick):
    cfg = _cfg(epsilon=1e-9, T1=1.0)
    g = amp.GaugeRecord.build(cfg)
    draw = lt.sample_gaussians(g.lattice, 2)
    traj = sim.solve_truncated(cfg, draw, g, t_end=0.05, dt=1e-3)
    n0 = np.sum(np.abs(traj.a[0]) ** 2)
    n1 = np.sum(np.abs(traj.a[-1]) ** 2)
    return abs(n1 - n0) <= 1e-12 * max(n0, 1e-30), "drift %.1e" % abs(n1 - n0)


@prop("simulate-phase-roundtrip")
def _p(quick):
    cfg = _cfg()
    g = amp.GaugeRecord.build(cfg)
    rng = np.random.default_rng(6)
    a = rng.standard_normal(g.lattice.size) + 1j * rng.standard_normal(g.lattice.size)
    w = sim.inject_profile(a, 0.37, g)
    back = sim.extract_profile(w, 0.37, g)
    err = float(np.max(np.abs(back - a)))
    ph0 = sim.inject_profile(a, 0.0, g)
    scale = np.sqrt(float(g.lattice.R)) * cfg.epsilon
    ok0 = np.max(np.abs(ph0 - scale * a)) <= 1e-12
    return err <= 1e-12 and ok0, "roundtrip %.1e" % err


@prop("simulate-frozen-mode")
def _p(quick):
    cfg = _cfg()
    g = amp.GaugeRecord.build(cfg)
    lat = g.lattice
    a0 = np.zeros(lat.size, dtype=complex)
    a0[lat.index(2)] = 1.0  # single mode: cubic kernel needs a partner
    draw = lt.sample_gaussians(lat, 1)
    traj = sim.solve_truncated(cfg, draw, g, t_end=0.02, dt=5e-4, initial=a0)
    drift = float(np.max(np.abs(np.abs(traj.a[-1]) - np.abs(a0))))
    return drift <= 1e-10, "modulus drift %.1e" % drift


def _chain_fixture():
    L = lambda s: ("L", s)
    n1 = ("I", 1, (L(1), L(1), L(-1)))
    n0 = ("I", 1, (L(1), n1, L(-1)))
    tp = ("I", 1, (L(1), n0, L(-1)))
    tm = ("I", -1, (L(-1), L(-1), L(1)))
    c = tr.Couple(
        tp,
        tm,
        frozenset(
            {
                frozenset((2, 5)),
                frozenset((3, 6)),
                frozenset((0, 7)),
                frozenset((1, 8)),
                frozenset((4, 9)),
            }
        ),
    )
    chain = mol.find_irregular_chains(c)[0]
    return c, chain


def run_suite(quick: bool = True):
    """Run every property; returns (results, all_ok)."""
    results = []
    for name, fn in PROPERTIES:
        try:
            ok, detail = fn(quick)
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, "error: %s" % exc
        results.append((name, bool(ok), detail))
    return results, all(r[1] for r in results)
