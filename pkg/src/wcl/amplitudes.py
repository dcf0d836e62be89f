"""Resonance factors, tree amplitudes, couple values, the renormalization
fixed point, the chain cancellation bracket and the linearized operator.

The batch evaluator handles every structure whose interaction nodes sit at
tree roots (all structures of per-tree rank <= 3, which covers the desk
scale); deeper nestings fall back to a per-decoration nested quadrature.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import timeint, trees
from .lattice import FrequencyLattice, RandomDraw, SimConfig, phi_le
from .symbols import TWO_PI, a2_symbol, dispersion, gamma0, ntilde, q_normal
from .trees import Couple, PairedTree, PLUS, MINUS

DEFAULT_TPOINTS = 64


# ---------------------------------------------------------------------------
# gauge record


@dataclass
class GaugeRecord:
    """Static shift Gamma0 plus the time and frequency dependent Gamma1 on a
    uniform grid, interpreted piecewise linearly in time."""

    lattice: FrequencyLattice
    config: SimConfig
    gamma0_vals: np.ndarray          # (M,), indexed like the lattice
    tgrid: np.ndarray                # (P+1,), 0 .. 1
    gamma1: np.ndarray               # (P+1, M)
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def build(cls, config: SimConfig, lattice=None, tpoints: int = DEFAULT_TPOINTS):
        lat = lattice or config.lattice()
        g0 = gamma0(lat.k_values, lat, config.psi)
        tg = np.linspace(0.0, 1.0, tpoints)
        return cls(lat, config, np.asarray(g0), tg, np.zeros((tpoints, lat.size)))

    @property
    def gamma1_sup(self) -> float:
        return float(np.max(np.abs(self.gamma1))) if self.gamma1.size else 0.0

    def gamma1_at(self, t, n):
        """Piecewise-linear value of Gamma1 at time t, mode numerator n."""
        col = self.gamma1[:, self.lattice.index(n)]
        return np.interp(t, self.tgrid, col)

    def int_gamma1(self, t, n):
        """Exact integral of the interpolant from 0 to t."""
        col = self.gamma1[:, self.lattice.index(n)]
        cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * (col[1:] + col[:-1]) * np.diff(self.tgrid))]
        )
        j = min(np.searchsorted(self.tgrid, t, side="right") - 1, len(self.tgrid) - 2)
        dt = t - self.tgrid[j]
        g_t = np.interp(t, self.tgrid, col)
        return cum[j] + 0.5 * (col[j] + g_t) * dt

    def Gamma(self, t, n):
        """Accumulated phase eps^2 t Gamma0 + T1^{-1} int Gamma1."""
        g0 = self.gamma0_vals[self.lattice.index(n)]
        return self.config.epsilon ** 2 * t * g0 + self.int_gamma1(t, n) / self.config.T1

    def is_static(self) -> bool:
        return not np.any(self.gamma1)


# ---------------------------------------------------------------------------
# structure compilation


def _branching_nodes(structure):
    """(tag, path, node) for all branching nodes; tag '+'/'-' selects the tree."""
    out = []
    if isinstance(structure, Couple):
        parts = [("+", structure.tplus), ("-", structure.tminus)]
    else:
        parts = [("+", structure.tree)]
    for tag, root in parts:
        for node, path in trees.iter_nodes(root):
            if node[0] != "L":
                out.append((tag, path, node))
    return out


def _relative_pattern(node):
    return tuple(c[1] * node[1] for c in node[2])


def structure_has_zero_symbol(structure) -> bool:
    """True when some interaction node carries a vanishing kernel pattern."""
    for _, _, node in _branching_nodes(structure):
        if node[0] == "I" and _relative_pattern(node) != (1, 1, -1):
            return True
    return False


class _SlotLayout:
    """Free/solved variable layout for the decoration sum of a structure."""

    def __init__(self, structure):
        if isinstance(structure, Couple):
            signs = trees.couple_leaf_signs(structure)
            rp = trees.rank(structure.tplus)
            paths_p = trees.leaf_paths(structure.tplus)
            paths_m = trees.leaf_paths(structure.tminus)
            self.leaf_info = [("+", p) for p in paths_p] + [("-", p) for p in paths_m]
            rel = [trees.relative_sign(structure.tplus, p) for p in paths_p]
            rel += [0] * len(paths_m)  # minus-tree leaves do not enter the + root law
            pairs = sorted(tuple(sorted(p)) for p in structure.pairing)
            self.slots = [tuple(p) for p in pairs]
            self.unpaired = []
        else:
            signs = trees.leaf_signs(structure.tree)
            paths = trees.leaf_paths(structure.tree)
            self.leaf_info = [("+", p) for p in paths]
            rel = [trees.relative_sign(structure.tree, p) for p in paths]
            in_pair = {i for p in structure.pairing for i in p}
            pairs = sorted(tuple(sorted(p)) for p in structure.pairing)
            self.unpaired = [i for i in range(len(signs)) if i not in in_pair]
            self.slots = [tuple(p) for p in pairs] + [(i,) for i in self.unpaired]
        self.signs = signs
        self.coeffs = [sum(rel[i] for i in slot) for slot in self.slots]
        solve = None
        for j in reversed(range(len(self.slots))):
            if abs(self.coeffs[j]) == 1:
                solve = j
                break
        self.solve = solve  # None -> root pinned to 0


def _node_values(structure, leaf_vals):
    """Integer numerators for every node; leaf_vals is a (nleaf, D) array."""
    values = {}

    def rec(tag, node, path, it):
        if node[0] == "L":
            v = next(it)
            values[(tag, path)] = v
            return node[1] * v
        tot = 0
        for i, c in enumerate(node[2]):
            tot = tot + rec(tag, c, path + (i,), it)
        values[(tag, path)] = node[1] * tot
        return tot

    if isinstance(structure, Couple):
        rp = trees.rank(structure.tplus)
        it = iter([leaf_vals[i] for i in range(rp)])
        rec("+", structure.tplus, (), it)
        it = iter([leaf_vals[rp + i] for i in range(leaf_vals.shape[0] - rp)])
        rec("-", structure.tminus, (), it)
    else:
        it = iter([leaf_vals[i] for i in range(leaf_vals.shape[0])])
        rec("+", structure.tree, (), it)
    return values


def _pair_psi_indices(structure):
    """One representative leaf per pair (the + one) for the psi factors."""
    if isinstance(structure, Couple):
        signs = trees.couple_leaf_signs(structure)
    else:
        signs = trees.leaf_signs(structure.tree)
    reps = []
    for p in structure.pairing:
        i, j = sorted(p)
        reps.append(i if signs[i] == PLUS else j)
    return reps


class DecorationTable:
    """Vectorized decoration sum of one paired tree or couple.

    Built once per structure and root-frequency list; per-call work is the
    gauge-dependent time factor and the final reduction.
    """

    def __init__(self, structure, config: SimConfig, gauges: GaugeRecord, roots_n=None):
        lat = gauges.lattice
        self.structure = structure
        self.config = config
        self.lattice = lat
        self.is_couple = isinstance(structure, Couple)
        self.zero = structure_has_zero_symbol(structure)
        if roots_n is None:
            roots_n = lat.n_values
        self.roots_n = np.asarray(roots_n, dtype=int)

        layout = _SlotLayout(structure)
        self.layout = layout
        r = len(layout.signs)
        n_I = (
            structure.n_I
            if self.is_couple
            else trees.n_interaction(structure.tree)
        )
        base = config.epsilon / np.sqrt(float(config.R))
        self.prefactor = base ** (r - (2 if self.is_couple else 1)) * config.T1 ** n_I

        self.inode_meta = []
        for tag, path, node in _branching_nodes(structure):
            if node[0] == "I":
                if path != ():
                    self.nested = True
                    break
        else:
            self.nested = False

        self.per_root = []
        if self.zero:
            return
        neff = int(np.ceil(1.6 * 2.0 ** lat.K_tr * lat.R)) - 1
        neff = min(neff, lat.nmax)
        grid = np.arange(-neff, neff + 1)
        free = [j for j in range(len(layout.slots)) if j != layout.solve]
        if self.nested:
            return  # slow path handles this structure
        for kn in self.roots_n:
            self.per_root.append(self._build_root(kn, grid, free))

    # ----- table construction

    def _build_root(self, kn, grid, free):
        layout = self.layout
        cfg = self.config
        lat = self.lattice
        if free:
            mesh = np.meshgrid(*([grid] * len(free)), indexing="ij")
            fvals = [m.ravel() for m in mesh]
        else:
            fvals = []
        D = fvals[0].size if fvals else 1
        slot_vals = [None] * len(layout.slots)
        for j, v in zip(free, fvals):
            slot_vals[j] = v
        if layout.solve is not None:
            acc = np.full(D, kn, dtype=int)
            for j, v in zip(free, fvals):
                acc -= layout.coeffs[j] * v
            slot_vals[layout.solve] = acc * layout.coeffs[layout.solve]
        else:
            if kn != 0:
                return _EmptyRoot()
        leaf_vals = np.empty((len(layout.signs), max(D, 1)), dtype=int)
        for slot, v in zip(layout.slots, slot_vals):
            for i in slot:
                leaf_vals[i] = v
        values = _node_values(self.structure, leaf_vals)

        R = float(lat.R)
        w = np.full(max(D, 1), self.prefactor, dtype=float)
        for v in values.values():
            w = w * phi_le(lat.K_tr, v / R)
        for i in _pair_psi_indices(self.structure):
            w = w * np.asarray(cfg.psi(leaf_vals[i] / R), dtype=float)
        for i in layout.unpaired:
            w = w * np.sqrt(np.asarray(cfg.psi(leaf_vals[i] / R), dtype=float))

        keep = w != 0.0
        if not np.any(keep):
            return _EmptyRoot()
        w = w[keep].astype(complex)
        values = {key: v[keep] for key, v in values.items()}
        leaf_vals = leaf_vals[:, keep]

        inodes = []
        for tag, path, node in _branching_nodes(self.structure):
            kids = [values[(tag, path + (i,))] for i in range(len(node[2]))]
            kidsigns = [c[1] for c in node[2]]
            rel = _relative_pattern(node)
            args = [s * kv / R for s, kv in zip(rel, kids)]
            if node[0] == "N":
                if len(kids) == 2:
                    sym = a2_symbol(_pat(rel), *args) / TWO_PI
                else:
                    sym = q_normal(_pat(rel), *args) / TWO_PI ** 2
                w = w * sym  # real, so the zeta exponent is immaterial
            else:
                sym = 1j * ntilde(kids[0] / R, kids[1] / R, kids[2] / R)
                w = w * (sym if node[1] == PLUS else np.conj(sym))
                inodes.append(
                    _INodeData(
                        zeta=node[1],
                        parent_n=values[(tag, path)],
                        child_n=kids,
                        child_zeta=kidsigns,
                    )
                )
        return _RootTable(weights=w, values=values, leaf_vals=leaf_vals, inodes=inodes)

    # ----- evaluation

    def _inode_F(self, data, gauges: GaugeRecord, ts):
        cfg = self.config
        lat = self.lattice
        R = float(lat.R)
        disp = data.zeta * dispersion(data.parent_n / R)
        g0 = data.zeta * gauges.gamma0_vals[lat.index(data.parent_n)]
        for z, kv in zip(data.child_zeta, data.child_n):
            disp = disp - z * dispersion(kv / R)
            g0 = g0 - z * gauges.gamma0_vals[lat.index(kv)]
        alpha = cfg.T1 * disp + cfg.epsilon ** 2 * cfg.T1 * g0
        if gauges.is_static():
            return timeint.linear_phase_integral(alpha[:, None], np.asarray(ts)[None, :])
        gam = data.zeta * gauges.gamma1[:, lat.index(data.parent_n)].T
        for z, kv in zip(data.child_zeta, data.child_n):
            gam = gam - z * gauges.gamma1[:, lat.index(kv)].T
        return _phase_integral_at(alpha, gam, gauges.tgrid, np.asarray(ts))

    def kq(self, gauges: GaugeRecord, ts) -> np.ndarray:
        """Couple values on (roots, ts)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.zeros((len(self.roots_n), len(ts)), dtype=complex)
        if self.zero:
            return out
        if self.nested:
            for i, kn in enumerate(self.roots_n):
                for j, t in enumerate(ts):
                    out[i, j] = eval_KQ_slow(self.structure, kn, t, gauges, self.config)
            return out
        for i, tab in enumerate(self.per_root):
            if isinstance(tab, _EmptyRoot):
                continue
            acc = np.repeat(tab.weights[:, None], len(ts), axis=1)
            for data in tab.inodes:
                acc = acc * self._inode_F(data, gauges, ts)
            out[i] = acc.sum(axis=0)
        return out

    def j_values(self, draw: RandomDraw, gauges: GaugeRecord, ts) -> np.ndarray:
        """Tree amplitudes on (roots, ts) for one realization."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        out = np.zeros((len(self.roots_n), len(ts)), dtype=complex)
        if self.zero:
            return out
        if self.nested:
            for i, kn in enumerate(self.roots_n):
                for j, t in enumerate(ts):
                    out[i, j] = eval_JT_slow(self.structure, kn, t, draw, gauges, self.config)
            return out
        up = self.layout.unpaired
        signs = [self.layout.signs[i] for i in up]
        for i, tab in enumerate(self.per_root):
            if isinstance(tab, _EmptyRoot):
                continue
            gfac = _wick_factor(signs, [tab.leaf_vals[j] for j in up], draw)
            acc = (tab.weights * gfac)[:, None] * np.ones(len(ts))
            for data in tab.inodes:
                acc = acc * self._inode_F(data, gauges, ts)
            out[i] = acc.sum(axis=0)
        return out

    def j_samples(self, gmat: np.ndarray, gauges: GaugeRecord, root_pos: int, t: float):
        """Amplitude samples for stacked draws gmat (S, M) at one (root, t)."""
        if self.zero or self.nested:
            raise ValueError("sampling path requires a compiled structure")
        tab = self.per_root[root_pos]
        if isinstance(tab, _EmptyRoot):
            return np.zeros(gmat.shape[0], dtype=complex)
        w = tab.weights.copy()
        for data in tab.inodes:
            w = w * self._inode_F(data, gauges, [t])[:, 0]
        up = self.layout.unpaired
        signs = [self.layout.signs[i] for i in up]
        idx = [self.lattice.index(tab.leaf_vals[j]) for j in up]
        total = np.zeros(gmat.shape[0], dtype=complex)
        chunk = max(1, int(4e6 // max(gmat.shape[0], 1)))
        for lo in range(0, len(w), chunk):
            sl = slice(lo, lo + chunk)
            mono = _wick_monomials(signs, [ix[sl] for ix in idx], gmat)
            total += mono @ w[sl]
        return total


def _pat(rel):
    return "".join("+" if s == PLUS else "-" for s in rel)


@dataclass
class _INodeData:
    zeta: int
    parent_n: np.ndarray
    child_n: list
    child_zeta: list


@dataclass
class _RootTable:
    weights: np.ndarray
    values: dict
    leaf_vals: np.ndarray
    inodes: list


class _EmptyRoot:
    pass


def _phase_integral_at(alpha, gamma, tgrid, ts):
    """F(t) for t anywhere in [0, 1]; cumulative grid values plus exact
    partial segments."""
    F = timeint.cumulative_phase_integral(alpha, gamma, tgrid)
    out = np.empty(alpha.shape + (len(ts),), dtype=complex)
    psi_grid = np.concatenate(
        [
            np.zeros(alpha.shape + (1,)),
            np.cumsum(0.5 * (gamma[..., 1:] + gamma[..., :-1]) * np.diff(tgrid), axis=-1),
        ],
        axis=-1,
    )
    for j, t in enumerate(ts):
        seg = min(int(np.searchsorted(tgrid, t, side="right")) - 1, len(tgrid) - 2)
        dt = t - tgrid[seg]
        if dt <= 0:
            out[..., j] = F[..., seg]
            continue
        h = tgrid[seg + 1] - tgrid[seg]
        gslope = (gamma[..., seg + 1] - gamma[..., seg]) / h
        out[..., j] = F[..., seg] + _partial_segment(
            alpha, tgrid[seg], dt, psi_grid[..., seg], gamma[..., seg], gslope
        )
    return out


def _partial_segment(alpha, s0, dt, psi0, g0, gslope):
    c = 0.5 * gslope
    beta = np.asarray(alpha, dtype=float) + np.asarray(g0, dtype=float)
    m = timeint.phase_moments(beta, dt, 6)
    val = m[0] + 1j * c * m[2] - 0.5 * c * c * m[4] - (1j / 6.0) * c ** 3 * m[6]
    return np.exp(1j * (np.asarray(alpha) * s0 + np.asarray(psi0, dtype=complex))) * val


# ---------------------------------------------------------------------------
# Wick helpers


def _wick_factor(signs, kvals, draw: RandomDraw):
    """Renormalized Gaussian monomial over decorations; kvals are (D,) ints."""
    if not signs:
        return 1.0
    gv = draw.g

    def g_of(vals):
        return gv[draw.lattice.index(vals)]

    vals = [g_of(kv) if s == PLUS else np.conj(g_of(kv)) for s, kv in zip(signs, kvals)]
    total = 0.0
    for pairing in trees._pairings_of(tuple(range(len(signs))), signs):
        coeff = (-1.0) ** len(pairing)
        ind = 1.0
        for (i, j) in pairing:
            ind = ind * (kvals[i] == kvals[j])
        rest = [x for x in range(len(signs)) if not any(x in p for p in pairing)]
        mono = ind if np.ndim(ind) else float(ind)
        for x in rest:
            mono = mono * vals[x]
        total = total + coeff * mono
    return total


def _wick_monomials(signs, idx, gmat):
    """(S, D) renormalized monomials; idx are (D,) index arrays into gmat columns."""
    S = gmat.shape[0]
    D = idx[0].shape[0] if idx else 1
    if not signs:
        return np.ones((S, 1), dtype=complex)
    cols = [gmat[:, ix] if s == PLUS else np.conj(gmat[:, ix]) for s, ix in zip(signs, idx)]
    total = np.zeros((S, D), dtype=complex)
    for pairing in trees._pairings_of(tuple(range(len(signs))), signs):
        coeff = (-1.0) ** len(pairing)
        ind = np.ones(D)
        for (i, j) in pairing:
            ind = ind * (idx[i] == idx[j])
        rest = [x for x in range(len(signs)) if not any(x in p for p in pairing)]
        if rest:
            mono = cols[rest[0]].copy()
            for x in rest[1:]:
                mono = mono * cols[x]
        else:
            mono = np.ones((S, D), dtype=complex)
        total += coeff * ind[None, :] * mono
    return total


# ---------------------------------------------------------------------------
# resonance factor and slow-path evaluation


def omega_node(structure, tag, path, deco, t, gauges: GaugeRecord):
    """Resonance phase Omega at one interaction node of a decorated
    structure, including both gauge contributions."""
    if isinstance(structure, Couple):
        root = structure.tplus if tag == "+" else structure.tminus
    else:
        root = structure.tree
    node = trees.node_at(root, path)
    if node[0] != "I":
        raise ValueError("resonance factors attach to interaction nodes only")
    cfg = gauges.config
    lat = gauges.lattice
    R = float(lat.R)
    kn = deco[(tag, path)]
    kids = [deco[(tag, path + (i,))] for i in range(len(node[2]))]
    zeta = node[1]
    kz = [c[1] for c in node[2]]
    lin = zeta * dispersion(kn / R) - sum(z * dispersion(kv / R) for z, kv in zip(kz, kids))
    g0 = zeta * gauges.gamma0_vals[lat.index(kn)] - sum(
        z * gauges.gamma0_vals[lat.index(kv)] for z, kv in zip(kz, kids)
    )
    g1int = zeta * gauges.int_gamma1(t, kn) - sum(
        z * gauges.int_gamma1(t, kv) for z, kv in zip(kz, kids)
    )
    return lin * t + cfg.epsilon ** 2 * g0 * t + g1int / cfg.T1


def _phase_forest(structure, deco, gauges: GaugeRecord):
    """PhaseNode forest over the interaction nodes of a decorated structure."""
    cfg = gauges.config
    lat = gauges.lattice
    R = float(lat.R)

    def build(tag, root, node, path):
        kids_nodes = []
        for i, c in enumerate(node[2] if node[0] != "L" else ()):
            if c[0] == "I":
                kids_nodes.append(build(tag, root, c, path + (i,)))
            elif c[0] == "N":
                pass
        if node[0] != "I":
            return kids_nodes
        kn = deco[(tag, path)]
        kids = [deco[(tag, path + (i,))] for i in range(len(node[2]))]
        zeta = node[1]
        kz = [c[1] for c in node[2]]
        disp = zeta * dispersion(kn / R) - sum(z * dispersion(kv / R) for z, kv in zip(kz, kids))
        g0 = zeta * gauges.gamma0_vals[lat.index(kn)] - sum(
            z * gauges.gamma0_vals[lat.index(kv)] for z, kv in zip(kz, kids)
        )
        alpha = cfg.T1 * disp + cfg.epsilon ** 2 * cfg.T1 * g0
        if gauges.is_static():
            psi = None
        else:
            nodes_n = [(zeta, kn)] + [(-z, kv) for z, kv in zip(kz, kids)]

            def psi(s, nodes_n=nodes_n):
                return sum(z * gauges.int_gamma1(s, kv) for z, kv in nodes_n)

        flat = []

        def flatten(x):
            for e in x:
                if isinstance(e, list):
                    flatten(e)
                else:
                    flat.append(e)

        flatten(kids_nodes)
        return timeint.PhaseNode(alpha=float(alpha), psi=psi, children=flat)

    roots = []
    parts = (
        [("+", structure.tplus), ("-", structure.tminus)]
        if isinstance(structure, Couple)
        else [("+", structure.tree)]
    )
    for tag, root in parts:
        got = build(tag, root, root, ())
        if isinstance(got, timeint.PhaseNode):
            roots.append(got)
        else:
            flat = []

            def flatten(x):
                for e in x:
                    if isinstance(e, list):
                        flatten(e)
                    else:
                        flat.append(e)

            flatten(got)
            roots.extend(flat)
    return roots


def time_integral(structure, deco, t, gauges: GaugeRecord, rtol: float = 1e-6):
    """Iterated oscillatory integral over the time simplex of a decorated
    structure; refinement-verified, flagged when not converged."""
    roots = _phase_forest(structure, deco, gauges)
    if sum(_count(r) for r in roots) > 4:
        raise ValueError("nested integrator budget is n_I <= 4")
    return timeint.nested_time_integral(roots, t, rtol)


def _count(node):
    return 1 + sum(_count(c) for c in node.children)


def _structure_weight(structure, deco, gauges: GaugeRecord, config: SimConfig):
    lat = gauges.lattice
    R = float(lat.R)
    is_couple = isinstance(structure, Couple)
    layout = _SlotLayout(structure)
    signs = layout.signs
    r = len(signs)
    n_I = structure.n_I if is_couple else trees.n_interaction(structure.tree)
    base = config.epsilon / np.sqrt(float(R))
    w = base ** (r - (2 if is_couple else 1)) * config.T1 ** n_I
    for v in deco.values():
        w = w * phi_le(lat.K_tr, v / R)
    leafvals = {}
    if is_couple:
        rp = trees.rank(structure.tplus)
        for i, p in enumerate(trees.leaf_paths(structure.tplus)):
            leafvals[i] = deco[("+", p)]
        for i, p in enumerate(trees.leaf_paths(structure.tminus)):
            leafvals[rp + i] = deco[("-", p)]
    else:
        for i, p in enumerate(trees.leaf_paths(structure.tree)):
            leafvals[i] = deco[("+", p)]
    for i in _pair_psi_indices(structure):
        w = w * float(config.psi(leafvals[i] / R))
    for i in layout.unpaired:
        w = w * np.sqrt(float(config.psi(leafvals[i] / R)))
    if w == 0.0:
        return 0.0
    for tag, path, node in _branching_nodes(structure):
        kids = [deco[(tag, path + (i,))] for i in range(len(node[2]))]
        rel = _relative_pattern(node)
        args = [s * kv / R for s, kv in zip(rel, kids)]
        if node[0] == "N":
            if len(kids) == 2:
                w = w * a2_symbol(_pat(rel), *args) / TWO_PI
            else:
                w = w * q_normal(_pat(rel), *args) / TWO_PI ** 2
        else:
            sym = 1j * ntilde(kids[0] / R, kids[1] / R, kids[2] / R)
            w = w * (sym if node[1] == PLUS else np.conj(sym))
    return w


def eval_KQ_slow(couple: Couple, kn: int, t: float, gauges: GaugeRecord, config: SimConfig):
    total = 0.0 + 0.0j
    window = gauges.lattice.nmax
    for deco in trees.decorations(couple, int(kn), window):
        w = _structure_weight(couple, deco, gauges, config)
        if w == 0.0:
            continue
        total += w * time_integral(couple, deco, t, gauges).value
    return total


def eval_JT_slow(pt: PairedTree, kn: int, t: float, draw, gauges, config):
    total = 0.0 + 0.0j
    window = gauges.lattice.nmax
    layout = _SlotLayout(pt)
    for deco in trees.decorations(pt, int(kn), window):
        w = _structure_weight(pt, deco, gauges, config)
        if w == 0.0:
            continue
        paths = trees.leaf_paths(pt.tree)
        kv = [deco[("+", paths[i])] for i in layout.unpaired]
        gfac = trees.wick_gaussian(
            [layout.signs[i] for i in layout.unpaired], kv, draw.g_of_n
        )
        total += w * gfac * time_integral(pt, deco, t, gauges).value
    return total


def eval_KQ(couple: Couple, kn: int, t: float, gauges: GaugeRecord, config: SimConfig):
    """Exact decoration sum for one couple at root numerator kn and time t."""
    tab = DecorationTable(couple, config, gauges, roots_n=[int(kn)])
    return complex(tab.kq(gauges, [t])[0, 0]) if not tab.nested else eval_KQ_slow(
        couple, kn, t, gauges, config
    )


def eval_JT(pt: PairedTree, kn: int, t: float, draw: RandomDraw, gauges: GaugeRecord, config: SimConfig):
    """Tree amplitude for one realization at root numerator kn and time t."""
    tab = DecorationTable(pt, config, gauges, roots_n=[int(kn)])
    if tab.nested:
        return eval_JT_slow(pt, kn, t, draw, gauges, config)
    return complex(tab.j_values(draw, gauges, [t])[0, 0])


# ---------------------------------------------------------------------------
# catalogs


def admissible_paired_trees(max_rank: int, A: int = 3, drop_zero_symbols: bool = True):
    """Admissible sign-plus paired trees of rank <= max_rank."""
    out = []
    for tree in trees.enumerate_trees(max_rank, A, PLUS):
        signs = trees.leaf_signs(tree)
        for pairing in trees.enumerate_partial_pairings(signs):
            pt = PairedTree(tree, pairing)
            if not trees.is_admissible(pt):
                continue
            if drop_zero_symbols and structure_has_zero_symbol(pt):
                continue
            out.append(pt)
    return out


def gamma1_couples(N: int, A: int = 3, drop_zero_symbols: bool = True):
    """Nontrivial admissible couples with per-tree rank at most N."""
    out = []
    for c in trees.enumerate_couples(N, admissible_only=True, A=A):
        if c.canonical() == trees.TRIVIAL_COUPLE.canonical():
            continue
        if drop_zero_symbols and structure_has_zero_symbol(c):
            continue
        out.append(c)
    return out


def moment_couples(r: int, A: int = 3, drop_zero_symbols: bool = True):
    """Admissible couples whose trees both have rank exactly r."""
    out = []
    for c in trees.enumerate_couples(r, admissible_only=True, A=A, exact_rank=r):
        if drop_zero_symbols and structure_has_zero_symbol(c):
            continue
        out.append(c)
    return out


# ---------------------------------------------------------------------------
# the renormalization fixed point


class ContractionError(RuntimeError):
    pass


def gamma1_solve(
    config: SimConfig,
    tpoints: int = DEFAULT_TPOINTS,
    tol: float = 1e-8,
    max_iter: int = 50,
    start: np.ndarray | None = None,
    couples: list | None = None,
) -> GaugeRecord:
    """Picard iteration for the implicit time-frequency renormalization.

    Starts from zero (or a supplied state), stops at sup-norm increments
    below tol, and records the observed contraction ratios.  A ratio at or
    above one aborts with diagnostics.
    """
    gauges = GaugeRecord.build(config, tpoints=tpoints)
    lat = gauges.lattice
    if couples is None:
        couples = gamma1_couples(config.N)
    tables = [DecorationTable(c, config, gauges) for c in couples]

    R = float(lat.R)
    kv = lat.k_values
    phi_k = phi_le(lat.K_tr, kv)
    wmat = (
        config.epsilon ** 2
        * config.T1
        * (-2.0 / R)
        * ntilde(kv[None, :], kv[:, None], kv[None, :])
        * phi_k[:, None]
        * phi_k[None, :] ** 2
    )

    if start is not None:
        gauges.gamma1 = np.array(start, dtype=float)

    diffs, ratios = [], []
    for it in range(max_iter):
        S = np.zeros((tpoints, lat.size), dtype=complex)
        for tab in tables:
            S += tab.kq(gauges, gauges.tgrid).T
        X = np.real(S @ wmat.T)
        imag_part = float(np.max(np.abs(np.imag(S @ wmat.T)))) if S.size else 0.0
        d = float(np.max(np.abs(X - gauges.gamma1)))
        diffs.append(d)
        if len(diffs) >= 2 and diffs[-2] > 0:
            ratios.append(diffs[-1] / diffs[-2])
            if ratios[-1] >= 1.0 and d > tol:
                raise ContractionError(
                    "no contraction: ratio %.3f at iteration %d" % (ratios[-1], it)
                )
        gauges.gamma1 = X
        if d <= tol:
            break
    gauges.diagnostics = {
        "iterations": it + 1,
        "sup_diffs": diffs,
        "contraction_ratios": ratios,
        "converged": diffs[-1] <= tol,
        "imag_residual": imag_part,
        "n_couples": len(tables),
    }
    if gauges.gamma1_sup > 1.0:
        raise ContractionError("renormalization left the unit ball")
    return gauges


# ---------------------------------------------------------------------------
# approximate profile


def a_app_eval(
    roots_n,
    ts,
    draw: RandomDraw,
    gauges: GaugeRecord,
    config: SimConfig,
    N: int | None = None,
    _cache={},
):
    """Tree-expansion profile on (roots, ts) for one realization."""
    N = config.N if N is None else N
    out = np.zeros((len(roots_n), len(np.atleast_1d(ts))), dtype=complex)
    for pt in admissible_paired_trees(N):
        tab = DecorationTable(pt, config, gauges, roots_n=roots_n)
        out += tab.j_values(draw, gauges, ts)
    return out


# ---------------------------------------------------------------------------
# chain bracket


def chain_bracket(l_j, k_j, k_j1, l_j1, K_tr: int, psi):
    """Twist-cancellation bracket of consecutive chain frequencies.

    Requires k_j - l_j = k_j1 - l_j1; returns (value, value/|h|^(1/2)).
    """
    h = k_j - l_j
    if not np.allclose(h, np.asarray(k_j1) - np.asarray(l_j1), atol=1e-12):
        raise ValueError("mismatched chain shift h")
    b = psi(l_j) * phi_le(K_tr, k_j) * ntilde(k_j1, l_j1, l_j) - psi(k_j) * phi_le(
        K_tr, l_j
    ) * ntilde(l_j1, k_j1, k_j)
    habs = np.abs(np.asarray(h, dtype=float))
    ratio = np.where(habs > 0, np.abs(b) / np.sqrt(np.where(habs > 0, habs, 1.0)), 0.0)
    return b, ratio


