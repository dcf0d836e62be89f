"""Molecules: directed multigraphs built from couples, decoration counting,
irregular chains, twisting, splicing, gap classification, the cutting
algorithm with its exact bookkeeping ledger, and the atom removal schedule.

Incidences are (bond index, orientation) pairs with orientation +1 at the
tail and -1 at the head; a self loop contributes one of each, so degrees and
momentum sums need no special casing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import trees
from .lattice import FrequencyLattice
from .symbols import dispersion, gamma0
from .trees import Couple, PLUS, MINUS


@dataclass
class Atom:
    tag: str                 # 'I', 'N', 'alpha', 'beta'
    d0: int                  # degree at molecule birth
    ref: tuple | None = None
    c: int = 0               # momentum constant, integer numerator units


@dataclass
class Bond:
    u: int                   # tail (points u -> v)
    v: int
    kind: str                # 'pc', 'lp', 'rr'
    ref: tuple | None = None


class Molecule:
    def __init__(self):
        self.atoms: list[Atom] = []
        self.bonds: list[Bond] = []
        self.beta_pairs: list[tuple[int, int, float]] = []

    def copy(self) -> "Molecule":
        m = Molecule()
        m.atoms = [Atom(a.tag, a.d0, a.ref, a.c) for a in self.atoms]
        m.bonds = [Bond(b.u, b.v, b.kind, b.ref) for b in self.bonds]
        m.beta_pairs = list(self.beta_pairs)
        return m

    @property
    def V(self) -> int:
        return len(self.atoms)

    @property
    def E(self) -> int:
        return len(self.bonds)

    def incidences(self, v: int):
        out = []
        for i, b in enumerate(self.bonds):
            if b.u == v:
                out.append((i, +1))
            if b.v == v:
                out.append((i, -1))
        return out

    def degree(self, v: int) -> int:
        return len(self.incidences(v))

    def components(self):
        parent = list(range(self.V))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for b in self.bonds:
            ru, rv = find(b.u), find(b.v)
            if ru != rv:
                parent[ru] = rv
        comp = {}
        for v in range(self.V):
            comp.setdefault(find(v), []).append(v)
        return list(comp.values())

    @property
    def F(self) -> int:
        return len(self.components())

    @property
    def chi(self) -> int:
        return self.E - self.V + self.F

    def connected(self) -> bool:
        return self.F <= 1

    def connected_without_bonds(self, skip) -> bool:
        skip = set(skip)
        parent = list(range(self.V))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, b in enumerate(self.bonds):
            if i in skip:
                continue
            ru, rv = find(b.u), find(b.v)
            if ru != rv:
                parent[ru] = rv
        return len({find(v) for v in range(self.V)}) <= 1

    def atom_counts(self):
        out = {"I": 0, "N": 0, "alpha": 0, "beta": 0}
        for a in self.atoms:
            out[a.tag] += 1
        return out

    def to_dot(self) -> str:
        lines = ["digraph molecule {"]
        for i, a in enumerate(self.atoms):
            lines.append('  a%d [label="%d:%s"];' % (i, i, a.tag))
        for b in self.bonds:
            lines.append('  a%d -> a%d [label="%s"];' % (b.u, b.v, b.kind))
        lines.append("}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# molecules from couples


class MoleculeMap:
    """Molecule plus provenance maps for decoration transport."""

    def __init__(self, molecule, atom_of_node, bond_slots):
        self.molecule = molecule
        self.atom_of_node = atom_of_node
        self.bond_slots = bond_slots  # ('node',tag,path) | ('leaf',i) | ('root',)


def _leaf_paths_of(tree):
    return trees.leaf_paths(tree)


def sorted_nodes(root):
    out = list(trees.iter_nodes(root))
    out.sort(key=lambda np_: np_[1])
    return out


def build_molecule(couple: Couple) -> MoleculeMap:
    """Atoms are branching nodes; bonds encode parent/child and leaf-pair
    relations plus one bond joining the roots.  Trivial couple -> empty."""
    m = Molecule()
    atom_of_node = {}
    parts = [("+", couple.tplus), ("-", couple.tminus)]
    for tag, root in parts:
        for node, path in sorted_nodes(root):
            if node[0] != "L":
                atom_of_node[(tag, path)] = len(m.atoms)
                m.atoms.append(Atom(node[0], 0, (tag, path)))

    bond_slots = []

    def add_bond(u, v, kind, ref, slot):
        m.bonds.append(Bond(u, v, kind, ref))
        bond_slots.append(slot)

    for tag, root in parts:
        for node, path in sorted_nodes(root):
            if node[0] == "L":
                continue
            u = atom_of_node[(tag, path)]
            for i, c in enumerate(node[2]):
                if c[0] == "L":
                    continue
                vpath = path + (i,)
                v = atom_of_node[(tag, vpath)]
                if c[1] == MINUS:
                    add_bond(u, v, "pc", (tag, vpath), ("node", tag, vpath))
                else:
                    add_bond(v, u, "pc", (tag, vpath), ("node", tag, vpath))

    rp = trees.rank(couple.tplus)
    leafp = _leaf_paths_of(couple.tplus)
    leafm = _leaf_paths_of(couple.tminus)
    signs = trees.couple_leaf_signs(couple)

    def leaf_loc(i):
        return ("+", leafp[i]) if i < rp else ("-", leafm[i - rp])

    root_leaf_idx = set()
    if couple.tplus[0] == "L":
        root_leaf_idx.add(0)
    if couple.tminus[0] == "L":
        root_leaf_idx.add(rp)

    pairs = sorted(tuple(sorted(p)) for p in couple.pairing)
    deferred = []
    for (i, j) in pairs:
        if i in root_leaf_idx or j in root_leaf_idx:
            deferred.append((i, j))
            continue
        ti, pi = leaf_loc(i)
        tj, pj = leaf_loc(j)
        ai = atom_of_node[(ti, pi[:-1])]
        aj = atom_of_node[(tj, pj[:-1])]
        # from the side whose paired child has sign minus
        if signs[i] == MINUS:
            add_bond(ai, aj, "lp", (i, j), ("leaf", i))
        else:
            add_bond(aj, ai, "lp", (i, j), ("leaf", i))

    if couple.tplus[0] == "L" and couple.tminus[0] == "L":
        return MoleculeMap(m, atom_of_node, bond_slots)

    if couple.tplus[0] != "L" and couple.tminus[0] != "L":
        add_bond(atom_of_node[("+", ())], atom_of_node[("-", ())], "rr", None, ("root",))
    else:
        (i, j) = deferred[0]
        leaf_idx = i if i in root_leaf_idx else j
        other = j if leaf_idx == i else i
        to_tag, to_path = leaf_loc(other)
        a_part = atom_of_node[(to_tag, to_path[:-1])]
        a_root = atom_of_node[("-", ())] if couple.tplus[0] == "L" else atom_of_node[("+", ())]
        # orient by momentum consistency: outgoing where the partner leaf
        # sign is minus, matching the leaf-pair rule
        if signs[other] == MINUS:
            add_bond(a_part, a_root, "rr", (i, j), ("root",))
        else:
            add_bond(a_root, a_part, "rr", (i, j), ("root",))

    for idx in range(m.V):
        m.atoms[idx].d0 = m.degree(idx)
    return MoleculeMap(m, atom_of_node, bond_slots)


def molecule_decoration(mmap: MoleculeMap, couple: Couple, deco: dict, root_k: int):
    """Bond values (integer numerators) from a couple decoration."""
    rp = trees.rank(couple.tplus)
    leafp = _leaf_paths_of(couple.tplus)
    leafm = _leaf_paths_of(couple.tminus)
    vals = np.zeros(len(mmap.molecule.bonds), dtype=int)
    for b, slot in enumerate(mmap.bond_slots):
        if slot[0] == "node":
            vals[b] = deco[(slot[1], slot[2])]
        elif slot[0] == "leaf":
            i = slot[1]
            vals[b] = deco[("+", leafp[i])] if i < rp else deco[("-", leafm[i - rp])]
        else:
            vals[b] = root_k
    return vals


def check_momentum(m: Molecule, vals) -> bool:
    return all(
        sum(o * vals[b] for b, o in m.incidences(v)) == m.atoms[v].c for v in range(m.V)
    )


# ---------------------------------------------------------------------------
# gaps


def gap_pairs(m: Molecule, v: int):
    """Distinct opposite-direction bond pairs at v (loops excluded)."""
    inc = m.incidences(v)
    seen, out = set(), []
    for (b1, o1), (b2, o2) in itertools.combinations(inc, 2):
        if b1 != b2 and o1 != o2:
            key = (min(b1, b2), max(b1, b2))
            if key not in seen:
                seen.add(key)
                out.append(key)
    return out


def classify_gaps(m: Molecule, vals, R: int, eps: float, theta: float):
    """Per atom: [(bond pair, gap, small?)] and a tame flag for degree-4
    interaction atoms that are small-gap in two different ways."""
    thr = eps ** (2.0 - theta)
    out = {}
    for v in range(m.V):
        entries = []
        for (b1, b2) in gap_pairs(m, v):
            rho = abs(int(vals[b1]) - int(vals[b2])) / float(R)
            entries.append(((b1, b2), rho, rho < thr))
        n_sg = sum(1 for e in entries if e[2])
        tame = m.atoms[v].tag == "I" and m.degree(v) == 4 and n_sg >= 2
        out[v] = {"pairs": entries, "tame": tame, "sg": n_sg > 0}
    return out


def double_bonds(m: Molecule):
    groups = {}
    for i, b in enumerate(m.bonds):
        if b.u == b.v:
            continue
        groups.setdefault(frozenset((b.u, b.v)), []).append(i)
    return {k: v for k, v in groups.items() if len(v) >= 2}


def compute_Y(m: Molecule, vals, R: int, eps: float, theta: float):
    """Greedy maximal set of small-gap double bonds between degree-4
    I-atoms whose joint removal keeps the molecule connected."""
    thr = eps ** (2.0 - theta)
    Y, removed = [], set()
    for ends, bonds in sorted(double_bonds(m).items(), key=lambda kv: sorted(kv[1])):
        u, v = tuple(ends)
        if not all(m.atoms[x].tag == "I" and m.degree(x) == 4 for x in (u, v)):
            continue
        b1, b2 = sorted(bonds)[:2]
        if abs(int(vals[b1]) - int(vals[b2])) / float(R) >= thr:
            continue
        trial = removed | {b1, b2}
        if m.connected_without_bonds(trial):
            Y.append((b1, b2))
            removed = trial
    return Y


# ---------------------------------------------------------------------------
# counting ledger and quantities


@dataclass
class CountingLedger:
    """Exact normalization exponents plus the audit trail of the per-step
    counting-increment factors."""

    exp_main: Fraction = Fraction(0)   # exponent of (R eps^-2 T1^-1)
    exp_T1: Fraction = Fraction(0)
    y_size: int = 0
    q_tot: int = 0
    alpha_gaps: list = field(default_factory=list)
    v_beta: int = 0
    delta_F: int = 0
    events: list = field(default_factory=list)

    @staticmethod
    def normalization_exponents(m: Molecule):
        exp_main = Fraction(-m.chi)
        exp_t1 = Fraction(0)
        for a in m.atoms:
            if a.tag == "I":
                exp_t1 -= Fraction(max(a.d0 - 4, 0), 2)
            elif a.tag == "N":
                exp_t1 -= Fraction(1, 2) + Fraction(max(a.d0 - 3, 0), 2)
        return exp_main, exp_t1

    @classmethod
    def fresh(cls, m: Molecule) -> "CountingLedger":
        led = cls()
        led.exp_main, led.exp_T1 = cls.normalization_exponents(m)
        return led

    def sync_chi(self, m: Molecule):
        self.exp_main = Fraction(-m.chi)

    def consistent_with(self, m: Molecule) -> bool:
        em, et = self.normalization_exponents(m)
        return em == self.exp_main and et == self.exp_T1

    def bound_factor(self, R: float, eps: float, T1: float, theta: float) -> float:
        out = eps ** (theta * self.y_size)
        for lam in self.alpha_gaps:
            out *= np.sqrt(max(lam, 1.0 / (R * T1))) * eps ** (2 - theta) * T1
        out *= (eps ** (-2 + theta) / T1) ** (self.v_beta - 2 * self.delta_F)
        return float(out)


def normalization_value(m: Molecule, R: float, eps: float, T1: float) -> float:
    em, et = CountingLedger.normalization_exponents(m)
    return float((R * eps ** -2 / T1) ** float(em) * T1 ** float(et))


def counting_quantity(m: Molecule, count: float, R: float, eps: float, T1: float) -> float:
    """Restricted-decoration count times the exact normalization built from
    the circuit rank and the frozen original degrees."""
    return count * normalization_value(m, R, eps, T1)


def degree_sum_identity(m: Molecule) -> bool:
    """E - 2V + V_N equals the degree-based split used by the T1 powers."""
    counts = m.atom_counts()
    lhs = Fraction(m.E - 2 * m.V + counts["N"])
    rhs = Fraction(0)
    for v, a in enumerate(m.atoms):
        d = m.degree(v)
        if a.tag == "I":
            rhs += Fraction(d - 4, 2)
        elif a.tag == "N":
            rhs += Fraction(1, 2) + Fraction(d - 3, 2)
        else:
            rhs += Fraction(d - 2, 2)
    return lhs == rhs


# ---------------------------------------------------------------------------
# cutting


class CutError(ValueError):
    pass


def _move_incidences(m: Molecule, v: int, v2: int, moved):
    """Reattach the listed (bond, orientation) incidences from v to v2."""
    for b, o in moved:
        bond = m.bonds[b]
        if o == +1:
            bond.u = v2
        else:
            bond.v = v2


def cut(m: Molecule, v: int, keep, gaps=None, vals=None, allow_beta=True, R: float = 1.0):
    """Split a degree-4 atom: the two incidences in `keep` stay on v, the
    others move to a fresh atom.  Returns ('alpha'|'beta', (v, new index)).

    An alpha cut (no new component) additionally requires keep to be an
    opposite-direction small-gap pair when gap data is supplied.
    """
    inc = m.incidences(v)
    if len(inc) != 4:
        raise CutError("cut requires a degree-4 atom")
    keep = list(keep)
    if len(keep) != 2 or any(x not in inc for x in keep):
        raise CutError("keep must name two incidences of the atom")
    moved = [x for x in inc if x not in keep]
    if len(moved) != 2:
        raise CutError("ambiguous incidence split")

    F_before = m.F
    old = m.atoms[v]
    v2 = m.V
    m.atoms.append(Atom("pending", old.d0, old.ref, 0))
    _move_incidences(m, v, v2, moved)
    disconnects = m.F > F_before

    if not disconnects:
        kind = "alpha"
        if keep[0][1] == keep[1][1]:
            _move_incidences(m, v2, v, moved)
            m.atoms.pop()
            raise CutError("alpha cut needs an opposite-direction pair")
        if gaps is not None:
            bp = (min(keep[0][0], keep[1][0]), max(keep[0][0], keep[1][0]))
            ok = any(pg == bp and small for pg, rho, small in gaps[v]["pairs"])
            if not ok:
                _move_incidences(m, v2, v, moved)
                m.atoms.pop()
                raise CutError("alpha cut rejected on a large-gap pair")
        m.atoms[v].tag = "alpha"
        m.atoms[v2].tag = "alpha"
    else:
        if not allow_beta:
            _move_incidences(m, v2, v, moved)
            m.atoms.pop()
            raise CutError("cut would disconnect")
        kind = "beta"
        m.atoms[v].tag = "beta"
        m.atoms[v2].tag = "beta"
        const = None
        if vals is not None:
            const = float(gamma_v(m, v, vals, R=R) + gamma_v(m, v2, vals, R=R))
        m.beta_pairs.append((v, v2, const))
    if vals is not None:
        m.atoms[v].c = int(sum(o * vals[b] for b, o in m.incidences(v)))
        m.atoms[v2].c = int(sum(o * vals[b] for b, o in m.incidences(v2)))
    return kind, (v, v2)


def gamma_v(m: Molecule, v: int, vals, R: float = 1.0, eps: float = 0.0, lattice=None, psi=None):
    """Resonance factor at one atom for a given decoration."""
    s = 0.0
    for b, o in m.incidences(v):
        k = vals[b] / R
        term = float(dispersion(k))
        if eps and lattice is not None:
            term += eps ** 2 * float(gamma0(k, lattice, psi))
        s += o * term
    return s


def beta_cut_available(m: Molecule, v: int):
    """First incidence split of a degree-4 atom that disconnects, or None."""
    inc = m.incidences(v)
    if len(inc) != 4:
        return None
    for pick in itertools.combinations(range(4), 2):
        keep = [inc[pick[0]], inc[pick[1]]]
        moved = [inc[i] for i in range(4) if i not in pick]
        trial = m.copy()
        F0 = trial.F
        v2 = trial.V
        trial.atoms.append(Atom("x", 0))
        _move_incidences(trial, v, v2, moved)
        if trial.F > F0:
            return keep
    return None


@dataclass
class CuttingResult:
    molecule: Molecule
    vals: np.ndarray
    ledger: CountingLedger
    steps: list


def run_cutting(m: Molecule, vals, R: int, eps: float, theta: float, Y=None) -> CuttingResult:
    """Three-step reduction of a decorated molecule (works on a copy).

    Step 1 removes the safe small-gap double bonds between degree-4
    interaction atoms, step 2 alpha-cuts the small-gap non-tame degree-4
    interaction atoms along their small-gap pairs, step 3 beta-cuts the
    remaining non-tame ones while any such cut disconnects.
    """
    m = m.copy()
    vals = np.array(vals, dtype=int)
    led = CountingLedger.fresh(m)
    steps = []

    if Y is None:
        Y = compute_Y(m, vals, R, eps, theta)
    doomed = set()
    for (b1, b2) in Y:
        u, v = m.bonds[b1].u, m.bonds[b1].v
        if not all(m.atoms[x].tag == "I" and m.degree(x) == 4 for x in (u, v)):
            raise CutError("step 1 requires degree-4 interaction endpoints")
        lam = abs(int(vals[b1]) - int(vals[b2])) / float(R)
        led.alpha_gaps.extend([lam, lam])
        led.y_size += 2
        doomed.update((b1, b2))
        for x in (u, v):
            m.atoms[x].tag = "alpha"
        steps.append(("remove-double", (b1, b2)))
    keep = [i for i in range(m.E) if i not in doomed]
    m.bonds = [m.bonds[i] for i in keep]
    vals = vals[keep]
    for x in range(m.V):
        if m.atoms[x].tag == "alpha":
            m.atoms[x].c = int(sum(o * vals[b] for b, o in m.incidences(x)))
    led.sync_chi(m)
    if not led.consistent_with(m):
        raise CutError("ledger out of sync after step 1")

    gaps = classify_gaps(m, vals, R, eps, theta)

    while True:  # step 2
        target = None
        for v in range(m.V):
            if m.atoms[v].tag != "I" or m.degree(v) != 4 or gaps[v]["tame"]:
                continue
            sg = [pg for pg, rho, small in gaps[v]["pairs"] if small]
            if sg:
                target = (v, sg[0])
                break
        if target is None:
            break
        v, bp = target
        inc = m.incidences(v)
        keep_inc = [x for x in inc if x[0] in bp]
        if len(keep_inc) != 2:
            keep_inc = keep_inc[:2]
        kind, _ = cut(m, v, keep_inc, gaps=gaps, vals=vals, R=float(R))
        if kind == "beta":
            led.v_beta += 2
            led.delta_F += 1
        else:
            rho = [r for pg, r, s in gaps[v]["pairs"] if pg == bp][0]
            led.alpha_gaps.extend([rho, rho])
        led.sync_chi(m)
        steps.append(("cut-sg", v, bp, kind))
        gaps = classify_gaps(m, vals, R, eps, theta)
        if not led.consistent_with(m):
            raise CutError("ledger out of sync in step 2")

    while True:  # step 3
        target = None
        for v in range(m.V):
            if m.atoms[v].tag != "I" or m.degree(v) != 4 or gaps[v]["tame"]:
                continue
            keep_inc = beta_cut_available(m, v)
            if keep_inc is not None:
                target = (v, keep_inc)
                break
        if target is None:
            break
        v, keep_inc = target
        kind, _ = cut(m, v, keep_inc, gaps=None, vals=vals, R=float(R))
        if kind != "beta":
            raise CutError("expected a beta cut")
        led.v_beta += 2
        led.delta_F += 1
        led.sync_chi(m)
        steps.append(("cut-beta", v))
        gaps = classify_gaps(m, vals, R, eps, theta)
        if not led.consistent_with(m):
            raise CutError("ledger out of sync in step 3")

    return CuttingResult(m, vals, led, steps)


# ---------------------------------------------------------------------------
# atom removal schedule


def _eps_atoms(m: Molecule, comp):
    return [v for v in comp if m.atoms[v].tag in ("I", "N")]


def _chains_between(m: Molecule, comp):
    """Eps-atom adjacencies through direct bonds or alpha/beta chains."""
    eps = set(_eps_atoms(m, comp))
    links = []
    for b in m.bonds:
        if b.u in eps and b.v in eps:
            links.append((b.u, b.v))
    visited = set()
    for start in sorted(eps):
        for b0, _ in m.incidences(start):
            if b0 in visited:
                continue
            bond = m.bonds[b0]
            nxt = bond.v if bond.u == start else bond.u
            if nxt in eps:
                continue
            chain = [b0]
            cur = nxt
            while cur is not None and cur not in eps:
                step = [(b, o) for b, o in m.incidences(cur) if b != chain[-1]]
                if not step:
                    cur = None
                    break
                chain.append(step[0][0])
                nb = m.bonds[step[0][0]]
                cur = nb.v if nb.u == cur else nb.u
            visited.update(chain)
            if cur is not None:
                links.append((start, cur))
    return links


def atom_removal_schedule(m: Molecule, comp=None):
    """Removal order for the eps-atoms of one component.

    A degree-4 interaction atom goes first when present, then the normal
    form atoms, then the rest; without one, degree-5 interaction atoms
    multiply connected to other eps-atoms go last.
    """
    if comp is None:
        comps = m.components()
        comp = max(comps, key=len) if comps else []
    eps = _eps_atoms(m, comp)
    deg4 = [v for v in eps if m.atoms[v].tag == "I" and m.degree(v) == 4]
    natoms = sorted(v for v in eps if m.atoms[v].tag == "N")
    iatoms = sorted(v for v in eps if m.atoms[v].tag == "I")
    if deg4:
        first = min(deg4)
        return [first] + natoms + [v for v in iatoms if v != first]
    links = _chains_between(m, comp)
    multi = set()
    for v in iatoms:
        if m.degree(v) == 5:
            cnt = sum(1 for a, b in links if (a == v) != (b == v))
            cnt += 2 * sum(1 for a, b in links if a == v and b == v)
            if cnt >= 2:
                multi.add(v)
    return natoms + [v for v in iatoms if v not in multi] + sorted(multi)


def remove_atom(m: Molecule, v: int):
    """Delete atom v with its bonds in place; reindexes atoms above v."""
    doomed = sorted({b for b, _ in m.incidences(v)}, reverse=True)
    for b in doomed:
        m.bonds.pop(b)
    m.atoms.pop(v)
    for b in m.bonds:
        if b.u > v:
            b.u -= 1
        if b.v > v:
            b.v -= 1
    m.beta_pairs = [
        (a - (a > v), bb - (bb > v), c)
        for a, bb, c in m.beta_pairs
        if a != v and bb != v
    ]
    return len(doomed)


# ---------------------------------------------------------------------------
# irregular chains, twisting, splicing


@dataclass
class IrregularChain:
    tag: str
    node_paths: list     # n_0 .. n_q
    m_paths: list        # m_j leaf paths, j = 0 .. q-1
    p_paths: list        # p_j paths, j = 0 .. q (p_0 may root a subtree)
    p_slots: list        # slot of p_j within the same-sign child block

    @property
    def q(self) -> int:
        return len(self.node_paths) - 1


def _chain_links(couple: Couple, tag: str):
    tree = couple.tplus if tag == "+" else couple.tminus
    rp = trees.rank(couple.tplus)
    offset = 0 if tag == "+" else rp
    leaf_index = {p: i + offset for i, p in enumerate(trees.leaf_paths(tree))}
    partner = {}
    for pr in couple.pairing:
        a, b = tuple(pr)
        partner[a] = b
        partner[b] = a
    links = {}
    for node, path in trees.iter_nodes(tree):
        if node[0] != "I" or len(node[2]) != 3:
            continue
        for i, c in enumerate(node[2]):
            if c[0] != "I" or len(c[2]) != 3:
                continue
            cpath = path + (i,)
            for j, leafc in enumerate(node[2]):
                if leafc[0] != "L" or leafc[1] != -c[1]:
                    continue
                lidx = leaf_index.get(path + (j,))
                if lidx is None or lidx not in partner:
                    continue
                mate = partner[lidx]
                for jc, cc in enumerate(c[2]):
                    if cc[0] == "L" and leaf_index.get(cpath + (jc,)) == mate:
                        links[path] = (cpath, path + (j,), cpath + (jc,))
                        break
    return links


def find_irregular_chains(couple: Couple):
    """Maximal irregular chains (q >= 1) in both trees of the couple."""
    chains = []
    for tag in ("+", "-"):
        tree = couple.tplus if tag == "+" else couple.tminus
        links = _chain_links(couple, tag)
        heads = set(links) - {v[0] for v in links.values()}
        for h in sorted(heads):
            node_paths, m_paths, p_mid = [h], [], []
            cur = h
            while cur in links:
                nxt, mpath, ppath = links[cur]
                node_paths.append(nxt)
                m_paths.append(mpath)
                p_mid.append(ppath)
                cur = nxt
            if len(node_paths) < 2:
                continue
            p0 = _other_child(tree, node_paths[0], node_paths[1], m_paths[0])
            p_paths = [p0] + p_mid
            p_slots = []
            for npath, ppath in zip(node_paths, p_paths):
                node = trees.node_at(tree, npath)
                same = [i for i, c in enumerate(node[2]) if c[1] == node[1]]
                p_slots.append(same.index(ppath[-1]) if ppath[-1] in same else 0)
            chains.append(IrregularChain(tag, node_paths, m_paths, p_paths, p_slots))
    return chains


def _other_child(tree, npath, child_path, mpath):
    used = {child_path[-1], mpath[-1]}
    for i in range(len(trees.node_at(tree, npath)[2])):
        if i not in used:
            return npath + (i,)
    raise ValueError("degenerate chain node")


# labeled working form: xnode = (header, [children]), header ('L',sign,label)
# for leaves and (kind,sign) for branching nodes


def _label_tree(tree):
    counter = [0]

    def rec(node):
        if node[0] == "L":
            lab = counter[0]
            counter[0] += 1
            return (("L", node[1], lab), [])
        return ((node[0], node[1]), [rec(c) for c in node[2]])

    x = rec(tree)
    order = []

    def collect(xn):
        if xn[0][0] == "L":
            order.append(xn[0][2])
        for c in xn[1]:
            collect(c)

    collect(x)
    return x, order


def _xnode_at(x, path):
    for i in path:
        x = x[1][i]
    return x


def _xflip(x):
    head = x[0]
    if head[0] == "L":
        return (("L", -head[1], head[2]), [])
    return ((head[0], -head[1]), [_xflip(c) for c in x[1]])


def _xwith_sign(x, sign):
    return x if x[0][1] == sign else _xflip(x)


def _replace_at(x, path, sub):
    if not path:
        return sub
    kids = list(x[1])
    kids[path[0]] = _replace_at(kids[path[0]], path[1:], sub)
    return (x[0], kids)


def _unlabel(x):
    order = []

    def rec(xn):
        head = xn[0]
        if head[0] == "L":
            order.append(head[2])
            return ("L", head[1])
        return (head[0], head[1], tuple(rec(c) for c in xn[1]))

    return rec(x), order


def _rebuild_couple(couple, tag, labeled_new, order_old, with_remap=False):
    """Couple with one tree replaced; the pairing follows the leaf labels."""
    rp = trees.rank(couple.tplus)
    offset = 0 if tag == "+" else rp
    new_tree, order_new = _unlabel(labeled_new)
    old_global = {lab: offset + i for i, lab in enumerate(order_old)}
    new_global = {lab: offset + i for i, lab in enumerate(order_new)}
    remap = {}
    for lab in order_new:
        remap[old_global[lab]] = new_global[lab]
    if tag == "+":
        new_rp = trees.rank(new_tree)
        for i in range(trees.rank(couple.tminus)):
            remap[rp + i] = new_rp + i
    else:
        for i in range(rp):
            remap[i] = i
    pairs = set()
    for p in couple.pairing:
        a, b = tuple(p)
        if a in remap and b in remap:
            pairs.add(frozenset((remap[a], remap[b])))
    if tag == "+":
        out = Couple(new_tree, couple.tminus, frozenset(pairs))
    else:
        out = Couple(couple.tplus, new_tree, frozenset(pairs))
    if with_remap:
        return out, remap
    return out


def twist_couple(couple: Couple, chain: IrregularChain, zetas, with_remap: bool = False):
    """Congruent couple with the chain link signs replaced by zetas.

    With with_remap the old-to-new leaf index map is returned as well."""
    if chain.node_paths[0] == ():
        raise ValueError("cannot twist a chain containing the root")
    if len(zetas) != chain.q:
        raise ValueError("need one sign per chain link")
    tag = chain.tag
    tree = couple.tplus if tag == "+" else couple.tminus
    labeled, order = _label_tree(tree)
    zeta0 = trees.node_at(tree, chain.node_paths[0])[1]
    new_signs = [zeta0] + list(zetas)

    def rebuild(j):
        npath = chain.node_paths[j]
        zj = new_signs[j]
        if j == chain.q:
            ppath = chain.p_paths[j]
            others = [
                _xnode_at(labeled, npath + (i,))
                for i in range(3)
                if npath + (i,) != ppath
            ]
            e = next(c for c in others if c[0][1] == PLUS)
            f = next(c for c in others if c[0][1] == MINUS)
            pnew = _xwith_sign(_xnode_at(labeled, ppath), zj)
            same = [pnew, e if zj == PLUS else f]
            if chain.p_slots[j] == 1:
                same.reverse()
            return (("I", zj), same + [f if zj == PLUS else e])
        child = rebuild(j + 1)
        zj1 = new_signs[j + 1]
        mleaf = _xwith_sign(_xnode_at(labeled, chain.m_paths[j]), -zj1)
        pkid = _xnode_at(labeled, chain.p_paths[j])
        if j > 0:
            pkid = _xwith_sign(pkid, zj)
        if zj1 == zj:
            same = [pkid, child]
            opp = [mleaf]
        else:
            same = [pkid, mleaf]
            opp = [child]
        if chain.p_slots[j] == 1:
            same.reverse()
        return (("I", zj), same + opp)

    new_labeled = _replace_at(labeled, chain.node_paths[0], rebuild(0))
    return _rebuild_couple(couple, tag, new_labeled, order, with_remap=with_remap)


def congruence_class(couple: Couple, chain: IrregularChain):
    """All 2^q twists of one chain, identity included."""
    return [
        twist_couple(couple, chain, z)
        for z in itertools.product((PLUS, MINUS), repeat=chain.q)
    ]


def splice(couple: Couple, chains) -> Couple:
    """Collapse each chain to its head node, dropping the internal pairs."""
    cur = couple
    for chain in sorted(chains, key=lambda c: -len(c.node_paths[0])):
        cur = _splice_one(cur, chain)
    return cur


def _splice_one(couple: Couple, chain: IrregularChain) -> Couple:
    tag = chain.tag
    tree = couple.tplus if tag == "+" else couple.tminus
    labeled, order = _label_tree(tree)
    zeta0 = trees.node_at(tree, chain.node_paths[0])[1]
    nq, pq = chain.node_paths[-1], chain.p_paths[-1]
    others = [_xnode_at(labeled, nq + (i,)) for i in range(3) if nq + (i,) != pq]
    e = next(c for c in others if c[0][1] == PLUS)
    f = next(c for c in others if c[0][1] == MINUS)
    p0 = _xnode_at(labeled, chain.p_paths[0])
    same = [p0, e if zeta0 == PLUS else f]
    new_sub = (("I", zeta0), same + [f if zeta0 == PLUS else e])
    new_labeled = _replace_at(labeled, chain.node_paths[0], new_sub)
    return _rebuild_couple(couple, tag, new_labeled, order)


def chain_merge(mmap: MoleculeMap, atom_set) -> Molecule:
    """Contract a set of atoms to one atom, dropping the internal bonds."""
    m = mmap.molecule
    out = Molecule()
    atom_set = set(atom_set)
    rep = min(atom_set)
    newidx = {}
    for i, a in enumerate(m.atoms):
        if i in atom_set and i != rep:
            continue
        newidx[i] = len(out.atoms)
        out.atoms.append(Atom(a.tag, a.d0, a.ref, a.c))
    for i in atom_set:
        newidx[i] = newidx[rep]
    for b in m.bonds:
        if b.u in atom_set and b.v in atom_set:
            continue
        out.bonds.append(Bond(newidx[b.u], newidx[b.v], b.kind, b.ref))
    return out


def classify_double_chains(couple: Couple, mmap: MoleculeMap):
    """Maximal chains of double bonds between degree-4 atoms: CL when every
    link pairs a parent-child bond with a leaf-pair bond, CN otherwise."""
    m = mmap.molecule
    dbs = double_bonds(m)
    adj = {}
    for ends, bonds in dbs.items():
        u, v = tuple(ends)
        if m.degree(u) != 4 or m.degree(v) != 4:
            continue
        adj.setdefault(u, []).append((v, bonds))
        adj.setdefault(v, []).append((u, bonds))
    seen, chains = set(), []
    starts = sorted(v for v in adj if len(adj[v]) == 1) + sorted(adj)
    for start in starts:
        if start in seen:
            continue
        path = [start]
        seen.add(start)
        cur = start
        while True:
            nxts = [x for x in adj.get(cur, []) if x[0] not in seen]
            if not nxts:
                break
            cur = nxts[0][0]
            seen.add(cur)
            path.append(cur)
        if len(path) >= 2:
            chains.append(path)
    out = []
    for path in chains:
        kinds = []
        for a, b in zip(path, path[1:]):
            bonds = dbs[frozenset((a, b))]
            kinds.append(tuple(sorted(m.bonds[i].kind for i in bonds[:2])))
        label = "CL" if all(k == ("lp", "pc") for k in kinds) else "CN"
        out.append({"atoms": path, "links": kinds, "label": label})
    return out


# ---------------------------------------------------------------------------
# decoration counting


@dataclass
class CountResult:
    count: float
    exact: bool
    stderr: float = 0.0


def _atom_rows(m: Molecule):
    rows = []
    for v in range(m.V):
        coeff = np.zeros(m.E, dtype=int)
        for b, o in m.incidences(v):
            coeff[b] += o
        rows.append((coeff, m.atoms[v].c))
    return rows


def _eliminate(rows, nb):
    """Triangularize with +-1 pivots; returns (pivots, checks) where each
    pivot (j, coeff, rhs) solves k_j = rhs - sum_{l != j} coeff_l k_l."""
    work = [(c.copy(), int(r)) for c, r in rows]
    pivots, checks, used = [], [], set()
    for i in range(len(work)):
        coeff, rhs = work[i]
        cand = [j for j in range(nb) if j not in used and abs(coeff[j]) == 1]
        if not cand:
            if np.any(coeff):
                checks.append((coeff, rhs))
            elif rhs != 0:
                return None, None
            continue
        j = cand[0]
        cj = int(coeff[j])
        used.add(j)
        norm_c = coeff * cj
        norm_r = rhs * cj
        pivots.append((j, norm_c, norm_r))
        for l in range(i + 1, len(work)):
            c2, r2 = work[l]
            if c2[j] != 0:
                mult = int(c2[j])
                work[l] = (c2 - mult * norm_c, r2 - mult * norm_r)
    return pivots, checks


def count_decorations(
    m: Molecule,
    centers,
    R: int,
    T1: float,
    beta: dict | None = None,
    eps: float = 0.0,
    lattice: FrequencyLattice | None = None,
    psi=None,
    budget: int = 10 ** 8,
    rng=None,
    samples: int = 200000,
) -> CountResult:
    """Number of restricted decorations: momentum conservation at every
    atom, unit windows around the bond centers, resonance windows of width
    1/T1 at interaction and alpha atoms, and the pair constraint at beta
    atoms.  Falls back to a flagged stratified estimate above the budget.
    """
    centers = np.asarray(centers, dtype=int)
    nb = m.E
    pivots, checks = _eliminate(_atom_rows(m), nb)
    if pivots is None:
        return CountResult(0.0, True)
    used = {p[0] for p in pivots}
    free = [j for j in range(nb) if j not in used]
    beta = beta or {}
    tol = 1.0 / T1

    g0_tab = {}

    def g0_term(karr):
        if eps == 0.0 or lattice is None:
            return 0.0
        key = karr.tobytes()
        if key not in g0_tab:
            g0_tab[key] = eps ** 2 * gamma0(karr, lattice, psi)
        return g0_tab[key]

    def assemble(free_vals):
        D = free_vals.shape[0]
        vals = np.zeros((D, nb), dtype=int)
        for col, j in enumerate(free):
            vals[:, j] = free_vals[:, col]
        for j, coeff, rhs in reversed(pivots):
            s = np.full(D, rhs, dtype=int)
            for l in np.nonzero(coeff)[0]:
                if l != j:
                    s -= int(coeff[l]) * vals[:, l]
            vals[:, j] = s
        return vals

    def feasible(vals):
        ok = np.ones(vals.shape[0], dtype=bool)
        for coeff, rhs in checks:
            ok &= vals @ coeff == rhs
        for b in range(nb):
            ok &= np.abs(vals[:, b] - centers[b]) <= R
        if not np.any(ok):
            return ok
        gam = {}
        for v in range(m.V):
            tag = m.atoms[v].tag
            if tag not in ("I", "alpha", "beta"):
                continue
            s = np.zeros(vals.shape[0])
            for b, o in m.incidences(v):
                kk = vals[:, b] / float(R)
                s = s + o * (dispersion(kk) + g0_term(kk))
            gam[v] = s
            if tag in ("I", "alpha"):
                ok &= np.abs(s - beta.get(v, 0.0)) <= tol
        for (v1, v2, const) in m.beta_pairs:
            c = const if const is not None else 0.0
            ok &= np.abs(gam[v1] + gam[v2] - c) <= tol
        return ok

    win = np.arange(-R, R + 1)
    total_space = (2 * R + 1) ** len(free)
    if total_space <= budget:
        count = 0
        chunk = 200000
        if free:
            grids = [win + centers[j] for j in free]
            buf = []
            for tupl in itertools.product(*grids):
                buf.append(tupl)
                if len(buf) >= chunk:
                    count += int(np.sum(feasible(assemble(np.array(buf, dtype=int)))))
                    buf = []
            if buf:
                count += int(np.sum(feasible(assemble(np.array(buf, dtype=int)))))
        else:
            count = int(np.sum(feasible(assemble(np.zeros((1, 0), dtype=int)))))
        return CountResult(float(count), True)

    rng = rng or np.random.default_rng(0)
    draws = rng.integers(-R, R + 1, size=(samples, len(free)))
    draws = draws + centers[np.array(free, dtype=int)][None, :]
    hits = float(np.sum(feasible(assemble(draws))))
    p = hits / samples
    est = p * total_space
    se = total_space * float(np.sqrt(max(p * (1 - p), 1e-12) / samples))
    return CountResult(est, False, se)


def count_decorations_oracle(m: Molecule, centers, R: int, T1: float, **kw) -> CountResult:
    """Plain nested loops over every bond value; no elimination."""
    centers = np.asarray(centers, dtype=int)
    beta = kw.get("beta") or {}
    eps = kw.get("eps", 0.0)
    lattice = kw.get("lattice")
    psi = kw.get("psi")
    tol = 1.0 / T1
    count = 0
    for tupl in itertools.product(*[centers[b] + np.arange(-R, R + 1) for b in range(m.E)]):
        vals = np.array(tupl, dtype=int)
        if not check_momentum(m, vals):
            continue
        ok = True
        gam = {}
        for v in range(m.V):
            tag = m.atoms[v].tag
            if tag not in ("I", "alpha", "beta"):
                continue
            g = gamma_v(m, v, vals, R=float(R), eps=eps, lattice=lattice, psi=psi)
            gam[v] = g
            if tag in ("I", "alpha") and abs(g - beta.get(v, 0.0)) > tol:
                ok = False
                break
        if not ok:
            continue
        for (v1, v2, const) in m.beta_pairs:
            if abs(gam[v1] + gam[v2] - (const or 0.0)) > tol:
                ok = False
                break
        if ok:
            count += 1
    return CountResult(float(count), True)
