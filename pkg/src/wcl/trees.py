"""Signed trees, paired trees, couples, decorations and Wick products.

Trees are immutable nested tuples.  A node is one of

    ("L", sign)                      leaf
    ("I", sign, (child, child, ...)) interaction node, 3..A children
    ("N", sign, (child, child, ...)) normal-form node, 2 or 3 leaf children

with sign in {+1, -1}.  Children carrying the same sign as their parent
come first; within a sign block the order is significant (trees are planar,
matching the multiplicity of the iterated expansion).

Leaves are indexed by depth-first position.  A paired tree is (tree,
pairing) and a couple is (tree_plus, tree_minus, pairing) where the pairing
is a frozenset of frozen index pairs over the concatenated leaf list; every
pair joins two leaves of opposite sign.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterator

import numpy as np

PLUS, MINUS = 1, -1


def leaf(sign):
    return ("L", sign)


def node_kind(node):
    return node[0]


def node_sign(node):
    return node[1]


def children(node):
    return node[2] if len(node) > 2 else ()


def flip(node):
    """Mirror tree with every sign reversed."""
    if node[0] == "L":
        return ("L", -node[1])
    return (node[0], -node[1], tuple(flip(c) for c in node[2]))


def validate(node, A: int = 3) -> bool:
    """Check arities, the leaves-only rule for N nodes and sign ordering."""
    kind, sign = node[0], node[1]
    if sign not in (PLUS, MINUS):
        return False
    if kind == "L":
        return len(node) == 2
    kids = children(node)
    if kind == "I" and not (3 <= len(kids) <= A):
        return False
    if kind == "N":
        if len(kids) not in (2, 3) or any(c[0] != "L" for c in kids):
            return False
    if kind not in ("I", "N"):
        return False
    same = [c[1] == sign for c in kids]
    if any(same[i] and not all(same[: i + 1]) for i in range(len(same))):
        return False
    # same-sign block must be a prefix
    seen_opp = False
    for s in same:
        if not s:
            seen_opp = True
        elif seen_opp:
            return False
    return all(validate(c, A) for c in kids)


def rank(node) -> int:
    if node[0] == "L":
        return 1
    return sum(rank(c) for c in children(node))


def count_nodes(node, kind) -> int:
    own = 1 if node[0] == kind else 0
    return own + sum(count_nodes(c, kind) for c in children(node))


def n_interaction(node) -> int:
    return count_nodes(node, "I")


def n_normal(node) -> int:
    return count_nodes(node, "N")


def leaf_signs(node) -> list:
    if node[0] == "L":
        return [node[1]]
    out = []
    for c in children(node):
        out.extend(leaf_signs(c))
    return out


def serialize(node) -> str:
    s = "+" if node[1] == PLUS else "-"
    if node[0] == "L":
        return s + "L"
    return "%s%s(%s)" % (s, node[0], ",".join(serialize(c) for c in children(node)))


def deserialize(text: str):
    """Inverse of serialize."""
    pos = [0]

    def parse():
        sign = PLUS if text[pos[0]] == "+" else MINUS
        pos[0] += 1
        kind = text[pos[0]]
        pos[0] += 1
        if kind == "L":
            return ("L", sign)
        assert text[pos[0]] == "("
        pos[0] += 1
        kids = [parse()]
        while text[pos[0]] == ",":
            pos[0] += 1
            kids.append(parse())
        assert text[pos[0]] == ")"
        pos[0] += 1
        return (kind, sign, tuple(kids))

    out = parse()
    if pos[0] != len(text):
        raise ValueError("trailing data in %r" % text)
    return out


# ---------------------------------------------------------------------------
# enumeration


def _sign_blocks(sign, m):
    """Ordered child-sign tuples for a node of the given sign and arity."""
    return [tuple([sign] * rp + [-sign] * (m - rp)) for rp in range(m, -1, -1)]


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_trees(
    max_rank: int,
    A: int = 3,
    sign: int = PLUS,
    allow_N: bool = True,
    interaction_pattern_only: bool = False,
) -> Iterator:
    """All signed trees of rank <= max_rank, duplicate free.

    With interaction_pattern_only, I-node children are restricted to the
    one sign arrangement whose interaction symbol does not vanish (two
    same-sign children then one opposite).
    """
    if max_rank > 8:
        raise ValueError("rank budget exceeded (max 8)")
    for r in range(1, max_rank + 1):
        yield from _trees_of_rank(r, A, sign, allow_N, interaction_pattern_only)


def _trees_of_rank(r, A, sign, allow_N, ionly, _memo={}):
    key = (r, A, sign, allow_N, ionly)
    if key in _memo:
        return _memo[key]
    out = []
    if r == 1:
        out.append(("L", sign))
    if allow_N and r in (2, 3):
        for sigs in _sign_blocks(sign, r):
            out.append(("N", sign, tuple(("L", s) for s in sigs)))
    for m in range(3, A + 1):
        if r < m:
            continue
        sign_opts = (
            [tuple([sign, sign, -sign])] if (ionly and m == 3) else _sign_blocks(sign, m)
        )
        for sigs in sign_opts:
            for comp in _compositions(r, m):
                pools = [
                    _trees_of_rank(comp[i], A, sigs[i], allow_N, ionly)
                    for i in range(m)
                ]
                for kids in itertools.product(*pools):
                    out.append(("I", sign, kids))
    _memo[key] = out
    return out


# ---------------------------------------------------------------------------
# pairings


def enumerate_partial_pairings(signs):
    """All sets of disjoint opposite-sign index pairs, including the empty one."""
    idx = list(range(len(signs)))

    def rec(avail):
        yield frozenset()
        for i_pos, i in enumerate(avail):
            for j in avail[i_pos + 1 :]:
                if signs[i] == -signs[j]:
                    rest = [x for x in avail if x not in (i, j)]
                    for sub in rec(rest):
                        yield sub | {frozenset((i, j))}

    seen = set()
    for p in rec(idx):
        if p not in seen:
            seen.add(p)
            yield p


def enumerate_perfect_matchings(signs):
    """Perfect matchings of indices into opposite-sign pairs."""
    plus = [i for i, s in enumerate(signs) if s == PLUS]
    minus = [i for i, s in enumerate(signs) if s == MINUS]
    if len(plus) != len(minus):
        return
    for perm in itertools.permutations(minus):
        yield frozenset(frozenset((p, m)) for p, m in zip(plus, perm))


@dataclass(frozen=True)
class PairedTree:
    tree: tuple
    pairing: frozenset

    def canonical(self) -> str:
        pairs = sorted(tuple(sorted(p)) for p in self.pairing)
        return serialize(self.tree) + "|" + json.dumps(pairs)


@dataclass(frozen=True)
class Couple:
    tplus: tuple
    tminus: tuple
    pairing: frozenset  # over concatenated leaf indices, plus-tree first

    @property
    def rank(self) -> int:
        return rank(self.tplus) + rank(self.tminus)

    @property
    def n_I(self) -> int:
        return n_interaction(self.tplus) + n_interaction(self.tminus)

    def canonical(self) -> str:
        pairs = sorted(tuple(sorted(p)) for p in self.pairing)
        return serialize(self.tplus) + "||" + serialize(self.tminus) + "|" + json.dumps(pairs)

    def swap_conjugate(self) -> "Couple":
        """Mirror couple with the two trees exchanged and signs flipped."""
        rp = rank(self.tplus)
        rm = rank(self.tminus)
        remap = {}
        for i in range(rp):
            remap[i] = rm + i
        for j in range(rm):
            remap[rp + j] = j
        pairs = frozenset(frozenset(remap[i] for i in p) for p in self.pairing)
        return Couple(flip(self.tminus), flip(self.tplus), pairs)


TRIVIAL_COUPLE = Couple(("L", PLUS), ("L", MINUS), frozenset({frozenset((0, 1))}))


def couple_leaf_signs(c: Couple) -> list:
    return leaf_signs(c.tplus) + leaf_signs(c.tminus)


def enumerate_couples(
    rank_each: int,
    admissible_only: bool = False,
    A: int = 3,
    allow_N: bool = True,
    exact_rank: int | None = None,
    interaction_pattern_only: bool = False,
) -> Iterator[Couple]:
    """Stream of couples with each tree of rank <= rank_each.

    With exact_rank both trees have exactly that rank.  The trivial couple
    appears iff rank 1 is allowed.
    """
    if rank_each > 5:
        raise ValueError("rank budget exceeded (max 5 per side)")
    plus_trees = list(
        enumerate_trees(rank_each, A, PLUS, allow_N, interaction_pattern_only)
    )
    for tp in plus_trees:
        if exact_rank is not None and rank(tp) != exact_rank:
            continue
        for tm0 in plus_trees:
            if exact_rank is not None and rank(tm0) != exact_rank:
                continue
            tm = flip(tm0)
            signs = leaf_signs(tp) + leaf_signs(tm)
            if sum(signs) != 0:
                continue
            for pairing in enumerate_perfect_matchings(signs):
                c = Couple(tp, tm, pairing)
                if admissible_only and not couple_is_admissible(c):
                    continue
                yield c


# ---------------------------------------------------------------------------
# admissibility


def _subtree_leaf_ranges(root):
    """Map from node path (tuple of child indices) to (lo, hi) leaf range."""
    ranges = {}

    def rec(node, path, lo):
        if node[0] == "L":
            ranges[path] = (lo, lo + 1)
            return lo + 1
        cur = lo
        for i, c in enumerate(node[2]):
            cur = rec(c, path + (i,), cur)
        ranges[path] = (lo, cur)
        return cur

    rec(root, (), 0)
    return ranges


def iter_nodes(root):
    """Depth-first (node, path) pairs."""
    stack = [(root, ())]
    while stack:
        node, path = stack.pop()
        yield node, path
        for i, c in enumerate(children(node)):
            stack.append((c, path + (i,)))


def node_at(root, path):
    node = root
    for i in path:
        node = node[2][i]
    return node


def _admissible_one_tree(tree, pairing, offset):
    ranges = _subtree_leaf_ranges(tree)
    for node, path in iter_nodes(tree):
        if node[0] != "I" or len(node[2]) != 3:
            continue
        kids = node[2]
        for i, j in itertools.combinations(range(3), 2):
            if kids[i][1] != -kids[j][1]:
                continue
            lo1, hi1 = ranges[path + (i,)]
            lo2, hi2 = ranges[path + (j,)]
            block = set(range(lo1 + offset, hi1 + offset)) | set(
                range(lo2 + offset, hi2 + offset)
            )
            fully = all(
                any(p <= block and x in p and len(p - {x}) == 1 for p in pairing)
                for x in block
            )
            if fully and block:
                return False
    return True


def is_admissible(pt: PairedTree) -> bool:
    """No 3-child I-node may have two opposite-sign children whose subtree
    leaves are completely paired among themselves."""
    return _admissible_one_tree(pt.tree, pt.pairing, 0)


def couple_is_admissible(c: Couple) -> bool:
    rp = rank(c.tplus)
    return _admissible_one_tree(c.tplus, c.pairing, 0) and _admissible_one_tree(
        c.tminus, c.pairing, rp
    )


# ---------------------------------------------------------------------------
# decorations (reference enumeration; the fast paths live in amplitudes)


def leaf_paths(root):
    """Leaf paths in depth-first order."""
    out = []

    def rec(node, path):
        if node[0] == "L":
            out.append(path)
            return
        for i, c in enumerate(node[2]):
            rec(c, path + (i,))

    rec(root, ())
    return out


def relative_sign(root, path) -> int:
    """Product of sign ratios along the path; the coefficient of the leaf
    value in the root momentum constraint."""
    node = root
    coeff = 1
    for i in path:
        child = node[2][i]
        coeff *= child[1] * node[1]
        node = child
    return coeff


def fill_decoration(root, leaf_vals):
    """Node values (path -> integer numerator) from leaf values, using
    momentum conservation at every branching node."""
    deco = {}

    def rec(node, path, it):
        if node[0] == "L":
            v = next(it)
            deco[path] = v
            return node[1] * v
        tot = 0
        for i, c in enumerate(node[2]):
            tot += rec(c, path + (i,), it)
        deco[path] = node[1] * tot  # sign in {1,-1} so this solves s*k = tot
        return tot

    rec(root, (), iter(leaf_vals))
    return deco


def decorations(structure, root_k: int | None, window: int) -> Iterator[dict]:
    """Exhaustive decoration stream for a paired tree or couple.

    Frequencies are integer numerators in [-window, window].  For couples
    the returned dict maps ('+',path) and ('-',path); for paired trees it
    maps paths directly.  root_k constrains the root numerator (both roots
    for couples).
    """
    vals = range(-window, window + 1)
    if isinstance(structure, Couple):
        signs = couple_leaf_signs(structure)
        rp = rank(structure.tplus)
        paths_p = leaf_paths(structure.tplus)
        paths_m = leaf_paths(structure.tminus)
        pairs = [sorted(p) for p in structure.pairing]
        pairs = sorted(tuple(p) for p in pairs)
        for assign in itertools.product(vals, repeat=len(pairs)):
            leafval = {}
            for (i, j), v in zip(pairs, assign):
                leafval[i] = v
                leafval[j] = v
            dp = fill_decoration(structure.tplus, [leafval[i] for i in range(rp)])
            dm = fill_decoration(
                structure.tminus, [leafval[rp + i] for i in range(len(paths_m))]
            )
            if root_k is not None and (dp[()] != root_k or dm[()] != root_k):
                continue
            if any(abs(v) > window for v in dp.values()):
                continue
            if any(abs(v) > window for v in dm.values()):
                continue
            out = {("+", p): v for p, v in dp.items()}
            out.update({("-", p): v for p, v in dm.items()})
            yield out
    else:
        pt = structure
        signs = leaf_signs(pt.tree)
        paired_idx = sorted(sorted(p) for p in pt.pairing)
        in_pair = {i for p in pt.pairing for i in p}
        unpaired = [i for i in range(len(signs)) if i not in in_pair]
        free = [tuple(p) for p in paired_idx] + [(i,) for i in unpaired]
        for assign in itertools.product(vals, repeat=len(free)):
            leafval = {}
            for slot, v in zip(free, assign):
                for i in slot:
                    leafval[i] = v
            deco = fill_decoration(pt.tree, [leafval[i] for i in range(len(signs))])
            if root_k is not None and deco[()] != root_k:
                continue
            if any(abs(v) > window for v in deco.values()):
                continue
            yield {("+", p): v for p, v in deco.items()}


# ---------------------------------------------------------------------------
# Wick products


def wick(signs, values, pair_expectation):
    """Renormalized product of jointly Gaussian variables.

    values[i] may be scalars or broadcastable arrays; pair_expectation(i, j)
    returns E[X_i^{s_i} X_j^{s_j}] (scalar or array).  Implements the
    recursive subtraction over all nonempty pairings.
    """
    m = len(signs)
    memo = {}

    def rec(idx):
        if idx in memo:
            return memo[idx]
        if not idx:
            return 1.0
        prod = values[idx[0]]
        for i in idx[1:]:
            prod = prod * values[i]
        total = prod
        for pairing in _pairings_of(idx, signs):
            if not pairing:
                continue
            coeff = 1.0
            for (i, j) in pairing:
                coeff = coeff * pair_expectation(i, j)
            rest = tuple(i for i in idx if not any(i in p for p in pairing))
            total = total - coeff * rec(rest)
        memo[idx] = total
        return total

    return rec(tuple(range(m)))


def _pairings_of(idx, signs):
    """All pairings (sets of disjoint opposite-sign pairs) of the index tuple."""
    out = [[]]
    idx = list(idx)

    def rec(avail, acc):
        out.append(list(acc))
        for a_pos, i in enumerate(avail):
            for j in avail[a_pos + 1 :]:
                if signs[i] == -signs[j]:
                    rec([x for x in avail if x not in (i, j)], acc + [(i, j)])

    rec(idx, [])
    # dedupe (rec yields permutations of the same pairing set)
    seen = set()
    uniq = []
    for p in out:
        key = frozenset(map(tuple, p))
        if key not in seen:
            seen.add(key)
            uniq.append(p)
    return uniq


def wick_gaussian(signs, kvals, draw_g):
    """Wick product of g_{k_i}^{s_i}; draw_g maps an integer numerator to a
    sample array.  Pair expectations are 1 on equal opposite-sign indices."""
    values = [draw_g(k) if s == PLUS else np.conj(draw_g(k)) for s, k in zip(signs, kvals)]

    def expect(i, j):
        if signs[i] == -signs[j] and kvals[i] == kvals[j]:
            return 1.0
        return 0.0

    return wick(signs, values, expect)
