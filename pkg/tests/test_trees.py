import itertools

import numpy as np
import pytest

from wcl import trees as tr

L = lambda s: ("L", s)
I3 = lambda s, kids: ("I", s, tuple(kids))
N = lambda s, kids: ("N", s, tuple(kids))


def test_enumerate_rank_budget():
    with pytest.raises(ValueError):
        list(tr.enumerate_trees(9, 3, tr.PLUS))


def test_enumerate_counts_by_hand():
    # rank 1: the single leaf
    only = [t for t in tr.enumerate_trees(1, 3, tr.PLUS)]
    assert only == [L(1)]
    # rank <= 3, no normal-form nodes: leaf plus one interaction tree per
    # valid sign arrangement of three children
    got = list(tr.enumerate_trees(3, 3, tr.PLUS, allow_N=False))
    assert len(got) == 5
    arrangements = {t[2] for t in got if t[0] == "I"}
    hand = {
        (L(1), L(1), L(1)),
        (L(1), L(1), L(-1)),
        (L(1), L(-1), L(-1)),
        (L(-1), L(-1), L(-1)),
    }
    assert arrangements == hand


def test_enumeration_is_validated_and_duplicate_free():
    seen = set()
    for t in tr.enumerate_trees(5, 3, tr.PLUS):
        assert tr.validate(t)
        s = tr.serialize(t)
        assert s not in seen
        seen.add(s)
        assert tr.deserialize(s) == t


def test_sign_ordering_enforced():
    bad = I3(1, [L(-1), L(1), L(1)])
    assert not tr.validate(bad)
    bad_n = N(1, [L(1), I3(1, [L(1), L(1), L(-1)])])
    assert not tr.validate(bad_n)  # normal-form children must be leaves


def test_admissibility_cases():
    t3 = I3(1, [L(1), L(1), L(-1)])
    assert not tr.is_admissible(tr.PairedTree(t3, frozenset({frozenset((0, 2))})))
    assert not tr.is_admissible(tr.PairedTree(t3, frozenset({frozenset((1, 2))})))
    assert tr.is_admissible(tr.PairedTree(t3, frozenset()))
    assert tr.is_admissible(tr.PairedTree(L(1), frozenset()))
    # a normal-form node never triggers the rule
    n3 = N(1, [L(1), L(1), L(-1)])
    assert tr.is_admissible(tr.PairedTree(n3, frozenset({frozenset((0, 2))})))


def test_couple_enumeration_counts():
    ones = list(tr.enumerate_couples(1))
    assert len(ones) == 1
    assert ones[0].canonical() == tr.TRIVIAL_COUPLE.canonical()

    # matching oracle: rank 3 vs 3 single-interaction-node couples with the
    # plus tree pattern (+,+,-) cross paired in all sign-respecting ways
    tp = I3(1, [L(1), L(1), L(-1)])
    tm = tr.flip(tp)
    signs = tr.leaf_signs(tp) + tr.leaf_signs(tm)
    matchings = list(tr.enumerate_perfect_matchings(signs))
    plus = [i for i, s in enumerate(signs) if s == 1]
    brute = 0
    for perm in itertools.permutations([i for i, s in enumerate(signs) if s == -1]):
        brute += 1
    assert len(matchings) == brute == 6

    cross_only = [
        m
        for m in matchings
        if all(min(p) < 3 <= max(p) for p in m)
    ]
    # hand count: two + leaves of T+ pair into two - leaves of T-, the -
    # leaf of T+ pairs the single + leaf of T-
    assert len(cross_only) == 2


def test_couples_swap_conjugation_closure():
    cans = {c.canonical() for c in tr.enumerate_couples(2)}
    assert len(cans) > 0
    for c in tr.enumerate_couples(2):
        assert c.swap_conjugate().canonical() in cans


def test_decoration_free_variables_and_window():
    # trivial couple: one free variable over the window
    decos = list(tr.decorations(tr.TRIVIAL_COUPLE, None, 3))
    assert len(decos) == 7
    # single interaction node, root pinned: two free leaves, third forced
    t3 = I3(1, [L(1), L(1), L(-1)])
    pt = tr.PairedTree(t3, frozenset())
    got = {tuple(d[("+", (i,))] for i in range(3)) for d in tr.decorations(pt, 2, 2)}
    brute = set()
    for k1 in range(-2, 3):
        for k2 in range(-2, 3):
            k3 = k1 + k2 - 2
            if abs(k3) <= 2:
                brute.add((k1, k2, k3))
    assert got == brute


def test_decoration_momentum_constraint_holds():
    tree = I3(1, [L(1), N(1, [L(1), L(-1)]), L(-1)])
    pt = tr.PairedTree(tree, frozenset({frozenset((1, 2))}))
    for d in itertools.islice(tr.decorations(pt, 1, 2), 200):
        # parent value equals signed sum of children at every branching node
        assert d[("+", ())] == d[("+", (0,))] + d[("+", (1,))] - d[("+", (2,))]
        assert d[("+", (1,))] == d[("+", (1, 0))] - d[("+", (1, 1))]
        assert d[("+", (1, 0))] == d[("+", (1, 1))]  # paired leaves share k


def test_wick_small_cases(rng):
    x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    E = {(0, 1): 0.7}

    def pe(i, j):
        return E.get((min(i, j), max(i, j)), 0.0)

    assert tr.wick([1], [x[0]], pe) == x[0]
    got = tr.wick([1, -1], [x[0], x[1]], pe)
    assert abs(got - (x[0] * x[1] - 0.7)) <= 1e-15


def test_wick_four_factor_expansion(rng):
    # symbolic expansion of the recursion: coefficient +1 on the double
    # contraction terms, -1 on singles
    vals = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    signs = [1, 1, -1, -1]
    Em = rng.uniform(0.2, 1.0, (4, 4))

    def pe(i, j):
        return Em[min(i, j), max(i, j)] if signs[i] == -signs[j] else 0.0

    got = tr.wick(signs, list(vals), pe)
    X, Y, Z, W = vals
    want = (
        X * Y * Z * W
        - pe(0, 2) * Y * W
        - pe(0, 3) * Y * Z
        - pe(1, 3) * X * Z
        - pe(1, 2) * X * W
        + pe(0, 2) * pe(1, 3)
        + pe(0, 3) * pe(1, 2)
    )
    assert abs(got - want) <= 1e-12


def test_wick_mc_zero_mean(rng):
    # MC oracle: the renormalized product of Gaussians has zero expectation
    S = 2 * 10 ** 5
    g = {k: (rng.standard_normal(S) + 1j * rng.standard_normal(S)) / np.sqrt(2) for k in (3, 5)}

    def draw_g(k):
        return g[k]

    for signs, ks in [([1, -1], [3, 3]), ([1, 1, -1], [3, 5, 5]), ([1, 1, -1, -1], [3, 5, 3, 5])]:
        vals = tr.wick_gaussian(signs, ks, draw_g)
        m = abs(np.mean(vals))
        se = np.std(vals) / np.sqrt(S)
        assert m <= 4 * se, (signs, ks, m, se)
