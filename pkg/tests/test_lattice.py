import numpy as np
import pytest

from wcl import lattice as lt


def test_build_lattice_small():
    lat = lt.build_lattice(1, 1)
    assert list(lat.n_values) == list(range(-4, 5))
    lat = lt.build_lattice(4, 2)
    assert lat.spacing == 0.25
    assert lat.nmax == 32  # |n/4| <= 8


def test_mode_count_R10():
    # direct enumeration oracle: all n with |n| <= floor(16 * 10)
    oracle = sum(1 for n in range(-200, 201) if abs(n) <= 160)
    lat = lt.build_lattice(10, 3)
    assert lat.size == oracle == 321


def test_lattice_rejects_bad_input():
    with pytest.raises(lt.LatticeError):
        lt.build_lattice(0, 2)
    with pytest.raises(lt.LatticeError):
        lt.build_lattice(2.5, 2)
    with pytest.raises(lt.LatticeError):
        lt.build_lattice(10 ** 5, 6)  # window overflow


def test_bump_plateau_and_support():
    xs = np.linspace(-3, 3, 1001)
    vals = lt.bump(xs)
    assert np.all((0 <= vals) & (vals <= 1))
    assert np.all(vals[np.abs(xs) <= 1.25] == 1.0)
    assert np.all(vals[np.abs(xs) >= 1.6] == 0.0)
    K = 3
    assert lt.phi_le(K, 1.25 * 2 ** K) == 1.0
    assert lt.phi_le(K, 1.6 * 2 ** K) == 0.0


def test_sampling_determinism_and_law(rng):
    lat = lt.build_lattice(400, 2)
    d1 = lt.sample_gaussians(lat, 123)
    d2 = lt.sample_gaussians(lat, 123)
    assert np.array_equal(d1.g, d2.g)
    assert d1.g_of_n(0) == 0.0
    g = d1.g[d1.g != 0.0]
    assert g.size >= 10 ** 5 * 0.03  # batch big enough to be meaningful
    m = np.mean(np.abs(g) ** 2)
    assert 0.99 <= m <= 1.01 or abs(m - 1) <= 5 / np.sqrt(g.size)
    # independent real/imag parts, each variance 1/2
    assert abs(np.var(g.real) - 0.5) <= 0.02
    assert abs(np.var(g.imag) - 0.5) <= 0.02


def test_different_labels_give_independent_streams():
    lat = lt.build_lattice(16, 2)
    a = lt.sample_gaussians(lat, 5, "data")
    b = lt.sample_gaussians(lat, 5, "mc")
    assert not np.array_equal(a.g, b.g)


def test_initial_data_scaling_and_support(desk_cfg):
    lat = desk_cfg.lattice()
    draw = lt.sample_gaussians(lat, 9)
    u = lt.initial_data_u(draw, desk_cfg)
    assert u.coeffs[lat.index(0)] == 0.0
    k = lat.k_values
    want = desk_cfg.epsilon * np.sqrt(lat.R) * np.sqrt(desk_cfg.psi(k)) * draw.g
    want[lat.index(0)] = 0.0
    assert np.allclose(u.coeffs, want, atol=0)

    cfg0 = lt.SimConfig(epsilon=1e-300, R=4, K_tr=1, T1=1.0)
    u0 = lt.initial_data_u(draw, cfg0)
    assert np.max(np.abs(u0.coeffs)) <= 1e-290


def test_initial_data_single_mode():
    cfg = lt.SimConfig(epsilon=0.2, R=2, K_tr=1, psi=lambda x: (np.asarray(x) == 1.0) * 1.0, psi_name="delta")
    lat = cfg.lattice()
    draw = lt.sample_gaussians(lat, 3)
    u = lt.initial_data_u(draw, cfg)
    nz = np.nonzero(u.coeffs)[0]
    assert list(lat.n_values[nz]) == [2]  # k = 1 is numerator 2 at R = 2


def test_initial_data_l2_moment_mc():
    # MC oracle: E ||u||_L2^2 = (2 pi R)^-1 sum eps^2 R psi(k)
    cfg = lt.SimConfig(epsilon=0.3, R=4, K_tr=1, seed=0)
    lat = cfg.lattice()
    want = cfg.epsilon ** 2 * lat.R * np.sum(cfg.psi(lat.k_values[lat.n_values != 0])) / (2 * np.pi * lat.R)
    S = 10 ** 4
    vals = np.empty(S)
    for s in range(S):
        u = lt.initial_data_u(lt.sample_gaussians(lat, s), cfg)
        vals[s] = u.l2_spectral() ** 2
    se = vals.std() / np.sqrt(S)
    assert abs(vals.mean() - want) <= 3 * se


def test_parseval(desk_cfg):
    lat = desk_cfg.lattice()
    draw = lt.sample_gaussians(lat, 4)
    u = lt.initial_data_u(draw, desk_cfg)
    assert lt.parseval_defect(u) <= 1e-10


def test_norms_zero_and_single_mode():
    lat = lt.build_lattice(4, 3)
    z = lt.zero_field(lat)
    assert lt.norm_H(z, 2, 0.5) == 0.0
    f = lt.zero_field(lat)
    n = 16  # k = 4 = 2^2, inside a single dyadic block
    f.coeffs[lat.index(n)] = 2.0
    got = lt.norm_H(f, 1.5, 0.5)
    blk = 4.0 / (2 * np.pi * lat.R)  # |coef|^2 / (2 pi R)
    want = np.sqrt(blk * (2.0 ** (2 * 1.5 * 2) + 2.0 ** (2 * 0.5 * 2)))
    assert abs(got - want) <= 1e-12 * want


def test_norm_monotone_in_N(rng):
    lat = lt.build_lattice(4, 3)
    f = lt.zero_field(lat)
    sel = np.abs(lat.k_values) >= 2
    f.coeffs[sel] = rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum())
    last = 0.0
    for N in (0.5, 1.0, 2.0, 3.0):
        cur = lt.norm_H(f, N, 0.0)
        assert cur >= last - 1e-12
        last = cur


def test_field_csv_roundtrip(tmp_path, desk_cfg):
    lat = desk_cfg.lattice()
    u = lt.initial_data_u(lt.sample_gaussians(lat, 2), desk_cfg)
    p = tmp_path / "f.csv"
    lt.dump_field_csv(u, str(p))
    back = lt.load_field_csv(lat, str(p))
    assert np.allclose(back.coeffs, u.coeffs, rtol=0, atol=1e-16)
