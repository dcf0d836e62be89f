"""Command line entry point.

Subcommands mirror the library modules: symbols, diagrams, amplitudes,
molecules, counting, simulate, verify.  Every run writes its outputs as
CSV (floats at 17 significant digits, so reruns are byte identical) plus a
JSON manifest with content hashes.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import sys
import time

import numpy as np

from . import amplitudes as amp
from . import counting as cnt
from . import lattice as lt
from . import molecules as mol
from . import simulate as sim
from . import symbols as sym
from . import trees as tr
from .config import load_config, parse_config_text
from .lattice import ConfigError
from .verify import run_suite

FMT = "%.17g"


def _fmt(x) -> str:
    return FMT % float(x)


class Runner:
    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.outputs = []
        self.t0 = time.time()
        self.counters = {}

    def path(self, name):
        out_dir = self.args.out_dir or "."
        os.makedirs(out_dir, exist_ok=True)
        return os.path.join(out_dir, name)

    def write_csv(self, path, header, rows):
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            n = 0
            for row in rows:
                fh.write(",".join(str(c) if isinstance(c, (int, str)) else _fmt(c) for c in row))
                fh.write("\n")
                n += 1
        self.outputs.append((path, n))
        return path

    def write_text(self, path, text):
        with open(path, "w") as fh:
            fh.write(text)
        self.outputs.append((path, text.count("\n")))
        return path

    def finish(self, config=None):
        manifest = {
            "command": self.command,
            "argv": sys.argv[1:],
            "seed": getattr(self.args, "seed", None),
            "config": _config_snapshot(config) if config is not None else None,
            "elapsed_s": time.time() - self.t0,
            "counters": self.counters,
            "outputs": [],
        }
        for path, rows in self.outputs:
            with open(path, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            manifest["outputs"].append({"path": path, "rows": rows, "sha256": digest})
        mpath = self.path("manifest-%s.json" % self.command.replace(" ", "-"))
        with open(mpath, "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
        return manifest


def _config_snapshot(cfg):
    return {
        "epsilon": cfg.epsilon,
        "R": cfg.R,
        "T1": cfg.T1,
        "A": cfg.A,
        "N": cfg.N,
        "K_tr": cfg.K_tr,
        "seed": cfg.seed,
        "psi": cfg.psi_name,
    }


def _parse_grid(spec: str):
    if spec.startswith("lin:"):
        _, lo, hi, n = spec.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    if spec.startswith("list:"):
        return np.array([float(x) for x in spec.split(":", 1)[1].split(",")])
    raise ConfigError("grid spec must be lin:LO:HI:N or list:v1,v2,...")


def _couple_by_id(ident: str) -> tr.Couple:
    try:
        rank_each, index = ident.split(":")
        rank_each, index = int(rank_each), int(index)
    except ValueError:
        raise ConfigError("couple id must look like '<rank_each>:<index>'")
    for i, c in enumerate(tr.enumerate_couples(rank_each)):
        if i == index:
            return c
    raise ConfigError("couple index %d out of range" % index)


# ---------------------------------------------------------------------------
# subcommands


def cmd_symbols_dump(args):
    run = Runner(args, "symbols dump")
    grid = _parse_grid(args.grid)
    rows = []
    if args.which == "gamma0":
        cfg = load_config(args.config)
        lat = cfg.lattice()
        vals = sym.gamma0(grid, lat, cfg.psi)
        for x, v in zip(grid, np.atleast_1d(vals)):
            rows.append((x, 0.0, 0.0, v, 0.0))
    else:
        fn = {
            "a31": lambda a, b, c: sym.a31_closed(a, b, c),
            "a32": lambda a, b, c: sym.a32_closed(a, b, c),
            "p": lambda a, b, c: sym.p_cubic(args.pattern, a, b, c),
            "q": lambda a, b, c: sym.q_normal(args.pattern, a, b, c),
            "n3": sym.n3,
        }[args.which]
        for x1, x2, x3 in itertools.product(grid, grid, grid):
            v = complex(np.asarray(fn(x1, x2, x3)).item())
            rows.append((x1, x2, x3, v.real, v.imag))
    run.write_csv(run.path(args.out), ["xi1", "xi2", "xi3", "re", "im"], rows)
    run.finish()
    return 0


def cmd_diagrams_enumerate(args):
    run = Runner(args, "diagrams enumerate")
    lines = []
    for t in tr.enumerate_trees(args.rank, 3, tr.PLUS):
        signs = tr.leaf_signs(t)
        for pairing in tr.enumerate_partial_pairings(signs):
            pt = tr.PairedTree(t, pairing)
            if args.admissible and not tr.is_admissible(pt):
                continue
            lines.append(json.dumps({"tree": tr.serialize(t),
                                     "pairs": sorted(sorted(p) for p in pairing)}))
    run.write_text(run.path(args.out), "\n".join(lines) + "\n")
    run.counters["count"] = len(lines)
    run.finish()
    return 0


def cmd_amplitudes_kq(args):
    run = Runner(args, "amplitudes kq")
    cfg = load_config(args.config)
    couple = _couple_by_id(args.couple)
    gauges = amp.GaugeRecord.build(cfg)
    kn = int(round(args.k * cfg.R))
    val = amp.eval_KQ(couple, kn, args.t, gauges, cfg)
    run.write_csv(
        run.path(args.out),
        ["k", "t", "re", "im"],
        [(args.k, args.t, val.real, val.imag)],
    )
    run.finish(cfg)
    print("K_Q(%g, %g) = %s" % (args.t, args.k, val))
    return 0


def cmd_amplitudes_gamma1(args):
    run = Runner(args, "amplitudes gamma1")
    cfg = load_config(args.config)
    gauges = amp.gamma1_solve(cfg)
    rows = []
    for i, t in enumerate(gauges.tgrid):
        for j, k in enumerate(gauges.lattice.k_values):
            rows.append((t, k, gauges.gamma1[i, j]))
    run.write_csv(run.path(args.out), ["t", "k", "gamma1"], rows)
    run.counters.update(
        {k: v for k, v in gauges.diagnostics.items() if not isinstance(v, list)}
    )
    run.finish(cfg)
    print("converged in %d iterations" % gauges.diagnostics["iterations"])
    return 0


def cmd_amplitudes_moment(args):
    run = Runner(args, "amplitudes moment")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    gauges = amp.GaugeRecord.build(cfg)
    lat = gauges.lattice
    rng = np.random.default_rng(cfg.seed)
    S = args.samples
    gmat = (rng.standard_normal((S, lat.size)) + 1j * rng.standard_normal((S, lat.size))) / np.sqrt(2)
    gmat[:, lat.index(0)] = 0.0
    couples = amp.moment_couples(args.rank)
    ptrees = [
        pt for pt in amp.admissible_paired_trees(args.rank)
        if tr.rank(pt.tree) == args.rank
    ]
    rows = []
    picks = [(kn, t) for kn in (1, 2) for t in (0.3, 0.7)]
    for kn, t in picks:
        tabs = [amp.DecorationTable(pt, cfg, gauges, roots_n=[kn]) for pt in ptrees]
        J = np.zeros(S, dtype=complex)
        for tab in tabs:
            J += tab.j_samples(gmat, gauges, 0, t)
        m2 = np.abs(J) ** 2
        ksum = sum(amp.eval_KQ(c, kn, t, gauges, cfg) for c in couples)
        rows.append(
            (kn / cfg.R, t, m2.mean(), m2.std() / np.sqrt(S), np.real(ksum))
        )
    run.write_csv(run.path(args.out), ["k", "t", "mc", "mc_se", "couples"], rows)
    run.finish(cfg)
    return 0


def cmd_molecules_build(args):
    run = Runner(args, "molecules build")
    couple = _couple_by_id(args.couple)
    mm = mol.build_molecule(couple)
    run.write_text(run.path(args.dot), mm.molecule.to_dot() + "\n")
    run.finish()
    return 0


def cmd_molecules_count(args):
    run = Runner(args, "molecules count")
    cfg = load_config(args.config)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    idx = 0
    for c in tr.enumerate_couples(3, admissible_only=True):
        mm = mol.build_molecule(c)
        m = mm.molecule
        if m.V == 0 or not m.connected():
            continue
        centers = rng.integers(-cfg.R, cfg.R + 1, m.E)
        # solve momentum at the centers so each window is populated
        res = mol.count_decorations(m, centers, cfg.R, cfg.T1)
        vals0 = centers
        Y = mol.compute_Y(m, vals0, cfg.R, cfg.epsilon, cfg.theta)
        aa = mol.counting_quantity(m, res.count, cfg.R, cfg.epsilon, cfg.T1)
        counts = m.atom_counts()
        rows.append(
            (idx, res.count, aa, m.chi, counts["beta"], 2 * len(Y))
        )
        idx += 1
        if idx >= args.limit:
            break
    run.write_csv(
        run.path(args.out),
        ["molecule_id", "count", "A", "chi", "V_beta", "Y_size"],
        rows,
    )
    run.finish(cfg)
    return 0


def cmd_counting_sigma(args):
    run = Runner(args, "counting sigma")
    with open(args.spec) as fh:
        kv = parse_spec_kv(fh.read())
    spec = cnt.SigmaSpec(
        r=int(kv.get("r", 2)),
        zetas=tuple(1 if ch == "+" else -1 for ch in kv.get("zetas", "+-")),
        k0_n=tuple(int(x) for x in kv.get("k0", "0,0").split(",")),
        kstar_n=int(kv.get("kstar", 0)),
        beta=0.0,
        T1=float(kv.get("T1", 100.0)),
        R=int(kv.get("R", 16)),
        eps=float(kv.get("eps", 0.0)),
    )
    spec.beta = (
        cnt.resonant_beta(spec) if kv.get("beta", "resonant") == "resonant" else float(kv["beta"])
    )
    count = cnt.sigma_count(spec)
    run.write_csv(
        run.path(args.out),
        ["r", "R", "T1", "beta", "count"],
        [(spec.r, spec.R, spec.T1, spec.beta, count)],
    )
    run.finish()
    print("count =", count)
    return 0


def parse_spec_kv(text: str) -> dict:
    out = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, val = (line.split("=", 1) if "=" in line else line.split(None, 1))
        out[key.strip()] = val.strip()
    return out


def cmd_counting_diverge(args):
    run = Runner(args, "counting diverge")
    alphas = [float(x) for x in args.alpha.split(",")]
    eps_list = [float(x) for x in args.eps.split(",")]
    qs = [int(x) for x in args.q.split(",")]
    rows = cnt.divergence_scan(alphas, eps_list, qs)
    run.write_csv(
        run.path(args.out),
        ["alpha", "q", "eps", "R", "T1", "count", "count_over_ref", "normalized"],
        [
            (r["alpha"], r["q"], r["eps"], r["R"], r["T1"], r["count"],
             r["count_over_ref"], r["normalized"])
            for r in rows
        ],
    )
    run.finish()
    return 0


def cmd_simulate(args):
    run = Runner(args, "simulate")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    gauges = amp.GaugeRecord.build(cfg)
    draw = lt.sample_gaussians(gauges.lattice, cfg.seed)
    traj = sim.solve_truncated(cfg, draw, gauges, t_end=args.tend)
    rows = []
    stride = max(1, len(traj.ts) // 64)
    for i in range(0, len(traj.ts), stride):
        for j, n in enumerate(gauges.lattice.n_values):
            rows.append((traj.ts[i], int(n), traj.a[i, j].real, traj.a[i, j].imag))
    run.write_csv(run.path(args.out), ["t", "n", "re", "im"], rows)
    run.counters["steps"] = len(traj.ts)
    run.finish(cfg)
    return 0


def cmd_simulate_compare(args):
    run = Runner(args, "simulate compare")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    gauges = amp.GaugeRecord.build(cfg)
    lat = gauges.lattice
    draw = lt.sample_gaussians(lat, cfg.seed)
    data = np.loadtxt(args.traj, delimiter=",", skiprows=1)
    ts = np.unique(data[:, 0])
    rows = []
    for t in ts:
        sel = data[data[:, 0] == t]
        a = np.zeros(lat.size, dtype=complex)
        a[lat.index(sel[:, 1].astype(int))] = sel[:, 2] + 1j * sel[:, 3]
        app = amp.a_app_eval(lat.n_values, [t], draw, gauges, cfg, N=args.N)[:, 0]
        rows.append((t, sim.weighted_discrepancy(lat, a, app)))
    run.write_csv(run.path(args.out), ["t", "discrepancy"], rows)
    run.finish(cfg)
    return 0


def cmd_verify(args):
    run = Runner(args, "verify")
    results, ok = run_suite(quick=args.quick)
    lines = []
    for name, good, detail in results:
        lines.append("%-42s %s  %s" % (name, "PASS" if good else "FAIL", detail))
        print(lines[-1])
    lines.append("properties: %d  failures: %d" % (len(results), sum(not r[1] for r in results)))
    print(lines[-1])
    run.write_text(run.path("verify.txt"), "\n".join(lines) + "\n")
    run.finish()
    if not ok:
        failing = [r[0] for r in results if not r[1]]
        print("failing:", ", ".join(failing))
        return 1
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(
        prog="wcl", description="spectral water-wave couples laboratory"
    )
    ap.add_argument("--config", default=None, help="flat key/value config file")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--threads", type=int, default=int(os.environ.get("WCL_THREADS", "0")))
    ap.add_argument("--out-dir", default=None)
    sub = ap.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("symbols").add_subparsers(dest="sub", required=True)
    d = s.add_parser("dump")
    d.add_argument("--which", required=True, choices=["a31", "a32", "p", "q", "n3", "gamma0"])
    d.add_argument("--grid", required=True)
    d.add_argument("--pattern", default="++-")
    d.add_argument("--out", default="symbols.csv")
    d.set_defaults(fn=cmd_symbols_dump)

    s = sub.add_parser("diagrams").add_subparsers(dest="sub", required=True)
    d = s.add_parser("enumerate")
    d.add_argument("--rank", type=int, required=True)
    d.add_argument("--admissible", action="store_true")
    d.add_argument("--out", default="trees.jsonl")
    d.set_defaults(fn=cmd_diagrams_enumerate)

    s = sub.add_parser("amplitudes").add_subparsers(dest="sub", required=True)
    d = s.add_parser("kq")
    d.add_argument("--couple", required=True)
    d.add_argument("--k", type=float, required=True)
    d.add_argument("--t", type=float, required=True)
    d.add_argument("--out", default="kq.csv")
    d.set_defaults(fn=cmd_amplitudes_kq)
    d = s.add_parser("gamma1")
    d.add_argument("--out", default="gamma1.csv")
    d.set_defaults(fn=cmd_amplitudes_gamma1)
    d = s.add_parser("moment")
    d.add_argument("--rank", type=int, required=True)
    d.add_argument("--samples", type=int, default=20000)
    d.add_argument("--out", default="moment.csv")
    d.set_defaults(fn=cmd_amplitudes_moment)

    s = sub.add_parser("molecules").add_subparsers(dest="sub", required=True)
    d = s.add_parser("build")
    d.add_argument("--couple", required=True)
    d.add_argument("--dot", default="molecule.dot")
    d.set_defaults(fn=cmd_molecules_build)
    d = s.add_parser("count")
    d.add_argument("--out", default="molecule-counts.csv")
    d.add_argument("--limit", type=int, default=20)
    d.set_defaults(fn=cmd_molecules_count)

    s = sub.add_parser("counting").add_subparsers(dest="sub", required=True)
    d = s.add_parser("sigma")
    d.add_argument("--spec", required=True)
    d.add_argument("--out", default="counts.csv")
    d.set_defaults(fn=cmd_counting_sigma)
    d = s.add_parser("diverge")
    d.add_argument("--alpha", default="2.4,2.667,3.0")
    d.add_argument("--eps", default="0.2,0.1,0.05")
    d.add_argument("--q", default="1,2")
    d.add_argument("--out", default="scan.csv")
    d.set_defaults(fn=cmd_counting_diverge)

    d = sub.add_parser("simulate")
    ssub = d.add_subparsers(dest="sub")
    d.add_argument("--tend", type=float, default=0.05)
    d.add_argument("--out", default="traj.csv")
    d.set_defaults(fn=cmd_simulate)
    c = ssub.add_parser("compare")
    c.add_argument("--traj", required=True)
    c.add_argument("--N", type=int, default=3)
    c.add_argument("--out", default="metric.csv")
    c.set_defaults(fn=cmd_simulate_compare)

    d = sub.add_parser("verify")
    d.add_argument("--quick", action="store_true")
    d.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.threads:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        return args.fn(args)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print("missing file: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
