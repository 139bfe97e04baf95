"""Command line entry point (``gsav`` / ``python -m gsav``)."""

from __future__ import annotations

import argparse
import copy
import sys

from . import config as cf
from .diagnostics import audit_monotone, fit_log_decay, needs_history
from .errors import GSAVError
from .harness import compare_g_variants, measure_convergence, run

PRESETS = {
    "bcp": {
        "model": {"key": "bcp"},
        "scheme": {"kind": "mc-cn", "g": "sqrt:10"},
        "grid": {"n": 32},
        "initial": {"kind": "bcp"},
        "time": {"dt": 5e-5, "T": 4.0},
        "output": {"dir": "bcp", "snapshot_every": 10000, "diag_every": 100},
    },
    "mbe": {
        "model": {"key": "mbe", "eps": 0.03},
        "scheme": {"kind": "second-bdf2", "g": "tanh:1e4"},
        "initial": {"kind": "mbe"},
        "time": {"dt": 1e-2, "T": 100.0},
        "output": {"dir": "mbe", "snapshot_every": 1000},
    },
}


def _load(args, preset=None):
    overrides = cf.parse_overrides(args.set)
    if preset is None:
        return cf.load(args.config, overrides)
    raw = cf.merge(copy.deepcopy(PRESETS[preset]), cf.load_raw(args.config))
    return cf.RunConfig(raw).with_overrides(overrides)


def _report_run(cfg, result):
    series = result.modified_energy
    if needs_history(cfg.kind):
        series = series[1:]
    bad = audit_monotone(series, 1e-9) if len(series) >= 2 else []
    print(f"{cfg.kind.label}: {result.state.step} steps to t={result.state.t:.6g}; output in {result.out_dir}")
    print(f"modified-energy audit: {'pass' if not bad else f'violations at {bad[:10]}'}")
    return 0 if not bad else 3


def cmd_run(args, preset=None):
    cfg = _load(args, preset)
    result = run(cfg)
    status = _report_run(cfg, result)
    if preset == "mbe" and result.state.t >= 10:
        t = [r.t for r in result.records]
        a, b = fit_log_decay(t, result.original_energy, (1.0, min(100.0, result.state.t)))
        print(f"log fit E ~ {a:.2f} log t + {b:.2f}")
    if preset == "bcp":
        m0, m1 = result.records[0].mass, result.records[-1].mass
        print("mass drift: " + ", ".join(f"{abs(b - a):.2e}" for a, b in zip(m0, m1)))
    return status


def cmd_converge(args):
    cfg = _load(args)
    rows = measure_convergence(cfg, args.dts, args.reference)
    print(f"{'dt':>12} {'Linf error':>12} {'order':>7} {'max|xi-1|':>10}")
    for r in rows:
        order = f"{r.order:7.3f}" if r.order is not None else " " * 7
        print(f"{r.dt:12.4e} {r.error:12.4e} {order} {r.xi_max_dev:10.2e}")
    return 0


def cmd_compare(args):
    cfg = _load(args)
    rep = compare_g_variants(cfg, args.g)
    for (a, b), d in rep.pairwise_l2.items():
        print(f"{a:>12} vs {b:<12} relative L2 = {d:.3e}")
    print(f"original-energy relative spread = {rep.energy_spread:.3e}")
    for s, ok in rep.monotone.items():
        print(f"{s:>12}: modified energy {'monotone' if ok else 'NOT monotone'}")
    return 0 if all(rep.monotone.values()) else 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gsav", description="G-SAV gradient-flow simulations")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="TOML run configuration")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a dotted config key")

    common(sub.add_parser("run", help="run one simulation"))
    sp = sub.add_parser("converge", help="convergence table over a dt ladder")
    common(sp)
    sp.add_argument("--dts", type=float, nargs="+", required=True)
    sp.add_argument("--reference", choices=("exact", "fine"), default="exact")
    sp = sub.add_parser("compare-g", help="compare runs across G transforms")
    common(sp)
    sp.add_argument("--g", nargs="+", required=True, metavar="SPEC")
    common(sub.add_parser("bcp", help="block-copolymer run with the standard parameters"))
    common(sub.add_parser("mbe", help="MBE coarsening run with log-decay fit"))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command in PRESETS:
            return cmd_run(args, preset=args.command)
        if args.command == "converge":
            return cmd_converge(args)
        return cmd_compare(args)
    except GSAVError as exc:
        print(f"gsav: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
