"""Command line: ``sps2cs validate | run | sweep``.

Exit codes: 0 success, 1 configuration error, 2 validation failure,
3 simulation failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .config import TIERS, ConfigError, apply_overrides, load_preset, preset_hash, resolve_preset
from .device import DeviceError, check_matching, derive, quality_factors, validate_dispersive
from .dynamics import FrameError, IntegrationError, MemoryBudgetError, SupportError, TrajectoryConfig
from .hilbert import HilbertError
from .protocol import PlanError, plan, run_ideal, run_numeric, run_reverse, steps_to_csv, steps_to_text

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_SIM = 0, 1, 2, 3
DEFAULT_PRESET = "paper_sec4"
log = logging.getLogger("sps2cs")


def _mhz(x: float) -> str:
    return f"{x / (2 * math.pi) / 1e6:.6g} MHz"


def _ghz(x: float) -> str:
    return f"{x / (2 * math.pi) / 1e9:.6g} GHz"


def _us(t: float) -> str:
    return f"{t * 1e6:.6g} us"


def _load(args):
    name = args.preset_pos or args.preset or DEFAULT_PRESET
    path = resolve_preset(name)
    p = load_preset(path)
    if args.set:
        p = apply_overrides(p, args.set)
    return p, path


def cmd_validate(args) -> int:
    p, path = _load(args)
    d = derive(p)
    print(f"preset {path} (sha256 {preset_hash(path)[:12]})")
    print(f"n = {p.n}")
    for c, w in p.omega_c.items():
        print(f"omega_{c} = {_ghz(w)}")
    for c, lam in {**d.lambda_, **d.lambda_p}.items():
        print(f"lambda_{c} = {_mhz(lam)}")
    print(f"omega_tilde = {_mhz(d.omega_tilde)}")
    print(f"Omega_p required (m={p.m}) = {_mhz(d.Omega_p_required)}  (set: {_mhz(p.Omega_p)})")
    print(f"t_op = {_us(d.t_op)}")
    for c, q in quality_factors(p).items():
        print(f"Q_{c} = {q:.3g}")
    rep = validate_dispersive(p)
    for m in rep.margins:
        print(f"margin {m.name} = {m.value:.3g} {'ok' if m.ok else 'FLAGGED'}")
    status = EXIT_OK
    match = check_matching(p)
    print(f"lambda matching: {'ok' if match.ok else 'FAILED'}")
    if not match.ok:
        status = EXIT_VALIDATION
    try:
        pl = plan(p)
        print(f"plan total time = {_us(pl.total_time)}; 2 omega_tilde t / 2pi = {pl.drive_turns:.6f}")
    except PlanError as exc:
        print(f"plan: {exc}")
        status = EXIT_VALIDATION
    if args.strict and not rep.passed:
        status = EXIT_VALIDATION
    return status


def cmd_run(args) -> int:
    p, path = _load(args)
    tier = TIERS[args.tier]
    p = p.__class__(**{**p.__dict__, "alpha": tier.alpha})
    space = tier.space()
    if args.mode == "ideal":
        out = run_ideal(p, space)
    elif args.mode == "reverse":
        out = run_reverse(p, space, run_ideal(p, space)[-1].state)
    else:
        traj = TrajectoryConfig(n_trajectories=args.trajectories or tier.n_trajectories or 200, seed=args.seed)
        out = run_numeric(p, space, lossless=args.mode == "lossless", traj=traj,
                          drive_model=args.drive_model, dressing=args.dressing)
    print(steps_to_text(out), end="")
    print(f"final fidelity = {out[-1].fidelity:.6f}")
    if args.out:
        od = Path(args.out)
        od.mkdir(parents=True, exist_ok=True)
        steps_to_csv(out, od / "steps.csv")
        manifest = {"version": __version__, "preset": str(path), "preset_sha256": preset_hash(path),
                    "tier": tier.name, "mode": args.mode, "seed": args.seed, "overrides": args.set or []}
        (od / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _floats(items) -> list[float]:
    vals = []
    for it in items or []:
        for tok in str(it).replace(",", " ").split():
            vals.append(float(tok))
    return vals


def cmd_sweep(args) -> int:
    from .experiments import G2_VALUES_MHZ, KAPPA_INV_VALUES_US, SweepSpec, run_sweep

    _load(args)  # surface configuration errors before any work
    name = args.preset_pos or args.preset or DEFAULT_PRESET
    if args.axis == "g2":
        path, values, unit = "g.c2_mhz", _floats(args.values) or list(G2_VALUES_MHZ), "MHz"
    else:
        path, values, unit = "kappa_inv.all_us", _floats(args.values) or list(KAPPA_INV_VALUES_US), "us"
    Ts = _floats(args.T) or [15.0]
    for T in Ts:
        out = None
        if args.out:
            out = str(Path(args.out) / f"{args.axis}_T{T:g}us") if len(Ts) > 1 else args.out
        spec = SweepSpec(path, tuple(values), name, out=out, tier=args.tier, seed=args.seed,
                         overrides=(*(args.set or []), f"T_us={T!r}"), drive_model=args.drive_model,
                         n_trajectories=args.trajectories, timing=args.timing)
        res = run_sweep(spec)
        print(f"# axis={args.axis} T={T:g} us tier={args.tier}")
        print(res.to_csv(), end="")
        if res.failed:
            print(f"failed points: {', '.join(res.failed)}", file=sys.stderr)
            if len(res.failed) == len(res.rows):
                return EXIT_SIM
        if args.axis == "g2":
            x, F, interior = res.peak()
            print(f"peak g2 = {x:.4g} {unit}, F = {F:.5f}, interior = {interior}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sps2cs", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", help="preset file or shipped preset name")
    common.add_argument("--tier", choices=sorted(TIERS), default="A")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a preset entry")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", parents=[common], help="parse a preset and report derived quantities")
    v.add_argument("preset_pos", nargs="?", metavar="PRESET")
    v.add_argument("--strict", action="store_true", help="treat flagged dispersive margins as failures")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", parents=[common], help="run the transfer protocol")
    r.add_argument("preset_pos", nargs="?", metavar="PRESET")
    r.add_argument("--mode", choices=["ideal", "lossless", "lossy", "reverse"], default="ideal")
    r.add_argument("--drive-model", choices=["full", "ideal", "effective"], default="full")
    r.add_argument("--dressing", choices=["adiabatic", "sudden"], default="adiabatic")
    r.add_argument("--trajectories", type=int)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="sweep g2 or the cavity lifetime")
    s.add_argument("preset_pos", nargs="?", metavar="PRESET")
    s.add_argument("--axis", choices=["g2", "kappa"], required=True)
    s.add_argument("--values", nargs="+", help="g2/2pi in MHz or 1/kappa in us")
    s.add_argument("--T", nargs="+", help="qutrit T in us (one sweep per value)")
    s.add_argument("--drive-model", choices=["full", "ideal", "effective"], default="full")
    s.add_argument("--trajectories", type=int)
    s.add_argument("--timing", action="store_true", help="record wall-clock time in the CSV")
    s.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, DeviceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PlanError as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IntegrationError, FrameError, MemoryBudgetError, SupportError, HilbertError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
