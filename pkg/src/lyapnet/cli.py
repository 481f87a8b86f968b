"""Command-line interface.

Exit codes: 0 success, 1 usage/config/IO error, 2 training did not
converge, 3 verification found violations.
"""
import argparse
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from . import network
from ._accel import BACKEND
from .errors import LyapnetError, ShapeMismatch
from .loss import batch_loss
from .network import param_count
from .trainer import sample_dataset, train
from .verifier import check_decrease, export_slice, integrate, verify_samples

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_VIOLATIONS = 3


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _write_text(path, text):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


def _dump(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _load_checkpoint(path, vf):
    net = network.load(path)
    if net.shape.n != vf.n:
        raise ShapeMismatch(f"checkpoint has n={net.shape.n} but system {vf.name!r} has n={vf.n}")
    return net


def _apply_overrides(cfg, args):
    if getattr(args, "seed_override", None) is not None:
        cfg["train"]["seed"] = args.seed_override
    if getattr(args, "max_epochs", None) is not None:
        cfg["train"]["max_epochs"] = args.max_epochs
    return cfg


def cmd_train(args):
    cfg = _apply_overrides(cfgmod.load_config(args.config), args)
    if args.checkpoint:
        cfg["outputs"]["checkpoint"] = args.checkpoint
    if args.report:
        cfg["outputs"]["report"] = args.report
    vf = cfgmod.build_system(cfg)
    shape = cfgmod.build_shape(cfg, vf.n)
    spec = cfgmod.build_loss(cfg)
    tcfg = cfgmod.build_train(cfg)
    _log(f"training {vf.name}: n={vf.n}, {param_count(shape)} parameters, loss={spec.kind}, backend={BACKEND}")

    def progress(epoch, err1, err_inf):
        _log(f"epoch {epoch:3d}  err1={err1:.6e}  err_inf={err_inf:.6e}")

    net, report = train(tcfg, shape, vf, spec, progress=progress)
    ckpt_path = cfg["outputs"]["checkpoint"]
    network.save(net, ckpt_path)
    report.checkpoint = ckpt_path
    doc = {"config": cfg, **report.to_dict(), "timing": {"wall_time_seconds": report.wall_time}}
    _write_text(cfg["outputs"]["report"], _dump(doc))
    status = "converged" if report.converged else "not converged"
    _log(f"{status} after {report.epochs_run} epochs in {report.wall_time:.1f}s; checkpoint {ckpt_path}")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_verify(args):
    cfg = _apply_overrides(cfgmod.load_config(args.config), args)
    vf = cfgmod.build_system(cfg)
    net = _load_checkpoint(args.checkpoint, vf)
    spec = cfgmod.build_loss(cfg)
    if args.samples < 1:
        raise ValueError("--samples must be >= 1")
    # stream [seed, 3] is disjoint from the training streams [seed, 1] / [seed, 2]
    seed = np.random.SeedSequence([cfg["train"]["seed"], 3])
    X = sample_dataset(vf.n, args.samples, seed)
    slack = args.slack if args.slack is not None else cfg["train"]["tol"] ** 0.5
    rep = verify_samples(net, vf, spec, X, args.r0, slack)
    _log(
        f"{rep.points_checked} points: {rep.bound_violations} bound violations "
        f"(worst margin {rep.worst_bound_margin:.3e}), {rep.residual_violations} residual violations "
        f"outside r0={rep.exclusion_radius} (worst {rep.worst_residual:.3e}), slack {rep.violation_slack:.1e}; "
        f"err1={rep.err1:.3e} err_inf={rep.err_inf:.3e}"
    )
    text = _dump(rep.to_dict())
    if args.report:
        _write_text(args.report, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if rep.ok else EXIT_VIOLATIONS


def _parse_state(text, n):
    try:
        x = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise ValueError(f"cannot parse initial state {text!r}") from None
    if len(x) != n:
        raise ShapeMismatch(f"initial state {text!r} has {len(x)} entries, system has n={n}")
    return x


def cmd_simulate(args):
    cfg = cfgmod.load_config(args.config)
    vf = cfgmod.build_system(cfg)
    net = _load_checkpoint(args.checkpoint, vf)
    if not args.dt > 0:
        raise ValueError(f"--dt must be positive, got {args.dt}")
    if not args.t_end >= args.dt:
        raise ValueError(f"--t-end must be at least --dt, got {args.t_end}")
    x0s = [_parse_state(s, vf.n) for s in args.x0]
    os.makedirs(args.out_dir, exist_ok=True)
    summary = []
    all_ok = True
    for k, x0 in enumerate(x0s):
        entry = {"index": k, "x0": x0}
        try:
            traj = integrate(vf, x0, args.t_end, args.dt, net=net)
        except LyapnetError as exc:
            entry.update(monotone=False, error=str(exc))
            all_ok = False
            _log(f"trajectory {k}: {exc}")
            summary.append(entry)
            continue
        monotone, first = check_decrease(traj, args.slack)
        path = os.path.join(args.out_dir, f"trajectory_{k}.csv")
        _write_text(path, traj.to_csv())
        entry.update(
            monotone=monotone,
            first_violation=first,
            w_start=float(traj.w_values[0]),
            w_end=float(traj.w_values[-1]),
            x_end_norm=float(np.linalg.norm(traj.states[-1])),
            csv=path,
        )
        all_ok &= monotone
        _log(f"trajectory {k}: W {entry['w_start']:.6g} -> {entry['w_end']:.6g}, monotone={monotone}")
        summary.append(entry)
    sys.stdout.write(_dump({"t_end": args.t_end, "dt": args.dt, "slack": args.slack, "trajectories": summary}))
    return EXIT_OK if all_ok else EXIT_VIOLATIONS


def cmd_params(args):
    cfg = cfgmod.load_config(args.config)
    vf = cfgmod.build_system(cfg)
    print(param_count(cfgmod.build_shape(cfg, vf.n)))
    return EXIT_OK


def cmd_slice(args):
    cfg = cfgmod.load_config(args.config)
    vf = cfgmod.build_system(cfg)
    net = _load_checkpoint(args.checkpoint, vf)
    text = export_slice(net, vf, args.axes[0], args.axes[1], args.half_width, args.resolution)
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_evaluate(args):
    """err1 / err_inf of a checkpoint on a fresh sample."""
    cfg = cfgmod.load_config(args.config)
    vf = cfgmod.build_system(cfg)
    net = _load_checkpoint(args.checkpoint, vf)
    X = sample_dataset(vf.n, args.samples, np.random.SeedSequence([cfg["train"]["seed"], 4]))
    err1, err_inf = batch_loss(cfgmod.build_loss(cfg), net, vf, X)
    sys.stdout.write(_dump({"samples": args.samples, "err1": err1, "err_inf": err_inf}))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="lyapnet", description="Train and check neural Lyapunov functions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a network from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", help="override outputs.checkpoint")
    p.add_argument("--report", help="override outputs.report")
    p.add_argument("--seed-override", type=int)
    p.add_argument("--max-epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("verify", help="check bounds and decrease on fresh samples")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--r0", type=float, default=0.05)
    p.add_argument("--slack", type=float, help="violation tolerance; default sqrt(train.tol)")
    p.add_argument("--seed-override", type=int)
    p.add_argument("--report", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="integrate trajectories and check that W decreases")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--x0", action="append", required=True, help="comma-separated initial state; repeatable")
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--slack", type=float, default=1e-9)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("params", help="print the trainable parameter count")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("slice", help="export W and DW.f on a coordinate plane as CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--axes", type=int, nargs=2, required=True, metavar=("I", "J"))
    p.add_argument("--half-width", type=float, default=1.0)
    p.add_argument("--resolution", type=int, default=41)
    p.add_argument("--out")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("evaluate", help="err1/err_inf on a fresh sample")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", type=int, default=100_000)
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LyapnetError, ValueError, OSError) as exc:
        _log(f"error: {exc}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
