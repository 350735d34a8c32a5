"""Command-line front end: ``flowmap generate|train|predict|uq|bound|bench``.

Exit status is 0 on success, 1 for invalid input and 2 for failures while
running. Diagnostics go to stderr; data goes to files (or stdout for
``bound``).

CSV layouts
  dataset   delta, x_in_1..x_in_d, alpha_1..alpha_l, x_out_1..x_out_d
  history   epoch, loss[, val_loss]
  predict   t, x_1..x_d
  uq        t, mean_1..mean_d, var_1..var_d, ref_mean_1..ref_mean_d,
            ref_var_1..ref_var_d, err_mean, err_var
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import re
import sys

import numpy as np

from . import bench as bench_mod
from .bounds import BoundInputs, BoundOverflowError, composition_factor, mean_var_bounds, mismatch_bounds
from .core import BoxDomain, DimensionError, Rng
from .data import DatasetFormatError, GenConfig, NoiseSpec, generate_pairs, read_dataset, write_dataset
from .net import ModelFormatError, NetworkSpec, init_network, load_model, save_model
from .rollout import DeltaSchedule, RolloutError, predict
from .systems import SYSTEMS, get_system
from .train import TrainConfig, TrainingDiverged, train, write_history
from .uq import Density, mc_statistics, model_evaluator, oracle_evaluator, rule_for_box, uq_statistics

log = logging.getLogger("flowmap")

VALIDATION_ERRORS = (ValueError, DimensionError, DatasetFormatError, ModelFormatError,
                     FileNotFoundError, IsADirectoryError, KeyError, BoundOverflowError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in re.split(r"[,\s]+", text.strip()) if tok]


def _vector(values) -> np.ndarray:
    out = []
    for v in values if isinstance(values, (list, tuple)) else [values]:
        out.extend(_floats(v) if isinstance(v, str) else [float(v)])
    return np.array(out)


def _box(text: str) -> BoxDomain:
    """``lo:hi,lo:hi,value`` where a bare value pins that coordinate."""
    lo, hi = [], []
    for part in text.split(","):
        if ":" in part:
            a, b = part.split(":")
            lo.append(float(a))
            hi.append(float(b))
        else:
            lo.append(float(part))
            hi.append(float(part))
    return BoxDomain(lo, hi)


def _net_shape(text: str) -> tuple[int, int]:
    M, n = (int(v) for v in text.split(","))
    return M, n


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; keys are flag names with or without leading dashes."""
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            cfg[key.strip().lstrip("-").replace("-", "_")] = value.strip().strip('"')
    return cfg


def _apply_config(parser: argparse.ArgumentParser, cfg: dict) -> None:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in cfg.items():
        if key not in actions:
            raise UsageError(f"{parser.prog}: unknown config key {key!r}")
        act = actions[key]
        if isinstance(act, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif act.nargs in ("+", "*"):
            conv = act.type or str
            defaults[key] = [conv(tok) for tok in raw.split()]
        else:
            defaults[key] = act.type(raw) if act.type else raw
    parser.set_defaults(**defaults)
    for act in parser._actions:
        if act.dest in defaults:
            act.required = False


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    p = _Parser(prog="flowmap", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="flat key = value file; command-line flags override it")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    g = subs["generate"] = sub.add_parser("generate", help="sample training pairs from a benchmark system")
    g.add_argument("--system", required=True, choices=list(SYSTEMS))
    g.add_argument("--pairs", type=int, required=True)
    g.add_argument("--sigma", type=float, default=0.0, help="additive Gaussian noise std on both states")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--delta-max", type=float, default=0.1)
    g.add_argument("--ix", type=_box, help="state box, e.g. -1:1,-1:1 (use --ix=...)")
    g.add_argument("--ialpha", type=_box, help="parameter box; a bare value pins that parameter")
    g.add_argument("--out", required=True)

    t = subs["train"] = sub.add_parser("train", help="train a residual flow-map network")
    t.add_argument("--data", required=True)
    t.add_argument("--spec", type=_net_shape, default=(3, 40), help="hidden layers and width, e.g. 3,40")
    t.add_argument("--activation", choices=["tanh", "relu"], default="tanh")
    t.add_argument("--output-tanh", action="store_true")
    t.add_argument("--epochs", type=int, default=2000)
    t.add_argument("--batch", type=int, default=30)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--val-fraction", type=float, default=0.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--history", help="write epoch,loss[,val_loss] CSV here")
    t.add_argument("--out", required=True)

    r = subs["predict"] = sub.add_parser("predict", help="roll a trained model forward")
    r.add_argument("--model", required=True)
    r.add_argument("--x0", nargs="+", required=True)
    r.add_argument("--alpha", nargs="+", required=True)
    r.add_argument("--delta", type=float, default=0.1)
    r.add_argument("--steps", type=int, required=True)
    r.add_argument("--out", required=True)

    u = subs["uq"] = sub.add_parser("uq", help="mean and variance over random parameters")
    u.add_argument("--model", required=True)
    u.add_argument("--system", required=True, choices=list(SYSTEMS))
    u.add_argument("--x0", nargs="+", required=True)
    u.add_argument("--ialpha", type=_box, help="parameter box (defaults to the system's)")
    u.add_argument("--rule", default="gl:5", help="gl:N, gl:NxN..., or mc:SAMPLES")
    u.add_argument("--steps", type=int, required=True)
    u.add_argument("--delta", type=float, default=0.1)
    u.add_argument("--seed", type=int, default=0)
    u.add_argument("--out", required=True)

    b = subs["bound"] = sub.add_parser("bound", help="evaluate the composition error bounds")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--L", type=float, required=True)
    b.add_argument("--delta", type=float, default=0.1)
    b.add_argument("--eps", type=float, required=True, help="one-step sup error of the network")
    b.add_argument("--ct", type=float, help="bound on the true solution")
    b.add_argument("--ct-tilde", type=float, help="solution bound over the union of true and estimated ranges")
    b.add_argument("--gamma", type=float, default=0.0)
    b.add_argument("--eta", type=float, default=0.0)

    c = subs["bench"] = sub.add_parser("bench", help="reproduce the four example experiments")
    c.add_argument("--case", type=int, nargs="+", default=[1, 2, 3, 4], choices=[1, 2, 3, 4])
    c.add_argument("--scale", choices=["desk", "paper"], default="desk")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out", default="bench_out")
    c.add_argument("--svg", action="store_true", help="also render line charts")
    return p, subs


def _write_rows(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def cmd_generate(a) -> int:
    sys_def = get_system(a.system)
    cfg = GenConfig(sys_def, a.pairs, a.ix, a.ialpha, BoxDomain([0.0], [a.delta_max]), NoiseSpec(a.sigma), a.seed)
    ds = generate_pairs(cfg)
    write_dataset(ds, a.out)
    log.info("wrote %d pairs to %s", ds.J, a.out)
    return 0


def cmd_train(a) -> int:
    ds = read_dataset(a.data)
    M, n = a.spec
    spec = NetworkSpec(ds.d, ds.l, M, n, a.activation, a.output_tanh)
    net = init_network(spec, Rng(a.seed).substream("init"))
    cfg = TrainConfig(a.epochs, a.batch, a.lr, seed=a.seed, validation_fraction=a.val_fraction,
                      log_every=max(1, a.epochs // 20))
    net, report = train(net, ds, cfg, in_place=True)
    save_model(net, a.out)
    if a.history:
        write_history(report, a.history)
    print(f"final training loss {report.final_loss:.6e} after {a.epochs} epochs ({report.wall_time:.1f}s)", file=sys.stderr)
    return 0


def cmd_predict(a) -> int:
    net = load_model(a.model)
    x0, alpha = _vector(a.x0), _vector(a.alpha)
    if x0.size != net.spec.d:
        raise DimensionError(f"--x0 has {x0.size} components, the model expects d={net.spec.d}")
    if alpha.size != net.spec.l:
        raise DimensionError(f"--alpha has {alpha.size} components, the model expects l={net.spec.l}")
    traj = predict(net, x0, alpha, DeltaSchedule.uniform(a.delta, a.steps))
    _write_rows(a.out, ["t"] + [f"x_{i + 1}" for i in range(traj.d)],
                (np.concatenate([[t], s]) for t, s in zip(traj.times, traj.states)))
    return 0


def _parse_rule(text: str, box: BoxDomain):
    kind, _, arg = text.partition(":")
    if kind == "gl":
        counts = [int(v) for v in arg.split("x")]
        free = int(np.sum(~box.degenerate))
        if len(counts) == 1:
            counts = counts * max(free, 1)
        if len(counts) != free:
            raise ValueError(f"rule {text!r} gives {len(counts)} point counts for {free} random parameters")
        it = iter(counts)
        per_dim = [1 if pinned else next(it) for pinned in box.degenerate]
        return "gl", rule_for_box(box, per_dim)
    if kind == "mc":
        return "mc", int(arg)
    raise ValueError(f"unknown rule {text!r}; use gl:N, gl:NxN or mc:SAMPLES")


def cmd_uq(a) -> int:
    net = load_model(a.model)
    sys_def = get_system(a.system)
    if (sys_def.d, sys_def.l) != (net.spec.d, net.spec.l):
        raise DimensionError(f"dimension mismatch: model has d={net.spec.d}, l={net.spec.l}; system {sys_def.id} has d={sys_def.d}, l={sys_def.l}")
    x0 = _vector(a.x0)
    if x0.size != sys_def.d:
        raise DimensionError(f"--x0 has {x0.size} components, expected d={sys_def.d}")
    box = a.ialpha or sys_def.default_Ialpha
    if box.dim != sys_def.l:
        raise DimensionError(f"--ialpha has {box.dim} coordinates, expected l={sys_def.l}")
    sched = DeltaSchedule.uniform(a.delta, a.steps)
    kind, rule = _parse_rule(a.rule, box)
    model_eval = model_evaluator(net, x0, sched)
    ref_eval = oracle_evaluator(sys_def, x0, sched.times)
    if kind == "gl":
        stats = uq_statistics(model_eval, rule, batched=True)
        ref = uq_statistics(ref_eval, rule, batched=True)
    else:
        stats = mc_statistics(model_eval, Density(box), rule, Rng(a.seed).substream("mc"), batched=True)
        ref = mc_statistics(ref_eval, Density(box), rule, Rng(a.seed).substream("mc"), batched=True)
    d = sys_def.d
    err_mean = np.max(np.abs(stats.mean - ref.mean), axis=1)
    err_var = np.max(np.abs(stats.var - ref.var), axis=1)
    header = (["t"] + [f"mean_{i + 1}" for i in range(d)] + [f"var_{i + 1}" for i in range(d)]
              + [f"ref_mean_{i + 1}" for i in range(d)] + [f"ref_var_{i + 1}" for i in range(d)]
              + ["err_mean", "err_var"])
    rows = (np.concatenate([[t], stats.mean[k], stats.var[k], ref.mean[k], ref.var[k], [err_mean[k], err_var[k]]])
            for k, t in enumerate(stats.times))
    _write_rows(a.out, header, rows)
    return 0


def cmd_bound(a) -> int:
    inp = BoundInputs(a.n, a.L, a.delta, a.eps, a.ct or 0.0, a.ct_tilde or 0.0, a.gamma, a.eta)
    C = composition_factor(a.n, a.L, a.delta)
    lines = [("n", f"{a.n}"), ("L", f"{a.L:g}"), ("Delta", f"{a.delta:g}"), ("E", f"{a.eps:g}"),
             ("C", f"{C:.10g}"), ("trajectory bound", f"{C * a.eps:.10g}")]
    if a.ct is not None:
        mb, vb = mean_var_bounds(inp)
        lines += [("mean bound", f"{mb:.10g}"), ("variance bound", f"{vb:.10g}")]
    elif a.ct_tilde is None:
        lines += [("mean bound", f"{C * a.eps:.10g}")]
    if a.ct_tilde is not None:
        mb, vb = mismatch_bounds(inp)
        lines += [("mismatch mean bound", f"{mb:.10g}"), ("mismatch variance bound", f"{vb:.10g}")]
    width = max(len(k) for k, _ in lines)
    for k, v in lines:
        print(f"{k:<{width}}  {v}")
    return 0


def cmd_bench(a) -> int:
    os.makedirs(a.out, exist_ok=True)
    results = []
    for ex in a.case:
        case = bench_mod.make_case(ex, a.scale, a.seed)
        log.info("example %d: J=%d, epochs=%d, net=(%d,%d)", ex, case.J, case.epochs,
                 case.spec.hidden_layers, case.spec.width)
        res = bench_mod.run_case(case, a.out, a.svg)
        results.append(res)
        for c in res.checks:
            status = "PASS" if c.passed else "FAIL"
            op = "<=" if c.kind == "max" else ">="
            print(f"example{ex} {c.metric} = {c.value:.4g} ({op} {c.threshold:g}) {status}", file=sys.stderr)
        for note in case.notes:
            print(f"example{ex} note: {note}", file=sys.stderr)
    bench_mod.write_summary(results, os.path.join(a.out, "summary.csv"))
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "generate": cmd_generate, "train": cmd_train, "predict": cmd_predict,
    "uq": cmd_uq, "bound": cmd_bound, "bench": cmd_bench,
}


def _thread_limit():
    threads = os.environ.get("FLOWMAP_THREADS")
    if not threads:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(threads))


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser, subs = build_parser()
        cfg_path = _config_path(argv)
        if cfg_path:
            command = _command_name(argv)
            if command in subs:
                _apply_config(subs[command], read_config(cfg_path))
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"flowmap: {exc}", file=sys.stderr)
        return 1
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return COMMANDS[args.command](args)
    except VALIDATION_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"flowmap {args.command}: {msg}", file=sys.stderr)
        return 1
    except (TrainingDiverged, RolloutError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"flowmap {args.command}: {exc}", file=sys.stderr)
        return 2


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _command_name(argv):
    skip = False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--config":
            skip = True
            continue
        if not tok.startswith("-"):
            return tok
    return None


if __name__ == "__main__":
    sys.exit(main())
