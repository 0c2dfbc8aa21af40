"""Command-line entry point: ``fdivlab <subcommand> ...``.

Exit codes: 0 success, 1 usage or validation error (and failed
verification), 2 mathematically divergent result, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from fdivlab.catalog import BUILTIN_NAMES, CatalogError, builtin
from fdivlab.critics import TabularCritic, critic_from_descriptor
from fdivlab.distributions import (
    DiscreteDistribution,
    DistributionError,
    IntegrationError,
    from_descriptor,
    rng_stream,
    to_descriptor,
)
from fdivlab.estimator import (
    CriticConfig,
    empirical_sampler,
    load_samples,
    train_critic,
)
from fdivlab.exact import bound_value, divergence, optimal_critic
from fdivlab.reporting import dumps, format_float, manifest, write_csv, write_json
from fdivlab.trainer import TrainConfig, adversarial_train
from fdivlab.verify import GROUPS, PERTURBATIONS, run_suite

EXIT_OK, EXIT_USAGE, EXIT_DIVERGENT, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("fdivlab") / "data" / name))


def _load_json_arg(text: str, what: str):
    """A JSON literal, ``@path`` or a path to a JSON file."""
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    elif not text.lstrip().startswith(("{", "[")) and Path(text).is_file():
        text = Path(text).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what}: invalid JSON ({exc})") from None


def _resolve_seed(args, config_seed=None) -> int:
    if args.seed is not None:
        return args.seed
    if config_seed is not None:
        return int(config_seed)
    env = os.environ.get("FDIV_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"FDIV_SEED must be an integer, got {env!r}") from None
    return 0


def _emit(args, report: dict, config, seed: int, trace=None, wall_clock=None) -> None:
    if args.format == "csv" and trace is not None:
        header, rows = trace
        sys.stdout.write(",".join(header) + "\n")
        for row in rows:
            sys.stdout.write(",".join(format_float(v) if isinstance(v, float) else str(v) for v in row) + "\n")
    else:
        sys.stdout.write(dumps(report))
    if args.out:
        out = Path(args.out)
        write_json(out, report)
        stem = out.with_suffix("")
        write_json(stem.with_name(stem.name + ".manifest.json"), manifest(args.command, args.argv, config, seed, wall_clock))
        if trace is not None:
            write_csv(stem.with_suffix(".csv"), *trace)


# -- subcommands --------------------------------------------------------------


def cmd_divergence(args) -> int:
    p = from_descriptor(_load_json_arg(args.p, "--p"))
    q = from_descriptor(_load_json_arg(args.q, "--q"))
    results = []
    for name in args.f:
        value = divergence(builtin(name), p, q)
        results.append({"divergence": name, "value": value, "status": "ok" if np.isfinite(value) else "divergent"})
    report = {"command": "divergence", "p": to_descriptor(p), "q": to_descriptor(q), "results": results}
    config = {"f": args.f, "p": report["p"], "q": report["q"]}
    table = (("divergence", "value", "status"), [(r["divergence"], r["value"], r["status"]) for r in results])
    _emit(args, report, config, 0, trace=table)
    return EXIT_DIVERGENT if any(r["status"] == "divergent" for r in results) else EXIT_OK


def cmd_bound(args) -> int:
    spec = builtin(args.f)
    p = from_descriptor(_load_json_arg(args.p, "--p"))
    q = from_descriptor(_load_json_arg(args.q, "--q"))
    dstar = optimal_critic(p, q)
    if args.critic == "optimal":
        base = dstar
    else:
        base = lambda x: np.zeros(np.shape(x))  # noqa: E731
    shift = args.shift
    critic = (lambda x: np.asarray(base(x)) + shift) if shift else base
    value = bound_value(spec, p, q, critic)
    exact = divergence(spec, p, q)
    report = {
        "command": "bound",
        "divergence": spec.name,
        "critic": args.critic,
        "shift": shift,
        "bound": value,
        "exact": exact,
        "gap": exact - value,
    }
    _emit(args, report, {"f": args.f, "p": to_descriptor(p), "q": to_descriptor(q), "critic": args.critic, "shift": shift}, 0)
    return EXIT_OK if np.isfinite(exact) else EXIT_DIVERGENT


def cmd_estimate(args) -> int:
    spec = builtin(args.f)
    file_config = _load_json_arg(args.config, "--config") if args.config else {}
    if not isinstance(file_config, dict):
        raise UsageError("--config must hold a JSON object")
    critic_desc = file_config.pop("critic", None)
    seed = _resolve_seed(args, file_config.pop("seed", None))
    overrides = {
        "steps": args.steps,
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "optimizer": args.optimizer,
    }
    opts = {**file_config, **{k: v for k, v in overrides.items() if v is not None}, "seed": seed}
    try:
        config = CriticConfig(**opts)
    except TypeError as exc:
        raise UsageError(f"invalid estimator config: {exc}") from None

    counts = {}
    if args.bundled:
        args.p_samples = str(bundled_path("samples_p.txt"))
        args.q_samples = str(bundled_path("samples_q.txt"))
    if args.p_samples or args.q_samples:
        if not (args.p_samples and args.q_samples):
            raise UsageError("give both --p-samples and --q-samples")
        sp, sq = load_samples(args.p_samples), load_samples(args.q_samples)
        counts = {"samples_p": len(sp), "samples_q": len(sq)}
        sampler_p, sampler_q = empirical_sampler(sp), empirical_sampler(sq)
        discrete = False
        dim = 1 if sp.ndim == 1 else sp.shape[1]
        source = {"p_samples": args.p_samples, "q_samples": args.q_samples}
    elif args.p and args.q:
        p = from_descriptor(_load_json_arg(args.p, "--p"))
        q = from_descriptor(_load_json_arg(args.q, "--q"))
        sampler_p, sampler_q = p.sample, q.sample
        discrete = isinstance(p, DiscreteDistribution)
        dim = 1
        source = {"p": to_descriptor(p), "q": to_descriptor(q)}
    else:
        raise UsageError("estimate needs --p/--q descriptors, --p-samples/--q-samples or --bundled")

    kind = args.critic or (critic_desc or {}).get("type") or ("tabular" if discrete else "mlp")
    if kind == "tabular":
        if not discrete:
            raise UsageError("tabular critics need discrete distributions")
        critic = TabularCritic(p.n)
    else:
        desc = dict(critic_desc or {})
        desc["type"] = kind
        if kind == "mlp":
            desc.setdefault("input_dim", dim)
        critic = critic_from_descriptor(desc, rng=rng_stream(seed, "critic/init"))

    report = train_critic(spec, sampler_p, sampler_q, critic, config)
    report.samples_p = counts.get("samples_p")
    report.samples_q = counts.get("samples_q")
    out = report.to_dict()
    trace = report.trace_rows()
    out.pop("trace")
    out = {"command": "estimate", **source, "critic": critic.descriptor(), **out}
    resolved = {"f": args.f, **source, "critic": critic.descriptor(), **opts}
    _emit(args, out, resolved, seed, trace=trace)
    return EXIT_OK


def cmd_train(args) -> int:
    if not args.config:
        raise UsageError("train needs --config PATH")
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    data = _load_json_arg(str(path), "--config")
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    data["seed"] = _resolve_seed(args, data.get("seed"))
    if args.generator_steps is not None:
        data["generator_steps"] = args.generator_steps
    try:
        config = TrainConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid train config: {exc}") from None
    run = adversarial_train(None, config)
    report = {"command": "train", **run.to_dict()}
    # per-step records go to the CSV trace
    report.pop("records")
    report["steps_completed"] = len(run.records)
    _emit(args, report, config.to_dict(), config.seed, trace=run.trace_rows(), wall_clock=run.wall_clock)
    if run.aborted:
        print(f"training aborted: {run.failure}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_verify(args) -> int:
    groups = [g for item in (args.filter or []) for g in item.split(",") if g]
    seed = _resolve_seed(args)
    try:
        report = run_suite(groups or None, perturb=args.perturb, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = {"command": "verify", **report.to_dict()}
    _emit(args, out, {"filter": groups, "perturb": args.perturb}, seed)
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {c.name}: measured {format_float(c.measured)} (tolerance {format_float(c.tolerance)})", file=sys.stderr)
    return EXIT_OK if report.passed else 1


def cmd_catalog(args) -> int:
    names = args.f or list(BUILTIN_NAMES)
    u = (0.5, 1.0, 2.0)
    entries = []
    for name in names:
        s = builtin(name)
        entries.append(
            {
                "name": s.name,
                "f2": s.f2_formula,
                "tail_weights": list(s.tail_weights),
                "curvature_at_one": s.curvature_at_one,
                "f": {format_float(x): s.f(x) for x in u},
                "a": {format_float(x): s.a(x) for x in (-1.0, 0.0, 1.0)},
                "b": {format_float(x): s.b(x) for x in (-1.0, 0.0, 1.0)},
            }
        )
    _emit(args, {"command": "catalog", "divergences": entries}, {"f": names}, 0)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fdivlab", description="Exact, variational and adversarial f-divergence computations.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="random seed (fallback: $FDIV_SEED, then 0)")
        p.add_argument("--out", help="write the JSON report here, plus a manifest (and CSV trace) beside it")
        p.add_argument("--format", choices=("json", "csv"), default="json", help="stdout format")

    div_choices = list(BUILTIN_NAMES)

    p = sub.add_parser("divergence", help="exact D_f(p, q)")
    p.add_argument("--f", nargs="+", required=True, choices=div_choices, metavar="NAME")
    p.add_argument("--p", required=True, help="distribution descriptor (JSON, @file or path)")
    p.add_argument("--q", required=True, help="distribution descriptor (JSON, @file or path)")
    common(p)
    p.set_defaults(run=cmd_divergence)

    p = sub.add_parser("bound", help="variational lower bound E_f(p, q, d)")
    p.add_argument("--f", required=True, choices=div_choices, metavar="NAME")
    p.add_argument("--p", required=True)
    p.add_argument("--q", required=True)
    p.add_argument("--critic", choices=("optimal", "zero"), default="optimal")
    p.add_argument("--shift", type=float, default=0.0, help="constant added to the critic")
    common(p)
    p.set_defaults(run=cmd_bound)

    p = sub.add_parser("estimate", help="variational estimate of D_f from samples")
    p.add_argument("--f", required=True, choices=div_choices, metavar="NAME")
    p.add_argument("--p", help="descriptor to sample p from")
    p.add_argument("--q", help="descriptor to sample q from")
    p.add_argument("--p-samples", help="file with one sample of p per line")
    p.add_argument("--q-samples", help="file with one sample of q per line")
    p.add_argument("--bundled", action="store_true", help="use the bundled N(1,1) / N(0,1) sample files")
    p.add_argument("--critic", choices=("tabular", "polynomial", "mlp"))
    p.add_argument("--config", help="estimator config JSON (CriticConfig fields plus optional 'critic')")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=("momentum", "adam"))
    common(p)
    p.set_defaults(run=cmd_estimate)

    p = sub.add_parser("train", help="adversarial divergence minimisation")
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--generator-steps", type=int, help="override the config's generator_steps")
    common(p)
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("verify", help="run the identity suite")
    p.add_argument("--filter", action="append", metavar="GROUP", help=f"check groups: {', '.join(GROUPS)}")
    p.add_argument("--perturb", choices=PERTURBATIONS, help="fault injection for testing the suite")
    common(p)
    p.set_defaults(run=cmd_verify)

    p = sub.add_parser("catalog", help="list the builtin divergences")
    p.add_argument("--f", nargs="+", choices=div_choices, metavar="NAME")
    common(p)
    p.set_defaults(run=cmd_catalog)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    try:
        return args.run(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fdivlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, ArithmeticError) as exc:
        print(f"fdivlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DistributionError, CatalogError, TypeError, ValueError, OSError) as exc:
        print(f"fdivlab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
