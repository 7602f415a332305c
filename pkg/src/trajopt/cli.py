"""Command-line harness: ``trajopt solve | compare | check-grad``.

Settings come from flags, optionally layered over a JSON config file whose keys
mirror the long flag names (``max_iter`` for ``--max-iter``). Extra keys:
``env_options`` (environment parameter overrides), ``solver_options`` (any
other :class:`~trajopt.solvers.SolverConfig` field) and ``solvers`` (list, for
``compare``).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from .autodiff import OracleCounter, check_gradient
from .envs import ENVIRONMENTS, make_env, recommended_gamma0
from .errors import TrajOptError
from .solvers import SOLVERS, ConvergenceRecord, SolverConfig

GRAD_TOL = 1e-4
EXIT_OK, EXIT_ERROR, EXIT_MAX_ITER, EXIT_GRAD = 0, 1, 2, 3
DEFAULT_OUT = "trajopt-out"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    env: str
    env_options: dict = field(default_factory=dict)
    solvers: list = field(default_factory=list)
    solver_config: SolverConfig = field(default_factory=SolverConfig)
    out: Path = Path(DEFAULT_OUT)
    plot: bool = False
    seed: int | None = None
    n_commands: int = 20
    jobs: int = 1


_SOLVER_FLAGS = {"eps": "eps", "gamma0": "gamma0", "rho": "rho", "max_iter": "max_iterations"}
_CONFIG_FIELDS = {f.name for f in fields(SolverConfig)}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _load_file(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge the config file (if any) with the flags; flags win."""
    data = _load_file(args.config) if args.config else {}
    known = {"env", "env_options", "solver", "solvers", "solver_options", "tau", "seed", "out",
             "plot", "n", "jobs"} | set(_SOLVER_FLAGS)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in ("env", "tau", "seed", "out", "n", "jobs", *_SOLVER_FLAGS):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if getattr(args, "plot", False):
        data["plot"] = True
    for item in getattr(args, "env_opt", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--env-opt expects KEY=VALUE, got {item!r}")
        data.setdefault("env_options", {})[key] = _parse_value(value)
    solvers = getattr(args, "solver", None)
    if solvers:
        data["solvers"] = [s for entry in solvers for s in entry.split(",") if s]
    elif "solver" in data and "solvers" not in data:
        data["solvers"] = [data["solver"]]

    env = data.get("env")
    if env is None:
        raise ConfigError("no environment given (--env)")
    if env not in ENVIRONMENTS:
        raise ConfigError(f"unknown environment {env!r}; choose from {', '.join(ENVIRONMENTS)}")
    names = list(data.get("solvers", []))
    for name in names:
        if name not in SOLVERS:
            raise ConfigError(f"unknown solver {name!r}; choose from {', '.join(SOLVERS)}")

    opts = dict(data.get("solver_options", {}))
    bad = set(opts) - _CONFIG_FIELDS
    if bad:
        raise ConfigError(f"unknown solver options: {', '.join(sorted(bad))}")
    for key, name in _SOLVER_FLAGS.items():
        if data.get(key) is not None:
            opts[name] = data[key]
    if "gamma0" not in opts and recommended_gamma0(env) is not None:
        opts["gamma0"] = recommended_gamma0(env)
    seed = data.get("seed")
    opts.setdefault("seed", seed)
    try:
        solver_config = SolverConfig(**opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid solver settings: {exc}") from None

    env_options = dict(data.get("env_options", {}))
    if data.get("tau") is not None:
        env_options["tau"] = data["tau"]
    out = data.get("out") or os.environ.get("TRAJOPT_OUT") or DEFAULT_OUT
    return RunConfig(env=env, env_options=env_options, solvers=names, solver_config=solver_config,
                     out=Path(out), plot=bool(data.get("plot", False)), seed=seed,
                     n_commands=int(data.get("n", 20)), jobs=int(data.get("jobs", 1)))


def _problem(cfg: RunConfig):
    opts = dict(cfg.env_options)
    tau = opts.pop("tau", None)
    try:
        return make_env(cfg.env, tau=tau, seed=cfg.seed, **opts)
    except TypeError as exc:
        raise ConfigError(f"invalid environment options: {exc}") from None


def _run_solver(problem, name: str, config: SolverConfig):
    """Returns ``(record, error)``; the record is partial when the solver failed."""
    counter = OracleCounter()
    try:
        _, rec = SOLVERS[name](problem, problem.zero_command(), config, counter=counter)
        return rec, None
    except TrajOptError as exc:
        rec = getattr(exc, "record", None) or ConvergenceRecord(solver=name)
        return rec, exc


def _summary(env: str, rec: ConvergenceRecord, err) -> str:
    last = rec.rows[-1] if rec.rows else None
    if last is None:
        state = "failed before the first iterate"
    else:
        status = "converged" if rec.converged else ("failed" if err else "stopped")
        state = (f"{status} after {last.k} iterations, f={last.f:.6g}, "
                 f"|grad f|={last.grad_norm:.3g}, oracle calls={last.oracle_calls}")
    text = f"{rec.solver} on {env}: {state}"
    return text + (f" ({err})" if err else "")


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _plot_single(rec: ConvergenceRecord, outdir: Path):
    plt = _pyplot()
    for col, fname, log in (("f", "fval.svg", False), ("grad_norm", "gradnorm.svg", True)):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(rec.column("k"), rec.column(col), marker=".", ms=3)
        if log:
            ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.set_ylabel("f" if col == "f" else "|grad f|")
        ax.set_title(rec.solver)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        fig.savefig(outdir / fname, format="svg")
        plt.close(fig)


def _plot_compare(records, outdir: Path, env: str):
    plt = _pyplot()
    fig, axes = plt.subplots(2, 2, figsize=(10, 7), sharex="col")
    for rec in records:
        if not rec.rows:
            continue
        for j, xcol in enumerate(("k", "oracle_calls")):
            axes[0, j].plot(rec.column(xcol), rec.f, label=rec.solver)
            axes[1, j].plot(rec.column(xcol), rec.grad_norm, label=rec.solver)
    for j, xlabel in enumerate(("iteration", "oracle calls")):
        axes[1, j].set_xlabel(xlabel)
        axes[1, j].set_yscale("log")
    axes[0, 0].set_ylabel("f")
    axes[1, 0].set_ylabel("|grad f|")
    for ax in axes.flat:
        ax.grid(True, alpha=0.3)
    axes[0, 0].legend()
    fig.suptitle(env)
    fig.tight_layout()
    fig.savefig(outdir / "compare.svg", format="svg")
    plt.close(fig)


def _exit_code(rec, err) -> int:
    if err is not None:
        return EXIT_ERROR
    return EXIT_OK if rec.converged else EXIT_MAX_ITER


def cmd_solve(cfg: RunConfig) -> int:
    if len(cfg.solvers) != 1:
        raise ConfigError("solve needs exactly one solver (--solver)")
    problem = _problem(cfg)
    name = cfg.solvers[0]
    rec, err = _run_solver(problem, name, cfg.solver_config)
    cfg.out.mkdir(parents=True, exist_ok=True)
    rec.to_csv(cfg.out / "trace.csv")
    if cfg.plot and rec.rows:
        _plot_single(rec, cfg.out)
    print(_summary(cfg.env, rec, err))
    return _exit_code(rec, err)


def cmd_compare(cfg: RunConfig) -> int:
    if len(cfg.solvers) < 2:
        raise ConfigError("compare needs at least two solvers")
    if len(set(cfg.solvers)) != len(cfg.solvers):
        raise ConfigError("compare got the same solver twice")
    problem = _problem(cfg)
    with ThreadPoolExecutor(max_workers=max(1, cfg.jobs)) as pool:
        futures = [pool.submit(_run_solver, problem, name, cfg.solver_config) for name in cfg.solvers]
        results = [fut.result() for fut in futures]
    cfg.out.mkdir(parents=True, exist_ok=True)
    for (rec, err), name in zip(results, cfg.solvers):
        rec.solver = rec.solver or name
        rec.to_csv(cfg.out / f"{name}.csv")
        print(_summary(cfg.env, rec, err))
    if cfg.plot:
        _plot_compare([rec for rec, _ in results], cfg.out, cfg.env)
    return max(_exit_code(rec, err) for rec, err in results)


def cmd_check_grad(cfg: RunConfig) -> int:
    if cfg.n_commands < 1:
        raise ConfigError("--n must be positive")
    problem = _problem(cfg)
    err = check_gradient(problem, cfg.n_commands, seed=cfg.seed,
                         scale=ENVIRONMENTS[cfg.env].command_scale)
    ok = math.isfinite(err) and err <= GRAD_TOL
    print(f"{cfg.env}: max relative gradient error {err:.3e} over {cfg.n_commands} commands "
          f"({'ok' if ok else 'FAILED'}, tolerance {GRAD_TOL:g})")
    return EXIT_OK if ok else EXIT_GRAD


COMMANDS = {"solve": cmd_solve, "compare": cmd_compare, "check-grad": cmd_check_grad}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trajopt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its entries")
    common.add_argument("--env", help=f"environment ({', '.join(ENVIRONMENTS)})")
    common.add_argument("--env-opt", action="append", metavar="KEY=VALUE",
                        help="environment parameter override (repeatable)")
    common.add_argument("--tau", type=int, help="horizon")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory (default: $TRAJOPT_OUT or ./trajopt-out)")

    solving = _Parser(add_help=False)
    solving.add_argument("--eps", type=float, help="stop when |grad f| < eps")
    solving.add_argument("--gamma0", type=float, help="initial step size")
    solving.add_argument("--rho", type=float, help="backtracking factor")
    solving.add_argument("--max-iter", type=int)
    solving.add_argument("--plot", action="store_true", help="write SVG plots")

    p = sub.add_parser("solve", parents=[common, solving], help="run one solver")
    p.add_argument("--solver", action="append", help=f"one of {', '.join(SOLVERS)}")
    p = sub.add_parser("compare", parents=[common, solving], help="run several solvers")
    p.add_argument("--solver", action="append",
                   help="solver names, repeated or comma-separated (at least two)")
    p.add_argument("--jobs", type=int, help="worker threads")
    p = sub.add_parser("check-grad", parents=[common], help="check gradients by finite differences")
    p.add_argument("--n", type=int, help="number of random commands (default 20)")
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, TrajOptError, OSError) as exc:
        print(f"trajopt: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
