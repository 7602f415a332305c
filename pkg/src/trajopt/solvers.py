"""Outer loops: gradient descent, ILQR/ILQG, regularized and accelerated
Gauss-Newton, DDP and Tassa-style iLQG, with convergence traces."""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .autodiff import ForwardTape, OracleCounter, objective_gradient, record
from .core import ControlProblem, as_command, objective
from .errors import DivergedTrajectoryError, LineSearchError, TrajOptError
from .steps import feedback_step, model_step, tape_objective

CSV_HEADER = ("k", "f", "grad_norm", "gamma", "delta", "oracle_calls", "wall_s")


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by all solvers.

    ``acceptance`` selects the regularized line-search test: ``"model"``
    compares ``f(u+)`` with the convex model value plus the proximal term,
    ``"objective"`` with ``f(u)`` plus the proximal term. ``burn_in`` freezes
    the starting step size at the median of the first ``burn_in_iterations``
    accepted values. ``keep_iterates`` stores every iterate on the record.
    """

    max_iterations: int = 500
    eps: float = 1e-6
    gamma0: float = 1.0
    rho: float = 0.5
    c1: float = 1e-4
    accelerate: bool = False
    seed: int | None = None
    acceptance: str = "model"
    burn_in: bool = False
    burn_in_iterations: int = 5
    gamma_min: float = 1e-14
    max_trials: int = 50
    lam0: float = 1e-6
    rho_plus: float = 10.0
    ddp_shifted: bool = False
    keep_iterates: bool = False

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 0 < self.c1 < 1:
            raise ValueError("c1 must lie in (0, 1)")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if self.acceptance not in ("model", "objective"):
            raise ValueError("acceptance must be 'model' or 'objective'")


@dataclass
class ConvergenceRow:
    k: int
    f: float
    grad_norm: float
    gamma: float | None
    delta: float | None
    oracle_calls: int
    wall_s: float


@dataclass
class ConvergenceRecord:
    """Per-iteration trace; row ``k`` describes the iterate ``u_k``.

    ``step_norms[k - 1]`` is ``|u_k - u_{k-1}|`` for accepted steps;
    ``iterates`` holds ``u_k`` when the run was configured to keep them.
    """

    solver: str = ""
    rows: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def append(self, k, f, grad_norm, gamma=None, delta=None, oracle_calls=0, wall_s=0.0):
        if self.rows and k <= self.rows[-1].k:
            raise ValueError("iteration index must increase")
        self.rows.append(ConvergenceRow(int(k), float(f), float(grad_norm),
                                        None if gamma is None else float(gamma),
                                        None if delta is None else float(delta),
                                        int(oracle_calls), float(wall_s)))

    def __len__(self):
        return len(self.rows)

    @property
    def iterations(self) -> int:
        return self.rows[-1].k if self.rows else 0

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.rows],
                        dtype=float)

    @property
    def f(self) -> np.ndarray:
        return self.column("f")

    @property
    def grad_norm(self) -> np.ndarray:
        return self.column("grad_norm")

    @property
    def gamma(self) -> np.ndarray:
        return self.column("gamma")

    @property
    def oracle_calls(self) -> np.ndarray:
        return self.column("oracle_calls")

    def min_grad_norm(self) -> np.ndarray:
        """Running ``min_{j <= k} |grad f(u_j)|``."""
        return np.minimum.accumulate(self.grad_norm)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([r.k, repr(r.f), repr(r.grad_norm),
                             "" if r.gamma is None else repr(r.gamma),
                             "" if r.delta is None else repr(r.delta),
                             r.oracle_calls, f"{r.wall_s:.6f}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source, solver: str = "") -> "ConvergenceRecord":
        """Parse a trace written by :meth:`to_csv` (path or file-like)."""
        if hasattr(source, "read"):
            text = source.read()
        else:
            with open(source, newline="") as fh:
                text = fh.read()
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        rec = cls(solver=solver)
        for row in reader:
            opt = lambda s: None if s == "" else float(s)  # noqa: E731
            rec.append(int(row["k"]), float(row["f"]), float(row["grad_norm"]), opt(row["gamma"]),
                       opt(row["delta"]), int(row["oracle_calls"]), float(row["wall_s"]))
        return rec


@dataclass
class AccelState:
    """Extrapolation state of the accelerated scheme."""

    alpha: float = 1.0
    z: np.ndarray | None = None
    y: np.ndarray | None = None

    @staticmethod
    def next_alpha(alpha: float) -> float:
        """Root in ``(0, 1)`` of ``(1 - a) / a^2 = 1 / alpha^2``."""
        a2 = alpha * alpha
        return 0.5 * (math.sqrt(a2 * a2 + 4.0 * a2) - a2)

    def advance(self):
        self.alpha = self.next_alpha(self.alpha)


class _Run:
    """Bookkeeping shared by the solver loops."""

    def __init__(self, name: str, counter: OracleCounter | None, callback: Callable | None,
                 config: SolverConfig):
        self.record = ConvergenceRecord(solver=name)
        self.keep = config.keep_iterates
        self.counter = counter if counter is not None else OracleCounter()
        self.callback = callback
        self.t0 = time.perf_counter()

    def log(self, k, f, grad, gamma=None, delta=None, step=None, u=None):
        if self.keep and u is not None:
            self.record.iterates.append(np.array(u))
        if step is not None:
            self.record.step_norms.append(float(np.linalg.norm(step)))
        self.record.append(k, f, float(np.linalg.norm(grad)), gamma, delta, self.counter.total,
                           time.perf_counter() - self.t0)
        if self.callback is not None:
            self.callback(self.record.rows[-1])

    def fail(self, exc: TrajOptError):
        exc.record = self.record
        self.record.message = str(exc)
        return exc


def _safe_objective(problem: ControlProblem, u) -> float:
    try:
        return objective(problem, u)
    except DivergedTrajectoryError:
        return math.inf


def _tape_and_grad(problem, u, counter, **kw) -> tuple[ForwardTape, np.ndarray, float]:
    tape = record(problem, u, counter=counter, **kw)
    return tape, objective_gradient(problem, tape), tape_objective(problem, tape)


@dataclass
class LineSearchResult:
    command: np.ndarray
    gamma: float
    f: float
    trials: int
    model_value: float


def _proximal_search(problem: ControlProblem, tape: ForwardTape, f_u: float, gamma_start: float,
                     rho: float, acceptance: str = "model", gamma_min: float = 1e-14,
                     noise: bool = False) -> LineSearchResult:
    """Backtrack ``gamma`` until the regularized step passes the acceptance test.

    ``"model"``: ``f(u+) <= c_f(u+; u) + |u+ - u|^2 / (2 gamma)`` and, as a guard
    against rounding, ``f(u+) <= f(u) - |u+ - u|^2 / (2 gamma)`` which the first
    test implies in exact arithmetic. ``"objective"``:
    ``f(u+) <= f(u) + |u+ - u|^2 / (2 gamma)``. ``"decrease"``:
    ``f(u+) <= f(u) - |u+ - u|^2 / (2 gamma)`` alone.
    """
    gamma = gamma_start
    trials = 0
    while gamma >= gamma_min:
        trials += 1
        rep = model_step(problem, tape, gamma, noise=noise, f_u=f_u)
        u_new = rep.command
        prox = float(np.sum((u_new - tape.command) ** 2)) / (2.0 * gamma)
        f_new = _safe_objective(problem, u_new)
        if acceptance == "model":
            ok = f_new <= rep.model_value + prox and f_new <= f_u - prox
        elif acceptance == "objective":
            ok = f_new <= f_u + prox
        else:
            ok = f_new <= f_u - prox
        if ok:
            return LineSearchResult(u_new, gamma, f_new, trials, rep.model_value)
        gamma *= rho
    raise LineSearchError(f"step size underflow (gamma < {gamma_min:g}) after {trials} trials")


def sufficient_decrease_linesearch(problem: ControlProblem, u, gamma_start: float, rho: float = 0.5,
                                   counter: OracleCounter | None = None, acceptance: str = "model",
                                   gamma_min: float = 1e-14):
    """First ``gamma = gamma_start * rho^j`` whose Gauss-Newton point passes the test.

    Returns ``(u_plus, gamma)``.
    """
    if not gamma_start > 0:
        raise ValueError("gamma_start must be positive")
    tape = record(problem, u, counter=counter)
    res = _proximal_search(problem, tape, tape_objective(problem, tape), gamma_start, rho,
                           acceptance, gamma_min)
    return res.command, res.gamma


class _StepSchedule:
    """Warm start ``min(gamma_prev / rho, gamma0)`` with an optional burn-in freeze."""

    def __init__(self, config: SolverConfig):
        self.config = config
        self.prev: float | None = None
        self.accepted: list[float] = []
        self.frozen: float | None = None

    def start(self) -> float:
        if self.frozen is not None:
            return self.frozen
        if self.prev is None:
            return self.config.gamma0
        return min(self.prev / self.config.rho, self.config.gamma0)

    def accept(self, gamma: float):
        self.prev = gamma
        self.accepted.append(gamma)
        cfg = self.config
        if cfg.burn_in and self.frozen is None and len(self.accepted) >= cfg.burn_in_iterations:
            self.frozen = statistics.median(self.accepted[:cfg.burn_in_iterations])


def gradient_descent(problem: ControlProblem, u0, config: SolverConfig | None = None,
                     counter: OracleCounter | None = None, callback=None):
    """``u+ = u - gamma grad f(u)`` with ``f(u+) <= f(u) - gamma/2 |grad f(u)|^2``."""
    config = config or SolverConfig()
    run = _Run("gd", counter, callback, config)
    u = as_command(problem, u0)
    tape, grad, f = _tape_and_grad(problem, u, run.counter)
    run.log(0, f, grad, u=u)
    sched = _StepSchedule(config)
    for k in range(1, config.max_iterations + 1):
        gn2 = float(np.sum(grad**2))
        if math.sqrt(gn2) < config.eps:
            break
        gamma = sched.start()
        while True:
            u_new = u - gamma * grad
            f_new = _safe_objective(problem, u_new)
            if f_new <= f - 0.5 * gamma * gn2:
                break
            gamma *= config.rho
            if gamma < config.gamma_min:
                raise run.fail(LineSearchError("gradient step size underflow"))
        sched.accept(gamma)
        step = u_new - u
        u = u_new
        tape, grad, f = _tape_and_grad(problem, u, run.counter)
        run.log(k, f, grad, gamma, step=step, u=u)
    run.record.converged = bool(np.linalg.norm(grad) < config.eps)
    return u, run.record


def regularized_ilqr(problem: ControlProblem, u0, config: SolverConfig | None = None,
                     counter: OracleCounter | None = None, callback=None, _noise: bool = False,
                     _name: str = "reg_ilqr"):
    """Regularized Gauss-Newton (Levenberg-Marquardt) iterations with line search on ``gamma``."""
    config = config or SolverConfig()
    if config.accelerate:
        return accelerated_reg_gn(problem, u0, replace(config, accelerate=False), counter, callback)
    run = _Run(_name, counter, callback, config)
    acceptance = "decrease" if _noise else config.acceptance
    u = as_command(problem, u0)
    tape, grad, f = _tape_and_grad(problem, u, run.counter, noise=_noise)
    run.log(0, f, grad, u=u)
    sched = _StepSchedule(config)
    for k in range(1, config.max_iterations + 1):
        if np.linalg.norm(grad) < config.eps:
            break
        try:
            res = _proximal_search(problem, tape, f, sched.start(), config.rho, acceptance,
                                   config.gamma_min, noise=_noise)
        except LineSearchError as exc:
            raise run.fail(exc) from None
        sched.accept(res.gamma)
        step = res.command - u
        u = res.command
        tape, grad, f = _tape_and_grad(problem, u, run.counter, noise=_noise)
        run.log(k, f, grad, res.gamma, step=step, u=u)
    run.record.converged = bool(np.linalg.norm(grad) < config.eps)
    return u, run.record


def accelerated_reg_gn(problem: ControlProblem, u0, config: SolverConfig | None = None,
                       counter: OracleCounter | None = None, callback=None, alphas: list | None = None):
    """Regularized Gauss-Newton step plus an extrapolated step; keep the better one.

    Both branches run their own step-size search starting from ``gamma0``.
    ``alphas`` (if given) collects the extrapolation weights ``alpha_k``.
    """
    config = config or SolverConfig()
    run = _Run("acc_reg_ilqr", counter, callback, config)
    u = as_command(problem, u0)
    tape, grad, f = _tape_and_grad(problem, u, run.counter)
    run.log(0, f, grad, u=u)
    acc = AccelState(1.0, u.copy())
    sched_v, sched_w = _StepSchedule(config), _StepSchedule(config)
    for k in range(1, config.max_iterations + 1):
        if np.linalg.norm(grad) < config.eps:
            break
        if alphas is not None:
            alphas.append(acc.alpha)
        try:
            res_v = _proximal_search(problem, tape, f, sched_v.start(), config.rho,
                                     config.acceptance, config.gamma_min)
            acc.y = acc.alpha * acc.z + (1.0 - acc.alpha) * u
            if np.array_equal(acc.y, u):
                tape_y, f_y = tape, f
            else:
                tape_y = record(problem, acc.y, counter=run.counter)
                f_y = tape_objective(problem, tape_y)
            res_w = _proximal_search(problem, tape_y, f_y, sched_w.start(), config.rho,
                                     config.acceptance, config.gamma_min)
        except (LineSearchError, DivergedTrajectoryError) as exc:
            raise run.fail(exc) from None
        sched_v.accept(res_v.gamma)
        sched_w.accept(res_w.gamma)
        acc.z = u + (res_w.command - u) / acc.alpha
        acc.advance()
        u_new = res_w.command if res_w.f < res_v.f else res_v.command
        step = u_new - u
        u = u_new
        tape, grad, f = _tape_and_grad(problem, u, run.counter)
        run.log(k, f, grad, res_v.gamma, res_w.gamma, step=step, u=u)
    run.record.converged = bool(np.linalg.norm(grad) < config.eps)
    return u, run.record


def _armijo_solver(problem, u0, config, counter, callback, name, noise):
    config = config or SolverConfig()
    run = _Run(name, counter, callback, config)
    u = as_command(problem, u0)
    tape, grad, f = _tape_and_grad(problem, u, run.counter, noise=noise)
    run.log(0, f, grad, u=u)
    for k in range(1, config.max_iterations + 1):
        if np.linalg.norm(grad) < config.eps:
            break
        try:
            v = model_step(problem, tape, math.inf, noise=noise, f_u=f).direction
        except TrajOptError as exc:
            raise run.fail(exc) from None
        slope = float(np.sum(grad * v))
        alpha = 1.0
        while True:
            u_new = u + alpha * v
            f_new = _safe_objective(problem, u_new)
            if f_new <= f + config.c1 * alpha * slope:
                break
            alpha *= config.rho
            if alpha < config.gamma_min:
                raise run.fail(LineSearchError(f"Armijo search failed (slope {slope:.3g})"))
        step = u_new - u
        u = u_new
        tape, grad, f = _tape_and_grad(problem, u, run.counter, noise=noise)
        run.log(k, f, grad, alpha, step=step, u=u)
    run.record.converged = bool(np.linalg.norm(grad) < config.eps)
    return u, run.record


def ilqr_solver(problem: ControlProblem, u0, config: SolverConfig | None = None,
                counter: OracleCounter | None = None, callback=None):
    """Gauss-Newton direction (no regularization) with Armijo backtracking."""
    return _armijo_solver(problem, u0, config, counter, callback, "ilqr", False)


def ilqg_solver(problem: ControlProblem, u0, config: SolverConfig | None = None,
                counter: OracleCounter | None = None, callback=None):
    """ILQG direction with Armijo backtracking on the noise-free objective."""
    return _armijo_solver(problem, u0, config, counter, callback, "ilqg", True)


def regularized_ilqg_solver(problem: ControlProblem, u0, config: SolverConfig | None = None,
                            counter: OracleCounter | None = None, callback=None):
    """Regularized ILQG; accepts ``gamma`` when ``f(u+) <= f(u) - |u+ - u|^2 / (2 gamma)``."""
    config = config or SolverConfig()
    return regularized_ilqr(problem, u0, replace(config, accelerate=False), counter, callback,
                            _noise=True, _name="reg_ilqg")


def _feedback_solver(problem, u0, config, counter, callback, name, second_order):
    config = config or SolverConfig()
    run = _Run(name, counter, callback, config)
    order = 2 if second_order else 1
    u = as_command(problem, u0)
    tape, grad, f = _tape_and_grad(problem, u, run.counter, order=order)
    run.log(0, f, grad, u=u)
    for k in range(1, config.max_iterations + 1):
        if np.linalg.norm(grad) < config.eps:
            break
        try:
            rep = feedback_step(problem, tape, second_order=second_order, lam0=config.lam0,
                                rho_plus=config.rho_plus, rho_minus=config.rho,
                                max_trials=config.max_trials, shifted=config.ddp_shifted, f_u=f)
        except TrajOptError as exc:
            raise run.fail(exc) from None
        u = rep.command
        tape, grad, f = _tape_and_grad(problem, u, run.counter, order=order)
        run.log(k, f, grad, rep.step_size, step=rep.direction, u=u)
    run.record.converged = bool(np.linalg.norm(grad) < config.eps)
    return u, run.record


def ddp_solver(problem: ControlProblem, u0, config: SolverConfig | None = None,
               counter: OracleCounter | None = None, callback=None):
    """Iterate :func:`~trajopt.steps.ddp_step`."""
    return _feedback_solver(problem, u0, config, counter, callback, "ddp", True)


def tassa_ilqg_solver(problem: ControlProblem, u0, config: SolverConfig | None = None,
                      counter: OracleCounter | None = None, callback=None):
    """Iterate :func:`~trajopt.steps.tassa_ilqg_step`."""
    return _feedback_solver(problem, u0, config, counter, callback, "tassa_ilqg", False)


SOLVERS: dict[str, Callable] = {
    "gd": gradient_descent,
    "ilqr": ilqr_solver,
    "reg_ilqr": regularized_ilqr,
    "acc_reg_ilqr": accelerated_reg_gn,
    "ddp": ddp_solver,
    "tassa_ilqg": tassa_ilqg_solver,
    "ilqg": ilqg_solver,
    "reg_ilqg": regularized_ilqg_solver,
}


__all__ = [
    "SolverConfig",
    "ConvergenceRecord",
    "AccelState",
    "gradient_descent",
    "sufficient_decrease_linesearch",
    "regularized_ilqr",
    "accelerated_reg_gn",
    "ilqr_solver",
    "ilqg_solver",
    "regularized_ilqg_solver",
    "ddp_solver",
    "tassa_ilqg_solver",
    "SOLVERS",
    "CSV_HEADER",
]
