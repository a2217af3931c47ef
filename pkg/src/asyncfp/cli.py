"""Command-line harness wiring data, operators, simulator, and engine.

Subcommands: ``simulate`` (delay simulator), ``run`` (threaded engine),
``verify`` (property checks against oracles), ``bench`` (wall-time
grid), ``report`` (render figures from a CSV). Exit codes: 0 success,
1 configuration or data error, 2 a requested property check failed.

Dataset arguments are taken as paths first; bare names are resolved
against the directory in ``ASYNCFP_DATA_DIR``.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .blocks import BlockLayout, partition_blocks
from .core import ProblemOperator, SamplingDistribution
from .data import (
    LibsvmFormatError,
    gen_diag_dominant,
    gen_imbalanced_quadratic,
    gen_logistic,
    read_libsvm,
)
from .engine import BLOCK_SCHEMES, EngineConfig, measure_speedup, run_engine
from .history import DelayPolicy
from .metrics import (
    BENCH_COLUMNS,
    read_bench_csv,
    read_metrics_csv,
    write_bench_csv,
    write_metrics_csv,
)
from .operators import FbsL1LogisticOp, FbsL1QuadraticOp, JacobiOp
from .simulate import SimRun, run_simulation, verify_linear_rate, verify_lyapunov_descent
from .theory import (
    StepSizePolicy,
    check_cocoercivity,
    fejer_safe_step,
    quasi_contraction_modulus,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CHECK_FAILED = 2

VERIFY_CAP = 1000


class ExpansiveControlOp(ProblemOperator):
    """Deliberately expansive displacement (T = 1.5*I), a negative control.

    Exists so ``verify --problem expansive-control`` can demonstrate
    that the cocoercivity check actually rejects something.
    """

    def __init__(self, n: int = 8):
        self.layout = BlockLayout.scalar(n)

    def s_block(self, i, view):
        sl = self.layout.slice_of(i)
        return -0.5 * view.vector()[sl]


def _resolve_data(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    root = os.environ.get("ASYNCFP_DATA_DIR")
    if root and (Path(root) / name).exists():
        return Path(root) / name
    raise FileNotFoundError(
        f"dataset {name!r} not found (looked in the working directory"
        " and ASYNCFP_DATA_DIR)"
    )


def _build_problem(args) -> tuple[ProblemOperator, np.ndarray | None, str]:
    """Operator, oracle solution (when cheap), and a label for the CSV."""
    if args.problem == "jacobi":
        a, b, x_star = gen_diag_dominant(args.n, bandwidth=args.bandwidth, seed=args.seed)
        return JacobiOp(a, b), x_star, f"jacobi-{args.n}"
    if args.problem == "imbalance":
        a, b, x_star = gen_imbalanced_quadratic(args.n, seed=args.seed)
        layout = BlockLayout.uniform(args.n, max(1, args.n // 8))
        return JacobiOp(a, b, layout=layout), x_star, f"imbalance-{args.n}"
    if args.problem == "logistic":
        if args.data is not None:
            dataset = read_libsvm(_resolve_data(args.data))
            label = f"logistic-{Path(args.data).stem}"
        else:
            dataset = gen_logistic(args.samples, args.features, seed=args.seed)
            label = f"logistic-{args.samples}x{args.features}"
        layout = partition_blocks(dataset.num_features, args.block_size)
        op = FbsL1LogisticOp(dataset, lam=args.lam, layout=layout)
        if args.gamma_scale is not None:
            op = FbsL1LogisticOp(
                dataset, lam=args.lam, gamma=args.gamma_scale / op.L, layout=layout
            )
        return op, None, label
    if args.problem == "expansive-control":
        return ExpansiveControlOp(), None, "expansive-control"
    raise ValueError(f"unknown problem {args.problem!r}")


def _delay_policy(kind: str, tau: int) -> DelayPolicy:
    if tau == 0 or kind == "none":
        return DelayPolicy.none()
    if kind == "fixed":
        return DelayPolicy.fixed(tau)
    if kind == "uniform":
        return DelayPolicy.uniform_random(tau)
    if kind == "adversarial":
        return DelayPolicy.adversarial_max(tau)
    raise ValueError(f"unknown delay policy {kind!r}")


def _step_policy(args, m: int, tau: int) -> StepSizePolicy:
    if args.eta is not None:
        return StepSizePolicy.constant(args.eta)
    return StepSizePolicy.fejer_safe(m, 1.0 / m, tau, c=args.safe_c)


def cmd_simulate(args) -> int:
    op, x_star, label = _build_problem(args)
    m = op.layout.m
    cfg = SimRun(
        operator=op,
        distribution=SamplingDistribution.uniform(m),
        step_policy=_step_policy(args, m, args.tau),
        delay_policy=_delay_policy(args.policy, args.tau),
        read_mode=args.read_mode,
        epochs=args.epochs,
        seed=args.seed,
        x_star=x_star,
    )
    metrics = run_simulation(cfg)
    metrics.config["problem"] = label
    write_metrics_csv(metrics, args.out)
    print(
        f"{label}: {cfg.epochs} epochs, final residual "
        f"{metrics.summary['final_residual']:.3e}, max staleness "
        f"{metrics.summary['max_staleness']} -> {args.out}"
    )
    if args.verify is None:
        return EXIT_OK
    if x_star is None:
        raise ValueError(f"--verify {args.verify} needs a problem with a known solution")
    if args.verify == "fundamental":
        report = verify_lyapunov_descent(cfg, x_star, trials=args.trials)
        print(
            f"fundamental inequality: {report.steps_checked} steps, "
            f"{report.violations} violations, worst margin {report.worst_margin:+.3e}, "
            f"coefficient {report.coefficient:.3e}"
        )
        return EXIT_OK if report.passed else EXIT_CHECK_FAILED
    mu = 1.0 - op.iter_matrix_norm
    report = verify_linear_rate(cfg, mu=mu, beta=0.5, num_seeds=args.seeds)
    print(
        f"linear rate: base {report.rate_base:.6f}, worst ratio to envelope "
        f"{report.max_ratio:.4f} over {report.num_seeds} seeds"
    )
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_run(args) -> int:
    op, x_star, label = _build_problem(args)
    m = op.layout.m
    cores = os.cpu_count() or 1
    if args.agents > cores:
        print(
            f"warning: {args.agents} agents on {cores} hardware core(s);"
            " timings will not show parallel gains",
            file=sys.stderr,
        )
    policy = StepSizePolicy.constant(args.eta)
    cfg = EngineConfig(
        num_agents=args.agents,
        epochs=args.epochs,
        distribution=SamplingDistribution.uniform(m),
        step_policy=policy,
        scheme=args.scheme,
        seed=args.seed,
        x_star=x_star,
    )
    metrics = run_engine(cfg, op)
    metrics.config["problem"] = label
    write_metrics_csv(metrics, args.out)
    print(
        f"{label}: {args.agents} agent(s), final residual "
        f"{metrics.summary['final_residual']:.3e}, max staleness "
        f"{metrics.summary['max_staleness']} -> {args.out}"
    )
    if args.baseline == "sync":
        rows = measure_speedup(
            op,
            cfg.distribution,
            policy,
            epochs=args.epochs,
            agents=(args.agents,),
            seed=args.seed,
            problem=label,
        )
        for row in rows:
            print(
                f"baseline {row.mode:>5} p={row.agents}: "
                f"{row.wall_s:.3f}s (speedup {row.speedup:.2f})"
            )
    return EXIT_OK


def _verify_lines(args, op, x_star):
    """Run the requested property checks; yields (name, passed, detail)."""
    checks = args.checks.split(",") if args.checks else None
    m = op.layout.m

    def wanted(name):
        return checks is None or name in checks

    if wanted("cocoercivity"):
        report = check_cocoercivity(op, samples=args.check_samples)
        yield (
            "cocoercivity",
            report.passed,
            f"{report.violations}/{report.samples} violations,"
            f" worst margin {report.worst_margin:+.3e}",
        )
    if x_star is None:
        return
    if wanted("fundamental"):
        cfg = SimRun(
            operator=op,
            distribution=SamplingDistribution.uniform(m),
            step_policy=StepSizePolicy.fejer_safe(m, 1.0 / m, args.tau, c=0.9),
            delay_policy=_delay_policy("uniform", args.tau),
            epochs=max(1, args.steps // m),
            seed=args.seed,
            x_star=x_star,
        )
        report = verify_lyapunov_descent(cfg, x_star, trials=args.trials)
        yield (
            "fundamental inequality",
            report.passed,
            f"{report.steps_checked} steps x {report.trials or m} draws,"
            f" {report.violations} violations, worst margin {report.worst_margin:+.3e}",
        )
    if wanted("rate") and isinstance(op, JacobiOp):
        mu = 1.0 - op.iter_matrix_norm
        cfg = SimRun(
            operator=op,
            distribution=SamplingDistribution.uniform(m),
            step_policy=StepSizePolicy.linear_rate(m, 1.0 / m, 0, mu, beta=0.5),
            delay_policy=DelayPolicy.none(),
            epochs=8,
            seed=args.seed,
            x_star=x_star,
            x0=np.ones(op.layout.dim),
        )
        report = verify_linear_rate(cfg, mu=mu, beta=0.5, num_seeds=args.seeds)
        yield (
            "linear rate",
            report.passed,
            f"base {report.rate_base:.6f}, worst envelope ratio {report.max_ratio:.4f}"
            f" over {report.num_seeds} seeds",
        )
    if wanted("contraction") and isinstance(op, JacobiOp):
        quad = FbsL1QuadraticOp(op.a, op.b, lam=0.1, gamma=1.0 / op_l(op))
        target = quad.solve()
        modulus = quasi_contraction_modulus(quad.gamma, quad.mu, quad.L)
        rng = np.random.default_rng(args.seed)
        worst = 0.0
        for _ in range(args.check_samples):
            x = target + rng.normal(size=target.size)
            num = float(np.linalg.norm(quad.apply_t(x) - target))
            den = float(np.linalg.norm(x - target))
            worst = max(worst, num / den)
        yield (
            "quasi-contraction",
            worst <= modulus + 1e-9,
            f"worst factor {worst:.9f} vs modulus {modulus:.9f}"
            f" over {args.check_samples} points",
        )


def op_l(op: JacobiOp) -> float:
    """Largest eigenvalue of the (symmetric) Jacobi system matrix."""
    return float(np.linalg.eigvalsh(op.a.to_dense()).max())


def cmd_verify(args) -> int:
    if args.n > VERIFY_CAP or (args.problem == "logistic" and args.features > VERIFY_CAP):
        raise ValueError(f"verify caps the problem size at {VERIFY_CAP} for oracle checks")
    op, x_star, label = _build_problem(args)
    print(f"property checks on {label}:")
    all_passed = True
    any_ran = False
    for name, passed, detail in _verify_lines(args, op, x_star):
        any_ran = True
        all_passed &= passed
        print(f"  {'PASS' if passed else 'FAIL'}  {name}: {detail}")
    if not any_ran:
        raise ValueError("no applicable checks for this problem/--checks combination")
    return EXIT_OK if all_passed else EXIT_CHECK_FAILED


def cmd_bench(args) -> int:
    op, _, label = _build_problem(args)
    agents = tuple(int(p) for p in args.agents.split(","))
    rows = measure_speedup(
        op,
        SamplingDistribution.uniform(op.layout.m),
        StepSizePolicy.constant(args.eta),
        epochs=args.epochs,
        agents=agents,
        seed=args.seed,
        problem=label,
    )
    config = {
        "problem": label,
        "epochs": args.epochs,
        "eta": args.eta,
        "seed": args.seed,
        "agents": list(agents),
    }
    write_bench_csv(rows, config, args.out)
    for row in rows:
        print(
            f"{row.problem} {row.mode:>5} p={row.agents}:"
            f" {row.wall_s:.3f}s speedup {row.speedup:.2f}"
        )
    print(f"-> {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.csv)
    if not path.exists():
        raise FileNotFoundError(f"no such CSV: {path}")
    out_dir = Path(args.figures) if args.figures else path.parent
    stem = path.stem
    # defer the matplotlib import so the solver paths never pay for it
    from . import plots

    with open(path) as fh:
        header = next(
            (line.strip() for line in fh if line.strip() and not line.startswith("#")),
            "",
        )
    if header == ",".join(BENCH_COLUMNS):
        written = [plots.render_bench_figure(read_bench_csv(path), out_dir, stem)]
    else:
        written = plots.render_metrics_figures(read_metrics_csv(path), out_dir, stem)
    for item in written:
        print(f"wrote {item}")
    return EXIT_OK


def _add_problem_args(sub, include_control=False):
    kinds = ["jacobi", "logistic", "imbalance"]
    if include_control:
        kinds.append("expansive-control")
    sub.add_argument("--problem", choices=kinds, default="jacobi")
    sub.add_argument("--n", type=int, default=100, help="system size for generated problems")
    sub.add_argument("--bandwidth", type=int, default=5)
    sub.add_argument("--data", help="LIBSVM file (path or name under ASYNCFP_DATA_DIR)")
    sub.add_argument("--samples", type=int, default=200, help="synthetic dataset rows")
    sub.add_argument("--features", type=int, default=100, help="synthetic dataset columns")
    sub.add_argument("--lam", type=float, default=1e-4, help="l1 weight for logistic")
    sub.add_argument("--gamma-scale", type=float, default=None,
                     help="gradient step as a multiple of 1/L (default 1.9)")
    sub.add_argument("--block-size", type=int, default=50)
    sub.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asyncfp",
        description="Asynchronous block fixed-point solver harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="single-threaded delay simulator")
    _add_problem_args(sim)
    sim.add_argument("--tau", type=int, default=0, help="delay window size")
    sim.add_argument("--policy", choices=["none", "fixed", "uniform", "adversarial"],
                     default="uniform")
    sim.add_argument("--read-mode", choices=["inconsistent", "consistent"],
                     default="inconsistent")
    sim.add_argument("--epochs", type=int, default=100)
    sim.add_argument("--eta", type=float, default=None,
                     help="constant step (default: safe bound for tau)")
    sim.add_argument("--safe-c", type=float, default=0.99)
    sim.add_argument("--verify", choices=["fundamental", "rate"], default=None,
                     help="also check a convergence guarantee; exit 2 on failure")
    sim.add_argument("--trials", type=int, default=None,
                     help="Monte-Carlo resamples for --verify fundamental"
                          " (default: exact enumeration)")
    sim.add_argument("--seeds", type=int, default=60,
                     help="replicate count for --verify rate")
    sim.add_argument("--out", default="simulate.csv")
    sim.set_defaults(func=cmd_simulate)

    run = sub.add_parser("run", help="multithreaded engine")
    _add_problem_args(run)
    run.add_argument("--agents", type=int, default=1)
    run.add_argument("--epochs", type=int, default=100)
    run.add_argument("--eta", type=float, default=0.9)
    run.add_argument("--scheme", choices=list(BLOCK_SCHEMES), default=None)
    run.add_argument("--baseline", choices=["sync"], default=None,
                     help="also time a barrier-synchronized variant")
    run.add_argument("--out", default="run.csv")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="oracle-backed property checks")
    _add_problem_args(ver, include_control=True)
    ver.set_defaults(n=50)
    ver.add_argument("--checks",
                     help="comma list from cocoercivity,fundamental,rate,contraction")
    ver.add_argument("--check-samples", type=int, default=10_000,
                     help="points drawn per sampled property check")
    ver.add_argument("--tau", type=int, default=4)
    ver.add_argument("--steps", type=int, default=50,
                     help="steps for the fundamental-inequality check")
    ver.add_argument("--trials", type=int, default=200)
    ver.add_argument("--seeds", type=int, default=60)
    ver.set_defaults(func=cmd_verify)

    bench = sub.add_parser("bench", help="wall-time grid over agent counts")
    _add_problem_args(bench)
    bench.set_defaults(problem="imbalance")
    bench.add_argument("--agents", default="1,2,4")
    bench.add_argument("--epochs", type=int, default=20)
    bench.add_argument("--eta", type=float, default=0.5)
    bench.add_argument("--out", default="bench.csv")
    bench.set_defaults(func=cmd_bench)

    rep = sub.add_parser("report", help="render figures from a metrics or bench CSV")
    rep.add_argument("csv")
    rep.add_argument("--figures", default=None,
                     help="output directory (default: alongside the CSV)")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags; the harness contract is 1 for
        # config errors and 2 only for failed property checks
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, LibsvmFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
