"""End-to-end acceptance checks, one test per shipped guarantee.

Each test prints a single PASS/FAIL line with the measured quantity and
its tolerance, so a verbose run doubles as the release checklist. The
fixtures are frozen; loosening a tolerance here needs a written reason.
"""

import itertools
import sys
import threading
import time

import numpy as np
from scipy.special import expit

from asyncfp import (
    ArrayView,
    SamplingDistribution,
    StepSizePolicy,
    async_block_update,
    check_cocoercivity,
    fejer_safe_step,
    partition_blocks,
    quasi_contraction_modulus,
)
from asyncfp.blocks import BlockLayout
from asyncfp.cli import ExpansiveControlOp
from asyncfp.data import (
    LabeledDataset,
    gen_diag_dominant,
    gen_graph,
    gen_logistic,
    read_libsvm,
    write_libsvm,
)
from asyncfp.data.sparse import SparseMatrixCSR
from asyncfp.engine import EngineConfig, SharedState, run_engine
from asyncfp.history import DelayPolicy, IterateHistory
from asyncfp.operators import (
    AdmmDualOp,
    AdmmSide,
    BoxProj,
    ConsensusAdmmOp,
    DecentralAdmmOp,
    DecentralGradOp,
    FbsL1LogisticOp,
    FbsL1QuadraticOp,
    GradOp,
    HalfspaceProj,
    IsoQuadratic,
    JacobiOp,
    L1Norm,
    LocalSmooth,
    PrsFeasibilityOp,
    QuadraticForm,
)
from asyncfp.simulate import SimRun, run_simulation, verify_linear_rate, verify_lyapunov_descent


def _criterion(name: str, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}", flush=True)
    assert ok, f"{name}: {detail}"


def _trajectories_match(sim, eng) -> bool:
    if len(sim) != len(eng):
        return False
    return all(np.array_equal(a, b) for a, b in zip(sim, eng))


def test_single_agent_engine_matches_serial_simulation():
    """Zero-delay simulation and one-agent engine agree bitwise."""
    start = time.perf_counter()

    a, b, _ = gen_diag_dominant(25, seed=2)
    jac = JacobiOp(a, b)
    ds = gen_logistic(60, 24, density=0.3, seed=5)
    fbs = FbsL1LogisticOp(ds, lam=1e-3, layout=partition_blocks(24, 5))

    results = {}
    for label, op, dim, epochs in (("jacobi", jac, 25, 15), ("fbs", fbs, 24, 12)):
        m = op.layout.m
        policy = StepSizePolicy.constant(0.8)
        sim = run_simulation(SimRun(
            operator=op,
            distribution=SamplingDistribution.uniform(m),
            step_policy=policy,
            delay_policy=DelayPolicy.none(),
            epochs=epochs,
            seed=4,
            x0=np.zeros(dim),
            record_trajectory=True,
        ))
        eng = run_engine(EngineConfig(
            num_agents=1,
            epochs=epochs,
            distribution=SamplingDistribution.uniform(m),
            step_policy=policy,
            seed=4,
            x0=np.zeros(dim),
            record_trajectory=True,
        ), op)
        results[label] = _trajectories_match(sim.trajectory, eng.trajectory)

    elapsed = time.perf_counter() - start
    ok = all(results.values()) and elapsed < 5.0
    _criterion(
        "sync-equivalence", ok,
        f"bitwise trajectory match jacobi={results['jacobi']} "
        f"fbs={results['fbs']} in {elapsed:.1f}s (budget 5s)",
    )


def test_energy_descent_inequality_monte_carlo():
    """Conditional one-step energy descent holds at the safe step size."""
    start = time.perf_counter()
    a, b, x_star = gen_diag_dominant(50)
    op = JacobiOp(a, b)
    reports = {}
    for tau in (2, 8):
        cfg = SimRun(
            operator=op,
            distribution=SamplingDistribution.uniform(50),
            step_policy=StepSizePolicy.fejer_safe(50, 1 / 50, tau, c=0.9),
            delay_policy=DelayPolicy.uniform_random(tau),
            epochs=1,
            seed=0,
            x_star=x_star,
            x0=np.ones(50),
        )
        reports[tau] = verify_lyapunov_descent(cfg, x_star, trials=200)

    elapsed = time.perf_counter() - start
    ok = all(r.passed for r in reports.values()) and elapsed < 60.0
    detail = " ".join(
        f"tau={tau}: {r.violations}/{r.steps_checked} violations beyond 3 SE"
        f" (worst margin {r.worst_margin:.2e})"
        for tau, r in reports.items()
    )
    _criterion("fundamental-inequality", ok, f"{detail} in {elapsed:.1f}s (budget 60s)")


def test_linear_rate_envelope_over_500_seeds():
    """Mean squared distance stays under the geometric envelope."""
    start = time.perf_counter()
    a, b, x_star = gen_diag_dominant(20, bandwidth=3, seed=0, ratio=0.75)
    op = JacobiOp(a, b)
    norm = op.iter_matrix_norm
    assert 0.45 <= norm <= 0.55, f"fixture drifted: measured norm {norm:.4f}"
    mu = 1.0 - norm
    cfg = SimRun(
        operator=op,
        distribution=SamplingDistribution.uniform(20),
        step_policy=StepSizePolicy.linear_rate(20, 1 / 20, 2, mu, beta=0.5),
        delay_policy=DelayPolicy.adversarial_max(2),
        epochs=40,
        seed=0,
        x_star=x_star,
        x0=np.ones(20),
    )
    report = verify_linear_rate(cfg, mu, beta=0.5, num_seeds=500)
    elapsed = time.perf_counter() - start
    ok = report.passed and report.max_ratio <= 1.05 and elapsed < 300.0
    _criterion(
        "linear-rate", ok,
        f"||M||_2={norm:.3f}, worst mean/envelope ratio {report.max_ratio:.4f}"
        f" <= 1.05 over {report.num_seeds} seeds, rate base"
        f" {report.rate_base:.6f}, in {elapsed:.1f}s (budget 300s)",
    )


def test_quasi_contraction_modulus_bound():
    """Forward-backward on a strongly convex quadratic plus l1 contracts."""
    a, b, _ = gen_diag_dominant(30)
    lmax = float(np.linalg.eigvalsh(a.to_dense()).max())
    op = FbsL1QuadraticOp(a, b, lam=0.1, gamma=1.0 / lmax)
    target = op.solve()
    modulus = quasi_contraction_modulus(op.gamma, op.mu, op.L)
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(10_000):
        x = target + rng.normal(size=target.size)
        num = float(np.linalg.norm(op.apply_t(x) - target))
        den = float(np.linalg.norm(x - target))
        worst = max(worst, num / den)
    ok = worst <= modulus + 1e-9
    _criterion(
        "quasi-contraction", ok,
        f"worst factor {worst:.9f} <= modulus {modulus:.9f} + 1e-9"
        f" over 10000 points",
    )


def test_all_operators_pass_cocoercivity_margins():
    """Every shipped operator is half-cocoercive; the control is not."""
    rng = np.random.default_rng(3)
    a, b, _ = gen_diag_dominant(30)
    lmax = float(np.linalg.eigvalsh(a.to_dense()).max())
    locals4 = [
        IsoQuadratic(w, c)
        for w, c in zip(rng.uniform(0.5, 3.0, 4), rng.normal(size=(4, 2)))
    ]
    graph3 = gen_graph("path", 3)
    smooth3 = []
    for _ in range(3):
        root = rng.normal(size=(2, 2))
        smooth3.append(
            LocalSmooth.quadratic(root @ root.T + 0.5 * np.eye(2), rng.normal(size=2))
        )
    dense = rng.normal(size=(6, 6))
    dense = dense @ dense.T + np.eye(6)

    ops = {
        "jacobi": JacobiOp(a, b),
        "fbs-logistic": FbsL1LogisticOp(
            gen_logistic(80, 40, density=0.3, seed=5), lam=1e-3
        ),
        "fbs-quadratic": FbsL1QuadraticOp(a, b, lam=0.1, gamma=1.0 / lmax),
        "dual-split": AdmmDualOp(
            AdmmSide(L1Norm(0.5), 1.0),
            AdmmSide(QuadraticForm(np.eye(5), np.arange(5.0)), -1.0),
            dual_dim=5,
            gamma=1.0,
        ),
        "consensus": ConsensusAdmmOp(locals4, dim=2, gamma=0.8),
        "decentral-agent": DecentralAdmmOp(
            graph3, locals4[:3], local_dim=2, gamma=0.6, mode="agent"
        ),
        "decentral-edge": DecentralAdmmOp(
            graph3, locals4[:3], local_dim=2, gamma=0.6, mode="edge"
        ),
        "projection": PrsFeasibilityOp(
            [
                HalfspaceProj(np.array([1.0, -2.0, 0.0]), 0.5),
                HalfspaceProj(np.array([0.5, 1.0, 1.0]), 1.0),
                BoxProj(-np.ones(3), np.ones(3)),
            ],
            dim=3,
        ),
        "gradient": GradOp(SparseMatrixCSR.from_dense(dense), np.arange(6.0)),
        "decentral-grad": DecentralGradOp(graph3, smooth3, local_dim=2, gamma=0.7),
    }
    failed = [
        name
        for name, op in ops.items()
        if not check_cocoercivity(op, samples=10_000, rng=np.random.default_rng(7)).passed
    ]
    control = check_cocoercivity(
        ExpansiveControlOp(8), samples=10_000, rng=np.random.default_rng(7)
    )
    ok = not failed and not control.passed
    _criterion(
        "cocoercivity", ok,
        f"{len(ops) - len(failed)}/{len(ops)} operators pass 10000-sample"
        f" margins{(' (failed: ' + ', '.join(failed) + ')') if failed else ''};"
        f" expansive control rejected with {control.violations} violations",
    )


def test_l1_logistic_matches_serial_prox_gradient(tmp_path):
    """Delayed block runs land on the serial proximal-gradient objective."""
    start = time.perf_counter()
    lam = 1e-4
    rng = np.random.default_rng(11)
    q, _ = np.linalg.qr(rng.normal(size=(200, 100)))
    labels = rng.choice([-1.0, 1.0], size=200)
    path = tmp_path / "acceptance.svm"
    write_libsvm(LabeledDataset(SparseMatrixCSR.from_dense(q), labels), path)
    ds = read_libsvm(path, num_features=100)
    a_dense = ds.samples.to_dense()
    assert np.array_equal(a_dense, q), "format round trip must be exact"

    def objective(x):
        margins = ds.labels * (a_dense @ x)
        loss = float(np.logaddexp(0.0, -margins).sum()) / 200
        return loss + lam * float(np.abs(x).sum())

    # independent serial oracle: proximal gradient with the dense matrix
    lip = np.linalg.norm(a_dense, 2) ** 2 / (4 * 200)
    step = 1.0 / lip
    x = np.zeros(100)
    for _ in range(50_000):
        w = ds.labels * expit(-ds.labels * (a_dense @ x))
        v = x + step * (a_dense.T @ w) / 200
        x_new = np.sign(v) * np.maximum(np.abs(v) - step * lam, 0.0)
        if np.max(np.abs(x_new - x)) < 1e-15:
            x = x_new
            break
        x = x_new
    f_oracle = objective(x)

    layout = partition_blocks(100, 10)
    op = FbsL1LogisticOp(ds, lam=lam, layout=layout)
    cfg = SimRun(
        operator=op,
        distribution=SamplingDistribution.uniform(layout.m),
        step_policy=StepSizePolicy.fejer_safe(layout.m, 1 / layout.m, 2, c=0.99),
        delay_policy=DelayPolicy.uniform_random(2),
        epochs=500,
        seed=3,
        x0=np.zeros(100),
    )
    metrics = run_simulation(cfg)
    f_sim = metrics.rows[-1].objective
    rel = abs(f_sim - f_oracle) / abs(f_oracle)
    elapsed = time.perf_counter() - start
    ok = rel < 1e-6 and elapsed < 60.0
    _criterion(
        "l1-logistic", ok,
        f"relative objective gap {rel:.2e} < 1e-6 after 500 epochs"
        f" in {elapsed:.1f}s (budget 60s)",
    )


def _km_converge(op, alpha=0.5, iters=6000):
    z = np.zeros(op.layout.dim)
    for _ in range(iters):
        z = z - alpha * op.s_full(op.view_of(z))
    return op.recover(op.view_of(z))


def test_admm_variants_agree_with_centralized_oracle():
    """Consensus, decentralized, and edge splittings hit the closed form."""
    rng = np.random.default_rng(0)
    weights = rng.uniform(0.5, 3.0, size=5)
    centers = rng.normal(size=(5, 2))
    locals5 = [IsoQuadratic(weights[i], centers[i]) for i in range(5)]
    x_star = (weights[:, None] * centers).sum(axis=0) / weights.sum()

    cons_err = float(np.abs(
        _km_converge(ConsensusAdmmOp(locals5, dim=2, gamma=0.8)) - x_star
    ).max())
    graph_errs = {}
    for kind in ("path", "star"):
        op = DecentralAdmmOp(
            gen_graph(kind, 5), locals5, local_dim=2, gamma=0.5, mode="agent"
        )
        graph_errs[kind] = float(np.abs(_km_converge(op, iters=20_000) - x_star).max())

    locals2 = locals5[:2]
    edge = DecentralAdmmOp(
        gen_graph("path", 2), locals2, local_dim=2, gamma=0.6, mode="edge"
    )
    cons2 = ConsensusAdmmOp(locals2, dim=2, gamma=0.6)
    edge_gap = float(np.abs(
        _km_converge(edge, iters=20_000) - _km_converge(cons2, iters=20_000)
    ).max())

    ok = (
        cons_err < 1e-6
        and all(e < 1e-6 for e in graph_errs.values())
        and edge_gap < 1e-8
    )
    _criterion(
        "admm-oracle", ok,
        f"consensus err {cons_err:.1e} < 1e-6; path {graph_errs['path']:.1e},"
        f" star {graph_errs['star']:.1e} < 1e-6; edge-vs-consensus gap"
        f" {edge_gap:.1e} < 1e-8",
    )


def test_projection_splitting_recovers_feasible_point():
    """Reflected projections find the intersection; the mean cache stays true."""
    rng = np.random.default_rng(21)
    sets = [HalfspaceProj(rng.normal(size=4), off) for off in (1.0, 0.5, 0.8)]
    op = PrsFeasibilityOp(sets, dim=4)
    dist = SamplingDistribution.uniform(3)
    z = rng.normal(size=12) * 3.0
    zbar = op.init_caches(z)["zbar"]
    worst_drift = 0.0
    for _ in range(4000):
        i = int(rng.integers(3))
        view = ArrayView(z, {"zbar": zbar})
        z_new = async_block_update(op, z, view, i, 0.4, dist)
        delta = z_new[op.layout.slice_of(i)] - z[op.layout.slice_of(i)]
        zbar = zbar + op.cache_deltas(i, view, delta)["zbar"]
        z = z_new
        drift = float(np.abs(zbar - z.reshape(3, 4).mean(axis=0)).max())
        worst_drift = max(worst_drift, drift)
    candidate = op.recover(ArrayView(z, {"zbar": zbar}))
    violation = op.max_violation(candidate)
    ok = violation < 1e-8 and worst_drift < 1e-10
    _criterion(
        "feasibility-recovery", ok,
        f"max constraint violation {violation:.1e} < 1e-8; worst running-mean"
        f" drift {worst_drift:.1e} < 1e-10 over 4000 updates",
    )


def _ticket_stress(total=1_000_000, num_threads=4, num_blocks=8):
    """Free-running commit race; returns (exact, torn_reads)."""
    state = SharedState(
        np.zeros(num_blocks), BlockLayout.scalar(num_blocks), scheme="atomic_scalar"
    )
    tickets = itertools.count()
    tallies = [np.zeros(num_blocks) for _ in range(num_threads)]
    stop = threading.Event()
    torn = []

    def worker(j):
        one = np.ones(1)
        while True:
            t = next(tickets)
            if t >= total:
                return
            i = t % num_blocks
            state.commit(i, one)
            tallies[j][i] += 1

    def checker():
        # commits only ever add integers, so any fractional snapshot
        # coordinate is a torn read
        while not stop.is_set():
            snap = state.snapshot_x()
            if not np.array_equal(snap, np.floor(snap)):
                torn.append(snap)

    threads = [threading.Thread(target=worker, args=(j,)) for j in range(num_threads)]
    chk = threading.Thread(target=checker)
    chk.start()
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    stop.set()
    chk.join()
    x = state.current_x()
    exact = x.sum() == total and np.array_equal(x, sum(tallies))
    return exact, len(torn)


def _dual_copy_checksum(width=4096, commits=20_000):
    """Zero-sum commits; any mixed-version read breaks the block checksum."""
    state = SharedState(
        np.zeros(width), BlockLayout.uniform(width, 1), scheme="dual_copy"
    )
    delta = np.concatenate([np.ones(width // 2), -np.ones(width // 2)])
    bad = []
    reads = [0, 0]
    done = threading.Event()

    def writer():
        for _ in range(commits):
            state.commit(0, delta)
        done.set()

    def reader(j):
        while not done.is_set():
            block = state.read_block(0)
            half = block[: width // 2]
            if float(block.sum()) != 0.0 or half.min() != half.max():
                bad.append(block)
            reads[j] += 1

    threads = [threading.Thread(target=writer)] + [
        threading.Thread(target=reader, args=(j,)) for j in range(2)
    ]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    final = state.current_x()
    settled = final[0] == commits and final[-1] == -commits
    return settled, len(bad), sum(reads)


def test_engine_safety_under_contention():
    """Counters exact, reads untorn, caches drift-free, runs all converge."""
    old = sys.getswitchinterval()
    sys.setswitchinterval(1e-4)
    try:
        exact, torn = _ticket_stress()
        settled, bad_reads, total_reads = _dual_copy_checksum()
    finally:
        sys.setswitchinterval(old)

    ds = gen_logistic(80, 40, density=0.3, seed=5)
    fbs = FbsL1LogisticOp(ds, lam=1e-3, layout=partition_blocks(40, 5))
    drift_run = run_engine(EngineConfig(
        num_agents=4,
        epochs=60,
        distribution=SamplingDistribution.uniform(8),
        step_policy=StepSizePolicy.constant(0.8),
        scheme="atomic_scalar",
        seed=1,
        x0=np.zeros(40),
    ), fbs)
    drift = drift_run.summary["cache_drift"]["Ax"]

    a, b, x_star = gen_diag_dominant(20, bandwidth=3, seed=0)
    jac = JacobiOp(a, b)
    eta = fejer_safe_step(20, 1 / 20, 8, c=0.9)
    converged = 0
    for seed in range(100):
        metrics = run_engine(EngineConfig(
            num_agents=4,
            epochs=250,
            distribution=SamplingDistribution.uniform(20),
            step_policy=StepSizePolicy.constant(eta),
            seed=seed,
            x0=np.ones(20),
            x_star=x_star,
        ), jac)
        if metrics.summary["final_residual"] < 1e-6:
            converged += 1

    ok = (
        exact
        and torn == 0
        and settled
        and bad_reads == 0
        and drift < 1e-8
        and converged == 100
    )
    _criterion(
        "engine-safety", ok,
        f"1e6-commit counters exact={exact}, torn snapshots {torn},"
        f" dual-copy checksum failures {bad_reads}/{total_reads} reads,"
        f" cache drift {drift:.1e} < 1e-8, contended runs {converged}/100"
        f" below 1e-6",
    )


def test_inconsistent_reads_reach_ghost_states():
    """Skipping an interim update yields a state no consistent lag can."""
    hist = IterateHistory(np.zeros(4), tau=2, layout=BlockLayout.scalar(4))
    hist.advance(0, np.array([1.0]))
    hist.advance(3, np.array([2.0]))

    # J = {0} sees the second update but not the first
    ghost = hist.reconstruct_read((0,)).vector()
    reached = np.array_equal(ghost, [0.0, 0.0, 0.0, 2.0])

    past = {tuple(hist.iterate_at(d)) for d in range(3)}  # every lag d in 0..tau
    consistent_hits_ghost = tuple(ghost) in past
    consistent_all_real = all(
        tuple(hist.reconstruct_read(tuple(range(2 - age, 2))).vector()) in past
        for age in range(3)
    )

    ok = reached and not consistent_hits_ghost and consistent_all_real
    _criterion(
        "inconsistent-read", ok,
        f"ghost (0,0,0,2) reached={reached}; unreachable by any consistent"
        f" lag d in 0..2={not consistent_hits_ghost}; consistent reads all"
        f" real={consistent_all_real}",
    )
