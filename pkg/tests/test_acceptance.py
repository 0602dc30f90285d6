"""Acceptance suite: one test per criterion, executed in order.

Each test ends with a single `criterion N PASS` line summarizing the
measured quantities (visible with -s or on failure). SOC points produced by
criteria 1-5 are accumulated for the dual-certificate consistency check (6).
"""
import json

import numpy as np
from conftest import identity_measurements

from stiefelsync import certificate, cli, graphs, instance, kuramoto, solver, stiefel
from stiefelsync.kuramoto import twisted_state
from stiefelsync.solver import SolveOptions
from stiefelsync.stiefel import StiefelProductPoint

# (s_min_eig, numerical_rank, p, ||Lhat||_op) for every SOC point found.
SOC_RECORDS = []


def test_criterion_01_noiseless_benign_landscape():
    """Circulant n=100 deg 6, r=2, p=4: 50 random inits all reach the
    certified global optimum with normalized correlation 1."""
    g = graphs.build_graph("circulant", n=100, degree=6)
    inst = instance.random_instance(g, r=2, sigma=0.0, seed=1)
    lhat = instance.connection_laplacian(inst)
    opn = lhat.opnorm()
    successes = 0
    worst_corr = 1.0
    for k in range(50):
        report = solver.solve(lhat, p=4, options=SolveOptions(seed=1000 + k))
        cert = certificate.certify(lhat, report.Y, opnorm=opn)
        _, corr = certificate.correlation(inst.Z, report.Y)
        worst_corr = min(worst_corr, corr)
        SOC_RECORDS.append((cert.s_min_eig, cert.numerical_rank, 4, opn))
        if (report.status == "soc_point" and corr >= 1 - 1e-9
                and cert.verdict == certificate.VERDICT_CERTIFIED):
            successes += 1
    assert successes == 50, f"only {successes}/50 runs certified with corr 1"
    print(f"criterion 1 PASS: 50/50 certified_global, "
          f"worst normalized correlation {worst_corr:.2e}")


def test_criterion_02_tightness_below_p_r_plus_2():
    """C20, r=1: a spurious certified SOC point exists at p=2 (twisted state),
    while p=3 random inits always reach the certified global optimum."""
    g = graphs.build_graph("cycle", n=20)
    lhat = instance.connection_laplacian_from_measurements(
        g, identity_measurements(g, 1), 1)
    opn = lhat.opnorm()
    Z = np.ones((20, 1, 1))

    # p = 2: the twisted state is a stable spurious SOC point.
    report = solver.solve(lhat, init=twisted_state(20, 1, 2),
                          options=SolveOptions(seed=2))
    assert report.status == "soc_point"
    cert = certificate.certify(lhat, report.Y, opnorm=opn)
    _, corr = certificate.correlation(Z, report.Y)
    assert corr < 0.9, f"twisted state correlation {corr}"
    assert cert.s_min_eig < 0
    assert cert.verdict == certificate.VERDICT_SOC_NOT_CERTIFIED
    SOC_RECORDS.append((cert.s_min_eig, cert.numerical_rank, 2, opn))

    # p = 3: 50/50 certified global.
    successes = 0
    for k in range(50):
        rep = solver.solve(lhat, p=3, options=SolveOptions(seed=2000 + k))
        c = certificate.certify(lhat, rep.Y, opnorm=opn)
        SOC_RECORDS.append((c.s_min_eig, c.numerical_rank, 3, opn))
        if rep.status == "soc_point" and c.verdict == certificate.VERDICT_CERTIFIED:
            successes += 1
    assert successes == 50, f"only {successes}/50 certified at p=3"
    print(f"criterion 2 PASS: spurious SOC point at p=2 "
          f"(corr {corr:.3f}, s_min {cert.s_min_eig:.2e}); 50/50 certified at p=3")


def test_criterion_03_second_moment_identity():
    """Empirical E[V_i V_j*] over 1e5 draws matches the closed form at five
    base points spanning both fields."""
    cases = [("real", 1, 2), ("real", 2, 4), ("real", 2, 6),
             ("complex", 1, 3), ("complex", 2, 5)]
    N = 100_000
    worst_rel = 0.0
    for case_idx, (field, r, p) in enumerate(cases):
        Y = stiefel.random_point(2, r, p, field, seed=30 + case_idx)
        Yi, Yj = Y.blocks[0], Y.blocks[1]
        rng = np.random.default_rng(300 + case_idx)
        # Vectorized draws: G has shape (N, r, p).
        G = rng.standard_normal((N, r, p))
        if field == "complex":
            G = (G + 1j * rng.standard_normal((N, r, p))) / np.sqrt(2)

        def tangent_at(Yb):
            if field == "real":
                return G - np.einsum("ap,Nbp,bq->Naq", Yb, G, Yb)
            proj = np.einsum("Nap,bp,bq->Naq", G, np.conj(Yb), Yb)
            skew = np.einsum("Nap,bp->Nab", G, np.conj(Yb)) \
                - np.einsum("ap,Nbp->Nab", Yb, np.conj(G))
            return 2 * (G - proj) + np.einsum("Nab,bp->Nap", skew, Yb)

        Vi, Vj = tangent_at(Yi), tangent_at(Yj)
        prods = np.einsum("Nap,Nbp->Nab", Vi, np.conj(Vj))
        mean = prods.mean(axis=0)
        se = prods.std(axis=0) / np.sqrt(N)
        expected = stiefel.tangent_second_moment(Yi, Yj, field)
        dev = np.abs(mean - expected)
        assert np.all(dev <= 3 * np.abs(se) + 1e-12), \
            f"{field} r={r} p={p}: max deviation {dev.max():.3e} vs 3 SE"
        rel = np.linalg.norm(mean - expected) / np.linalg.norm(expected)
        worst_rel = max(worst_rel, rel)
        assert rel < 0.02, f"{field} r={r} p={p}: relative error {rel:.3f}"
    print(f"criterion 3 PASS: 5 base points within 3 SE entrywise, "
          f"worst relative Frobenius error {worst_rel:.4f}")


# Shared between criteria 4 and 5: (raw_corr, rank, bounds, status) per run.
ER_RUNS = []


def test_criterion_04_thm_correlation_bound():
    """20 random ER instances (n=50, expected degree 10, r=2, p=6): every SOC
    point's raw correlation meets the closed-form lower bound."""
    sigmas = [0.05, 0.1, 0.2]
    n, r, p = 50, 2, 6
    q = 10 / (n - 1)
    violations = 0
    for k in range(20):
        g = graphs.build_graph("erdos_renyi", n=n, q=q, seed=400 + k)
        assert graphs.connectivity(g), f"ER draw {k} disconnected; adjust seeds"
        sigma = sigmas[k % len(sigmas)]
        inst = instance.random_instance(g, r=r, sigma=sigma, seed=500 + k)
        lhat = instance.connection_laplacian(inst)
        opn = lhat.opnorm()
        report = solver.solve(lhat, p=p, options=SolveOptions(seed=600 + k))
        assert report.status == "soc_point", f"run {k}: status {report.status}"
        cert = certificate.certify(lhat, report.Y, opnorm=opn)
        raw, _ = certificate.correlation(inst.Z, report.Y)
        summ = graphs.laplacian_summary(g)
        bounds = certificate.theory_bounds(
            p, r, n, summ.lambda2, instance.noise_operator_norm(inst.delta))
        SOC_RECORDS.append((cert.s_min_eig, cert.numerical_rank, p, opn))
        ER_RUNS.append((raw, cert.numerical_rank, bounds))
        if raw < bounds.thm4_corr_lower:
            violations += 1
    assert violations == 0, f"{violations} correlation-bound violations"
    print(f"criterion 4 PASS: 20/20 SOC points meet the correlation lower bound "
          f"(sigma cycling {sigmas})")


def test_criterion_05_thm_rank_bound():
    """Same 20 runs: every SOC point's numerical rank is within the
    closed-form rank bound."""
    assert len(ER_RUNS) == 20, "criterion 4 must produce the shared runs first"
    violations = sum(1 for _, rank, bounds in ER_RUNS
                     if rank > np.ceil(bounds.thm2_rank_bound))
    assert violations == 0, f"{violations} rank-bound violations"
    worst = max(rank / np.ceil(bounds.thm2_rank_bound)
                for _, rank, bounds in ER_RUNS)
    print(f"criterion 5 PASS: 20/20 ranks within ceil(rank bound), "
          f"worst rank/bound ratio {worst:.3f}")


def test_criterion_06_dual_certificate_consistency():
    """Every rank-deficient SOC point collected above has a PSD dual
    certificate within slack -1e-6 * ||Lhat||."""
    assert SOC_RECORDS, "criteria 1-5 must run first"
    deficient = [(s, rank, p, opn) for s, rank, p, opn in SOC_RECORDS if rank < p]
    assert deficient, "no rank-deficient SOC points collected"
    violations = [s for s, _, _, opn in deficient if s < -1e-6 * opn]
    assert not violations, f"{len(violations)} PSD violations: {violations[:3]}"
    worst = min(s / opn for s, _, _, opn in deficient)
    print(f"criterion 6 PASS: {len(deficient)} rank-deficient SOC points all PSD "
          f"(worst s_min/||Lhat|| = {worst:.2e})")


def test_criterion_07_derivative_correctness():
    """20 random (instance, Y, V) triples: gradient and Hessian agree with
    finite differences; hess_vec is self-adjoint."""
    rng = np.random.default_rng(7)
    worst_g, worst_h, worst_adj = 0.0, 0.0, 0.0
    for k in range(20):
        n = int(rng.integers(4, 9))
        r = int(rng.integers(1, 3))
        p = r + int(rng.integers(1, 4))
        assert n * r * p <= 200
        field = "complex" if k % 2 else "real"
        g = graphs.build_graph("erdos_renyi", n=n, q=0.6, seed=700 + k)
        inst = instance.random_instance(g, r=r, field=field, sigma=0.3, seed=800 + k)
        lhat = instance.connection_laplacian(inst)
        Y = stiefel.random_point(n, r, p, field, seed=900 + k)
        V = stiefel.random_tangent(Y, seed=1000 + k)
        V /= np.linalg.norm(V)

        h = 1e-6
        fd_g = (solver.objective(lhat, stiefel.retract(Y, V, h))
                - solver.objective(lhat, Y)) / h
        exact_g = np.vdot(solver.gradient(lhat, Y), V).real
        rel_g = abs(fd_g - exact_g) / max(1.0, abs(exact_g))
        worst_g = max(worst_g, rel_g)
        assert rel_g <= 1e-4, f"triple {k}: gradient FD error {rel_g:.2e}"

        h2 = 1e-4
        fd_h = (solver.objective(lhat, stiefel.retract(Y, V, h2))
                - 2 * solver.objective(lhat, Y)
                + solver.objective(lhat, stiefel.retract(Y, V, -h2))) / h2 ** 2
        exact_h = solver.hess_quadratic(lhat, Y, V)
        rel_h = abs(fd_h - exact_h) / max(1.0, abs(exact_h))
        worst_h = max(worst_h, rel_h)
        assert rel_h <= 1e-3, f"triple {k}: Hessian FD error {rel_h:.2e}"

        W = stiefel.random_tangent(Y, seed=1100 + k)
        W /= np.linalg.norm(W)
        lhs = np.vdot(solver.hess_vec(lhat, Y, V), W).real
        rhs = np.vdot(V, solver.hess_vec(lhat, Y, W)).real
        adj = abs(lhs - rhs) / max(1.0, abs(lhs))
        worst_adj = max(worst_adj, adj)
        assert adj <= 1e-10, f"triple {k}: adjointness error {adj:.2e}"
    print(f"criterion 7 PASS: 20 triples, worst errors grad {worst_g:.2e}, "
          f"hess {worst_h:.2e}, adjointness {worst_adj:.2e}")


def test_criterion_08_kuramoto_synchronization():
    """Random flows on C10 synchronize (real r=2 p=4 and complex r=1 p=2);
    the twisted state on C20 is a non-synchronized equilibrium."""
    g10 = graphs.build_graph("cycle", n=10)
    sync_real = sync_complex = 0
    for k in range(20):
        Y0 = stiefel.random_point(10, 2, 4, "real", seed=1200 + k)
        rep = kuramoto.integrate_flow(g10, Y0)
        if rep.termination == kuramoto.TERM_SYNCHRONIZED and rep.samples[-1][1] <= 1e-10:
            sync_real += 1
        Y0c = stiefel.random_point(10, 1, 2, "complex", seed=1300 + k)
        repc = kuramoto.integrate_flow(g10, Y0c)
        if repc.termination == kuramoto.TERM_SYNCHRONIZED and repc.samples[-1][1] <= 1e-10:
            sync_complex += 1
    assert sync_real == 20, f"only {sync_real}/20 real trajectories synchronized"
    assert sync_complex == 20, f"only {sync_complex}/20 complex trajectories synchronized"

    g20 = graphs.build_graph("cycle", n=20)
    rep = kuramoto.integrate_flow(g20, twisted_state(20, 1, 2))
    assert rep.termination == kuramoto.TERM_EQUILIBRIUM
    print("criterion 8 PASS: 20/20 real and 20/20 complex trajectories "
          "synchronized; twisted state stays a non-sync equilibrium")


def test_criterion_09_phase_transition_sweep():
    """Desk-scale noise sweep shows the phase transition: correlation decays
    monotonically and the rank-r property is lost no later than correlation."""
    sigmas = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4]
    cfg = {"graph": {"kind": "circulant", "n": 100, "degree": 10},
           "r": 2, "p": [4, 6], "sigma": sigmas, "trials": 10, "seed": 9}
    rows = cli.run_sweep(cfg)
    for p in (4, 6):
        series = sorted((row for row in rows if row.p == p), key=lambda r: r.sigma)
        corr = [row.corr_mean for row in series]
        rank_r = [row.rank_r_frac for row in series]
        assert abs(corr[0] - 1.0) < 1e-9, f"p={p}: sigma=0 corr {corr[0]}"
        inversions = sum(1 for a, b in zip(corr, corr[1:]) if b > a + 1e-3)
        assert inversions <= 1, f"p={p}: {inversions} correlation inversions"
        assert rank_r[0] == 1.0
        assert min(rank_r) < 0.5, f"p={p}: rank_r_frac never drops below 0.5"
        sigma_rank = next(s for s, f in zip(sigmas, rank_r) if f < 1.0)
        sigma_corr = next(s for s, c in zip(sigmas, corr) if c < 0.95)
        assert sigma_rank <= sigma_corr, \
            f"p={p}: rank drop at sigma={sigma_rank} after corr drop at {sigma_corr}"
    print("criterion 9 PASS: phase transition reproduced for p=4 and p=6 "
          f"over sigma grid {sigmas}")


def test_criterion_10_determinism_and_formats(tmp_path, capsys):
    """Identical sweep configs give byte-identical CSVs (timing excluded);
    both file formats round-trip exactly."""
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "graph": {"kind": "cycle", "n": 15}, "r": 1, "p": [3],
        "sigma": [0.0, 0.3], "trials": 2, "seed": 10}))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["sweep", "--config", str(cfg_path), "--out", str(a)]) == 0
    assert cli.main(["sweep", "--config", str(cfg_path), "--out", str(b)]) == 0

    def strip_timing(text):
        rows = []
        for line in text.splitlines():
            parts = line.split(",")
            del parts[5]  # time_mean_s
            rows.append(",".join(parts))
        return rows

    assert strip_timing(a.read_text()) == strip_timing(b.read_text())

    # Edge-measurement round trip is exact.
    g = graphs.build_graph("erdos_renyi", n=8, q=0.5, seed=11)
    inst = instance.random_instance(g, r=2, sigma=0.0, seed=12)
    path = tmp_path / "inst.txt"
    instance.write_instance(path, g, inst.measurements, 2, "real")
    g2, meas2, r2, field2 = instance.parse_instance(path)
    assert (g2.edges, r2, field2) == (g.edges, 2, "real")
    for key, R in inst.measurements.items():
        assert np.array_equal(meas2[key], R)

    # g2o round trip through exact binary angles.
    g2o = tmp_path / "pose.g2o"
    angles = [0.0, 0.5, -0.25, 1.0]
    lines = [f"EDGE_SE2 {i} {i + 1} 0 0 {a} 1 0 0 1 0 1"
             for i, a in enumerate(angles)]
    g2o.write_text("\n".join(lines) + "\n")
    graph, meas, r, _ = instance.parse_instance(g2o, "g2o_2d")
    assert (graph.n, r) == (5, 2)
    for i, a in enumerate(angles):
        c, s = np.cos(a), np.sin(a)
        assert np.array_equal(meas[(i, i + 1)], np.array([[c, -s], [s, c]]))
    print("criterion 10 PASS: deterministic sweep CSV; both parsers round-trip")
