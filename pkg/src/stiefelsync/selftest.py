"""Embedded invariant checks runnable from the CLI (`sync selftest`).

Each check is a no-argument callable that raises AssertionError on failure.
All randomness is under fixed seeds so the suite is deterministic.
"""
from __future__ import annotations

import os
import tempfile
import warnings

import numpy as np

from . import certificate, graphs, instance, kuramoto, solver, stiefel


def _check_laplacians():
    g = graphs.build_graph("complete", n=3)
    L = graphs.laplacian(g)
    assert np.array_equal(L, np.array([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]]))
    summ = graphs.laplacian_summary(graphs.build_graph("complete", n=10))
    assert abs(summ.lambda2 - 10.0) < 1e-9
    assert summ.connected


def _check_projection():
    rng = np.random.default_rng(11)
    Y = stiefel.random_point(4, 2, 4, seed=1)
    W = rng.standard_normal(Y.data.shape)
    V = rng.standard_normal(Y.data.shape)
    PW = stiefel.project_tangent(Y, W)
    assert np.linalg.norm(stiefel.project_tangent(Y, PW) - PW) < 1e-11
    lhs = np.vdot(PW, V).real
    rhs = np.vdot(W, stiefel.project_tangent(Y, V)).real
    assert abs(lhs - rhs) < 1e-10 * max(1.0, abs(lhs))


def _check_retraction():
    Y = stiefel.random_point(3, 2, 4, seed=2)
    V = stiefel.random_tangent(Y, seed=3)
    h = 1e-5
    drift = np.linalg.norm((stiefel.retract(Y, V, h).data - Y.data) / h - V)
    assert drift <= 10 * h, f"retraction tangency drift {drift:.3e}"


def _check_second_moment():
    Y = stiefel.random_point(2, 1, 3, seed=4)
    rng = np.random.default_rng(5)
    acc = np.zeros((1, 1))
    N = 20000
    for _ in range(N):
        G = rng.standard_normal((1, 3))
        V = stiefel.tangent_from_gaussian(Y, G).reshape(2, 1, 3)
        acc += V[0] @ V[1].T
    expected = stiefel.tangent_second_moment(Y.blocks[0], Y.blocks[1], "real")
    err = np.abs(acc / N - expected).max()
    assert err < 0.1, f"second-moment Monte Carlo error {err:.3e}"


def _check_gradient_fd():
    g = graphs.build_graph("cycle", n=5)
    inst = instance.random_instance(g, r=1, sigma=0.1, seed=6)
    lhat = instance.connection_laplacian(inst)
    Y = stiefel.random_point(5, 1, 3, seed=7)
    V = stiefel.random_tangent(Y, seed=8)
    grad = solver.gradient(lhat, Y)
    h = 1e-6
    fd = (solver.objective(lhat, stiefel.retract(Y, V, h))
          - solver.objective(lhat, Y)) / h
    exact = np.vdot(grad, V).real
    assert abs(fd - exact) <= 1e-4 * max(1.0, abs(exact)), f"fd={fd}, exact={exact}"


def _check_trace_identity():
    Y = stiefel.random_point(3, 2, 5, seed=9)
    for i in range(3):
        for j in range(3):
            tr = np.trace(Y.blocks[i] @ Y.blocks[j].T)
            dist2 = np.linalg.norm(Y.blocks[i] - Y.blocks[j]) ** 2
            assert abs(tr + 0.5 * dist2 - 2) < 1e-12


def _check_error_identity():
    Z = instance.sample_ground_truth(6, 2, seed=10)
    Y = stiefel.random_point(6, 2, 4, seed=11)
    raw, _ = certificate.correlation(Z, Y)
    _, W = certificate.residual_decomposition(Z, Y)
    n, r = 6, 2
    assert abs(raw - (n * n * r - n * np.linalg.norm(W) ** 2)) < 1e-10 * n * n * r


def _check_noiseless_solve():
    g = graphs.build_graph("complete", n=4)
    inst = instance.random_instance(g, r=1, sigma=0.0, seed=12)
    lhat = instance.connection_laplacian(inst)
    report = solver.solve(lhat, p=3, options=solver.SolveOptions(seed=13))
    assert report.status == "soc_point"
    cert = certificate.certify(lhat, report.Y)
    assert cert.verdict == certificate.VERDICT_CERTIFIED
    _, norm_corr = certificate.correlation(inst.Z, report.Y)
    assert norm_corr > 1 - 1e-9


def _check_flow_equilibrium():
    g = graphs.build_graph("cycle", n=8)
    Y = kuramoto.twisted_state(8, 1, 2)
    rhs = kuramoto.flow_rhs(g, Y)
    assert np.linalg.norm(rhs) < 1e-12


def _check_parser_roundtrip():
    g = graphs.build_graph("cycle", n=5)
    inst = instance.random_instance(g, r=2, sigma=0.05, seed=14)
    fd, path = tempfile.mkstemp(suffix=".txt")
    os.close(fd)
    try:
        instance.write_instance(path, g, inst.measurements, 2, "real")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # noisy blocks are not orthogonal
            g2, meas2, r2, field2 = instance.parse_instance(path)
        assert (g2.n, r2, field2) == (5, 2, "real")
        for key, R in inst.measurements.items():
            assert np.abs(meas2[key] - R).max() < 1e-12
    finally:
        os.unlink(path)


CHECKS = [
    ("laplacians", _check_laplacians),
    ("tangent_projection", _check_projection),
    ("retraction_tangency", _check_retraction),
    ("tangent_second_moment", _check_second_moment),
    ("gradient_finite_difference", _check_gradient_fd),
    ("trace_identity", _check_trace_identity),
    ("error_identity", _check_error_identity),
    ("noiseless_solve_certified", _check_noiseless_solve),
    ("twisted_state_equilibrium", _check_flow_equilibrium),
    ("parser_roundtrip", _check_parser_roundtrip),
]


def run_selftest(checks=None, report=print) -> int:
    """Run all checks; returns the number of failures."""
    failures = 0
    for name, fn in (checks or CHECKS):
        try:
            fn()
        except Exception as exc:  # report and keep going
            failures += 1
            report(f"FAIL {name}: {exc}")
        else:
            report(f"PASS {name}")
    return failures
