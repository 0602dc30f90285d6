"""Command-line harness: `sync gen|solve|certify|sweep|flow|selftest`.

Commands are pure functions of (config, base seed); sweep cells run in a
worker pool capped by the SYNC_THREADS environment variable, with
aggregation ordered by cell index.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import certificate, graphs, instance, kuramoto, selftest, solver, stiefel
from .errors import NumericalError, ParameterError, ParseError

SWEEP_HEADER = "sigma,p,corr_mean,rank_r_frac,rank_def_frac,time_mean_s,iters_mean,certified_frac"
FLOW_HEADER = "trial,termination,final_sync_error,time_to_sync,steps"


def derive_seed(base: int, *parts) -> int:
    """Stable 64-bit seed mix of a base seed and index parts."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(base)).encode())
    for part in parts:
        h.update(b"|")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class SweepRow:
    sigma: float
    p: int
    corr_mean: float
    rank_r_frac: float
    rank_def_frac: float
    time_mean_s: float
    iters_mean: float
    certified_frac: float

    def csv_line(self) -> str:
        return ",".join([repr(float(self.sigma)), str(int(self.p)),
                         repr(float(self.corr_mean)), repr(float(self.rank_r_frac)),
                         repr(float(self.rank_def_frac)), repr(float(self.time_mean_s)),
                         repr(float(self.iters_mean)), repr(float(self.certified_frac))])

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "p": self.p, "corr_mean": self.corr_mean,
                "rank_r_frac": self.rank_r_frac, "rank_def_frac": self.rank_def_frac,
                "time_mean_s": self.time_mean_s, "iters_mean": self.iters_mean,
                "certified_frac": self.certified_frac}


# --------------------------------------------------------------------------
# Config plumbing


def load_config(args) -> dict:
    cfg = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    for key in ("seed", "trials", "out", "r", "field", "sigma", "p", "format",
                "input", "point", "init", "charts", "t_max", "dt"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def graph_from_config(cfg: dict) -> graphs.Graph:
    gspec = dict(cfg.get("graph") or {})
    kind = gspec.pop("kind", None)
    if kind is None:
        raise ParameterError("config is missing graph.kind")
    seed = gspec.pop("seed", derive_seed(int(cfg.get("seed", 0)), "graph"))
    return graphs.build_graph(kind, seed=seed, **gspec)


def solver_options(cfg: dict, seed: int) -> solver.SolveOptions:
    opts = dict(cfg.get("solver") or {})
    opts["seed"] = seed
    return solver.SolveOptions(**opts)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def emit_json(doc: dict, out=None) -> None:
    text = json.dumps(doc, indent=2, default=_json_default)
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")
    else:
        print(text)


# --------------------------------------------------------------------------
# Commands


def _build_problem(cfg: dict):
    """Instance from a file or generated from config. Returns
    (lhat, inst_or_None, graph, r, field)."""
    if "input" in cfg:
        fmt = cfg.get("format", "edge_measurements")
        graph, measurements, r, field = instance.parse_instance(cfg["input"], fmt)
        lhat = instance.connection_laplacian_from_measurements(graph, measurements, r)
        return lhat, None, graph, r, field
    graph = graph_from_config(cfg)
    r = int(cfg.get("r", 1))
    field = cfg.get("field", "real")
    sigma = float(cfg.get("sigma", 0.0))
    inst = instance.random_instance(graph, r, field, sigma,
                                    seed=derive_seed(int(cfg.get("seed", 0)), "instance"))
    return instance.connection_laplacian(inst), inst, graph, r, field


def cmd_gen(cfg: dict) -> int:
    lhat, inst, graph, r, field = _build_problem(cfg)
    out = cfg.get("out", "instance.txt")
    if inst is None:
        raise ParameterError("gen requires a generated instance, not an input file")
    instance.write_instance(out, graph, inst.measurements, r, field)
    print(f"wrote {out}: n={graph.n}, edges={graph.num_edges}, r={r}, field={field}")
    return 0


def cmd_solve(cfg: dict) -> int:
    lhat, inst, graph, r, field = _build_problem(cfg)
    p = int(cfg.get("p", r + 2))
    opts = solver_options(cfg, seed=derive_seed(int(cfg.get("seed", 0)), "init"))
    init = cfg.get("init", "random")
    t0 = time.perf_counter()
    report = solver.solve(lhat, p=p, init=init, options=opts)
    solve_time = time.perf_counter() - t0
    cert = certificate.certify(lhat, report.Y)

    doc = {
        "solve": {
            "objective": report.objective,
            "grad_norm": report.grad_norm,
            "min_hess_eig": report.min_hess_eig,
            "iterations": report.iterations,
            "status": report.status,
            "solve_time_s": solve_time,
        },
        "certificate": cert.to_dict(),
    }
    if inst is not None:
        raw, norm = certificate.correlation(inst.Z, report.Y)
        doc["solve"]["correlation_raw"] = raw
        doc["solve"]["correlation_normalized"] = norm
        summ = graphs.laplacian_summary(graph)
        doc["theory_bounds"] = certificate.theory_bounds(
            p, r, graph.n, summ.lambda2,
            instance.noise_operator_norm(inst.delta)).to_dict()
    if cfg.get("point_out"):
        np.save(cfg["point_out"], report.Y.data)
    emit_json(doc, cfg.get("out"))
    return {"soc_point": 0, "max_iters": 2, "numerical_failure": 3}[report.status]


def cmd_certify(cfg: dict) -> int:
    lhat, inst, graph, r, field = _build_problem(cfg)
    point = cfg.get("point", "spectral")
    if point == "spectral":
        p = int(cfg.get("p", r))
        Y = solver.spectral_init(lhat, p)
    else:
        data = np.load(point)
        p = data.shape[1]
        Y = stiefel.StiefelProductPoint(graph.n, r, p, data)
    cert = certificate.certify(lhat, Y)
    doc = {"certificate": cert.to_dict()}
    if inst is not None:
        raw, norm = certificate.correlation(inst.Z, Y)
        doc["correlation_raw"] = raw
        doc["correlation_normalized"] = norm
        summ = graphs.laplacian_summary(graph)
        doc["theory_bounds"] = certificate.theory_bounds(
            p, r, graph.n, summ.lambda2,
            instance.noise_operator_norm(inst.delta)).to_dict()
    emit_json(doc, cfg.get("out"))
    return 0


def _sweep_cell(payload: dict) -> SweepRow:
    """One (p, sigma) cell: `trials` independent solve+certify runs."""
    cfg = payload["cfg"]
    graph = graph_from_config(cfg)
    r = int(cfg.get("r", 1))
    field = cfg.get("field", "real")
    p = payload["p"]
    sigma = payload["sigma"]
    base = int(cfg.get("seed", 0))
    trials = int(cfg.get("trials", 1))

    corr = np.full(trials, np.nan)
    rank_r = np.full(trials, np.nan)
    rank_def = np.full(trials, np.nan)
    times = np.full(trials, np.nan)
    iters = np.full(trials, np.nan)
    certified = np.full(trials, np.nan)
    for trial in range(trials):
        seed = derive_seed(base, payload["p_idx"], payload["s_idx"], trial)
        try:
            inst = instance.random_instance(graph, r, field, sigma, seed=seed)
            lhat = instance.connection_laplacian(inst)
            opts = solver_options(cfg, seed=derive_seed(seed, "init"))
            t0 = time.perf_counter()
            report = solver.solve(lhat, p=p, options=opts)
            times[trial] = time.perf_counter() - t0
            cert = certificate.certify(lhat, report.Y)
            _, corr[trial] = certificate.correlation(inst.Z, report.Y)
            rank_r[trial] = 1.0 if cert.numerical_rank == r else 0.0
            rank_def[trial] = 1.0 if cert.numerical_rank < p else 0.0
            iters[trial] = report.iterations
            certified[trial] = 1.0 if cert.verdict == certificate.VERDICT_CERTIFIED else 0.0
        except (NumericalError, ParameterError):
            pass  # cell keeps its NaN entries

    def mean(x):
        return float(np.nanmean(x)) if np.any(np.isfinite(x)) else float("nan")

    return SweepRow(sigma=sigma, p=p, corr_mean=mean(corr),
                    rank_r_frac=mean(rank_r), rank_def_frac=mean(rank_def),
                    time_mean_s=mean(times), iters_mean=mean(iters),
                    certified_frac=mean(certified))


def run_sweep(cfg: dict) -> list[SweepRow]:
    p_list = cfg.get("p", [])
    sigma_list = cfg.get("sigma", [])
    if np.isscalar(p_list):
        p_list = [p_list]
    if np.isscalar(sigma_list):
        sigma_list = [sigma_list]
    if not p_list or not sigma_list:
        raise ParameterError("sweep needs non-empty 'p' and 'sigma' lists")
    payloads = [{"cfg": cfg, "p": int(p), "sigma": float(s),
                 "p_idx": pi, "s_idx": si}
                for pi, p in enumerate(p_list)
                for si, s in enumerate(sigma_list)]
    workers = min(len(payloads), os.cpu_count() or 1)
    cap = os.environ.get("SYNC_THREADS")
    if cap:
        workers = min(workers, max(1, int(cap)))
    if workers <= 1:
        return [_sweep_cell(pl) for pl in payloads]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_cell, payloads))


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SWEEP_HEADER + "\n")
        for row in rows:
            fh.write(row.csv_line() + "\n")


def cmd_sweep(cfg: dict) -> int:
    rows = run_sweep(cfg)
    out = cfg.get("out", "sweep.csv")
    write_sweep_csv(out, rows)
    print(f"wrote {out} ({len(rows)} rows)")
    if cfg.get("charts"):
        from .plotting import sweep_charts
        prefix = os.path.splitext(out)[0]
        for path in sweep_charts([r.to_dict() for r in rows], prefix):
            print(f"wrote {path}")
    return 0


def run_flow(cfg: dict) -> list[dict]:
    graph = graph_from_config(cfg)
    r = int(cfg.get("r", 1))
    p = int(cfg.get("p", r + 2))
    field = cfg.get("field", "real")
    trials = int(cfg.get("trials", 1))
    base = int(cfg.get("seed", 0))
    init = cfg.get("init", "random")
    dt = cfg.get("dt")
    t_max = float(cfg.get("t_max", 1000.0))

    results = []
    for trial in range(trials):
        if isinstance(init, dict) and "twisted" in init:
            if r != 1:
                raise ParameterError("twisted init requires r = 1")
            Y0 = kuramoto.twisted_state(graph.n, int(init["twisted"]), p)
        elif init == "random":
            Y0 = stiefel.random_point(graph.n, r, p, field,
                                      seed=derive_seed(base, "flow", trial))
        else:
            raise ParameterError(f"unknown flow init {init!r}")
        report = kuramoto.integrate_flow(graph, Y0, dt=dt, t_max=t_max)
        final_t, final_err, _ = report.samples[-1]
        results.append({
            "trial": trial,
            "termination": report.termination,
            "final_sync_error": final_err,
            "time_to_sync": final_t if report.termination == kuramoto.TERM_SYNCHRONIZED
            else float("nan"),
            "steps": report.steps,
            "report": report,
        })
    return results


def cmd_flow(cfg: dict) -> int:
    results = run_flow(cfg)
    out = cfg.get("out", "flow.csv")
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(FLOW_HEADER + "\n")
        for res in results:
            fh.write(f"{res['trial']},{res['termination']},"
                     f"{res['final_sync_error']!r},{res['time_to_sync']!r},"
                     f"{res['steps']}\n")
    print(f"wrote {out} ({len(results)} trials)")
    if cfg.get("trajectory_out") and len(results) == 1:
        kuramoto.write_trajectory_csv(cfg["trajectory_out"], results[0]["report"])
        print(f"wrote {cfg['trajectory_out']}")
    return 0


def cmd_selftest(cfg: dict) -> int:
    failures = selftest.run_selftest()
    print(f"{'FAILED' if failures else 'OK'}: "
          f"{len(selftest.CHECKS) - failures}/{len(selftest.CHECKS)} checks passed")
    return 1 if failures else 0


# --------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sync",
        description="Group synchronization on graphs via low-rank Stiefel relaxation")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON config file")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--out")
        return cmd

    gen = add("gen", "generate a synthetic instance file")
    gen.add_argument("--r", type=int)
    gen.add_argument("--field", choices=["real", "complex"])
    gen.add_argument("--sigma", type=float)

    slv = add("solve", "solve one instance and certify the result")
    slv.add_argument("--r", type=int)
    slv.add_argument("--field", choices=["real", "complex"])
    slv.add_argument("--sigma", type=float)
    slv.add_argument("--p", type=int)
    slv.add_argument("--input", help="instance file to load instead of generating")
    slv.add_argument("--format", choices=["edge_measurements", "g2o_2d"])
    slv.add_argument("--init", help="random | spectral")

    crt = add("certify", "certify a candidate point for an instance")
    crt.add_argument("--r", type=int)
    crt.add_argument("--p", type=int)
    crt.add_argument("--sigma", type=float)
    crt.add_argument("--input")
    crt.add_argument("--format", choices=["edge_measurements", "g2o_2d"])
    crt.add_argument("--point", help="npy file with the stacked point, or 'spectral'")

    swp = add("sweep", "factorial (p, sigma) experiment sweep to CSV + SVG")
    swp.add_argument("--trials", type=int)
    swp.add_argument("--charts", action="store_true", default=None)

    flw = add("flow", "Kuramoto gradient-flow trials to CSV")
    flw.add_argument("--trials", type=int)
    flw.add_argument("--t-max", dest="t_max", type=float)
    flw.add_argument("--dt", type=float)

    add("selftest", "run the embedded invariant checks")
    return parser


COMMANDS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "certify": cmd_certify,
    "sweep": cmd_sweep,
    "flow": cmd_flow,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except (ParameterError, ParseError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
