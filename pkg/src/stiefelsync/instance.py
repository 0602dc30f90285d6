"""Synchronization instances: ground truth, noise, measurements, and the
graph connection Laplacian, plus file ingestion (edge-measurement and g2o 2D)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse

from .errors import NumericalError, ParameterError, ParseError
from .graphs import Graph
from .stiefel import orthonormal_rows

ASSEMBLY_TOL = 1e-12


@dataclass(frozen=True)
class BlockSymmetricMatrix:
    """Hermitian rn x rn matrix stored as sparse r x r blocks with i <= j.

    Block (j, i) is implicitly the conjugate transpose of block (i, j).
    Immutable; products go through a cached CSR matrix.
    """

    n: int
    r: int
    blocks: dict[tuple[int, int], np.ndarray]

    def __post_init__(self):
        for (i, j), B in self.blocks.items():
            if not (0 <= i <= j < self.n):
                raise ParameterError(f"block index ({i}, {j}) out of range")
            if B.shape != (self.r, self.r):
                raise ParameterError(f"block ({i}, {j}) has shape {B.shape}")
            if i == j:
                herm_err = np.abs(B - np.conj(B.T)).max() if B.size else 0.0
                if herm_err > 1e-9 * max(1.0, np.abs(B).max()):
                    raise ParameterError(f"diagonal block {i} not Hermitian")
            B.setflags(write=False)

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(B) for B in self.blocks.values())

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n * self.r, self.n * self.r)

    def block(self, i: int, j: int) -> np.ndarray:
        """Block (i, j) with the conjugate-transpose convention applied."""
        if i <= j:
            B = self.blocks.get((i, j))
            return B if B is not None else np.zeros((self.r, self.r))
        B = self.blocks.get((j, i))
        return np.conj(B.T) if B is not None else np.zeros((self.r, self.r))

    @cached_property
    def csr(self) -> scipy.sparse.csr_matrix:
        r, n = self.r, self.n
        dtype = complex if self.is_complex else float
        rows, cols, vals = [], [], []
        a_idx, b_idx = np.meshgrid(np.arange(r), np.arange(r), indexing="ij")
        a_idx, b_idx = a_idx.ravel(), b_idx.ravel()
        for (i, j), B in self.blocks.items():
            rows.append(i * r + a_idx)
            cols.append(j * r + b_idx)
            vals.append(B.astype(dtype).ravel())
            if i != j:
                rows.append(j * r + a_idx)
                cols.append(i * r + b_idx)
                vals.append(np.conj(B.T).astype(dtype).ravel())
        if rows:
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
            vals = np.concatenate(vals)
        return scipy.sparse.csr_matrix((vals, (rows, cols)),
                                       shape=self.shape, dtype=dtype)

    def matmul(self, panel: np.ndarray) -> np.ndarray:
        """Product against an rn x p panel (or rn vector)."""
        return self.csr @ panel

    def __matmul__(self, panel: np.ndarray) -> np.ndarray:
        return self.matmul(panel)

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def opnorm(self, tol: float = 1e-6, max_iters: int = 20000) -> float:
        """Largest singular value via power iteration on the squared operator."""
        m = self.shape[0]
        if self.csr.nnz == 0:
            return 0.0
        v = np.cos(np.arange(m, dtype=float))  # deterministic start
        if self.is_complex:
            v = v.astype(complex)
        v /= np.linalg.norm(v)
        est = 0.0
        for it in range(max_iters):
            w = self.csr @ (self.csr @ v)
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return 0.0
            new_est = np.sqrt(nw)
            v = w / nw
            if abs(new_est - est) <= tol * max(new_est, 1e-300):
                return float(new_est)
            est = new_est
        raise NumericalError("power iteration for operator norm did not converge",
                             iterations=max_iters, best_estimate=float(est))


@dataclass(frozen=True)
class SyncInstance:
    """Ground truth, noise, and measurements on a graph.

    Z has shape (n, r, r) with orthogonal/unitary blocks; measurements maps
    each edge (i, j), i < j, to R_ij = Z_i Z_j* + Delta_ij.
    """

    graph: Graph
    r: int
    field: str
    Z: np.ndarray
    delta: BlockSymmetricMatrix
    measurements: dict[tuple[int, int], np.ndarray] = field(repr=False, default_factory=dict)

    @property
    def n(self) -> int:
        return self.graph.n

    def Z_stacked(self) -> np.ndarray:
        """Ground truth stacked as an rn x r matrix."""
        return self.Z.reshape(self.n * self.r, self.r)


def sample_ground_truth(n: int, r: int, field: str = "real", seed=None) -> np.ndarray:
    """Haar-uniform blocks on O(r) (or U(r)), shape (n, r, r)."""
    if n < 1 or r < 1:
        raise ParameterError(f"need n >= 1 and r >= 1, got n={n}, r={r}")
    rng = np.random.default_rng(seed)
    dtype = complex if field == "complex" else float
    Z = np.empty((n, r, r), dtype=dtype)
    for i in range(n):
        if field == "complex":
            G = (rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))) / np.sqrt(2)
        elif field == "real":
            G = rng.standard_normal((r, r))
        else:
            raise ParameterError(f"unknown field {field!r}")
        Z[i] = orthonormal_rows(G)
    return Z


def make_measurements(Z: np.ndarray, graph: Graph, sigma: float = 0.0, seed=None):
    """Noisy relative measurements R_ij = Z_i Z_j* + Delta_ij on every edge.

    Delta entries are i.i.d. N(0, sigma^2); in the complex case real and
    imaginary parts are each N(0, sigma^2 / 2). sigma=0 gives exact
    measurements. Returns (measurements, delta).
    """
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    n, r, _ = Z.shape
    if n != graph.n:
        raise ParameterError(f"ground truth has {n} blocks, graph has {graph.n} vertices")
    is_complex = np.iscomplexobj(Z)
    rng = np.random.default_rng(seed)
    measurements = {}
    delta_blocks = {}
    for i, j, _ in graph.edges:
        if sigma > 0:
            if is_complex:
                D = sigma * (rng.standard_normal((r, r))
                             + 1j * rng.standard_normal((r, r))) / np.sqrt(2)
            else:
                D = sigma * rng.standard_normal((r, r))
            delta_blocks[(i, j)] = D
        else:
            D = np.zeros((r, r), dtype=Z.dtype)
        measurements[(i, j)] = Z[i] @ np.conj(Z[j].T) + D
    delta = BlockSymmetricMatrix(n=n, r=r, blocks=delta_blocks)
    return measurements, delta


def random_instance(graph: Graph, r: int, field: str = "real", sigma: float = 0.0,
                    seed=None) -> SyncInstance:
    """Sample ground truth and measurements in one call, deterministically."""
    ss = np.random.SeedSequence(seed)
    seed_z, seed_noise = ss.spawn(2)
    Z = sample_ground_truth(graph.n, r, field, seed_z)
    measurements, delta = make_measurements(Z, graph, sigma, seed_noise)
    return SyncInstance(graph=graph, r=r, field=field, Z=Z, delta=delta,
                        measurements=measurements)


def connection_laplacian_from_measurements(graph: Graph, measurements: dict,
                                           r: int) -> BlockSymmetricMatrix:
    """Graph connection Laplacian: weighted-degree diagonal, -R_ij off-diagonal."""
    deg = graph.degrees()
    some = next(iter(measurements.values())) if measurements else np.zeros((r, r))
    dtype = complex if np.iscomplexobj(some) else float
    blocks = {}
    for i in range(graph.n):
        blocks[(i, i)] = deg[i] * np.eye(r, dtype=dtype)
    for i, j, w in graph.edges:
        blocks[(i, j)] = -w * measurements[(i, j)].astype(dtype)
    return BlockSymmetricMatrix(n=graph.n, r=r, blocks=blocks)


def connection_laplacian(instance: SyncInstance) -> BlockSymmetricMatrix:
    return connection_laplacian_from_measurements(instance.graph,
                                                  instance.measurements,
                                                  instance.r)


def noise_operator_norm(delta: BlockSymmetricMatrix, tol: float = 1e-6) -> float:
    """Largest singular value of the rn x rn noise matrix."""
    return delta.opnorm(tol=tol)


# --------------------------------------------------------------------------
# File formats


def write_instance(path, graph: Graph, measurements: dict, r: int,
                   field: str = "real") -> None:
    """Write the edge_measurements text format (full round-trip precision)."""
    for i, j, w in graph.edges:
        if w != 1.0:
            raise ParameterError(
                "edge_measurements format carries no weights; all weights must be 1")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"r {r} field {field}\n")
        for i, j, _ in graph.edges:
            R = measurements[(i, j)]
            if field == "complex":
                vals = []
                for v in R.ravel():
                    vals += [v.real, v.imag]
            else:
                vals = list(R.ravel().astype(float))
            fh.write(f"{i} {j} " + " ".join(repr(float(v)) for v in vals) + "\n")


def parse_instance(path, format: str = "edge_measurements"):
    """Parse a measurement file. Returns (graph, measurements, r, field)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if format == "edge_measurements":
        return _parse_edge_measurements(lines)
    if format == "g2o_2d":
        return _parse_g2o_2d(lines)
    raise ParameterError(f"unknown instance format {format!r}")


def _parse_edge_measurements(lines):
    header = None
    body_start = 0
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        header = line.split()
        body_start = line_no
        break
    if header is None or len(header) != 4 or header[0] != "r" or header[2] != "field":
        raise ParseError("expected header 'r <r> field <real|complex>'", body_start or 1)
    try:
        r = int(header[1])
    except ValueError:
        raise ParseError(f"bad block dimension {header[1]!r}", body_start) from None
    fieldname = header[3]
    if fieldname not in ("real", "complex"):
        raise ParseError(f"bad field {fieldname!r}", body_start)
    per_block = 2 * r * r if fieldname == "complex" else r * r

    measurements = {}
    edges = []
    max_vertex = -1
    for line_no, raw in enumerate(lines, start=1):
        if line_no <= body_start:
            continue
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2 + per_block:
            raise ParseError(f"expected 'i j' plus {per_block} values, "
                             f"got {len(parts)} fields", line_no)
        try:
            i, j = int(parts[0]), int(parts[1])
            vals = np.array([float(x) for x in parts[2:]])
        except ValueError:
            raise ParseError("non-numeric field", line_no) from None
        if i == j:
            raise ParseError(f"self-loop on vertex {i}", line_no)
        key = (min(i, j), max(i, j))
        if key in measurements:
            raise ParseError(f"duplicate edge {key}", line_no)
        if fieldname == "complex":
            R = (vals[0::2] + 1j * vals[1::2]).reshape(r, r)
        else:
            R = vals.reshape(r, r)
        if i > j:
            R = np.conj(R.T)
        _warn_if_not_orthogonal(R, key, line_no)
        measurements[key] = R
        edges.append((key[0], key[1], 1.0))
        max_vertex = max(max_vertex, key[1])
    graph = Graph(n=max_vertex + 1 if max_vertex >= 0 else 1, edges=tuple(edges))
    return graph, measurements, r, fieldname


def _warn_if_not_orthogonal(R, key, line_no, tol=1e-6):
    gram_err = np.abs(R @ np.conj(R.T) - np.eye(R.shape[0])).max()
    if gram_err > tol:
        warnings.warn(
            f"measurement block {key} (line {line_no}) deviates from "
            f"orthogonality by {gram_err:.3e}; kept as-is", stacklevel=3)


def _parse_g2o_2d(lines):
    measurements = {}
    edges = []
    max_vertex = -1
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "VERTEX_SE2":
            try:
                max_vertex = max(max_vertex, int(parts[1]))
            except (IndexError, ValueError):
                raise ParseError("malformed VERTEX_SE2 record", line_no) from None
            continue
        if tag != "EDGE_SE2":
            raise ParseError(f"unknown record tag {tag!r}", line_no)
        try:
            i, j = int(parts[1]), int(parts[2])
            dtheta = float(parts[5])
        except (IndexError, ValueError):
            raise ParseError("malformed EDGE_SE2 record", line_no) from None
        if i == j:
            raise ParseError(f"self-loop on vertex {i}", line_no)
        c, s = np.cos(dtheta), np.sin(dtheta)
        R = np.array([[c, -s], [s, c]])
        key = (min(i, j), max(i, j))
        if i > j:
            R = R.T
        if key in measurements:
            warnings.warn(f"duplicate edge {key} at line {line_no}; keeping first",
                          stacklevel=3)
            continue
        measurements[key] = R
        edges.append((key[0], key[1], 1.0))
        max_vertex = max(max_vertex, key[1])
    graph = Graph(n=max_vertex + 1 if max_vertex >= 0 else 1, edges=tuple(edges))
    return graph, measurements, 2, "real"
