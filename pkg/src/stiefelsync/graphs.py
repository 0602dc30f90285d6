"""Measurement graphs: generators, Laplacians, and spectral connectivity."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import NumericalError, ParameterError, ParseError

# Dense eigendecomposition is used up to this vertex count; iterative above.
DENSE_EIG_LIMIT = 2000


@dataclass(frozen=True)
class Graph:
    """Weighted undirected graph on vertices 0..n-1.

    Edges are (i, j, w) with i < j and w > 0. No self-loops, no duplicates.
    Immutable after construction.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"vertex count must be >= 1, got {self.n}")
        seen = set()
        for i, j, w in self.edges:
            if not (0 <= i < j < self.n):
                raise ParameterError(f"edge ({i}, {j}) violates 0 <= i < j < n={self.n}")
            if (i, j) in seen:
                raise ParameterError(f"duplicate edge ({i}, {j})")
            if not w > 0:
                raise ParameterError(f"edge ({i}, {j}) has non-positive weight {w}")
            seen.add((i, j))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbor_lists(self) -> list[list[tuple[int, float]]]:
        nbrs: list[list[tuple[int, float]]] = [[] for _ in range(self.n)]
        for i, j, w in self.edges:
            nbrs[i].append((j, w))
            nbrs[j].append((i, w))
        return nbrs

    def degrees(self) -> np.ndarray:
        """Weighted degree of every vertex."""
        deg = np.zeros(self.n)
        for i, j, w in self.edges:
            deg[i] += w
            deg[j] += w
        return deg


@dataclass(frozen=True)
class LaplacianSummary:
    lambda2: float
    lambda_max: float
    connected: bool


def build_graph(kind: str, seed=None, **params) -> Graph:
    """Construct a graph of a named family.

    kinds: complete(n), cycle(n), circulant(n, degree),
    erdos_renyi(n, q, seed), edge_list(path= or text=, n=).
    """
    if kind == "complete":
        n = _pop_n(params)
        edges = tuple((i, j, 1.0) for i in range(n) for j in range(i + 1, n))
    elif kind == "cycle":
        n = _pop_n(params)
        if n < 3:
            raise ParameterError(f"cycle graph needs n >= 3, got {n}")
        edges = tuple(sorted((min(i, (i + 1) % n), max(i, (i + 1) % n), 1.0)
                             for i in range(n)))
    elif kind == "circulant":
        n = _pop_n(params)
        degree = params.pop("degree")
        if degree % 2 != 0 or degree <= 0:
            raise ParameterError(f"circulant degree must be positive and even, got {degree}")
        if degree >= n:
            raise ParameterError(f"circulant degree {degree} must be < n={n}")
        edge_set = set()
        for k in range(1, degree // 2 + 1):
            for i in range(n):
                j = (i + k) % n
                edge_set.add((min(i, j), max(i, j)))
        edges = tuple((i, j, 1.0) for i, j in sorted(edge_set))
    elif kind == "erdos_renyi":
        n = _pop_n(params)
        q = params.pop("q")
        if not (0 < q <= 1):
            raise ParameterError(f"erdos_renyi probability must be in (0, 1], got {q}")
        rng = np.random.default_rng(seed)
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        keep = rng.random(len(pairs)) < q
        edges = tuple((i, j, 1.0) for (i, j), k in zip(pairs, keep) if k)
    elif kind == "edge_list":
        if "path" in params:
            with open(params.pop("path"), "r", encoding="utf-8") as fh:
                lines = fh.readlines()
        else:
            lines = params.pop("text").splitlines()
        return parse_edge_list(lines, n=params.pop("n", None))
    else:
        raise ParameterError(f"unknown graph kind {kind!r}")
    if params:
        raise ParameterError(f"unexpected parameters for kind {kind!r}: {sorted(params)}")
    return Graph(n=n, edges=edges)


def _pop_n(params: dict) -> int:
    try:
        return int(params.pop("n"))
    except KeyError:
        raise ParameterError("missing vertex count 'n'") from None


def parse_edge_list(lines: Iterable[str], n=None) -> Graph:
    """Parse the edge-list text format: `i j [w]` per line, '#' comments.

    Weight defaults to 1.0. Duplicate edges are an error, not merged.
    """
    edges = []
    seen = set()
    max_vertex = -1
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise ParseError(f"expected 'i j [w]', got {raw.strip()!r}", line_no)
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise ParseError(f"non-numeric field in {raw.strip()!r}", line_no) from None
        if i == j:
            raise ParseError(f"self-loop on vertex {i}", line_no)
        if i < 0 or j < 0:
            raise ParseError(f"negative vertex index in {raw.strip()!r}", line_no)
        i, j = min(i, j), max(i, j)
        if (i, j) in seen:
            raise ParseError(f"duplicate edge ({i}, {j})", line_no)
        if not w > 0:
            raise ParseError(f"non-positive weight {w}", line_no)
        seen.add((i, j))
        edges.append((i, j, w))
        max_vertex = max(max_vertex, j)
    if n is None:
        n = max_vertex + 1 if max_vertex >= 0 else 1
    return Graph(n=n, edges=tuple(edges))


def write_edge_list(path, g: Graph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, j, w in g.edges:
            fh.write(f"{i} {j} {w!r}\n")


def adjacency(g: Graph) -> np.ndarray:
    A = np.zeros((g.n, g.n))
    for i, j, w in g.edges:
        A[i, j] = w
        A[j, i] = w
    return A


def laplacian(g: Graph) -> np.ndarray:
    """Unnormalized weighted Laplacian L = diag(A 1) - A."""
    A = adjacency(g)
    return np.diag(A.sum(axis=1)) - A


def laplacian_csr(g: Graph) -> scipy.sparse.csr_matrix:
    rows, cols, vals = [], [], []
    deg = g.degrees()
    for i, j, w in g.edges:
        rows += [i, j]
        cols += [j, i]
        vals += [-w, -w]
    rows += list(range(g.n))
    cols += list(range(g.n))
    vals += list(deg)
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(g.n, g.n))


def connectivity(g: Graph) -> bool:
    """True iff every vertex is reachable from vertex 0."""
    nbrs = g.neighbor_lists()
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u, _ in nbrs[v]:
            if not seen[u]:
                seen[u] = True
                queue.append(u)
    return bool(seen.all())


def laplacian_summary(g: Graph, tol: float = 1e-8) -> LaplacianSummary:
    """Second-smallest and largest Laplacian eigenvalues plus connectivity."""
    if g.n == 1:
        return LaplacianSummary(lambda2=0.0, lambda_max=0.0, connected=True)
    if g.n <= DENSE_EIG_LIMIT:
        eigs = np.linalg.eigvalsh(laplacian(g))
        lambda2 = float(eigs[1])
        lambda_max = float(eigs[-1])
    else:
        lambda2, lambda_max = _iterative_extremes(g)
    lambda2 = max(lambda2, 0.0)
    return LaplacianSummary(
        lambda2=lambda2,
        lambda_max=lambda_max,
        connected=connectivity(g),
    )


def _iterative_extremes(g: Graph) -> tuple[float, float]:
    # Deflate the all-ones kernel so lambda2 becomes the smallest eigenvalue.
    L = laplacian_csr(g)
    n = g.n
    shift = 2.0 * float(g.degrees().max())
    ones = np.ones(n) / np.sqrt(n)

    def deflated(x):
        return L @ x + shift * ones * (ones @ x)

    op = scipy.sparse.linalg.LinearOperator((n, n), matvec=deflated, dtype=float)
    v0 = np.cos(np.arange(n, dtype=float))  # deterministic start
    try:
        lam_max = scipy.sparse.linalg.eigsh(L, k=1, which="LA", v0=v0,
                                            return_eigenvectors=False)
        lam2 = scipy.sparse.linalg.eigsh(op, k=1, which="SA", v0=v0,
                                         return_eigenvectors=False)
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise NumericalError("Laplacian eigensolver did not converge",
                             iterations=getattr(exc, "maxiter", None)) from exc
    return float(lam2[0]), float(lam_max[0])
