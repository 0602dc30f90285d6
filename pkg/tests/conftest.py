"""Shared oracles and helpers for the test suite."""
import numpy as np

from stiefelsync.instance import BlockSymmetricMatrix


def dense_oracle(bsm: BlockSymmetricMatrix) -> np.ndarray:
    """Dense materialization via plain Python loops, independent of the CSR path."""
    r, n = bsm.r, bsm.n
    dtype = complex if bsm.is_complex else float
    M = np.zeros((n * r, n * r), dtype=dtype)
    for (i, j), B in bsm.blocks.items():
        M[i * r:(i + 1) * r, j * r:(j + 1) * r] = B
        if i != j:
            M[j * r:(j + 1) * r, i * r:(i + 1) * r] = np.conj(B.T)
    return M


def identity_measurements(graph, r: int) -> dict:
    """Noiseless measurements for the identity ground truth."""
    return {(i, j): np.eye(r) for i, j, _ in graph.edges}
