"""Geometry of products of (real or complex) Stiefel manifolds St(r, p)^n.

Points are n blocks of r x p matrices with orthonormal rows, stored stacked
as an rn x p array. Tangent vectors are plain ndarrays of the same shape;
V is tangent at Y iff every block satisfies V_i Y_i* + Y_i V_i* = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ParameterError

POINT_TOL = 1e-10


def _herm(blocks: np.ndarray) -> np.ndarray:
    """Hermitian part of a stack of square blocks."""
    return 0.5 * (blocks + np.conj(np.swapaxes(blocks, -1, -2)))


@dataclass(frozen=True)
class StiefelProductPoint:
    """A point on St(r, p)^n. `data` is the stacked rn x p array."""

    n: int
    r: int
    p: int
    data: np.ndarray

    def __post_init__(self):
        if self.p < self.r:
            raise ParameterError(f"need p >= r, got r={self.r}, p={self.p}")
        if self.data.shape != (self.n * self.r, self.p):
            raise ParameterError(
                f"data shape {self.data.shape} != ({self.n * self.r}, {self.p})")
        err = self.block_orthonormality_error()
        if err > POINT_TOL:
            raise ParameterError(f"blocks not orthonormal: max error {err:.3e}")
        self.data.setflags(write=False)

    @property
    def blocks(self) -> np.ndarray:
        """View of shape (n, r, p)."""
        return self.data.reshape(self.n, self.r, self.p)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    def block_orthonormality_error(self) -> float:
        B = self.data.reshape(self.n, self.r, self.p)
        gram = np.einsum("nap,nbp->nab", B, np.conj(B))
        gram -= np.eye(self.r, dtype=gram.dtype)
        return float(np.sqrt((np.abs(gram) ** 2).sum(axis=(1, 2)).max()))

    def with_data(self, data: np.ndarray) -> "StiefelProductPoint":
        return StiefelProductPoint(self.n, self.r, self.p, data)


def tangent_error(Y: StiefelProductPoint, V: np.ndarray) -> float:
    """Max block Frobenius norm of V_i Y_i* + Y_i V_i*."""
    Vb = V.reshape(Y.n, Y.r, Y.p)
    M = np.einsum("nap,nbp->nab", Vb, np.conj(Y.blocks))
    M = M + np.conj(np.swapaxes(M, -1, -2))
    return float(np.sqrt((np.abs(M) ** 2).sum(axis=(1, 2)).max()))


def sbd(M: np.ndarray, n: int, r: int) -> np.ndarray:
    """Symmetric (Hermitian) block-diagonal projection of a dense rn x rn matrix.

    Off-diagonal blocks are zeroed; diagonal blocks become their Hermitian
    parts (X_ii + X_ii*)/2.
    """
    if M.shape != (n * r, n * r):
        raise ParameterError(f"matrix shape {M.shape} != ({n * r}, {n * r})")
    out = np.zeros_like(M)
    for i in range(n):
        blk = M[i * r:(i + 1) * r, i * r:(i + 1) * r]
        out[i * r:(i + 1) * r, i * r:(i + 1) * r] = 0.5 * (blk + np.conj(blk.T))
    return out


def diag_sym_blocks(X: np.ndarray, Y: StiefelProductPoint) -> np.ndarray:
    """Diagonal blocks of SBD(X Y*), shape (n, r, r), for stacked X of Y's shape."""
    Xb = X.reshape(Y.n, Y.r, Y.p)
    return _herm(np.einsum("nap,nbp->nab", Xb, np.conj(Y.blocks)))


def project_tangent(Y: StiefelProductPoint, W: np.ndarray) -> np.ndarray:
    """Orthogonal projection of an ambient rn x p array onto the tangent space.

    Computes W - SBD(W Y*) Y blockwise. Idempotent and self-adjoint.
    """
    H = diag_sym_blocks(W, Y)
    corr = np.einsum("nab,nbp->nap", H, Y.blocks)
    return W - corr.reshape(Y.n * Y.r, Y.p)


def polar_blocks(B: np.ndarray) -> np.ndarray:
    """Map each r x p block to its nearest orthonormal-row matrix (polar factor)."""
    u, s, vt = np.linalg.svd(B, full_matrices=False)
    r = B.shape[-2]
    if np.min(s[..., r - 1]) < 1e-13 * max(1.0, float(np.max(s))):
        raise NumericalError("rank-deficient block: polar factor not unique",
                             min_singular_value=float(np.min(s)))
    return u @ vt


def retract(Y: StiefelProductPoint, V: np.ndarray, t: float) -> StiefelProductPoint:
    """Polar retraction: per block, Y_i + t V_i mapped back to St(r, p).

    Uses the closed form (A A*)^(-1/2) A with A = Y + tV, assembling
    A A* = I + t(V Y* + Y V*) + t^2 V V* from its small increments so tiny
    steps survive floating point (an SVD of A would round Y_new to eps-level
    noise around Y and mask sub-eps objective decreases).
    """
    if t == 0:
        return Y
    Yb = Y.blocks
    Vb = V.reshape(Y.n, Y.r, Y.p)
    A = Yb + t * Vb
    cross = np.einsum("nap,nbp->nab", Vb, np.conj(Yb))
    B = cross + np.conj(np.swapaxes(cross, -1, -2))
    C = np.einsum("nap,nbp->nab", Vb, np.conj(Vb))
    M = np.eye(Y.r, dtype=A.dtype) + t * B + (t * t) * C
    w, Q = np.linalg.eigh(M)
    if float(w.min()) <= 1e-24:
        raise NumericalError("rank-deficient step: polar factor not unique",
                             min_gram_eigenvalue=float(w.min()))
    inv_sqrt = np.einsum("nab,nb,ncb->nac", Q, 1.0 / np.sqrt(w), np.conj(Q))
    out = np.einsum("nab,nbp->nap", inv_sqrt, A)
    return Y.with_data(out.reshape(Y.n * Y.r, Y.p))


def orthonormal_rows(G: np.ndarray) -> np.ndarray:
    """Row-orthonormalize an r x p matrix (r <= p).

    Uses QR of the conjugate transpose with the diagonal phase correction
    that makes the output Haar-distributed for i.i.d. Gaussian input.
    """
    q, rr = np.linalg.qr(np.conj(G.T))
    d = np.diagonal(rr).copy()
    d = np.where(np.abs(d) < 1e-300, 1.0, d)
    phase = d / np.abs(d)
    return np.conj((q * phase).T)


def random_point(n: int, r: int, p: int, field: str = "real",
                 seed=None) -> StiefelProductPoint:
    """Random point: each block is a row-orthonormalized i.i.d. Gaussian."""
    if p < r:
        raise ParameterError(f"need p >= r, got r={r}, p={p}")
    rng = np.random.default_rng(seed)
    blocks = np.empty((n, r, p), dtype=complex if field == "complex" else float)
    for i in range(n):
        G = _gaussian(rng, (r, p), field)
        blocks[i] = orthonormal_rows(G)
    return StiefelProductPoint(n, r, p, blocks.reshape(n * r, p))


def _gaussian(rng, shape, field):
    if field == "complex":
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    if field != "real":
        raise ParameterError(f"unknown field {field!r}")
    return rng.standard_normal(shape)


def random_tangent(Y: StiefelProductPoint, seed=None,
                   construction: str = "default") -> np.ndarray:
    """Random tangent vector driven by one Gaussian r x p matrix shared by all blocks.

    Real: V_i = G - Y_i G^T Y_i.
    Complex, construction="default": V_i = 2 G (I - Y_i* Y_i) + (G Y_i* - Y_i G*) Y_i.
    Complex, construction="simple": V_i = G - Y_i G* Y_i.
    """
    rng = np.random.default_rng(seed)
    field = "complex" if Y.is_complex else "real"
    G = _gaussian(rng, (Y.r, Y.p), field)
    return tangent_from_gaussian(Y, G, construction)


def tangent_from_gaussian(Y: StiefelProductPoint, G: np.ndarray,
                          construction: str = "default") -> np.ndarray:
    Yb = Y.blocks
    Gc = np.conj(G.T)
    if not Y.is_complex:
        V = G[None] - Yb @ G.T @ Yb
    elif construction == "simple":
        V = G[None] - Yb @ Gc @ Yb
    elif construction == "default":
        # 2 G (I - Y_i* Y_i) + (G Y_i* - Y_i G*) Y_i
        proj = G[None] @ (np.conj(np.swapaxes(Yb, 1, 2)) @ Yb)
        skew = G[None] @ np.conj(np.swapaxes(Yb, 1, 2)) - Yb @ Gc[None]
        V = 2 * (G[None] - proj) + skew @ Yb
    else:
        raise ParameterError(f"unknown tangent construction {construction!r}")
    return V.reshape(Y.n * Y.r, Y.p)


def tangent_second_moment(Yi: np.ndarray, Yj: np.ndarray, field: str = "real",
                          construction: str = "default") -> np.ndarray:
    """Closed-form E[V_i V_j*] for the matching random_tangent construction."""
    r, p = Yi.shape
    cross = Yi @ np.conj(Yj.T)
    tr = np.trace(cross)
    eye = np.eye(r, dtype=cross.dtype)
    if field == "real":
        return (p - 2) * eye + tr * cross
    if construction == "simple":
        return p * eye + tr * cross
    if construction == "default":
        fro2 = float((np.abs(cross) ** 2).sum())
        return (4.0 * (p - r) + fro2) * eye + tr * cross
    raise ParameterError(f"unknown tangent construction {construction!r}")
