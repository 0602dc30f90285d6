"""Global-optimality certification and closed-form theory-bound evaluation."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import scipy.sparse.linalg

from .errors import NumericalError, ParameterError
from .instance import BlockSymmetricMatrix
from .solver import min_hessian_eig
from .stiefel import StiefelProductPoint, diag_sym_blocks

VERDICT_CERTIFIED = "certified_global"
VERDICT_SOC_NOT_CERTIFIED = "soc_not_certified"
VERDICT_NOT_CRITICAL = "not_critical"

DENSE_S_EIG_LIMIT = 2000


@dataclass(frozen=True)
class CertificateReport:
    first_order_residual: float
    min_tangent_hess_eig: float
    s_min_eig: float
    numerical_rank: int
    rank_tolerance: float
    verdict: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TheoryBounds:
    """Closed-form bound values; C_p-dependent fields are None for p <= r + 2."""

    C_p: Optional[float]
    thm2_rank_bound: Optional[float]
    thm3_condition_holds: Optional[bool]
    thm4_corr_lower: Optional[float]
    cor16_condition_holds: bool
    cor17_corr_lower: float

    def to_dict(self) -> dict:
        return asdict(self)


def s_matrix(lhat: BlockSymmetricMatrix, Y: StiefelProductPoint) -> BlockSymmetricMatrix:
    """Dual-certificate candidate S(Y) = Lhat - SBD(Lhat Y Y*).

    Only the diagonal blocks differ from Lhat.
    """
    H = diag_sym_blocks(lhat @ Y.data, Y)
    blocks = dict(lhat.blocks)
    dtype = complex if (lhat.is_complex or Y.is_complex) else float
    eye = np.eye(Y.r, dtype=dtype)
    for i in range(Y.n):
        base = blocks.get((i, i), 0.0 * eye)
        blocks[(i, i)] = np.array(base - H[i], dtype=dtype)
    return BlockSymmetricMatrix(n=Y.n, r=Y.r, blocks=blocks)


def numerical_rank(Y: StiefelProductPoint, tol_scale: float = 1e-3) -> int:
    """Count of singular values of the stacked rn x p matrix >= tol_scale * sqrt(n)."""
    s = np.linalg.svd(Y.data, compute_uv=False)
    return int(np.count_nonzero(s >= tol_scale * np.sqrt(Y.n)))


def correlation(Z: np.ndarray, Y: StiefelProductPoint) -> tuple[float, float]:
    """Correlation <Z Z*, Y Y*> = ||Z* Y||_F^2 and its n^2 r normalization."""
    n, r = Z.shape[0], Z.shape[1]
    gram = np.einsum("nab,nap->bp", np.conj(Z), Y.blocks)  # Z* Y, r x p
    raw = float((np.abs(gram) ** 2).sum())
    return raw, raw / (n * n * r)


def residual_decomposition(Z: np.ndarray, Y: StiefelProductPoint):
    """Split Y = Z R + W with R = Z* Y / n and W orthogonal to Z."""
    n = Z.shape[0]
    R = np.einsum("nab,nap->bp", np.conj(Z), Y.blocks) / n
    W = Y.blocks - np.einsum("nab,bp->nap", Z, R)
    return R, W.reshape(Y.n * Y.r, Y.p)


def s_min_eigenvalue(S: BlockSymmetricMatrix, tol: float = 1e-8) -> float:
    """Smallest eigenvalue of S(Y) on the full ambient space."""
    m = S.shape[0]
    if m <= DENSE_S_EIG_LIMIT:
        return float(np.linalg.eigvalsh(S.to_dense())[0])
    v0 = np.cos(np.arange(m, dtype=float)).astype(S.csr.dtype)
    try:
        vals = scipy.sparse.linalg.eigsh(S.csr, k=1, which="SA", v0=v0,
                                         tol=tol, maxiter=100 * m,
                                         return_eigenvectors=False)
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise NumericalError("dual certificate eigensolver did not converge") from exc
    return float(vals[0])


def certify(lhat: BlockSymmetricMatrix, Y: StiefelProductPoint,
            first_order_tol: float = 1e-8,
            psd_slack: float = 1e-6,
            rank_tol_scale: float = 1e-3,
            opnorm: Optional[float] = None) -> CertificateReport:
    """Classify a candidate point: not_critical, soc_not_certified, or
    certified_global (rank-deficient with PSD dual certificate)."""
    if opnorm is None:
        opnorm = lhat.opnorm()
    scale = max(1.0, opnorm) * np.sqrt(Y.r * Y.n)
    H = diag_sym_blocks(lhat @ Y.data, Y)
    sy = lhat @ Y.data - np.einsum("nab,nbp->nap", H, Y.blocks).reshape(Y.data.shape)
    residual = float(np.linalg.norm(sy))

    min_hess, _ = min_hessian_eig(lhat, Y, opnorm=opnorm)
    rank = numerical_rank(Y, rank_tol_scale)
    s_min = s_min_eigenvalue(s_matrix(lhat, Y))

    if residual > first_order_tol * scale:
        verdict = VERDICT_NOT_CRITICAL
    elif rank < Y.p and s_min >= -psd_slack * max(1.0, opnorm):
        verdict = VERDICT_CERTIFIED
    else:
        verdict = VERDICT_SOC_NOT_CERTIFIED
    return CertificateReport(
        first_order_residual=residual,
        min_tangent_hess_eig=min_hess,
        s_min_eig=s_min,
        numerical_rank=rank,
        rank_tolerance=float(rank_tol_scale * np.sqrt(Y.n)),
        verdict=verdict,
    )


def theory_bounds(p: int, r: int, n: int, lambda2: float,
                  delta_opnorm: float) -> TheoryBounds:
    """Direct substitution of the closed-form landscape bounds.

    C_p = 2(p + r - 2)/(p - r - 2) requires p > r + 2; dependent fields are
    None otherwise. Conditions with no C_p dependence are always evaluated.
    """
    if n < 1:
        raise ParameterError(f"need n >= 1, got {n}")
    if lambda2 <= 0:
        raise ParameterError(f"need lambda2 > 0 (connected graph), got {lambda2}")
    rn = r * n
    ratio2 = (delta_opnorm / lambda2) ** 2
    cor16 = delta_opnorm < lambda2 / (2 * np.sqrt(5) * np.sqrt(rn))
    cor17 = (1.0 - 4.0 * ratio2) * n * n * r
    if p > r + 2:
        C_p = 2.0 * (p + r - 2) / (p - r - 2)
        return TheoryBounds(
            C_p=C_p,
            thm2_rank_bound=r + 5.0 * C_p ** 2 * ratio2 * rn,
            thm3_condition_holds=bool(
                delta_opnorm < lambda2 / (np.sqrt(5) * C_p * np.sqrt(rn))),
            thm4_corr_lower=(1.0 - C_p ** 2 * ratio2) * n * n * r,
            cor16_condition_holds=bool(cor16),
            cor17_corr_lower=cor17,
        )
    return TheoryBounds(C_p=None, thm2_rank_bound=None, thm3_condition_holds=None,
                        thm4_corr_lower=None, cor16_condition_holds=bool(cor16),
                        cor17_corr_lower=cor17)
