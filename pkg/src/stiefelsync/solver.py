"""Riemannian first-order solver with negative-curvature escape for
min <Lhat, Y Y*> over St(r, p)^n, plus objective/derivative kernels."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
import scipy.sparse.linalg

from .errors import NumericalError, ParameterError
from .instance import BlockSymmetricMatrix, SyncInstance, connection_laplacian
from .stiefel import (StiefelProductPoint, diag_sym_blocks, polar_blocks,
                      project_tangent, random_point, retract)

# Dense eigendecomposition of the tangent Hessian below this real dimension.
DENSE_HESS_LIMIT = 2000
_MIN_STEP = 1e-18


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 100_000
    grad_tol: float = 1e-10          # scaled by max(1, ||Lhat||) * sqrt(rn)
    hess_tol: float = 1e-8           # scaled by ||Lhat||
    initial_step: Optional[float] = None  # default 1 / max(1, ||Lhat||)
    backtrack: float = 0.5
    sufficient_decrease: float = 1e-4
    escape_step: Optional[float] = None   # default min(1, 1 / ||Lhat||)
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ParameterError("max_iters must be >= 1")
        for name in ("grad_tol", "hess_tol", "sufficient_decrease"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be > 0")
        if not (0 < self.backtrack < 1):
            raise ParameterError("backtrack factor must be in (0, 1)")


@dataclass(frozen=True)
class SolveReport:
    Y: StiefelProductPoint
    objective: float
    grad_norm: float
    min_hess_eig: Optional[float]
    iterations: int
    status: str  # soc_point | max_iters | numerical_failure


def _as_operator(lhat_or_instance) -> BlockSymmetricMatrix:
    if isinstance(lhat_or_instance, SyncInstance):
        return connection_laplacian(lhat_or_instance)
    return lhat_or_instance


def objective(lhat: BlockSymmetricMatrix, Y: StiefelProductPoint) -> float:
    """<Lhat, Y Y*> = tr(Y* Lhat Y), real-valued."""
    return float(np.vdot(Y.data, lhat @ Y.data).real)


def gradient(lhat: BlockSymmetricMatrix, Y: StiefelProductPoint) -> np.ndarray:
    """Riemannian gradient 2 P_T(Lhat Y) = 2 S(Y) Y."""
    return 2.0 * project_tangent(Y, lhat @ Y.data)


def _s_apply(lhat, Y, H, V):
    """S(Y) V with precomputed diagonal blocks H of SBD(Lhat Y Y*)."""
    Vb = V.reshape(Y.n, Y.r, Y.p)
    corr = np.einsum("nab,nbp->nap", H, Vb)
    return lhat @ V - corr.reshape(Y.n * Y.r, Y.p)


def hess_quadratic(lhat: BlockSymmetricMatrix, Y: StiefelProductPoint,
                   V: np.ndarray) -> float:
    """Riemannian Hessian quadratic form 2 <S(Y) V, V> for tangent V."""
    H = diag_sym_blocks(lhat @ Y.data, Y)
    return float(2.0 * np.vdot(V, _s_apply(lhat, Y, H, V)).real)


def hess_vec(lhat: BlockSymmetricMatrix, Y: StiefelProductPoint,
             V: np.ndarray) -> np.ndarray:
    """Self-adjoint operator on T_Y realizing hess_quadratic: 2 P_T(S(Y) V)."""
    H = diag_sym_blocks(lhat @ Y.data, Y)
    return 2.0 * project_tangent(Y, _s_apply(lhat, Y, H, V))


def min_hessian_eig(lhat: BlockSymmetricMatrix, Y: StiefelProductPoint,
                    tol: float = 1e-8,
                    opnorm: Optional[float] = None) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue of the tangent-restricted Hessian and its eigenvector.

    The tangent restriction is realized by shifting the normal complement far
    into the positive spectrum, so the minimum of the shifted ambient operator
    is the minimum over T_Y.
    """
    if opnorm is None:
        opnorm = lhat.opnorm()
    sigma = 100.0 * max(1.0, opnorm)
    H = diag_sym_blocks(lhat @ Y.data, Y)
    is_complex = Y.is_complex
    m = Y.n * Y.r * Y.p
    dim_real = 2 * m if is_complex else m
    shape = (Y.n * Y.r, Y.p)

    def unpack(x):
        if is_complex:
            return (x[:m] + 1j * x[m:]).reshape(shape)
        return x.reshape(shape)

    def pack(V):
        if is_complex:
            return np.concatenate([V.real.ravel(), V.imag.ravel()])
        return np.ascontiguousarray(V.ravel())

    def apply(x):
        V = unpack(x)
        T = project_tangent(Y, V)
        out = 2.0 * project_tangent(Y, _s_apply(lhat, Y, H, T)) + sigma * (V - T)
        return pack(out)

    if dim_real <= DENSE_HESS_LIMIT:
        mat = np.empty((dim_real, dim_real))
        basis = np.zeros(dim_real)
        for k in range(dim_real):
            basis[k] = 1.0
            mat[:, k] = apply(basis)
            basis[k] = 0.0
        mat = 0.5 * (mat + mat.T)
        vals, vecs = np.linalg.eigh(mat)
        lam = float(vals[0])
        vec = vecs[:, 0]
    else:
        op = scipy.sparse.linalg.LinearOperator((dim_real, dim_real),
                                                matvec=apply, dtype=float)
        v0 = np.cos(np.arange(dim_real, dtype=float))
        try:
            vals, vecs = scipy.sparse.linalg.eigsh(op, k=1, which="SA", v0=v0,
                                                   tol=tol, maxiter=50 * dim_real)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            best = float(exc.eigenvalues[0]) if len(exc.eigenvalues) else None
            raise NumericalError("tangent Hessian eigensolver did not converge",
                                 best_estimate=best) from exc
        lam = float(vals[0])
        vec = vecs[:, 0]

    V = project_tangent(Y, unpack(vec))
    nv = np.linalg.norm(V)
    if nv > 1e-12:
        V = V / nv
        resid = np.linalg.norm(hess_vec(lhat, Y, V) - lam * V)
        if resid > max(tol, 1e-6) * max(1.0, opnorm):
            raise NumericalError("tangent Hessian eigenpair residual too large",
                                 residual=float(resid), best_estimate=lam)
    return lam, V


def _delta_objective(lhat, Y_old: StiefelProductPoint,
                     Y_new: StiefelProductPoint) -> float:
    """f(Y_new) - f(Y_old), computed without catastrophic cancellation.

    Uses <Lhat, Yn Yn* - Y Y*> = Re <Lhat (Yn + Y), Yn - Y> (the skew part
    drops against the Hermitian Lhat), so the difference is formed before
    any large sums.
    """
    diff = Y_new.data - Y_old.data
    total = Y_new.data + Y_old.data
    return float(np.vdot(diff, lhat @ total).real)


def solve(lhat_or_instance, p: Optional[int] = None,
          init: Union[str, StiefelProductPoint] = "random",
          options: Optional[SolveOptions] = None) -> SolveReport:
    """Armijo-backtracking Riemannian gradient descent with negative-curvature
    escape. Returns status soc_point once the projected gradient is below the
    (scaled) tolerance and the tangent Hessian has no eigenvalue below
    -hess_tol * ||Lhat||.
    """
    lhat = _as_operator(lhat_or_instance)
    opts = options or SolveOptions()
    r = lhat.r
    n = lhat.n
    if isinstance(init, StiefelProductPoint):
        Y = init
        if p is not None and p != Y.p:
            raise ParameterError(f"p={p} disagrees with init point p={Y.p}")
        p = Y.p
    else:
        if p is None:
            raise ParameterError("p is required unless init is a point")
        if init == "random":
            field = "complex" if lhat.is_complex else "real"
            Y = random_point(n, r, p, field, seed=opts.seed)
        elif init == "spectral":
            Y = spectral_init(lhat, p)
        else:
            raise ParameterError(f"unknown init {init!r}")
    if p < r:
        raise ParameterError(f"need p >= r, got r={r}, p={p}")

    opn = lhat.opnorm()
    grad_tol = opts.grad_tol * max(1.0, opn) * np.sqrt(r * n)
    # Machine-level floor keeps degenerate (near-zero) operators classifiable.
    hess_tol = opts.hess_tol * opn + 1e-13 * max(1.0, opn)
    step = opts.initial_step if opts.initial_step is not None else 1.0 / max(1.0, opn)
    max_step = 1e3 / max(opn, 1e-9)

    grad = gradient(lhat, Y)
    grad_norm = float(np.linalg.norm(grad))
    min_eig: Optional[float] = None
    status = "max_iters"
    iterations = 0
    prev_data = None
    prev_grad = None

    while iterations < opts.max_iters:
        if grad_norm <= grad_tol:
            min_eig, evec = min_hessian_eig(lhat, Y, opnorm=opn)
            if min_eig >= -hess_tol:
                status = "soc_point"
                break
            # Escape along the negative-curvature direction, descent sign.
            d = evec if np.vdot(grad, evec).real <= 0 else -evec
            t = opts.escape_step if opts.escape_step is not None \
                else min(1.0, 1.0 / max(opn, 1e-300))
            accepted = False
            while t >= _MIN_STEP:
                try:
                    Y_new = retract(Y, d, t)
                except NumericalError:
                    t *= opts.backtrack
                    continue
                if _delta_objective(lhat, Y, Y_new) <= -0.25 * t * t * abs(min_eig):
                    accepted = True
                    break
                t *= opts.backtrack
            if not accepted:
                status = "numerical_failure"
                break
            Y = Y_new
            grad = gradient(lhat, Y)
            grad_norm = float(np.linalg.norm(grad))
            prev_data = prev_grad = None
            iterations += 1
            continue

        # Barzilai-Borwein trial step, safeguarded, then Armijo backtracking.
        if prev_data is not None:
            s = Y.data - prev_data
            yv = grad - prev_grad
            denom = np.vdot(s, yv).real
            if denom > 0:
                step = float(np.vdot(s, s).real / denom)
        t = float(np.clip(step, _MIN_STEP, max_step))
        d = -grad
        accepted = False
        while t >= _MIN_STEP:
            try:
                Y_new = retract(Y, d, t)
            except NumericalError:
                t *= opts.backtrack
                continue
            if _delta_objective(lhat, Y, Y_new) <= -opts.sufficient_decrease * t * grad_norm ** 2:
                accepted = True
                break
            t *= opts.backtrack
        if not accepted:
            status = "numerical_failure"
            break
        prev_data, prev_grad = Y.data, grad
        Y = Y_new
        step = t
        grad = gradient(lhat, Y)
        grad_norm = float(np.linalg.norm(grad))
        iterations += 1

    return SolveReport(Y=Y, objective=objective(lhat, Y), grad_norm=grad_norm,
                       min_hess_eig=min_eig, iterations=iterations, status=status)


def spectral_init(lhat: BlockSymmetricMatrix, p: int) -> StiefelProductPoint:
    """Initializer from the r bottom eigenvectors of the connection Laplacian.

    Each r x r vertex block of the stacked eigenvector matrix is mapped to
    the nearest orthogonal/unitary matrix, then zero-padded to r x p.
    """
    r, n = lhat.r, lhat.n
    if p < r:
        raise ParameterError(f"need p >= r, got r={r}, p={p}")
    m = n * r
    if m <= 2000:
        vals, vecs = np.linalg.eigh(lhat.to_dense())
        bottom = vecs[:, :r]
    else:
        v0 = np.cos(np.arange(m, dtype=float))
        try:
            _, bottom = scipy.sparse.linalg.eigsh(lhat.csr, k=r, which="SA",
                                                  v0=v0.astype(lhat.csr.dtype),
                                                  maxiter=100 * m)
        except scipy.sparse.linalg.ArpackNoConvergence as exc:
            raise NumericalError("spectral initializer eigensolver failed") from exc
    blocks = bottom.reshape(n, r, r)
    out = np.zeros((n, r, p), dtype=blocks.dtype)
    for i in range(n):
        B = blocks[i]
        u, s, vt = np.linalg.svd(B)
        if s[-1] < 1e-12 * max(1.0, s[0] if len(s) else 1.0):
            warnings.warn(f"singular eigenvector block at vertex {i}; "
                          "falling back to identity", stacklevel=2)
            out[i, :, :r] = np.eye(r)
        else:
            out[i, :, :r] = u @ vt
    return StiefelProductPoint(n, r, p, out.reshape(n * r, p))
