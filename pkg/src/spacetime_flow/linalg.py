"""Module providing the sparse and dense linear algebra kernels of the solvers."""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, TypeAlias

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import NDArray

__all__ = ["SparseMatrix",
           "Operator",
           "SingularMatrixError",
           "SparseFactorization",
           "KrylovConfig",
           "SolveReport",
           "as_operator",
           "deflate_constants",
           "sparse_lu",
           "gmres",
           "chebyshev_solve",
           "cg_solve",
           "dense_eigenvalues"
           ]

logger = logging.getLogger(__name__)

SparseMatrix: TypeAlias = sp.csr_matrix
Operator: TypeAlias = Callable[[NDArray[np.floating]], NDArray[np.floating]]

class SingularMatrixError(RuntimeError):
    """Raised when a sparse factorisation meets an exact zero pivot."""

@dataclass(frozen=True)
class KrylovConfig:
    """Stopping rule of a Krylov solve; GMRES never restarts."""
    tol: float = 1e-10
    max_iter: int = 200
    flexible: bool = False

    def __post_init__(self):
        # Ensure a positive tolerance and at least one iteration
        if not self.tol > 0:
            raise ValueError(f"Krylov tolerance must be positive, got tol={self.tol}.")
        if self.max_iter < 1:
            raise ValueError(f"Krylov max_iter must be at least 1, got max_iter={self.max_iter}.")

@dataclass
class SolveReport:
    """Outcome of an iterative solve.

    `residual_history` holds relative residual norms, starting with the initial
    residual; `true_residual` is recomputed from the returned iterate.
    """
    iterations: int
    residual_history: list[float]
    converged: bool
    true_residual: float = float("nan")
    elapsed: float = 0.0
    breakdown: bool = False
    config: dict = field(default_factory=dict)
    inner_iterations: list[int] = field(default_factory=list)

class SparseFactorization:
    """Sparse LU factors with row/column permutations, reusable for many right-hand sides."""

    def __init__(self, matrix: sp.spmatrix, lu: spla.SuperLU):
        self.matrix = matrix
        self._lu = lu

    @property
    def shape(self) -> tuple[int, int]:
        return self._lu.shape

    def solve(self, b: NDArray[np.floating]) -> NDArray[np.floating]:
        return self._lu.solve(np.asarray(b, dtype=np.float64))

def as_operator(A) -> Operator:
    """Function wrapping a matrix (dense, sparse or scipy LinearOperator) or a callable as a matvec."""
    if A is None:
        return lambda x: np.array(x, dtype=np.float64, copy=True)
    if sp.issparse(A) or isinstance(A, np.ndarray):
        return lambda x: A @ x
    if callable(A):
        return A
    raise TypeError(f"Cannot use an object of type {type(A).__name__} as a linear operator.")

def deflate_constants(v: NDArray[np.floating]) -> NDArray[np.floating]:
    """Function removing the constant mode, i.e. the mean, from a vector."""
    return v - np.mean(v)

def sparse_lu(A: sp.spmatrix) -> SparseFactorization:
    """Function factorising a square sparse matrix with a column-AMD fill-reducing ordering."""

    # Ensure a square matrix
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"sparse_lu needs a square matrix, got shape {A.shape}.")

    a_csc = sp.csc_matrix(A, dtype=np.float64)

    # Map SuperLU's singular-factor failure to the domain error
    try:
        lu = spla.splu(a_csc, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularMatrixError(f"Matrix of shape {A.shape} is exactly singular: {exc}") from exc

    return SparseFactorization(a_csc, lu)

def _finish_report(apply_a: Operator,
                   x: NDArray[np.floating],
                   b: NDArray[np.floating],
                   b_norm: float,
                   iterations: int,
                   history: list[float],
                   converged: bool,
                   breakdown: bool,
                   t_start: float,
                   config: KrylovConfig
                   ) -> SolveReport:
    if b_norm > 0:
        true_res = float(np.linalg.norm(b - apply_a(x)) / b_norm)
    else:
        true_res = 0.0
    return SolveReport(iterations=iterations,
                       residual_history=history,
                       converged=converged,
                       true_residual=true_res,
                       elapsed=time.perf_counter() - t_start,
                       breakdown=breakdown,
                       config=asdict(config))

def gmres(A,
          b: NDArray[np.floating],
          x0: NDArray[np.floating] | None = None,
          config: KrylovConfig | None = None,
          M=None
          ) -> tuple[NDArray[np.floating], SolveReport]:
    """Function solving Ax = b by right-preconditioned GMRES without restarts.

    A and M may be matrices or matrix-free callables. With `config.flexible`
    the preconditioned basis vectors M(v_j) are stored so that M may change
    between iterations (FGMRES); otherwise the update is formed as M(V y).
    Convergence is measured relative to the norm of b. An Arnoldi breakdown
    means the Krylov space is invariant and the least-squares iterate is exact,
    so it is reported as converged.
    """

    t_start = time.perf_counter()
    config = config or KrylovConfig()
    apply_a = as_operator(A)
    apply_m = as_operator(M)

    b = np.asarray(b, dtype=np.float64)
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64, copy=True)

    # A zero right-hand side has the zero solution
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        x = np.zeros(n)
        return x, _finish_report(apply_a, x, b, b_norm, 0, [0.0], True, False, t_start, config)

    # Initial residual
    r = b - apply_a(x)
    beta = float(np.linalg.norm(r))
    history = [beta / b_norm]
    if history[0] <= config.tol:
        return x, _finish_report(apply_a, x, b, b_norm, 0, history, True, False, t_start, config)

    # Arnoldi basis, Hessenberg matrix and Givens rotations
    m = config.max_iter
    V = np.zeros((m + 1, n))
    Z = np.zeros((m, n)) if config.flexible else None
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    V[0] = r / beta

    converged = False
    breakdown = False
    k = 0
    for j in range(m):
        # Preconditioned Arnoldi step
        z = apply_m(V[j])
        if Z is not None:
            Z[j] = z
        w = np.array(apply_a(z), dtype=np.float64, copy=True)

        # Modified Gram-Schmidt with one reorthogonalisation pass
        for _ in range(2):
            for i in range(j + 1):
                h = float(V[i] @ w)
                H[i, j] += h
                w -= h * V[i]
        h_next = float(np.linalg.norm(w))
        H[j + 1, j] = h_next
        column_norm = float(np.linalg.norm(H[:j + 2, j]))

        # Apply the previous rotations to the new column
        for i in range(j):
            temp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = temp

        # New rotation annihilating H[j+1, j]
        denom = float(np.hypot(H[j, j], H[j + 1, j]))
        if denom == 0.0:
            cs[j], sn[j] = 1.0, 0.0
        else:
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
        H[j, j] = denom
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]

        k = j + 1
        rel_res = abs(g[j + 1]) / b_norm
        history.append(float(rel_res))
        logger.debug("gmres iteration %d: relative residual %.3e", k, rel_res)

        if rel_res <= config.tol:
            converged = True
            break
        if h_next <= 1e-14 * column_norm:
            breakdown = True
            converged = True
            break
        V[j + 1] = w / h_next

    # Least-squares update from the upper-triangular system
    y = sla.solve_triangular(H[:k, :k], g[:k], lower=False, check_finite=False)
    if Z is not None:
        x = x + Z[:k].T @ y
    else:
        x = x + apply_m(V[:k].T @ y)

    report = _finish_report(apply_a, x, b, b_norm, k, history, converged, breakdown,
                            t_start, config)
    if not converged:
        logger.debug("gmres stopped after %d iterations at relative residual %.3e",
                     k, history[-1])
    return x, report

def chebyshev_solve(A: sp.spmatrix,
                    b: NDArray[np.floating],
                    k: int,
                    eig_bounds: tuple[float, float],
                    diag_precond: bool = True
                    ) -> NDArray[np.floating]:
    """Function running k Chebyshev semi-iterations from a zero initial guess.

    eig_bounds must enclose the spectrum of D^-1 A (D the diagonal of A) when
    diag_precond is set, or of A otherwise. Each iteration costs one matvec.
    After k steps the error is the degree-k Chebyshev polynomial of the
    interval applied to the initial error.
    """

    lam_min, lam_max = (float(v) for v in eig_bounds)

    # Ensure a valid positive interval
    if not 0 < lam_min <= lam_max:
        raise ValueError(f"Chebyshev bounds need 0 < min <= max, got {eig_bounds}.")
    if k < 0:
        raise ValueError(f"Chebyshev iteration count must be non-negative, got k={k}.")

    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    if k == 0:
        return x

    d_inv = 1.0 / A.diagonal() if diag_precond else np.ones_like(b)
    theta = 0.5 * (lam_max + lam_min)
    delta = 0.5 * (lam_max - lam_min)

    r = b.copy()

    # Degenerate interval: preconditioned Richardson with the exact inverse eigenvalue
    if delta == 0.0:
        for _ in range(k):
            x += d_inv * r / theta
            r = b - A @ x
        return x

    # Three-term recurrence of the scaled Chebyshev polynomials
    sigma = theta / delta
    rho = 1.0 / sigma
    d = d_inv * r / theta
    for _ in range(k):
        x += d
        r -= A @ d
        rho_next = 1.0 / (2.0 * sigma - rho)
        d = rho_next * rho * d + (2.0 * rho_next / delta) * (d_inv * r)
        rho = rho_next

    return x

def cg_solve(A,
             b: NDArray[np.floating],
             config: KrylovConfig | None = None,
             deflate: bool = False
             ) -> tuple[NDArray[np.floating], SolveReport]:
    """Function solving an SPD (or constant-kernel semidefinite) system by conjugate gradients.

    With `deflate` the right-hand side and the solution are orthogonalised
    against constants, so the iterate is the minimum-norm solution of a
    pure-Neumann system.
    """

    t_start = time.perf_counter()
    config = config or KrylovConfig()
    apply_a = as_operator(A)

    b = np.asarray(b, dtype=np.float64)
    if deflate:
        b = deflate_constants(b)

    # A zero right-hand side has the zero solution
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b), _finish_report(apply_a, np.zeros_like(b), b, b_norm, 0, [0.0],
                                                True, False, t_start, config)

    # Record the relative residual at every iteration
    history = [1.0]

    def _record(xk):
        history.append(float(np.linalg.norm(b - apply_a(xk)) / b_norm))

    a_op = spla.LinearOperator(shape=(b.size, b.size), matvec=apply_a, dtype=np.float64)
    x, info = spla.cg(a_op, b, rtol=config.tol, atol=0.0, maxiter=config.max_iter,
                      callback=_record)
    if deflate:
        x = deflate_constants(x)

    return x, _finish_report(apply_a, x, b, b_norm, len(history) - 1, history, info == 0,
                             False, t_start, config)

def dense_eigenvalues(A: NDArray[np.floating]) -> NDArray[np.complexfloating]:
    """Function computing all eigenvalues of a dense real square matrix."""

    A = np.asarray(A, dtype=np.float64)

    # Ensure a square matrix
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"dense_eigenvalues needs a square matrix, got shape {A.shape}.")

    # LAPACK Hessenberg reduction and shifted QR
    try:
        return sla.eigvals(A).astype(np.complex128)
    except sla.LinAlgError as exc:
        raise RuntimeError(f"QR iteration did not converge: {exc}") from exc
