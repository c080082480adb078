"""Dense matrix utilities and the regularized row-space least-squares solver.

Matrices are plain 2-D float64 numpy arrays in row-major order; ``as_matrix``
is the validating constructor.  The central operation is ``solve_row_ls``,
which finds the minimum-Frobenius-norm ``X`` with ``X @ A`` closest to ``B``.
Every closed-form block update in the training solvers reduces to this solve,
usually after ``augment_ridge`` appends a scaled identity block.

The least-squares backend is LAPACK's complete orthogonal factorization with
column pivoting (``gelsy``), which is rank-revealing and returns the
minimum-norm solution for row-rank-deficient systems.  Normal equations are
deliberately avoided: the solvers routinely feed near-rank-deficient
activation matrices, and squaring their condition number loses half the
available digits.
"""

import numpy as np
import scipy.linalg

from .errors import NumericError, ShapeError

#: Relative cutoff under which pivots/singular values count as zero.
RANK_RTOL = 1e-12


def as_matrix(a):
    """Validate and return ``a`` as a 2-D float64 array with finite entries."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={out.ndim}")
    if out.size and not np.isfinite(out).all():
        raise NumericError("matrix contains NaN or infinite entries")
    return out


def ones_column(n):
    """The all-one column vector of size ``n``, as an n-by-1 matrix."""
    if n < 1:
        raise ShapeError("ones_column needs a positive size")
    return np.ones((n, 1))


def frobenius_norm(a):
    """Square root of the sum of squared entries."""
    return float(np.linalg.norm(as_matrix(a)))


def hadamard(a, b):
    """Entry-wise product of two matrices of the same size."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard operands differ in shape: {a.shape} vs {b.shape}")
    return a * b


def column_mean(a):
    """Arithmetic mean of the columns, as a single-column matrix.

    This is the least-squares solution ``x`` of ``x @ ones(1, n) = A``.
    """
    a = as_matrix(a)
    if a.shape[1] < 1:
        raise ShapeError("column_mean needs at least one column")
    return a.mean(axis=1, keepdims=True)


def augment_ridge(a, lam, pad=False):
    """Append the ridge block ``sqrt(lam) * I`` to the right of ``a``.

    With ``lam == 0`` the input is returned unchanged unless ``pad`` is set,
    in which case a zero identity block is still appended.
    """
    a = as_matrix(a)
    if lam < 0:
        raise ValueError(f"ridge weight must be nonnegative, got {lam}")
    if lam == 0 and not pad:
        return a
    return np.hstack([a, np.sqrt(lam) * np.eye(a.shape[0])])


def solve_row_ls(a, b):
    """Minimum-norm ``X`` minimizing ``||X @ a - b||_F``.

    Parameters
    ----------
    a : (m, n) array
        Coefficient matrix multiplying from the right.
    b : (p, n) array
        Right-hand side with matching column count.

    Returns
    -------
    (p, m) array
        The least-squares solution; when ``a`` is row-rank-deficient, the
        minimizer of smallest Frobenius norm.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] < 1:
        raise ShapeError("coefficient matrix needs at least one column")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(
            f"column mismatch: coefficients have {a.shape[1]}, right-hand side has {b.shape[1]}"
        )
    x, _, _, _ = scipy.linalg.lstsq(
        a.T, b.T, cond=RANK_RTOL, lapack_driver="gelsy", check_finite=False
    )
    return np.ascontiguousarray(x.T)
