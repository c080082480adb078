"""Independent reference implementations used as test oracles.

Everything here deliberately avoids the library code paths: the
least-squares oracle hand-rolls a column-pivoted Householder QR, the loss
oracles are naive Python loops, and the derivative oracle is central finite
differences.
"""

import math

import numpy as np


def minnorm_lstsq_oracle(coef, rhs, tol=1e-12):
    """Minimum-norm x minimizing ||coef @ x - rhs||_F, for small dense systems.

    Column-pivoted Householder QR determines the numerical rank r; the
    remaining consistent r-row full-rank system is solved for its
    minimum-norm solution.  Pivoting permutes coordinates only, so minimum
    norm is preserved.
    """
    r_mat = np.array(coef, dtype=np.float64)
    m, n = r_mat.shape
    qtb = np.array(rhs, dtype=np.float64)
    if qtb.ndim == 1:
        qtb = qtb[:, None]
    piv = np.arange(n)
    for k in range(min(m, n)):
        norms = (r_mat[k:, k:] ** 2).sum(axis=0)
        j = k + int(np.argmax(norms))
        if j != k:
            r_mat[:, [k, j]] = r_mat[:, [j, k]]
            piv[[k, j]] = piv[[j, k]]
        x = r_mat[k:, k]
        nx = math.sqrt(float((x * x).sum()))
        if nx == 0.0:
            continue
        v = x.copy()
        v[0] += math.copysign(nx, v[0] if v[0] != 0 else 1.0)
        v /= math.sqrt(float((v * v).sum()))
        r_mat[k:, :] -= 2.0 * np.outer(v, v @ r_mat[k:, :])
        qtb[k:, :] -= 2.0 * np.outer(v, v @ qtb[k:, :])
    diag = np.abs(np.diag(r_mat))
    dmax = diag.max() if diag.size else 0.0
    rank = int((diag > tol * dmax).sum()) if dmax > 0 else 0
    x = np.zeros((n, qtb.shape[1]))
    if rank:
        top = r_mat[:rank, :]
        c = qtb[:rank, :]
        y = top.T @ np.linalg.solve(top @ top.T, c)
        x[piv] = y
    return x if np.asarray(rhs).ndim > 1 else x[:, 0]


def ridge_row_oracle(a, b, lam):
    """Exact minimizer of ||X a - b||_F^2 + lam ||X||_F^2 via normal equations."""
    m = a.shape[0]
    return b @ a.T @ np.linalg.inv(a @ a.T + lam * np.eye(m))


def radical_inverse(index, base):
    """Digit-reversal fraction of ``index`` in ``base`` (Horner form)."""
    digits = []
    n = index
    while n > 0:
        digits.append(n % base)
        n //= base
    value = 0.0
    for d in reversed(digits):
        value = (value + d) / base
    return value


def central_diff(fn, arr, h=1e-6):
    """Entry-wise central finite differences of a scalar function of ``arr``."""
    arr = np.asarray(arr, dtype=np.float64)
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + h
        fp = fn()
        arr[idx] = old - h
        fm = fn()
        arr[idx] = old
        grad[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return grad


def assert_grad_close(analytic, numeric, rel=1e-5, atol=1e-8):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    gap = np.abs(analytic - numeric)
    ok = gap <= rel * np.abs(numeric) + atol
    assert ok.all(), (
        f"gradient mismatch: worst gap {gap.max():.3e} "
        f"at {np.unravel_index(np.argmax(gap), gap.shape)}"
    )


# --- naive Python-loop loss oracles ------------------------------------------


def _py_matmul(a, b):
    m, k = len(a), len(a[0])
    n = len(b[0])
    return [
        [sum(a[i][p] * b[p][j] for p in range(k)) for j in range(n)] for i in range(m)
    ]


def _py_sq(mat):
    return sum(v * v for row in mat for v in row)


def _act(name, z):
    return max(z, 0.0) if name == "relu" else math.sin(z)


def _act_deriv(name, z):
    if name == "relu":
        return 1.0 if z > 0 else 0.0
    return math.cos(z)


def _apply(fn, mat):
    return [[fn(v) for v in row] for row in mat]


def _lists(arr):
    return [list(map(float, row)) for row in np.asarray(arr)]


def fnn_penalty_loss_oracle(params, aux, x, y, beta, adaptive):
    """Naive-summation evaluation of the (weighted) penalty loss."""
    name = params.activation.name
    depth = params.depth
    n = np.asarray(y).shape[1]
    w = [_lists(m) for m in params.weights]
    b = [[float(v) for v in col[:, 0]] for col in params.biases]
    a_aux = [_lists(m) for m in aux]
    xs = _lists(x)
    ys = _lists(y)
    sq = [_py_sq(m) for m in w]
    omega = [1.0] * depth
    for l in range(depth - 2, -1, -1):
        omega[l] = omega[l + 1] * sq[l + 1]
    if not adaptive:
        omega = [1.0] * depth
    total = 0.0
    for layer in range(1, depth + 1):
        a_in = xs if layer == 1 else _apply(lambda z: _act(name, z), a_aux[layer - 2])
        pred = _py_matmul(w[layer - 1], a_in)
        target = ys if layer == depth else a_aux[layer - 1]
        res_sq = sum(
            (pred[i][j] + b[layer - 1][i] - target[i][j]) ** 2
            for i in range(len(pred))
            for j in range(n)
        )
        weight = 1.0 if layer == depth else beta[layer - 1] * omega[layer - 1]
        total += weight * res_sq
    return total / n


def pinn_penalty_loss_oracle(params, aux, data, weights, adaptive):
    """Naive-summation evaluation of the transport penalty loss."""
    name = params.activation.name
    depth = params.depth
    d = data.dim
    n1, n2 = data.n_interior, data.n_boundary
    w = [_lists(m) for m in params.weights]
    b = [[float(v) for v in col[:, 0]] for col in params.biases]
    a1 = [_lists(m) for m in aux.a1]
    a2 = [_lists(m) for m in aux.a2]
    tan = [[_lists(aux.tan[l][i]) for i in range(d)] for l in range(depth)]
    x1, x2 = _lists(data.x_interior), _lists(data.x_boundary)
    y1, y2 = _lists(data.y_interior), _lists(data.y_boundary)
    coeff = _lists(data.coeff)
    sq = [_py_sq(m) for m in w]
    omega = [1.0] * depth
    for l in range(depth - 2, -1, -1):
        omega[l] = omega[l + 1] * sq[l + 1]
    gamma = [[0.0] * n1 for _ in range(depth)]
    for layer in range(depth - 1, 0, -1):
        for col in range(n1):
            gamma[layer - 1][col] = gamma[layer][col] + sum(
                tan[layer - 1][i][m][col] ** 2
                for i in range(d)
                for m in range(len(tan[layer - 1][i]))
            )
    if not adaptive:
        omega = [1.0] * depth
        gamma = [[1.0] * n1 for _ in range(depth)]
    # interior part
    j1 = 0.0
    for col in range(n1):
        fit = sum(coeff[i][col] * tan[depth - 1][i][0][col] for i in range(d))
        j1 += (fit - y1[0][col]) ** 2
    for layer in range(1, depth):
        a_in = x1 if layer == 1 else _apply(lambda z: _act(name, z), a1[layer - 2])
        pred = _py_matmul(w[layer - 1], a_in)
        for col in range(n1):
            res = sum(
                (pred[m][col] + b[layer - 1][m] - a1[layer - 1][m][col]) ** 2
                for m in range(len(pred))
            )
            j1 += weights.beta1[layer - 1] * omega[layer - 1] * gamma[layer - 1][col] * res
    for layer in range(1, depth + 1):
        for i in range(d):
            if layer == 1:
                pred = [[w[0][m][i]] * n1 for m in range(len(w[0]))]
            else:
                sp = _apply(lambda z: _act_deriv(name, z), a1[layer - 2])
                inner = [
                    [sp[m][col] * tan[layer - 2][i][m][col] for col in range(n1)]
                    for m in range(len(sp))
                ]
                pred = _py_matmul(w[layer - 1], inner)
            res = sum(
                (pred[m][col] - tan[layer - 1][i][m][col]) ** 2
                for m in range(len(pred))
                for col in range(n1)
            )
            j1 += weights.alpha1[layer - 1] * omega[layer - 1] * res
    j1 /= n1
    # boundary part
    j2 = 0.0
    for layer in range(1, depth + 1):
        a_in = x2 if layer == 1 else _apply(lambda z: _act(name, z), a2[layer - 2])
        pred = _py_matmul(w[layer - 1], a_in)
        target = y2 if layer == depth else a2[layer - 1]
        res = sum(
            (pred[m][col] + b[layer - 1][m] - target[m][col]) ** 2
            for m in range(len(pred))
            for col in range(n2)
        )
        weight = 1.0 if layer == depth else weights.beta2[layer - 1] * omega[layer - 1]
        j2 += weight * res
    j2 /= n2
    return j1 + weights.mu * j2


def pinn_true_loss_oracle(params, data, mu):
    """Naive evaluation of the plain operator + boundary loss."""
    from auxtrain import fnn, pinn

    trace = pinn.tangent_forward(params, data.x_interior)
    d = data.dim
    n1 = data.n_interior
    j1 = 0.0
    for col in range(n1):
        fit = sum(
            float(data.coeff[i, col]) * float(trace.tangents[-1][i][0, col])
            for i in range(d)
        )
        j1 += (fit - float(data.y_interior[0, col])) ** 2
    j1 /= n1
    out = fnn.forward(params, data.x_boundary).output
    j2 = sum(
        (float(out[0, col]) - float(data.y_boundary[0, col])) ** 2
        for col in range(data.n_boundary)
    ) / data.n_boundary
    return j1 + mu * j2
