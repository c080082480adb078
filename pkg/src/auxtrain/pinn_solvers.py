"""Penalty and weighted-penalty training for transport-operator networks.

The unknowns are the network parameters, per-layer interior states a_l^(1)
(on the collocation points) and boundary states a_l^(2), and per-layer
tangent blocks d_{l,i} standing in for the input derivatives of the layer-l
pre-activation.  The interior part of the loss couples the operator misfit
sum_i c_i * d_{L,i} - Y with quadratic penalties tying every state and
tangent to its layer recursion; the boundary part penalizes the state chain
against the boundary data.

Two weight regimes share one code path:

``pm``   : all penalty weights are the fixed alpha/beta constants.
``sapm`` : term l is additionally scaled by omega_l (product of downstream
           squared weight norms) and each interior state column by
           gamma_{n,l} (accumulated downstream tangent energy at sample n).
           Because those weights depend on W_l and d_{l,i}, the W solves
           gain a ridge lambda_l and the tangent solves a per-sample ridge
           xi_{n,l}; both are recomputed from current residuals.

One sweep updates, from the output layer inward: W_L, b_L, the top tangent
row; then for l = L-1..1: W_l, b_l, the layer-l tangents (one small
positive-definite solve per sample, batched), and an Armijo step in each
state block.  Per-sample quantities are defined as column slices of the
batched evaluation, so runs are exactly reproducible.
"""

from dataclasses import dataclass

import numpy as np

from . import fnn
from .errors import NumericError, SolverDivergence, UnsupportedActivationError
from .fnn_solvers import _armijo, _ratio, omega_weights
from .linalg import augment_ridge, column_mean, solve_row_ls
from .pinn import build_transport_datasets, tangent_forward
from .rng import SplitMix64

TRACE_COLUMNS_PINN = ("iter", "actual_loss", "J", "J1", "J2", "bound_ratio")


@dataclass(frozen=True)
class PinnWeights:
    """Fixed positive penalty weights: interior state (beta1), tangent
    (alpha1, one per layer including the top), boundary state (beta2), and
    the boundary loss weight mu."""

    beta1: np.ndarray  # length L-1
    alpha1: np.ndarray  # length L
    beta2: np.ndarray  # length L-1
    mu: float = 1.0

    def __post_init__(self):
        if not (
            (self.beta1 > 0).all()
            and (self.alpha1 > 0).all()
            and (self.beta2 > 0).all()
            and self.mu > 0
        ):
            raise ValueError("penalty weights must be strictly positive")

    @classmethod
    def uniform(cls, depth, value=1.0, mu=1.0):
        return cls(
            np.full(depth - 1, float(value)),
            np.full(depth, float(value)),
            np.full(depth - 1, float(value)),
            float(mu),
        )


@dataclass
class PinnAux:
    """Auxiliary variables: interior states a1[l-1] (M x N1, l = 1..L-1),
    boundary states a2[l-1] (M x N2), and tangents tan[l-1] of shape
    (d, rows_l, N1) with rows_l = M below the top layer and 1 at it."""

    a1: list
    a2: list
    tan: list

    def copy(self):
        return PinnAux(
            [a.copy() for a in self.a1],
            [a.copy() for a in self.a2],
            [t.copy() for t in self.tan],
        )


@dataclass
class PinnData:
    """Collocation and boundary samples with labels and frozen coefficient rows."""

    x_interior: np.ndarray  # d x N1
    y_interior: np.ndarray  # 1 x N1
    x_boundary: np.ndarray  # d x N2
    y_boundary: np.ndarray  # 1 x N2
    coeff: np.ndarray  # d x N1, c_i(x_n)

    @classmethod
    def from_problem(cls, problem, n_interior, n_boundary):
        interior, boundary = build_transport_datasets(problem, n_interior, n_boundary)
        return cls(
            interior.features,
            interior.labels,
            boundary.features,
            boundary.labels,
            problem.coefficients(interior.features),
        )

    @property
    def dim(self):
        return self.x_interior.shape[0]

    @property
    def n_interior(self):
        return self.x_interior.shape[1]

    @property
    def n_boundary(self):
        return self.x_boundary.shape[1]


def init_pinn_aux(depth, width, dim, n_interior, n_boundary, stream):
    """Draw every auxiliary entry from U(-1, 1).

    Order (documented for reproducibility): interior states layer by layer,
    boundary states layer by layer, then tangents for l = 1..L, each as a
    (d, rows_l, N1) block in row-major order.
    """
    a1 = [stream.uniform(-1.0, 1.0, size=(width, n_interior)) for _ in range(depth - 1)]
    a2 = [stream.uniform(-1.0, 1.0, size=(width, n_boundary)) for _ in range(depth - 1)]
    tan = []
    for layer in range(1, depth + 1):
        rows = 1 if layer == depth else width
        tan.append(stream.uniform(-1.0, 1.0, size=(dim, rows, n_interior)))
    return PinnAux(a1, a2, tan)


def feasible_pinn_aux(params, data):
    """Auxiliaries from the forward and tangent recursions; at these values
    every penalty term vanishes and the penalty losses equal the plain loss."""
    trace = tangent_forward(params, data.x_interior)
    btrace = fnn.forward(params, data.x_boundary)
    depth = params.depth
    return PinnAux(
        trace.preactivations[: depth - 1],
        btrace.preactivations,
        trace.tangents,
    )


def _sq(arr):
    return float((arr * arr).sum())


def _colsq(arr):
    return (arr * arr).sum(axis=0)


def _interior_input(params, aux, data, layer):
    return data.x_interior if layer == 1 else params.activation(aux.a1[layer - 2])


def _boundary_input(params, aux, data, layer):
    return data.x_boundary if layer == 1 else params.activation(aux.a2[layer - 2])


def interior_state_residual(params, aux, data, layer):
    """(W_l A_l^(1) + b_l 1^T) - a_l^(1) for layers 1..L-1."""
    a_in = _interior_input(params, aux, data, layer)
    return params.weights[layer - 1] @ a_in + params.biases[layer - 1] - aux.a1[layer - 1]


def boundary_state_residual(params, aux, data, layer):
    """(W_l A_l^(2) + b_l 1^T) minus a_l^(2), or minus Y^(2) at the top layer."""
    a_in = _boundary_input(params, aux, data, layer)
    target = data.y_boundary if layer == params.depth else aux.a2[layer - 1]
    return params.weights[layer - 1] @ a_in + params.biases[layer - 1] - target


def tangent_prediction(params, aux, data, layer):
    """The recursion value for layer ``layer``: W_1 columns broadcast for
    layer 1, else W_l (s'(a_{l-1}^(1)) * d_{l-1,i}); shape (d, rows_l, N1)."""
    if layer == 1:
        return np.repeat(
            params.weights[0].T[:, :, None], data.n_interior, axis=2
        )
    sp = params.activation.deriv(aux.a1[layer - 2])
    w = params.weights[layer - 1]
    return np.stack([w @ (sp * aux.tan[layer - 2][i]) for i in range(data.dim)])


def tangent_residual(params, aux, data, layer):
    return tangent_prediction(params, aux, data, layer) - aux.tan[layer - 1]


def operator_residual(aux, data):
    """sum_i c_i * d_{L,i} - Y^(1) on the collocation points."""
    top = aux.tan[-1]
    acc = data.coeff[0:1] * top[0]
    for i in range(1, data.dim):
        acc = acc + data.coeff[i : i + 1] * top[i]
    return acc - data.y_interior


def gamma_stack(aux):
    """Rows l = 1..L of gamma_{n,l} = sum_i sum_{j>=l, j<L} ||d_{j,i}[n]||^2.

    Row L is zero; the sums accumulate from the last hidden layer downward.
    """
    depth = len(aux.tan)
    n = aux.tan[0].shape[2]
    gam = np.zeros((depth, n))
    for layer in range(depth - 1, 0, -1):
        block = aux.tan[layer - 1]
        gam[layer - 1] = gam[layer] + (block * block).sum(axis=(0, 1))
    return gam


def _omega(params, adaptive):
    return omega_weights(params) if adaptive else np.ones(params.depth)


def _gamma(aux, data, adaptive):
    if adaptive:
        return gamma_stack(aux)
    return np.ones((len(aux.tan), data.n_interior))


def _penalty_loss(params, aux, data, weights, adaptive):
    depth = params.depth
    omega = _omega(params, adaptive)
    gam = _gamma(aux, data, adaptive)
    j1 = _sq(operator_residual(aux, data))
    for layer in range(1, depth):
        r = interior_state_residual(params, aux, data, layer)
        j1 += weights.beta1[layer - 1] * omega[layer - 1] * float(
            (gam[layer - 1] * _colsq(r)).sum()
        )
    for layer in range(1, depth + 1):
        r = tangent_residual(params, aux, data, layer)
        j1 += weights.alpha1[layer - 1] * omega[layer - 1] * _sq(r)
    j1 /= data.n_interior
    j2 = _sq(boundary_state_residual(params, aux, data, depth))
    for layer in range(1, depth):
        j2 += weights.beta2[layer - 1] * omega[layer - 1] * _sq(
            boundary_state_residual(params, aux, data, layer)
        )
    j2 /= data.n_boundary
    return j1 + weights.mu * j2


def loss_pm_pinn(params, aux, data, weights):
    """Penalty loss with fixed weights only."""
    return _penalty_loss(params, aux, data, weights, adaptive=False)


def loss_sapm_pinn(params, aux, data, weights):
    """Penalty loss with the omega / gamma self-adaptive weighting."""
    return _penalty_loss(params, aux, data, weights, adaptive=True)


def true_loss(params, data, mu):
    """The plain operator + boundary loss (J, J1, J2) of the current network."""
    trace = tangent_forward(params, data.x_interior)
    top = trace.tangents[-1]
    phi = data.coeff[0:1] * top[0]
    for i in range(1, data.dim):
        phi = phi + data.coeff[i : i + 1] * top[i]
    j1 = fnn.mse_from_values(phi, data.y_interior)
    j2 = fnn.mse_from_values(
        fnn.forward(params, data.x_boundary).output, data.y_boundary
    )
    return j1 + mu * j2, j1, j2


def lambda_ridge(params, aux, data, weights, layer, adaptive=True):
    """Ridge coefficient of the W_l solve in the weighted route.

    Accumulates, over m < l and with the telescoped downstream factor
    prod_{m<k<l} ||W_k||_F^2, the tangent residual energy, the interior state
    residual energy weighted per column by the tangent-energy sums (split,
    for l >= 3, into the portion beyond layer l and the portion between m
    and l, which is gated off at the top layer), and the boundary residual
    energy.  Zero for l = 1 and in the unweighted route.
    """
    depth = params.depth
    if layer == 1 or not adaptive:
        return 0.0
    n1 = data.n_interior
    n2 = data.n_boundary
    colsq_tan = [
        (aux.tan[j - 1] * aux.tan[j - 1]).sum(axis=(0, 1)) for j in range(1, depth)
    ]  # per-column tangent energy for j = 1..L-1
    sq = [float((w * w).sum()) for w in params.weights]
    lam = 0.0
    if layer == 2:
        d_res = _sq(tangent_residual(params, aux, data, 1))
        s_col = _colsq(interior_state_residual(params, aux, data, 1))
        gamma1 = np.sum(colsq_tan, axis=0) if colsq_tan else np.zeros(n1)
        b_res = _sq(boundary_state_residual(params, aux, data, 1))
        return (
            weights.alpha1[0] * d_res / n1
            + weights.beta1[0] * float((gamma1 * s_col).sum()) / n1
            + weights.mu * weights.beta2[0] * b_res / n2
        )
    eta = 0.0 if layer == depth else 1.0
    outer_sq = np.zeros(n1)  # column weights for tangent energy at layers >= l
    for j in range(layer, depth):
        outer_sq += colsq_tan[j - 1]
    omega_tilde = 1.0
    for m in range(layer - 1, 0, -1):
        d_res = _sq(tangent_residual(params, aux, data, m))
        s_col = _colsq(interior_state_residual(params, aux, data, m))
        between_sq = np.zeros(n1)  # tangent energy between m and l
        for j in range(m, layer):
            between_sq += colsq_tan[j - 1]
        b_res = _sq(boundary_state_residual(params, aux, data, m))
        lam += omega_tilde * (
            weights.alpha1[m - 1] * d_res / n1
            + weights.beta1[m - 1]
            * (eta * float((outer_sq * s_col).sum()) + float((between_sq * s_col).sum()))
            / n1
            + weights.mu * weights.beta2[m - 1] * b_res / n2
        )
        omega_tilde *= sq[m - 1]
    return lam


def xi_ridge(params, aux, data, weights, layer, adaptive=True):
    """Per-sample ridge of the layer-l tangent solves (l = 1..L-1):

    xi_{n,l} = sum_{j<=l} beta1_j (prod_{j<k<=l+1} ||W_k||_F^2)
               ||W_j A_j^(1)[n] + b_j - a_j^(1)[n]||^2,

    zero in the unweighted route (the column weights are then constant).
    """
    n1 = data.n_interior
    if not adaptive:
        return np.zeros(n1)
    sq = [float((w * w).sum()) for w in params.weights]
    out = np.zeros(n1)
    prod = 1.0
    for j in range(layer, 0, -1):
        prod *= sq[j]  # picks up ||W_{j+1}||^2 when stepping to index j
        res = interior_state_residual(params, aux, data, j)
        out += weights.beta1[j - 1] * prod * _colsq(res)
    return out


@dataclass
class BlockWorkspace:
    """Derived quantities for one layer's block solves, at the current state."""

    layer: int
    interior_input: np.ndarray  # A_l^(1)
    boundary_input: np.ndarray  # A_l^(2)
    gamma: np.ndarray  # column weights gamma_{n,l} (ones when unweighted)
    lam: float  # W-solve ridge
    xi: np.ndarray  # tangent-solve per-sample ridge (layers < L)
    omega: float  # omega_l
    eta: float  # 0 at the top layer, 1 otherwise


def build_workspace(params, aux, data, weights, layer, adaptive=True):
    depth = params.depth
    gam = _gamma(aux, data, adaptive)
    return BlockWorkspace(
        layer=layer,
        interior_input=_interior_input(params, aux, data, layer),
        boundary_input=_boundary_input(params, aux, data, layer),
        gamma=gam[layer - 1],
        lam=lambda_ridge(params, aux, data, weights, layer, adaptive),
        xi=xi_ridge(params, aux, data, weights, layer, adaptive)
        if layer < depth
        else np.zeros(data.n_interior),
        omega=float(_omega(params, adaptive)[layer - 1]),
        eta=0.0 if layer == depth else 1.0,
    )


def solve_w_block(params, aux, data, weights, layer, adaptive=True):
    """Exact least-squares update of W_l from the stacked block system."""
    depth = params.depth
    d = data.dim
    n1, n2 = data.n_interior, data.n_boundary
    coeff_blocks, rhs_blocks = [], []
    if layer >= 2:
        sp = params.activation.deriv(aux.a1[layer - 2])
        w = np.sqrt(weights.alpha1[layer - 1] / n1)
        coeff_blocks.append(w * np.hstack([sp * aux.tan[layer - 2][i] for i in range(d)]))
        rhs_blocks.append(w * np.hstack([aux.tan[layer - 1][i] for i in range(d)]))
    else:
        # anchor block: each tangent column of layer 1 pins a column of W_1
        eye = np.eye(d)
        w = np.sqrt(weights.alpha1[0] / n1)
        coeff_blocks.append(
            w * np.hstack([np.repeat(eye[:, i : i + 1], n1, axis=1) for i in range(d)])
        )
        rhs_blocks.append(w * np.hstack([aux.tan[0][i] for i in range(d)]))
    if layer <= depth - 1:
        gam = _gamma(aux, data, adaptive)[layer - 1]
        root = np.sqrt(weights.beta1[layer - 1] / n1) * np.sqrt(gam)
        a_in = _interior_input(params, aux, data, layer)
        p = aux.a1[layer - 1] - params.biases[layer - 1]
        coeff_blocks.append(a_in * root)
        rhs_blocks.append(p * root)
    a_in2 = _boundary_input(params, aux, data, layer)
    target2 = data.y_boundary if layer == depth else aux.a2[layer - 1]
    beta2 = 1.0 if layer == depth else weights.beta2[layer - 1]
    w2 = np.sqrt(weights.mu * beta2 / n2)
    coeff_blocks.append(w2 * a_in2)
    rhs_blocks.append(w2 * (target2 - params.biases[layer - 1]))
    coeff = np.hstack(coeff_blocks)
    rhs = np.hstack(rhs_blocks)
    lam = lambda_ridge(params, aux, data, weights, layer, adaptive)
    if lam > 0.0:
        coeff = augment_ridge(coeff, lam)
        rhs = np.hstack([rhs, np.zeros((rhs.shape[0], coeff.shape[0]))])
    return solve_row_ls(coeff, rhs)


def solve_b_block(params, aux, data, weights, layer, adaptive=True):
    """Exact bias update: a plain column mean at the top layer, otherwise the
    weighted mean of the interior (per-column tangent-energy weights) and
    boundary stacks."""
    depth = params.depth
    w = params.weights[layer - 1]
    if layer == depth:
        a_in2 = _boundary_input(params, aux, data, layer)
        return column_mean(data.y_boundary - w @ a_in2)
    n1, n2 = data.n_interior, data.n_boundary
    r1 = aux.a1[layer - 1] - w @ _interior_input(params, aux, data, layer)
    r2 = aux.a2[layer - 1] - w @ _boundary_input(params, aux, data, layer)
    theta = _gamma(aux, data, adaptive)[layer - 1]
    w1 = np.sqrt(weights.beta1[layer - 1] * theta / n1)
    w2 = np.full(n2, np.sqrt(weights.mu * weights.beta2[layer - 1] / n2))
    coeff = np.concatenate([w1, w2])[None, :]
    rhs = np.hstack([r1 * w1, r2 * w2])
    return solve_row_ls(coeff, rhs)


def solve_d_block(params, aux, data, weights, layer, adaptive=True):
    """Exact tangent update for one layer, batched over samples and directions.

    Below the top layer every sample solves the positive-definite system

        [alpha_{l+1} S_n G S_n + (prox + xi_{n,l}) I] d = alpha_{l+1} S_n W^T t_{l+1,i}[n] + prox D_{l,i}[n]

    with S_n = diag(s'(a_l^(1)[n])), G = W_{l+1}^T W_{l+1}, and
    prox = alpha_l ||W_{l+1}||_F^2 (or alpha_l unweighted).  At the top layer
    the system couples the d directions of one sample through the operator
    coefficients.  Singular corner cases (all blocks zero) return zero, the
    minimum-norm solution.
    """
    depth = params.depth
    d = data.dim
    n1 = data.n_interior
    pred = tangent_prediction(params, aux, data, layer)
    if layer == depth:
        alpha = weights.alpha1[depth - 1]
        c = data.coeff  # (d, N1)
        gram = c.T[:, :, None] * c.T[:, None, :] + alpha * np.eye(d)
        rhs = data.y_interior[0][:, None] * c.T + alpha * pred[:, 0, :].T
        sol = np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]  # (N1, d)
        return np.ascontiguousarray(sol.T)[:, None, :]
    w_next = params.weights[layer]
    s_next = float((w_next * w_next).sum())
    alpha_here = weights.alpha1[layer - 1]
    alpha_next = weights.alpha1[layer]
    prox = alpha_here * (s_next if adaptive else 1.0)
    xi = xi_ridge(params, aux, data, weights, layer, adaptive)
    diag = prox + xi  # (N1,)
    sp = params.activation.deriv(aux.a1[layer - 1])
    if s_next == 0.0:
        # coupling block vanishes; the system is diagonal (zero diag -> zero)
        out = np.empty_like(aux.tan[layer - 1])
        for i in range(d):
            rhs = prox * pred[i]
            out[i] = np.divide(
                rhs, diag, out=np.zeros_like(rhs), where=diag > 0.0
            )
        return out
    gram = w_next.T @ w_next
    h = alpha_next * (gram[None, :, :] * sp.T[:, None, :] * sp.T[:, :, None])
    h += diag[:, None, None] * np.eye(params.width)
    rhs = np.empty((n1, params.width, d))
    for i in range(d):
        u = sp * (w_next.T @ aux.tan[layer][i])
        rhs[:, :, i] = (alpha_next * u + prox * pred[i]).T
    sol = np.linalg.solve(h, rhs)  # (N1, M, d)
    return np.ascontiguousarray(np.stack([sol[:, :, i].T for i in range(d)]))


def grad_a1(params, aux, data, weights, layer, adaptive=True, sample=None):
    """Gradient of the penalty loss in the interior state a_l^(1), (M, N1).

    Three contributions per column n: the gamma-weighted proximity to the
    layer map, the next state penalty pulled back through s', and the next
    tangent penalty pulled back through s''.  ``sample`` selects one column
    of the batched evaluation.
    """
    depth = params.depth
    n1 = data.n_interior
    act = params.activation
    omega = _omega(params, adaptive)
    gam = _gamma(aux, data, adaptive)
    a = aux.a1[layer - 1]
    w_next = params.weights[layer]
    base = (
        params.weights[layer - 1] @ _interior_input(params, aux, data, layer)
        + params.biases[layer - 1]
    )
    g = weights.beta1[layer - 1] * omega[layer - 1] * gam[layer - 1] * (a - base)
    if layer <= depth - 2:
        nxt = w_next @ act(a) + params.biases[layer] - aux.a1[layer]
        g = g + weights.beta1[layer] * omega[layer] * gam[layer] * (
            (w_next.T @ nxt) * act.deriv(a)
        )
    sp = act.deriv(a)
    spp = act.second(a)
    acc = np.zeros_like(a)
    for i in range(data.dim):
        r = w_next @ (sp * aux.tan[layer - 1][i]) - aux.tan[layer][i]
        acc += aux.tan[layer - 1][i] * (w_next.T @ r)
    g = g + weights.alpha1[layer] * omega[layer] * (acc * spp)
    g = (2.0 / n1) * g
    if sample is not None:
        return g[:, sample : sample + 1]
    return g


def grad_a2(params, aux, data, weights, layer, adaptive=True):
    """Gradient of the penalty loss in the boundary state a_l^(2), (M, N2)."""
    depth = params.depth
    act = params.activation
    omega = _omega(params, adaptive)
    a = aux.a2[layer - 1]
    w_next = params.weights[layer]
    base = (
        params.weights[layer - 1] @ _boundary_input(params, aux, data, layer)
        + params.biases[layer - 1]
    )
    g = weights.beta2[layer - 1] * omega[layer - 1] * (a - base)
    target = data.y_boundary if layer == depth - 1 else aux.a2[layer]
    beta_next = 1.0 if layer == depth - 1 else weights.beta2[layer]
    nxt = w_next @ act(a) + params.biases[layer] - target
    g = g + beta_next * omega[layer] * ((w_next.T @ nxt) * act.deriv(a))
    return (2.0 * weights.mu / data.n_boundary) * g


def consistency_bound(problem, depth, weights, activation):
    """The explicit constant of the bound  J <= C * d * L * (L+1) * J_S.

    Built from the activation's smoothness constants and the coefficient
    bound of the problem; equal to max(1, B_c^2) for sin and unit weights.
    """
    if not activation.has_second:
        raise UnsupportedActivationError("the consistency bound needs a smooth activation")
    bc = problem.coeff_bound
    bs = activation.deriv_bound
    cs = activation.value_lipschitz
    csp = activation.deriv_lipschitz
    inner = max(
        1.0,
        bc ** 2,
        bc ** 2 * bs ** (2 * depth - 2),
        bc ** 2 * csp ** 2 * max(bs ** (2 * depth - 4), cs ** (2 * depth - 4)),
        bc ** 2 * csp ** 2 * max(bs ** (2 * depth - 6), cs ** (2 * depth - 6)),
    )
    w1 = max(1.0, float((1.0 / weights.alpha1).max()), float((1.0 / weights.beta1).max()))
    w2 = max(1.0, float((1.0 / weights.beta2).max()))
    return max(w1 * inner, w2 * max(1.0, cs ** (2 * depth - 2)))


@dataclass
class PinnTrainConfig:
    """Sizes, iteration budget and optimizer knobs for one transport run."""

    depth: int
    width: int
    iterations: int
    activation: str = "sin"
    penalty: float = 1.0  # uniform value for all alpha/beta weights
    mu: float = 1.0
    step: float = 1.0
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    armijo_max_backtracks: int = 20
    lr0: float = 1e-2
    lr_decay: float = 1e4


@dataclass
class PinnRunResult:
    params: fnn.FnnParams
    aux: PinnAux
    trace: np.ndarray


def _update_a1(params, aux, data, weights, layer, cfg, adaptive):
    """One per-sample Armijo step in a_l^(1); columns backtrack independently."""
    depth = params.depth
    n1 = data.n_interior
    act = params.activation
    omega = _omega(params, adaptive)
    gam = _gamma(aux, data, adaptive)
    w_next = params.weights[layer]
    base = (
        params.weights[layer - 1] @ _interior_input(params, aux, data, layer)
        + params.biases[layer - 1]
    )
    has_mid = layer <= depth - 2
    c1 = weights.beta1[layer - 1] * omega[layer - 1] / n1
    c2 = (weights.beta1[layer] * omega[layer] / n1) if has_mid else 0.0
    c3 = weights.alpha1[layer] * omega[layer] / n1
    tan_here = aux.tan[layer - 1]
    tan_next = aux.tan[layer]
    b_next = params.biases[layer]
    a_next = aux.a1[layer] if has_mid else None

    def local(a_sub, idx):
        val = c1 * gam[layer - 1][idx] * _colsq(a_sub - base[:, idx])
        if has_mid:
            r = w_next @ act(a_sub) + b_next - a_next[:, idx]
            val = val + c2 * gam[layer][idx] * _colsq(r)
        sp = act.deriv(a_sub)
        for i in range(data.dim):
            r = w_next @ (sp * tan_here[i][:, idx]) - tan_next[i][:, idx]
            val = val + c3 * _colsq(r)
        return val

    grad = grad_a1(params, aux, data, weights, layer, adaptive)
    g2 = _colsq(grad)
    active = np.flatnonzero(g2 > 0.0)
    if active.size == 0:
        return
    a0 = aux.a1[layer - 1]
    f0 = local(a0[:, active], active)
    new = a0.copy()
    t = np.full(active.size, cfg.step)
    remaining = np.arange(active.size)
    for _ in range(cfg.armijo_max_backtracks):
        if remaining.size == 0:
            break
        idx = active[remaining]
        cand = a0[:, idx] - t[remaining] * grad[:, idx]
        ok = local(cand, idx) <= f0[remaining] - cfg.armijo_slope * t[remaining] * g2[idx]
        if ok.any():
            new[:, idx[ok]] = cand[:, ok]
        remaining = remaining[~ok]
        t[remaining] *= cfg.armijo_shrink
    aux.a1[layer - 1] = new


def _update_a2(params, aux, data, weights, layer, cfg, adaptive):
    """One whole-matrix Armijo step in a_l^(2)."""
    depth = params.depth
    act = params.activation
    omega = _omega(params, adaptive)
    w_next = params.weights[layer]
    base = (
        params.weights[layer - 1] @ _boundary_input(params, aux, data, layer)
        + params.biases[layer - 1]
    )
    target = data.y_boundary if layer == depth - 1 else aux.a2[layer]
    beta_next = 1.0 if layer == depth - 1 else weights.beta2[layer]
    b_next = params.biases[layer]
    scale = weights.mu / data.n_boundary

    def local(a):
        val = weights.beta2[layer - 1] * omega[layer - 1] * _sq(a - base)
        val += beta_next * omega[layer] * _sq(w_next @ act(a) + b_next - target)
        return scale * val

    grad = grad_a2(params, aux, data, weights, layer, adaptive)
    aux.a2[layer - 1] = _armijo(
        local,
        aux.a2[layer - 1],
        grad,
        cfg.step,
        cfg.armijo_shrink,
        cfg.armijo_slope,
        cfg.armijo_max_backtracks,
    )


def _penalty_pinn_run(config, problem, data, stream, adaptive, params=None, aux=None):
    if config.activation != "sin":
        raise UnsupportedActivationError("transport solvers require the sin activation")
    depth = config.depth
    if stream is None:
        stream = SplitMix64(0)
    if params is None:
        params = fnn.init_params(depth, config.width, data.dim, config.activation, stream)
    if aux is None:
        aux = init_pinn_aux(
            depth, config.width, data.dim, data.n_interior, data.n_boundary, stream
        )
    weights = PinnWeights.uniform(depth, config.penalty, config.mu)
    scale = (
        consistency_bound(problem, depth, weights, params.activation)
        * data.dim
        * depth
        * (depth + 1)
    )
    trace = np.empty((config.iterations + 1, 6))

    def record(k):
        actual = _penalty_loss(params, aux, data, weights, adaptive)
        j, j1, j2 = true_loss(params, data, weights.mu)
        trace[k] = (k, actual, j, j1, j2, _ratio(j, actual, scale))
        if not (np.isfinite(actual) and np.isfinite(j)):
            raise SolverDivergence(
                f"non-finite loss at iteration {k}", iteration=k, block="loss"
            )

    record(0)
    for k in range(1, config.iterations + 1):
        where = "start"
        try:
            where = f"W{depth}"
            params.weights[depth - 1] = solve_w_block(params, aux, data, weights, depth, adaptive)
            where = f"b{depth}"
            params.biases[depth - 1] = solve_b_block(params, aux, data, weights, depth, adaptive)
            where = f"d{depth}"
            aux.tan[depth - 1] = solve_d_block(params, aux, data, weights, depth, adaptive)
            for layer in range(depth - 1, 0, -1):
                where = f"W{layer}"
                params.weights[layer - 1] = solve_w_block(params, aux, data, weights, layer, adaptive)
                where = f"b{layer}"
                params.biases[layer - 1] = solve_b_block(params, aux, data, weights, layer, adaptive)
                where = f"d{layer}"
                aux.tan[layer - 1] = solve_d_block(params, aux, data, weights, layer, adaptive)
                where = f"a1:{layer}"
                _update_a1(params, aux, data, weights, layer, config, adaptive)
                where = f"a2:{layer}"
                _update_a2(params, aux, data, weights, layer, config, adaptive)
            where = "loss"
            record(k)
        except NumericError as exc:
            raise SolverDivergence(
                f"non-finite values in block {where} at iteration {k}",
                iteration=k,
                block=where,
            ) from exc
    return PinnRunResult(params, aux, trace)


def sapm_pinn_run(config, problem, data, stream=None, params=None, aux=None):
    """Alternating sweep on the self-adaptive weighted penalty loss.

    Per iteration: W_L, b_L and the top tangents; then, for each layer from
    L-1 down to 1, the W and b solves (with the lambda ridge), the tangent
    solves (with the xi ridge), and Armijo steps in both state blocks."""
    return _penalty_pinn_run(config, problem, data, stream, True, params, aux)


def pm_pinn_run(config, problem, data, stream=None, params=None, aux=None):
    """The same sweep with fixed unit weighting and no ridge terms."""
    return _penalty_pinn_run(config, problem, data, stream, False, params, aux)


def loss_J_gradient(params, data, mu=1.0):
    """Gradient of the plain operator + boundary loss in every W_l and b_l.

    Reverse accumulation through the forward and tangent recursions: the
    operator misfit seeds adjoints of the top tangents, which flow down the
    tangent chain (contributing s'' terms to the pre-activation adjoints),
    and the pre-activation adjoints then flow down the ordinary chain.  The
    boundary misfit adds a standard backpropagation pass.
    """
    act = params.activation
    depth = params.depth
    d = data.dim
    n1, n2 = data.n_interior, data.n_boundary
    trace = tangent_forward(params, data.x_interior)
    a = trace.preactivations
    tan = trace.tangents
    top = tan[-1]
    phi = data.coeff[0:1] * top[0]
    for i in range(1, d):
        phi = phi + data.coeff[i : i + 1] * top[i]
    r = (2.0 / n1) * (phi - data.y_interior)
    gw = [np.zeros_like(w) for w in params.weights]
    gb = [np.zeros_like(b) for b in params.biases]
    adj_a = [np.zeros_like(a[l]) for l in range(depth - 1)]
    tau = [r * data.coeff[i : i + 1] for i in range(d)]
    for layer in range(depth, 1, -1):
        w = params.weights[layer - 1]
        a_prev = a[layer - 2]
        sp = act.deriv(a_prev)
        spp = act.second(a_prev)
        tau_prev = []
        for i in range(d):
            gw[layer - 1] += tau[i] @ (sp * tan[layer - 2][i]).T
            back = w.T @ tau[i]
            tau_prev.append(sp * back)
            adj_a[layer - 2] += spp * tan[layer - 2][i] * back
        tau = tau_prev
    for i in range(d):
        gw[0][:, i] += tau[i].sum(axis=1)
    for layer in range(depth - 1, 0, -1):
        adj = adj_a[layer - 1]
        h_prev = data.x_interior if layer == 1 else act(a[layer - 2])
        gw[layer - 1] += adj @ h_prev.T
        gb[layer - 1] += adj.sum(axis=1, keepdims=True)
        if layer >= 2:
            adj_a[layer - 2] += act.deriv(a[layer - 2]) * (
                params.weights[layer - 1].T @ adj
            )
    btrace = fnn.forward(params, data.x_boundary)
    delta = (2.0 * mu / n2) * (btrace.output - data.y_boundary)
    for layer in range(depth, 0, -1):
        h_prev = (
            data.x_boundary if layer == 1 else act(btrace.preactivations[layer - 2])
        )
        gw[layer - 1] += delta @ h_prev.T
        gb[layer - 1] += delta.sum(axis=1, keepdims=True)
        if layer >= 2:
            delta = (params.weights[layer - 1].T @ delta) * act.deriv(
                btrace.preactivations[layer - 2]
            )
    return gw, gb


def ls_pinn_run(config, problem, data, stream=None, params=None):
    """Full-batch gradient descent on the plain operator + boundary loss."""
    if config.activation != "sin":
        raise UnsupportedActivationError("transport solvers require the sin activation")
    if stream is None:
        stream = SplitMix64(0)
    if params is None:
        params = fnn.init_params(
            config.depth, config.width, data.dim, config.activation, stream
        )
    weights = PinnWeights.uniform(config.depth, config.penalty, config.mu)
    scale = (
        consistency_bound(problem, config.depth, weights, params.activation)
        * data.dim
        * config.depth
        * (config.depth + 1)
    )
    trace = np.empty((config.iterations + 1, 6))

    def record(k):
        j, j1, j2 = true_loss(params, data, config.mu)
        trace[k] = (k, j, j, j1, j2, _ratio(j, j, scale))
        if not np.isfinite(j):
            raise SolverDivergence(
                f"non-finite loss at iteration {k}", iteration=k, block="loss"
            )

    record(0)
    for k in range(1, config.iterations + 1):
        try:
            gw, gb = loss_J_gradient(params, data, config.mu)
        except NumericError as exc:
            raise SolverDivergence(
                f"non-finite gradient at iteration {k}", iteration=k, block="gradient"
            ) from exc
        tau = config.lr0 / (1.0 + (k - 1) / config.lr_decay)
        for l in range(config.depth):
            params.weights[l] = params.weights[l] - tau * gw[l]
            params.biases[l] = params.biases[l] - tau * gb[l]
        try:
            record(k)
        except NumericError as exc:
            raise SolverDivergence(
                f"non-finite forward pass at iteration {k}", iteration=k, block="loss"
            ) from exc
    return PinnRunResult(params, None, trace)
