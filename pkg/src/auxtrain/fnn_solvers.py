"""Three training routes for the mean-squared regression loss of an FNN.

``ls``   : full-batch gradient descent directly on the mean-squared loss,
           with a decaying learning rate tau_k = tau0 / (1 + k / K).
``pm``   : the penalty route.  Each hidden pre-activation becomes a free
           variable a_l, the layer equations become quadratic penalties, and
           one sweep alternates exact least-squares solves for every W_l and
           b_l with one line-searched gradient step per a_l.
``sapm`` : the self-adaptive weighted penalty route.  Penalty term l is
           additionally scaled by omega_l, the product of the squared
           Frobenius norms of all downstream weight matrices.  The weighting
           keeps the penalty loss an upper bound for the mean-squared loss
           up to an explicit factor, at the cost of a ridge term lambda_l in
           each W_l solve (the downstream omegas depend on ||W_l||).

A sweep runs the blocks from the output layer inward: solve W_L, b_L, then
for l = L-1..1 step a_l, solve W_l, solve b_l.  Every exact solve minimizes
the loss restricted to its block, and the a-steps use backtracking Armijo on
the local objective S_l, so the recorded loss never increases.  The Armijo
start step carries over per layer and doubles after every accepted step;
without that growth the step stays capped while the curvature of S_l (of
order ||W_{l+1}||_F^2) can fall by many orders, stalling the state updates.
"""

from dataclasses import dataclass

import numpy as np

from . import fnn
from .errors import NumericError, SolverDivergence
from .fnn import get_activation, init_params
from .linalg import augment_ridge, column_mean, solve_row_ls
from .rng import SplitMix64

TRACE_COLUMNS_FNN = ("iter", "actual_loss", "mse_loss", "bound_ratio")

_STEP_CAP = 1e30
_STEP_FLOOR = 1e-300


@dataclass
class FnnTrainConfig:
    """Sizes, iteration budget and optimizer knobs for one FNN training run."""

    depth: int
    width: int
    iterations: int
    activation: str = "relu"
    beta: float = 1.0  # scalar or length L-1 sequence of penalty weights
    step: float = 1.0  # initial Armijo step for the a_l updates
    step_growth: float = 2.0  # start-step growth after an accepted a_l step
    armijo_shrink: float = 0.5
    armijo_slope: float = 1e-4
    armijo_max_backtracks: int = 20
    lr0: float = 1e-2  # gradient-descent schedule tau_k = lr0 / (1 + k / lr_decay)
    lr_decay: float = 1e4


@dataclass
class FnnRunResult:
    """Final state and the per-iteration trace of one training run.

    ``trace`` has one row per recorded iterate (row 0 is the initial state)
    with columns ``TRACE_COLUMNS_FNN``; ``aux`` is None for the ``ls`` route.
    """

    params: fnn.FnnParams
    aux: list
    trace: np.ndarray


def resolve_beta(beta, depth):
    """Normalize the penalty weights to a positive length L-1 vector."""
    arr = np.asarray(beta, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(depth - 1, float(arr))
    if arr.shape != (depth - 1,):
        raise ValueError(f"need {depth - 1} penalty weights, got shape {arr.shape}")
    if not (arr > 0).all():
        raise ValueError("penalty weights must be strictly positive")
    return arr


def init_aux(depth, width, count, stream):
    """Auxiliary states a_1..a_{L-1}, each M x N with entries U(-1, 1).

    Drawn from ``stream`` layer by layer in row-major order, after the
    network parameters when both come from the same stream.
    """
    return [stream.uniform(-1.0, 1.0, size=(width, count)) for _ in range(depth - 1)]


def omega_weights(params):
    """Adaptive weights omega_l = prod_{j>l} ||W_j||_F^2, with omega_L = 1."""
    depth = params.depth
    sq = [float((w * w).sum()) for w in params.weights]
    omega = np.ones(depth)
    for l in range(depth - 2, -1, -1):
        omega[l] = omega[l + 1] * sq[l + 1]
    return omega


def _sq(arr):
    return float((arr * arr).sum())


def _layer_input(params, aux, x, layer):
    """A_l: the features for layer 1, otherwise the activated previous state."""
    return x if layer == 1 else params.activation(aux[layer - 2])


def _state_residual(params, aux, x, y, layer):
    """(W_l A_l + b_l 1^T) minus the layer target (a_l, or Y at the top)."""
    target = y if layer == params.depth else aux[layer - 1]
    a_in = _layer_input(params, aux, x, layer)
    return params.weights[layer - 1] @ a_in + params.biases[layer - 1] - target


def _penalty_loss(params, aux, x, y, beta, adaptive):
    depth = params.depth
    beta = resolve_beta(beta, depth)
    omega = omega_weights(params) if adaptive else np.ones(depth)
    total = _sq(_state_residual(params, aux, x, y, depth))
    for layer in range(1, depth):
        r = _state_residual(params, aux, x, y, layer)
        total += beta[layer - 1] * omega[layer - 1] * _sq(r)
    return total / y.shape[1]


def loss_pm(params, aux, x, y, beta=1.0):
    """Penalty loss: mean data misfit plus beta-weighted layer penalties."""
    return _penalty_loss(params, aux, x, y, beta, adaptive=False)


def loss_sapm(params, aux, x, y, beta=1.0):
    """Weighted penalty loss: each penalty term additionally scaled by omega_l."""
    return _penalty_loss(params, aux, x, y, beta, adaptive=True)


def _lambda_from_parts(params, beta, layer, residual_sq):
    """Assemble lambda_l from per-layer residual energies (index m -> float)."""
    depth = params.depth
    own = beta[layer - 1] if layer < depth else 1.0
    sq = [float((w * w).sum()) for w in params.weights]
    lam = 0.0
    prod = 1.0
    for i in range(layer - 1, 0, -1):
        lam += (beta[i - 1] / own) * prod * residual_sq[i]
        prod *= sq[i - 1]
    return lam


def sapm_lambda(params, aux, x, y, layer, beta=None):
    """Ridge coefficient of the W_l block solve in the weighted route.

    lambda_l = sum_{i<l} (beta_i / beta_l) (prod_{i<j<l} ||W_j||_F^2)
               ||W_i A_i + b_i 1^T - a_i||_F^2, and 0 for l = 1.
    """
    depth = params.depth
    if not 1 <= layer <= depth:
        raise ValueError(f"layer must be in 1..{depth}")
    if layer == 1:
        return 0.0
    beta = resolve_beta(1.0 if beta is None else beta, depth)
    residual_sq = {
        i: _sq(_state_residual(params, aux, x, y, i)) for i in range(1, layer)
    }
    return _lambda_from_parts(params, beta, layer, residual_sq)


def _prox_weight(params, beta, layer, adaptive):
    # weight of the proximity term in S_l; the top-layer beta is 1
    beta_next = beta[layer] if layer < params.depth - 1 else 1.0
    ratio = beta[layer - 1] / beta_next
    if adaptive:
        w_next = params.weights[layer]
        ratio *= float((w_next * w_next).sum())
    return ratio


def aux_objective(params, aux, x, y, layer, a_value=None, beta=1.0, adaptive=True):
    """Local objective S_l whose descent drives the a_l update.

    S_l(a) = ||W_{l+1} s(a) + b_{l+1} 1^T - target||_F^2
             + prox * ||W_l A_l + b_l 1^T - a||_F^2,

    with prox = ||W_{l+1}||_F^2 in the weighted route and 1 otherwise
    (times beta_l / beta_{l+1} for non-uniform penalty weights).  S_l is the
    restriction of the training loss to a_l up to a positive constant factor.
    """
    depth = params.depth
    beta = resolve_beta(beta, depth)
    a = aux[layer - 1] if a_value is None else a_value
    act = params.activation
    target_next = y if layer + 1 == depth else aux[layer]
    first = params.weights[layer] @ act(a) + params.biases[layer] - target_next
    base = (
        params.weights[layer - 1] @ _layer_input(params, aux, x, layer)
        + params.biases[layer - 1]
    )
    prox = _prox_weight(params, beta, layer, adaptive)
    return _sq(first) + prox * _sq(base - a)


def grad_a(params, aux, x, y, layer, beta=1.0, adaptive=True):
    """Gradient of S_l at the current a_l:

    2 [ (W_{l+1}^T (W_{l+1} s(a_l) - P_{l+1})) * s'(a_l)
        + ||W_{l+1}||_F^2 (a_l - W_l A_l - b_l 1^T) ]

    with the norm factor replaced by 1 in the unweighted route.
    """
    depth = params.depth
    beta = resolve_beta(beta, depth)
    act = params.activation
    a = aux[layer - 1]
    target_next = y if layer + 1 == depth else aux[layer]
    w_next = params.weights[layer]
    first = w_next @ act(a) + params.biases[layer] - target_next
    base = (
        params.weights[layer - 1] @ _layer_input(params, aux, x, layer)
        + params.biases[layer - 1]
    )
    prox = _prox_weight(params, beta, layer, adaptive)
    return 2.0 * ((w_next.T @ first) * act.deriv(a) + prox * (a - base))


def bound_constant(activation, depth, beta):
    """Factor C in the consistency bound: mse <= C * L * weighted loss."""
    b = activation.lipschitz
    return max(1.0, b ** (2 * depth - 2)) * max(1.0, float(1.0 / np.min(beta)))


def _ratio(mse, actual, scale):
    if actual == 0.0:
        return 0.0 if mse == 0.0 else float("inf")
    return mse / (scale * actual)


def _armijo(value_fn, a0, grad, start, shrink, slope, max_backtracks, growth=2.0):
    """Backtracking Armijo line search with acceptance-growth step memory.

    Returns (new point, next start step).  On acceptance at step t the next
    start is growth * t; when no step is accepted the point is kept and the
    next start resumes from the last tried step.
    """
    g2 = float((grad * grad).sum())
    if g2 == 0.0:
        return a0, start
    f0 = value_fn(a0)
    t = start
    for _ in range(max_backtracks):
        cand = a0 - t * grad
        if value_fn(cand) <= f0 - slope * t * g2:
            return cand, min(t * growth, _STEP_CAP)
        t *= shrink
    return a0, max(t, _STEP_FLOOR)


def _penalty_fnn_run(config, dataset, stream, adaptive, params=None, aux=None):
    x, y = dataset.features, dataset.labels
    n = y.shape[1]
    depth = config.depth
    if stream is None:
        stream = SplitMix64(0)
    if params is None:
        params = init_params(depth, config.width, x.shape[0], config.activation, stream)
    if aux is None:
        aux = init_aux(depth, config.width, n, stream)
    beta = resolve_beta(config.beta, depth)
    act = params.activation
    cbound = bound_constant(act, depth, beta)
    loss_fn = loss_sapm if adaptive else loss_pm
    steps = [config.step] * depth  # per-layer Armijo start steps
    trace = np.empty((config.iterations + 1, 4))

    def record(k):
        actual = loss_fn(params, aux, x, y, beta)
        mse = fnn.mse_from_values(fnn.forward(params, x).output, y)
        trace[k] = (k, actual, mse, _ratio(mse, actual, cbound * depth))
        if not (np.isfinite(actual) and np.isfinite(mse)):
            raise SolverDivergence(
                f"non-finite loss at iteration {k}", iteration=k, block="loss"
            )

    def solve_w(layer, a_in, lam):
        target = y if layer == depth else aux[layer - 1]
        p = target - params.biases[layer - 1]
        coeff, rhs = a_in, p
        if lam > 0.0:
            coeff = augment_ridge(a_in, lam)
            rhs = np.hstack([p, np.zeros((p.shape[0], a_in.shape[0]))])
        params.weights[layer - 1] = solve_row_ls(coeff, rhs)

    def solve_b(layer, a_in):
        target = y if layer == depth else aux[layer - 1]
        params.biases[layer - 1] = column_mean(target - params.weights[layer - 1] @ a_in)

    def step_a(layer, a_in):
        # S_l ingredients at the current surrounding state
        w_next = params.weights[layer]
        b_next = params.biases[layer]
        target_next = y if layer + 1 == depth else aux[layer]
        base = params.weights[layer - 1] @ a_in + params.biases[layer - 1]
        prox = _prox_weight(params, beta, layer, adaptive)

        def value(a):
            first = w_next @ act(a) + b_next - target_next
            return _sq(first) + prox * _sq(base - a)

        a = aux[layer - 1]
        first = w_next @ act(a) + b_next - target_next
        grad = 2.0 * ((w_next.T @ first) * act.deriv(a) + prox * (a - base))
        aux[layer - 1], steps[layer - 1] = _armijo(
            value,
            a,
            grad,
            steps[layer - 1],
            config.armijo_shrink,
            config.armijo_slope,
            config.armijo_max_backtracks,
            config.step_growth,
        )

    record(0)
    for k in range(1, config.iterations + 1):
        where = "start"
        try:
            # residual energies feeding every lambda_l of this sweep; the
            # blocks they involve are untouched until after their use
            residual_sq = {
                m: _sq(_state_residual(params, aux, x, y, m))
                for m in range(1, depth)
            }
            where = f"W{depth}"
            a_in = _layer_input(params, aux, x, depth)
            lam = _lambda_from_parts(params, beta, depth, residual_sq) if adaptive else 0.0
            solve_w(depth, a_in, lam)
            where = f"b{depth}"
            solve_b(depth, a_in)
            for layer in range(depth - 1, 0, -1):
                a_in = _layer_input(params, aux, x, layer)
                where = f"a{layer}"
                step_a(layer, a_in)
                where = f"W{layer}"
                lam = (
                    _lambda_from_parts(params, beta, layer, residual_sq)
                    if adaptive and layer > 1
                    else 0.0
                )
                solve_w(layer, a_in, lam)
                where = f"b{layer}"
                solve_b(layer, a_in)
            where = "loss"
            record(k)
        except NumericError as exc:
            raise SolverDivergence(
                f"non-finite values in block {where} at iteration {k}",
                iteration=k,
                block=where,
            ) from exc
    return FnnRunResult(params, aux, trace)


def sapm_fnn_run(config, dataset, stream=None, params=None, aux=None):
    """Alternating sweep on the self-adaptive weighted penalty loss.

    Per iteration: solve W_L and b_L exactly (with the lambda_L ridge), then
    for l = L-1..1 take one Armijo step in a_l, solve W_l (ridge lambda_l),
    and solve b_l as a column mean.  The trace records the weighted loss,
    the mean-squared loss, and their ratio against the consistency bound.
    """
    return _penalty_fnn_run(config, dataset, stream, adaptive=True, params=params, aux=aux)


def pm_fnn_run(config, dataset, stream=None, params=None, aux=None):
    """Same sweep with unit weights: no omega scaling and no ridge terms."""
    return _penalty_fnn_run(config, dataset, stream, adaptive=False, params=params, aux=aux)


def ls_fnn_run(config, dataset, stream=None, params=None):
    """Full-batch gradient descent on the mean-squared loss."""
    x, y = dataset.features, dataset.labels
    if stream is None:
        stream = SplitMix64(0)
    if params is None:
        params = init_params(
            config.depth, config.width, x.shape[0], config.activation, stream
        )
    beta = resolve_beta(config.beta, config.depth)
    cbound = bound_constant(params.activation, config.depth, beta)
    scale = cbound * config.depth
    trace = np.empty((config.iterations + 1, 4))

    def record(k, mse):
        trace[k] = (k, mse, mse, _ratio(mse, mse, scale))
        if not np.isfinite(mse):
            raise SolverDivergence(
                f"non-finite loss at iteration {k}", iteration=k, block="loss"
            )

    record(0, fnn.mse_loss(params, x, y))
    for k in range(1, config.iterations + 1):
        try:
            gw, gb = fnn.mse_gradient(params, x, y)
        except NumericError as exc:
            raise SolverDivergence(
                f"non-finite gradient at iteration {k}", iteration=k, block="gradient"
            ) from exc
        tau = config.lr0 / (1.0 + (k - 1) / config.lr_decay)
        for l in range(config.depth):
            params.weights[l] = params.weights[l] - tau * gw[l]
            params.biases[l] = params.biases[l] - tau * gb[l]
        try:
            record(k, fnn.mse_loss(params, x, y))
        except NumericError as exc:
            raise SolverDivergence(
                f"non-finite forward pass at iteration {k}", iteration=k, block="loss"
            ) from exc
    return FnnRunResult(params, None, trace)
