"""Fully-connected networks: evaluation, mean-squared loss, and backpropagation.

A network of depth ``L`` and width ``M`` maps a ``d``-vector through
``L - 1`` activated affine layers and one final affine layer to a scalar:

    out = W_L s(W_{L-1} s(... s(W_1 x + b_1) ...) + b_{L-1}) + b_L

with ``W_1`` of shape (M, d), hidden weights (M, M), ``W_L`` of shape (1, M),
and column biases.  Batches are matrices whose columns are samples, so the
whole forward pass is ``L`` matrix products.  ``forward`` returns every
pre-activation, which the penalty solvers reuse as the feasible values of
their auxiliary variables.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError, UnsupportedActivationError


@dataclass(frozen=True)
class Activation:
    """Entry-wise activation with derivatives and its smoothness constants.

    ``lipschitz`` bounds |s(a) - s(b)| / |a - b| and enters the consistency
    bound of the weighted penalty loss; ``deriv_bound``, ``value_lipschitz``
    and ``deriv_lipschitz`` play the same role for the PDE-network bound.
    """

    name: str
    lipschitz: float
    deriv_bound: float = float("nan")
    value_lipschitz: float = float("nan")
    deriv_lipschitz: float = float("nan")
    has_second: bool = False

    def __call__(self, z):
        if self.name == "relu":
            return np.maximum(z, 0.0)
        return np.sin(z)

    def deriv(self, z):
        if self.name == "relu":
            # subgradient choice: derivative at 0 is 0
            return (np.asarray(z) > 0).astype(np.float64)
        return np.cos(z)

    def second(self, z):
        if not self.has_second:
            raise UnsupportedActivationError(
                f"activation {self.name!r} has no second derivative"
            )
        return -np.sin(z)


RELU = Activation("relu", lipschitz=1.0)
SIN = Activation(
    "sin",
    lipschitz=1.0,
    deriv_bound=1.0,
    value_lipschitz=1.0,
    deriv_lipschitz=1.0,
    has_second=True,
)

ACTIVATIONS = {"relu": RELU, "sin": SIN}


def get_activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise UnsupportedActivationError(
            f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}"
        ) from None


@dataclass
class FnnParams:
    """Weights, biases, and activation of a depth-L width-M network."""

    weights: list
    biases: list
    activation: Activation

    def __post_init__(self):
        L = len(self.weights)
        if L < 2 or len(self.biases) != L:
            raise ShapeError("need at least two layers with matching bias count")
        M, d = self.weights[0].shape
        for l in range(L):
            w, b = self.weights[l], self.biases[l]
            rows = 1 if l == L - 1 else M
            cols = d if l == 0 else M
            if w.shape != (rows, cols) or b.shape != (rows, 1):
                raise ShapeError(f"layer {l + 1} has shapes {w.shape}, {b.shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericError(f"layer {l + 1} has non-finite entries")

    @property
    def depth(self):
        return len(self.weights)

    @property
    def width(self):
        return self.weights[0].shape[0]

    @property
    def input_dim(self):
        return self.weights[0].shape[1]

    def copy(self):
        return FnnParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


@dataclass
class ForwardTrace:
    """Pre-activations a_1..a_{L-1} (each M x N) and the 1 x N output row."""

    preactivations: list = field(default_factory=list)
    output: np.ndarray = None


def init_params(depth, width, input_dim, activation, stream):
    """Draw every weight and bias entry from U(-M^-1/2, M^-1/2).

    Entries come from ``stream`` in a fixed documented order: for each layer
    l = 1..L, the weight matrix in row-major order, then the bias column.
    """
    if depth < 2 or width < 1 or input_dim < 1:
        raise ShapeError("need depth >= 2 and positive width/input dimension")
    if isinstance(activation, str):
        activation = get_activation(activation)
    bound = width ** -0.5
    weights, biases = [], []
    for l in range(depth):
        rows = 1 if l == depth - 1 else width
        cols = input_dim if l == 0 else width
        weights.append(stream.uniform(-bound, bound, size=(rows, cols)))
        biases.append(stream.uniform(-bound, bound, size=(rows, 1)))
    return FnnParams(weights, biases, activation)


def forward(params, x):
    """Evaluate the network on feature columns, keeping every pre-activation."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != params.input_dim:
        raise ShapeError(f"features must be {params.input_dim} x N, got {x.shape}")
    act = params.activation
    trace = ForwardTrace()
    h = x
    for l in range(params.depth):
        a = params.weights[l] @ h + params.biases[l]
        if not np.isfinite(a).all():
            raise NumericError(f"non-finite pre-activation at layer {l + 1}")
        if l == params.depth - 1:
            trace.output = a
        else:
            trace.preactivations.append(a)
            h = act(a)
    return trace


def mse_from_values(values, labels):
    """Mean squared error between a prediction row and a label row."""
    diff = values - labels
    return float((diff * diff).sum() / labels.shape[1])


def mse_loss(params, x, y):
    """(1/N) ||out - Y||_F^2 over the batch."""
    return mse_from_values(forward(params, x).output, y)


def mse_gradient(params, x, y):
    """Gradient of ``mse_loss`` in every weight and bias, via backpropagation.

    Returns (grad_weights, grad_biases) with the same shapes as the
    parameters.
    """
    act = params.activation
    L = params.depth
    n = y.shape[1]
    trace = forward(params, x)
    gw = [None] * L
    gb = [None] * L
    delta = (2.0 / n) * (trace.output - y)
    for l in range(L - 1, -1, -1):
        h_prev = x if l == 0 else act(trace.preactivations[l - 1])
        gw[l] = delta @ h_prev.T
        gb[l] = delta.sum(axis=1, keepdims=True)
        if l > 0:
            delta = (params.weights[l].T @ delta) * act.deriv(
                trace.preactivations[l - 1]
            )
    return gw, gb


def relative_l2(values, reference):
    """sqrt(sum |v - r|^2 / sum |r|^2); the reference must not be all-zero."""
    ref_sq = float((reference * reference).sum())
    if ref_sq == 0.0:
        raise ZeroDivisionError("relative error undefined for an all-zero reference")
    diff = values - reference
    return float(np.sqrt((diff * diff).sum() / ref_sq))


def l2_error(params, x, y):
    """Relative l2 error of the network output against the labels."""
    return relative_l2(forward(params, x).output, y)


def save_params(params, path):
    """Checkpoint as CSV: header ``depth,width,input_dim,activation``, a row of
    those values, then one %.17g entry per line in layer order (each weight
    matrix row-major, then its bias column)."""
    with open(path, "w") as fh:
        fh.write("depth,width,input_dim,activation\n")
        fh.write(
            f"{params.depth},{params.width},{params.input_dim},{params.activation.name}\n"
        )
        for l in range(params.depth):
            for v in params.weights[l].ravel():
                fh.write(f"{v:.17g}\n")
            for v in params.biases[l].ravel():
                fh.write(f"{v:.17g}\n")


def load_params(path):
    """Inverse of ``save_params``; %.17g round-trips float64 exactly."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "depth,width,input_dim,activation":
            raise ValueError(f"unrecognized checkpoint header: {header!r}")
        fields = fh.readline().strip().split(",")
        depth, width, input_dim = (int(v) for v in fields[:3])
        act = get_activation(fields[3])
        entries = np.array([float(line) for line in fh if line.strip()])
    weights, biases = [], []
    pos = 0
    for l in range(depth):
        rows = 1 if l == depth - 1 else width
        cols = input_dim if l == 0 else width
        weights.append(entries[pos : pos + rows * cols].reshape(rows, cols))
        pos += rows * cols
        biases.append(entries[pos : pos + rows].reshape(rows, 1))
        pos += rows
    if pos != entries.size:
        raise ValueError("checkpoint has trailing or missing entries")
    return FnnParams(weights, biases, act)
