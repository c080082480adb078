"""First-order transport problems and network evaluation under their operator.

A problem is posed in the normal form  c(x) . grad u(x) = f(x)  on a
time cylinder, with x = (t, x_spatial) and c = (1, -v_1, ..., -v_ds), so the
same code path serves steady and time-dependent statements.  Applying the
operator to a network psi gives the physics-informed evaluation

    phi(x) = sum_i c_i(x) d_psi/d_x_i (x),

whose input derivatives come from a forward tangent recursion alongside the
ordinary forward pass:

    d_{1,i} = W_1[:, i] 1^T,      d_{l,i} = W_l (s'(a_{l-1}) * d_{l-1,i}),

so that row d_{L,i} holds d_psi/d_x_i at every sample.  The recursion needs
s' (and the penalty solvers need s''), hence the sin activation; relu is
rejected.  The tangent values double as the feasible auxiliary variables of
the penalty formulations.
"""

from dataclasses import dataclass, field

import numpy as np

from . import fnn, sampling
from .errors import NumericError, ShapeError, UnsupportedActivationError
from .sampling import Dataset, evaluate_labels, sample_domain, sample_transport_boundary, time_cylinder


@dataclass(frozen=True)
class TransportProblem:
    """A transport equation du/dt - v . grad_x u = f with data g on the parabolic boundary.

    ``velocity``, ``source``, ``boundary`` and (optionally) ``solution`` act
    column-wise on (1+ds) x N matrices of (t, x) points.  ``coeff_bound``
    bounds |c_i| over the domain and enters the consistency-bound constant.
    """

    name: str
    spatial_dim: int
    horizon: float
    velocity: callable  # (d, N) points -> (ds, N) velocity components
    source: callable  # (d, N) points -> (N,) or (1, N) values of f
    boundary: callable  # boundary data g, same convention as source
    solution: callable = None  # exact solution for error reporting, optional
    coeff_bound: float = 1.0

    @property
    def dim(self):
        """Dimension of the normal form: time plus space."""
        return 1 + self.spatial_dim

    @property
    def domain(self):
        return time_cylinder(self.horizon, self.spatial_dim)

    def coefficients(self, points):
        """Rows of c = (1, -v_1, ..., -v_ds) at the given points."""
        points = np.asarray(points, dtype=np.float64)
        if points.shape[0] != self.dim:
            raise ShapeError(f"expected {self.dim}-dimensional points, got {points.shape}")
        out = np.empty_like(points)
        out[0] = 1.0
        out[1:] = -np.asarray(self.velocity(points), dtype=np.float64).reshape(
            self.spatial_dim, -1
        )
        return out


def make_transport_1d():
    """1-D transport with v = t + x + 3/2 and exact solution u = e^t sin x."""

    def u(p):
        return np.exp(p[0]) * np.sin(p[1])

    def velocity(p):
        return (p[0] + p[1] + 1.5)[None, :]

    def source(p):
        # u_t - v u_x for the exact solution above
        return np.exp(p[0]) * (np.sin(p[1]) - (p[0] + p[1] + 1.5) * np.cos(p[1]))

    return TransportProblem(
        name="t1d",
        spatial_dim=1,
        horizon=1.0,
        velocity=velocity,
        source=source,
        boundary=u,
        solution=u,
        coeff_bound=3.5,  # sup |v| = T + 1 + 3/2 on [0,1] x [-1,1]
    )


def make_transport_3d():
    """3-D transport with v_i = x_i + 2 and exact solution sum_i (t + x_i) sin x_i."""

    def u(p):
        x = p[1:]
        return ((p[0] + x) * np.sin(x)).sum(axis=0)

    def velocity(p):
        return p[1:] + 2.0

    def source(p):
        x = p[1:]
        du_dx = np.sin(x) + (p[0] + x) * np.cos(x)
        return np.sin(x).sum(axis=0) - ((x + 2.0) * du_dx).sum(axis=0)

    return TransportProblem(
        name="t3d",
        spatial_dim=3,
        horizon=1.0,
        velocity=velocity,
        source=source,
        boundary=u,
        solution=u,
        coeff_bound=3.0,  # sup |x_i + 2| on [-1,1]^3
    )


PROBLEMS = {"t1d": make_transport_1d, "t3d": make_transport_3d}


def get_problem(name):
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(
            f"unknown transport problem {name!r}; expected one of {sorted(PROBLEMS)}"
        ) from None


@dataclass
class TangentTrace:
    """Pre-activations a_1..a_L and tangents d_{l,i} of one forward pass.

    ``preactivations[l-1]`` is a_l (a_L is the 1 x N output row of psi);
    ``tangents[l-1]`` stacks d_{l,i} over i as a (d, rows_l, N) array with
    rows_l = M below the top layer and 1 at the top.
    """

    preactivations: list = field(default_factory=list)
    tangents: list = field(default_factory=list)

    @property
    def psi(self):
        return self.preactivations[-1]


def tangent_forward(params, x):
    """Forward pass carrying the input-derivative recursion alongside.

    Requires a differentiable activation (sin); relu is rejected because the
    recursion multiplies by s'(a) and downstream solvers also need s''.
    """
    if not params.activation.has_second:
        raise UnsupportedActivationError(
            "input-derivative propagation needs a smooth activation; use sin"
        )
    x = np.asarray(x, dtype=np.float64)
    d, n = x.shape
    if d != params.input_dim:
        raise ShapeError(f"features must be {params.input_dim} x N, got {x.shape}")
    act = params.activation
    trace = TangentTrace()
    a = params.weights[0] @ x + params.biases[0]
    tan = np.repeat(params.weights[0].T[:, :, None], n, axis=2)
    trace.preactivations.append(a)
    trace.tangents.append(tan)
    for l in range(2, params.depth + 1):
        w = params.weights[l - 1]
        sp = act.deriv(a)
        tan = np.stack([w @ (sp * tan[i]) for i in range(d)])
        a = w @ act(a) + params.biases[l - 1]
        if not np.isfinite(a).all():
            raise NumericError(f"non-finite pre-activation at layer {l}")
        trace.preactivations.append(a)
        trace.tangents.append(tan)
    return trace


def pinn_eval(problem, params, x):
    """phi(x) = sum_i c_i(x) d_psi/d_x_i(x) as a 1 x N row."""
    coeff = problem.coefficients(x)
    tan_top = tangent_forward(params, x).tangents[-1]
    return sum(coeff[i : i + 1] * tan_top[i] for i in range(problem.dim))


def loss_J(problem, params, data_interior, data_boundary, mu=1.0):
    """Mean-squared operator residual plus mu times the boundary misfit.

    Returns (total, interior_part, boundary_part); the parts are the plain
    mean squares before the mu weighting.
    """
    if mu <= 0:
        raise ValueError("boundary weight mu must be positive")
    phi = pinn_eval(problem, params, data_interior.features)
    j1 = fnn.mse_from_values(phi, data_interior.labels)
    psi2 = fnn.forward(params, data_boundary.features).output
    j2 = fnn.mse_from_values(psi2, data_boundary.labels)
    return j1 + mu * j2, j1, j2


def solution_error(params, test_points, solution):
    """Relative l2 error of psi against the exact solution on test points."""
    psi = fnn.forward(params, test_points).output
    ref = np.asarray(solution(test_points), dtype=np.float64).reshape(1, -1)
    return fnn.relative_l2(psi, ref)


def build_transport_datasets(problem, n_interior, n_boundary):
    """Interior collocation labeled by f and boundary samples labeled by g."""
    xi = sample_domain(problem.domain, n_interior)
    xb = sample_transport_boundary(problem, n_boundary)
    return (
        Dataset(xi, evaluate_labels(problem.source, xi)),
        Dataset(xb, evaluate_labels(problem.boundary, xb)),
    )


def transport_test_points(problem, count, skip):
    """Deterministic test points disjoint from the first ``skip`` interior ones."""
    return sample_domain(problem.domain, count, skip=skip)
