"""Halton quasirandom point generation and dataset assembly.

Training and test features are columns of deterministic low-discrepancy
point sets: column ``j`` of ``halton(count, dim, skip)`` is the
``skip + j + 1``-th Halton point in ``[0, 1]^dim``, built from radical
inverses in the first ``dim`` prime bases.  Box domains are affine images of
the unit cube; the unit ball is filled by rejection from its bounding cube,
consuming the Halton stream in order (the k-th accepted point depends only
on the dimension and k, so ``skip`` counts accepted points there).

Test sets are disjoint continuations of the training stream: sampling with
``skip`` equal to the training count shares no point with the training set.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError, UnsupportedDimensionError

#: The first 64 primes, used as Halton bases (one per coordinate).
PRIMES = (
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53,
    59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131,
    137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223,
    227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307, 311,
)

_BALL_CHUNK = 1 << 16


def halton(count, dim, skip=0):
    """Halton points as a ``dim x count`` matrix (one point per column).

    Column ``j`` is the radical-inverse vector of index ``skip + j + 1``;
    the sequence never emits 0 or 1, so entries lie strictly in (0, 1).
    """
    if dim < 1 or count < 1:
        raise ShapeError("halton needs positive count and dimension")
    if dim > len(PRIMES):
        raise UnsupportedDimensionError(
            f"halton supports dimensions up to {len(PRIMES)}, got {dim}"
        )
    if skip < 0:
        raise ValueError("skip must be nonnegative")
    idx = np.arange(skip + 1, skip + count + 1, dtype=np.int64)
    out = np.empty((dim, count))
    for k in range(dim):
        base = PRIMES[k]
        n = idx.copy()
        r = np.zeros(count)
        scale = 1.0 / base
        while n.any():
            r += (n % base) * scale
            scale /= base
            n //= base
        out[k] = r
    return out


@dataclass(frozen=True)
class Domain:
    """A sampling region: interval/hypercube [-1,1]^d, unit ball, or time cylinder.

    A cylinder couples a time coordinate in (0, horizon] with a spatial box
    [-1, 1]^(dim-1); its ``dim`` counts the time coordinate.
    """

    kind: str
    dim: int
    horizon: float = 0.0

    def __post_init__(self):
        if self.kind not in ("interval", "hypercube", "ball", "cylinder"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.dim < 1:
            raise ShapeError("domain dimension must be positive")
        if self.kind == "interval" and self.dim != 1:
            raise ShapeError("interval domains are one-dimensional")
        if self.kind == "cylinder":
            if self.dim < 2:
                raise ShapeError("a time cylinder needs dim >= 2 (time plus space)")
            if self.horizon <= 0:
                raise ValueError("a time cylinder needs a positive horizon")

    @property
    def spatial_dim(self):
        return self.dim - 1 if self.kind == "cylinder" else self.dim


def interval():
    return Domain("interval", 1)


def hypercube(dim):
    return Domain("hypercube", dim)


def ball(dim):
    return Domain("ball", dim)


def time_cylinder(horizon, spatial_dim):
    return Domain("cylinder", 1 + spatial_dim, horizon)


def _ball_points(dim, count, skip):
    # Rejection from [-1,1]^dim; acceptance falls fast with dimension
    # (~0.25% at dim=10), so the raw stream is scanned in large chunks.
    need = skip + count
    accepted = []
    have = 0
    raw = 0
    ratio_guess = 0.5 ** dim  # pessimistic floor; refined after the first chunk
    while have < need:
        chunk = int(min(max(4096, (need - have) / max(ratio_guess, 1e-6) * 1.3), _BALL_CHUNK))
        pts = 2.0 * halton(chunk, dim, skip=raw) - 1.0
        raw += chunk
        keep = (pts * pts).sum(axis=0) <= 1.0
        if keep.any():
            accepted.append(pts[:, keep])
            have += int(keep.sum())
        ratio_guess = max(have / raw, 1e-6)
    return np.hstack(accepted)[:, skip : skip + count]


def sample_domain(domain, count, skip=0):
    """``count`` deterministic points inside ``domain`` as a ``dim x count`` matrix.

    ``skip`` advances the underlying stream: Halton indices for boxes and
    cylinders, accepted points for the ball.
    """
    if count < 1:
        raise ShapeError("count must be positive")
    if domain.kind in ("interval", "hypercube"):
        return 2.0 * halton(count, domain.dim, skip) - 1.0
    if domain.kind == "cylinder":
        h = halton(count, domain.dim, skip)
        out = np.empty_like(h)
        out[0] = domain.horizon * h[0]
        out[1:] = 2.0 * h[1:] - 1.0
        return out
    return _ball_points(domain.dim, count, skip)


def sample_transport_boundary(problem, count):
    """Initial/lateral boundary points of a time cylinder, ``(1+ds) x count``.

    ``problem`` may be a cylinder ``Domain`` or any object exposing one as
    ``.domain``.  The budget splits evenly (within one point) between the
    initial slice {0} x Omega and the lateral boundary (0, T] x dOmega; on the
    lateral part the 2*ds box faces are cycled in order (+x1, -x1, +x2, ...).
    """
    domain = getattr(problem, "domain", problem)
    if domain.kind != "cylinder":
        raise ShapeError("boundary sampling is defined for time-cylinder domains")
    if count < 1:
        raise ShapeError("count must be positive")
    ds = domain.spatial_dim
    n_init = (count + 1) // 2
    n_lat = count - n_init
    cols = []
    if n_init:
        init = np.zeros((1 + ds, n_init))
        init[1:] = 2.0 * halton(n_init, ds, skip=0) - 1.0
        cols.append(init)
    if n_lat:
        h = halton(n_lat, ds, skip=0)
        lat = np.empty((1 + ds, n_lat))
        lat[0] = domain.horizon * h[0]
        faces = np.arange(n_lat) % (2 * ds)
        axes = faces // 2
        signs = np.where(faces % 2 == 0, 1.0, -1.0)
        for j in range(n_lat):
            free = 2.0 * h[1:, j] - 1.0
            spatial = np.empty(ds)
            spatial[axes[j]] = signs[j]
            spatial[np.arange(ds) != axes[j]] = free
            lat[1:, j] = spatial
        cols.append(lat)
    return np.hstack(cols)


@dataclass(frozen=True)
class Dataset:
    """Feature columns with one scalar label per column."""

    features: np.ndarray  # d x N
    labels: np.ndarray  # 1 x N

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (1, self.features.shape[1]):
            raise ShapeError(
                f"feature/label shapes inconsistent: {self.features.shape} vs {self.labels.shape}"
            )

    @property
    def size(self):
        return self.features.shape[1]

    @property
    def dim(self):
        return self.features.shape[0]

    def write_csv(self, path):
        """Write ``x1,...,xd,y`` rows with full-precision (%.17g) values."""
        with open(path, "w") as fh:
            fh.write(",".join(f"x{i + 1}" for i in range(self.dim)) + ",y\n")
            for n in range(self.size):
                row = [f"{v:.17g}" for v in self.features[:, n]]
                row.append(f"{self.labels[0, n]:.17g}")
                fh.write(",".join(row) + "\n")


def evaluate_labels(target, points):
    """Apply a scalar target function column-wise, as a 1 x N label row."""
    vals = np.asarray(target(points), dtype=np.float64).reshape(1, -1)
    if vals.shape[1] != points.shape[1]:
        raise ShapeError("target returned a label count different from the point count")
    bad = ~np.isfinite(vals[0])
    if bad.any():
        n = int(np.argmax(bad))
        raise NumericError(
            f"target is not finite at point {n}: {points[:, n].tolist()}"
        )
    return vals


def build_regression_dataset(target, domain, count, skip=0):
    """Features from ``sample_domain`` with labels ``y_n = target(x_n)``."""
    features = sample_domain(domain, count, skip)
    return Dataset(features, evaluate_labels(target, features))
