"""Target densities: Gaussian mixtures with analytic derivative tensors,
and a "far mass" family that agrees with a fixed profile on the unit ball
while hiding the rest of its mass in a thin smooth bump far outside.

Derivative tensors of a Gaussian component follow the Hermite-style
recursion G_{m+1} = -(sym(u x G_m) + m * sym(P x G_{m-1})) with u = P y,
P the precision matrix and y the centered point; D^j pdf = pdf * G_j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import gammaincinv

from . import quadrature
from .errors import DimensionMismatch, EmptySamples, InputError, OrderUnavailable
from .kernels import bump

DEFAULT_MAX_DERIV_ORDER = 6
SUP_NORM_SAFETY = 1.05
OPNORM_DIRECTIONS = 64
OPNORM_SEED = 20259


def _sym_insert_vector(vec: np.ndarray, tensor: np.ndarray) -> np.ndarray:
    """Sum over positions of placing ``vec``'s index into symmetric ``tensor``."""
    m = tensor.ndim
    outer = np.multiply.outer(vec, tensor)
    out = np.zeros_like(outer)
    for t in range(m + 1):
        out += np.moveaxis(outer, 0, t)
    return out


def _sym_insert_matrix(mat: np.ndarray, tensor: np.ndarray) -> np.ndarray:
    """Sum over index pairs of placing symmetric ``mat`` into ``tensor``."""
    m = tensor.ndim
    outer = np.multiply.outer(mat, tensor)
    out = np.zeros_like(outer)
    for a in range(m + 2):
        for b in range(a + 1, m + 2):
            out += np.moveaxis(outer, [0, 1], [a, b])
    return out


def gaussian_deriv_factors(y: np.ndarray, precision: np.ndarray, j_max: int) -> list:
    """Tensors G_0 .. G_j with D^j exp-quadratic = value * G_j, symmetric."""
    u = precision @ y
    factors = [np.array(1.0), -u]
    for m in range(1, j_max):
        nxt = _sym_insert_vector(u, factors[m]) + 2.0 * _sym_insert_matrix(
            precision, factors[m - 1]
        )
        factors.append(-nxt / (m + 1))
    return factors[: j_max + 1]


def tensor_apply(tensor: np.ndarray, vec: np.ndarray) -> float:
    """Contract a symmetric j-tensor with j copies of a vector."""
    out = np.asarray(tensor, dtype=float)
    for _ in range(out.ndim):
        out = out @ vec
    return float(out)


def tensor_op_norm(tensor: np.ndarray, dim: int) -> float:
    """Operator norm of a symmetric tensor.

    Exact for orders 0-2; for higher orders the maximum of |T(v,..,v)| over
    a fixed seeded set of unit directions (symmetric tensors attain their
    norm on the diagonal).
    """
    t = np.asarray(tensor, dtype=float)
    if t.ndim == 0:
        return abs(float(t))
    if t.ndim == 1:
        return float(np.linalg.norm(t))
    if t.ndim == 2:
        return float(np.max(np.abs(np.linalg.eigvalsh(t))))
    rng = np.random.Generator(np.random.PCG64(OPNORM_SEED))
    dirs = rng.normal(size=(OPNORM_DIRECTIONS, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    best = 0.0
    for v in dirs:
        best = max(best, abs(tensor_apply(t, v)))
    return best


def _sup_norm_grid(dim: int, delta: float) -> np.ndarray:
    """Deterministic grid filling the delta-ball: 33 points per axis for the
    first two axes, 9 for any further axis, filtered to the ball."""
    counts = [33 if i < 2 else 9 for i in range(dim)]
    axes = [np.linspace(-delta, delta, c) for c in counts]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    keep = np.linalg.norm(pts, axis=1) <= delta * (1.0 + 1e-12)
    return pts[keep]


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray
    precision: np.ndarray
    chol: np.ndarray
    norm_const: float


class GaussianMixture:
    """Mixture of Gaussian components with derivative tensors up to order
    ``max_deriv_order`` and an exact seeded sampler."""

    kind = "gaussian_mixture"

    def __init__(self, components, max_deriv_order: int = DEFAULT_MAX_DERIV_ORDER,
                 validate_mass: bool = True):
        if not components:
            raise InputError("mixture needs at least one component")
        built = []
        dim = None
        wsum = 0.0
        for weight, mean, cov in components:
            mean = np.asarray(mean, dtype=float).ravel()
            cov = np.asarray(cov, dtype=float)
            if dim is None:
                dim = mean.size
            if mean.size != dim or cov.shape != (dim, dim):
                raise DimensionMismatch("component shapes disagree")
            if weight <= 0:
                raise InputError("component weights must be positive")
            cov = 0.5 * (cov + cov.T)
            try:
                chol = np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as exc:
                raise InputError("component covariance must be SPD") from exc
            precision = np.linalg.inv(cov)
            det = float(np.linalg.det(cov))
            norm_const = (2.0 * math.pi) ** (-dim / 2.0) * det**-0.5
            built.append(
                GaussianComponent(float(weight), mean, cov, precision, chol, norm_const)
            )
            wsum += float(weight)
        if abs(wsum - 1.0) > 1e-12:
            raise InputError(f"weights sum to {wsum!r}, expected 1")
        self.dim = int(dim)
        self.components = tuple(built)
        self.max_deriv_order = int(max_deriv_order)
        if validate_mass and self.dim <= 3:
            self._validate_mass()

    def _validate_mass(self):
        # partition the box with cuts at every component's core so that
        # needle-thin components cannot slip between quadrature nodes
        radius = 0.0
        for c in self.components:
            top = float(np.max(np.linalg.eigvalsh(c.cov)))
            radius = max(radius, float(np.linalg.norm(c.mean)) + 9.0 * math.sqrt(top))
        axis_cuts = []
        for i in range(self.dim):
            cuts = {-radius, radius}
            for c in self.components:
                s = math.sqrt(float(c.cov[i, i]))
                for offset in (-6.0 * s, 0.0, 6.0 * s):
                    v = float(c.mean[i]) + offset
                    if -radius < v < radius:
                        cuts.add(v)
            axis_cuts.append(sorted(cuts))
        boxes = []
        for corner in np.ndindex(*[len(c) - 1 for c in axis_cuts]):
            lo = np.array([axis_cuts[i][k] for i, k in enumerate(corner)])
            hi = np.array([axis_cuts[i][k + 1] for i, k in enumerate(corner)])
            boxes.append((lo, hi))
        res = quadrature.integrate_boxes(
            self.pdf_batch, boxes, rel_tol=1e-8, abs_tol=1e-9
        )
        if abs(res.value - 1.0) > 1e-6:
            raise InputError(f"mixture mass integrates to {res.value!r}")

    # -- evaluation ---------------------------------------------------------

    def pdf_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[0])
        for c in self.components:
            y = x - c.mean[None, :]
            q = np.einsum("ni,ij,nj->n", y, c.precision, y)
            out += c.weight * c.norm_const * np.exp(-0.5 * q)
        return out

    def pdf(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"point shape {x.shape} against dim {self.dim}")
        return float(self.pdf_batch(x[None, :])[0])

    def pdf_upper_bound(self) -> float:
        return float(sum(c.weight * c.norm_const for c in self.components))

    def tail_sup(self, dist: float) -> float:
        """Upper bound on the pdf outside the ball of radius ``dist``."""
        out = 0.0
        for c in self.components:
            gap = max(0.0, dist - float(np.linalg.norm(c.mean)))
            lam_top = float(np.max(np.linalg.eigvalsh(c.cov)))
            out += c.weight * c.norm_const * math.exp(-0.5 * gap * gap / lam_top)
        return out

    def feature_radii(self) -> list:
        return []

    def min_feature_width(self) -> float | None:
        return None

    # -- derivatives ----------------------------------------------------------

    def deriv_tensor(self, x, j: int) -> np.ndarray:
        """Symmetric order-j derivative tensor of the pdf at x."""
        if j > self.max_deriv_order:
            raise OrderUnavailable(
                f"derivative order {j} exceeds max {self.max_deriv_order}"
            )
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"point shape {x.shape} against dim {self.dim}")
        if j < 0:
            raise InputError("derivative order must be >= 0")
        total = np.zeros((self.dim,) * j) if j > 0 else np.array(0.0)
        for c in self.components:
            y = x - c.mean
            val = c.weight * c.norm_const * math.exp(-0.5 * float(y @ c.precision @ y))
            factors = gaussian_deriv_factors(y, c.precision, j)
            total = total + val * factors[j]
        return total

    def deriv_sup_norm(self, x_center, delta: float, j: int) -> float:
        """Maximum operator norm of D^j pdf over the delta-ball around
        x_center, scanned on a deterministic grid with a 1.05 safety factor
        (exact center value when delta = 0)."""
        if delta < 0:
            raise InputError("delta must be >= 0")
        x_center = np.atleast_1d(np.asarray(x_center, dtype=float))
        if delta == 0.0:
            return tensor_op_norm(self.deriv_tensor(x_center, j), self.dim)
        best = 0.0
        for off in _sup_norm_grid(self.dim, delta):
            best = max(
                best, tensor_op_norm(self.deriv_tensor(x_center + off, j), self.dim)
            )
        return SUP_NORM_SAFETY * best

    # -- sampling -------------------------------------------------------------

    def sample(self, n: int, seed: int) -> np.ndarray:
        if n < 1:
            raise EmptySamples("sample size must be >= 1")
        rng = np.random.Generator(np.random.PCG64(seed))
        weights = np.array([c.weight for c in self.components])
        idx = rng.choice(len(self.components), size=n, p=weights / weights.sum())
        z = rng.standard_normal(size=(n, self.dim))
        out = np.empty((n, self.dim))
        for k, c in enumerate(self.components):
            mask = idx == k
            out[mask] = c.mean[None, :] + z[mask] @ c.chol.T
        return out

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "max_deriv_order": self.max_deriv_order,
            "components": [
                {
                    "weight": c.weight,
                    "mean": [float(v) for v in c.mean],
                    "cov": [[float(v) for v in row] for row in c.cov],
                }
                for c in self.components
            ],
        }


def standard_normal(dim: int = 1) -> GaussianMixture:
    return GaussianMixture([(1.0, np.zeros(dim), np.eye(dim))], validate_mass=False)


def ball_mass_sigma(dim: int, target: float = 0.5) -> float:
    """Scale sigma of a centered isotropic Gaussian so that the unit ball
    carries ``target`` of its mass."""
    return float(1.0 / math.sqrt(2.0 * gammaincinv(dim / 2.0, target)))


class FarMassDensity:
    """Equals a fixed inner profile on the unit ball; the remaining mass sits
    in a smooth bump of radius shell_width/2 centered at
    (far_radius + shell_width/2) * far_direction, i.e. supported inside the
    shell far_radius <= |u| <= far_radius + shell_width.
    """

    kind = "far_mass"

    def __init__(
        self,
        dim: int,
        far_direction=None,
        far_radius: float = 1.05,
        shell_width: float = 0.05,
        inner_sigma: float | None = None,
        inner_mass: float = 0.5,
    ):
        if far_radius < 1.0:
            raise InputError("far_radius must be >= 1 so the bump avoids the ball")
        if shell_width <= 0:
            raise InputError("shell_width must be positive")
        if not 0.0 < inner_mass < 1.0:
            raise InputError("inner_mass must lie in (0, 1)")
        self.dim = int(dim)
        if far_direction is None:
            far_direction = np.eye(dim)[0]
        fd = np.asarray(far_direction, dtype=float).ravel()
        if fd.size != dim:
            raise DimensionMismatch("far_direction length disagrees with dim")
        self.far_direction = fd / np.linalg.norm(fd)
        self.far_radius = float(far_radius)
        self.shell_width = float(shell_width)
        self.inner_mass = float(inner_mass)
        self.far_mass = 1.0 - self.inner_mass
        sigma = ball_mass_sigma(dim, inner_mass) if inner_sigma is None else inner_sigma
        self.inner_sigma = float(sigma)
        self.inner = GaussianMixture(
            [(1.0, np.zeros(dim), sigma**2 * np.eye(dim))], validate_mass=False
        )
        self.bump_center = (self.far_radius + 0.5 * self.shell_width) * self.far_direction
        self.bump_radius = 0.5 * self.shell_width
        self.max_deriv_order = 0

    @cached_property
    def unit_bump_mass(self) -> float:
        """Mass of the unnormalized bump over the unit ball in this dimension."""
        res = quadrature.integrate_radial(
            bump, d=self.dim, j=0, r_max=1.0, rel_tol=1e-12, abs_tol=1e-15
        )
        return res.value

    @property
    def bump_peak(self) -> float:
        return (
            self.far_mass
            * math.exp(-1.0)
            / (self.bump_radius**self.dim * self.unit_bump_mass)
        )

    def bump_pdf_local(self, scaled: np.ndarray) -> np.ndarray:
        """Bump density in local coordinates z = (x - center)/radius."""
        return (
            self.far_mass
            / (self.bump_radius**self.dim * self.unit_bump_mass)
            * bump(scaled)
        )

    def inner_radial(self, t):
        """Inner Gaussian value at radius t, without the ball truncation."""
        c = self.inner.components[0]
        t = np.asarray(t, dtype=float)
        return c.norm_const * np.exp(-0.5 * t * t / self.inner_sigma**2)

    def pdf_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        out = np.where(r <= 1.0, self.inner.pdf_batch(x), 0.0)
        zdist = np.linalg.norm(x - self.bump_center[None, :], axis=-1) / self.bump_radius
        near = zdist < 1.0
        if np.any(near):
            out = out + np.where(near, self.bump_pdf_local(zdist), 0.0)
        return out

    def pdf(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"point shape {x.shape} against dim {self.dim}")
        return float(self.pdf_batch(x[None, :])[0])

    def pdf_upper_bound(self) -> float:
        return max(self.inner.pdf_upper_bound(), self.bump_peak)

    def support_radius(self) -> float:
        return self.far_radius + self.shell_width

    def tail_sup(self, dist: float) -> float:
        if dist > self.support_radius():
            return 0.0
        return self.pdf_upper_bound()

    def feature_radii(self) -> list:
        return [1.0, self.far_radius, self.far_radius + self.shell_width]

    def min_feature_width(self) -> float:
        return self.shell_width

    def deriv_tensor(self, x, j: int):
        if j == 0:
            return np.array(self.pdf(x))
        raise OrderUnavailable("far-mass densities expose only the pdf (order 0)")

    def deriv_sup_norm(self, x_center, delta, j):
        if j == 0:
            if delta == 0.0:
                return self.pdf(x_center)
            best = max(
                self.pdf(np.atleast_1d(np.asarray(x_center, float)) + off)
                for off in _sup_norm_grid(self.dim, delta)
            )
            return SUP_NORM_SAFETY * best
        raise OrderUnavailable("far-mass densities expose only the pdf (order 0)")

    def sample(self, n: int, seed: int) -> np.ndarray:
        """Rejection sampler: truncated Gaussian inside the ball, bump outside."""
        if n < 1:
            raise EmptySamples("sample size must be >= 1")
        rng = np.random.Generator(np.random.PCG64(seed))
        picks = rng.random(n) < self.inner_mass
        out = np.empty((n, self.dim))
        for i in range(n):
            if picks[i]:
                while True:
                    z = self.inner_sigma * rng.standard_normal(self.dim)
                    if np.linalg.norm(z) <= 1.0:
                        out[i] = z
                        break
            else:
                while True:
                    z = rng.uniform(-1.0, 1.0, size=self.dim)
                    rr = np.linalg.norm(z)
                    if rr <= 1.0 and rng.random() < bump(rr) * math.e:
                        out[i] = self.bump_center + self.bump_radius * z
                        break
        return out

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "dim": self.dim,
            "far_direction": [float(v) for v in self.far_direction],
            "far_radius": self.far_radius,
            "shell_width": self.shell_width,
            "inner_sigma": self.inner_sigma,
            "inner_mass": self.inner_mass,
        }


def density_from_json(obj: dict):
    try:
        kind = obj["kind"]
        dim = int(obj["dim"])
        if kind == "gaussian_mixture":
            comps = [
                (float(c["weight"]), c["mean"], c["cov"]) for c in obj["components"]
            ]
            return GaussianMixture(
                comps, max_deriv_order=int(obj.get("max_deriv_order", DEFAULT_MAX_DERIV_ORDER))
            )
        if kind == "far_mass":
            return FarMassDensity(
                dim,
                far_direction=obj.get("far_direction"),
                far_radius=float(obj.get("far_radius", 1.05)),
                shell_width=float(obj.get("shell_width", 0.05)),
                inner_sigma=obj.get("inner_sigma"),
                inner_mass=float(obj.get("inner_mass", 0.5)),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed density spec: {exc}") from exc
    raise InputError(f"unknown density kind {obj.get('kind')!r}")
