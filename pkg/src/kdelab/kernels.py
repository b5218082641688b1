"""Kernel zoo and kernel diagnostics.

Four everyday kinds (Gaussian, Epanechnikov, a fourth-order Gaussian-based
filter, products of 1-d kernels) plus the spike-train kernel: a smooth
radial kernel made of shrinking bumps at integer radii whose peak heights
decay only polynomially.  It has finite low-order moments yet arbitrarily
slow decay, which is exactly the regime where bandwidth eigenvalue balance
starts to matter.

Every kernel knows how to evaluate itself in batch, report its absolute
moments mu(j) = integral |u|^j |K(u)| du, its decay envelope
psi(r) = sup_{|u|>r} K(u), and its exact signed monomial integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import product as iter_product

import numpy as np
from scipy.special import gammaincc, ndtr

from . import quadrature
from .errors import DimensionMismatch, InputError, MomentDiverged, QuadratureFailed

MAX_MOMENT_ORDER = 8
MOMENT_DOUBLING_RTOL = 1e-6
ORDER_CHECK_ATOL = 1e-8

KIND_GAUSSIAN = "gaussian"
KIND_EPANECHNIKOV = "epanechnikov"
KIND_HIGHER_ORDER4 = "higher_order4"
KIND_PRODUCT = "product_of_1d"
KIND_SPIKE_TRAIN = "spike_train"


def bump(r):
    """Standard smooth bump: exp(-1/(1-r^2)) for |r| < 1, else 0."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1.0
    ri = r[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ri * ri))
    if out.ndim == 0:
        return float(out)
    return out


_BUMP_RULE_CACHE: tuple[np.ndarray, np.ndarray] | None = None


def bump_rule() -> tuple[np.ndarray, np.ndarray]:
    """Fixed composite Gauss-Legendre rule for integrals f(s)*bump(s) on [-1,1].

    Panels refine toward the endpoints where the bump is flat-but-analytic;
    accurate to ~1e-15 for smooth f (checked in tests against adaptive
    integration).
    """
    global _BUMP_RULE_CACHE
    if _BUMP_RULE_CACHE is None:
        edges = [0.0, 0.5, 0.75, 0.875, 0.9375, 1.0]
        xs, ws = quadrature.legendre_rule(16)
        nodes, wts = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            nodes.append(mid + half * xs)
            wts.append(half * ws)
        x = np.concatenate(nodes)
        w = np.concatenate(wts)
        x = np.concatenate([-x[::-1], x])
        w = np.concatenate([w[::-1], w])
        x.setflags(write=False)
        w.setflags(write=False)
        _BUMP_RULE_CACHE = (x, w)
    return _BUMP_RULE_CACHE


@dataclass
class MomentResult:
    value: float
    converged: bool

    def require(self, what: str = "moment") -> float:
        if not self.converged:
            raise MomentDiverged(f"{what} failed its stability test: {self.value!r}")
        return self.value


@dataclass
class OrderCheck:
    alpha: tuple
    value: float
    passed: bool


@dataclass
class OrderReport:
    order: int
    unit_mass: float
    unit_mass_ok: bool
    checks: list
    verified: bool


def _gauss_raw_moment(a: int) -> float:
    """E[Z^a] for standard normal Z: 0 for odd a, (a-1)!! for even a."""
    if a % 2 == 1:
        return 0.0
    out = 1.0
    for k in range(1, a, 2):
        out *= k
    return out


class Kernel:
    """Base class; subclasses are immutable value objects."""

    dim: int
    kind: str
    declared_order: int | None
    support_radius: float
    support_halfwidth: float | None

    def eval_batch(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval(self, u) -> float:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if u.shape != (self.dim,):
            raise DimensionMismatch(f"point shape {u.shape} against dim {self.dim}")
        return float(self.eval_batch(u[None, :])[0])

    def decay_envelope(self, r: float) -> float:
        raise NotImplementedError

    def moment(self, j: int) -> MomentResult:
        raise NotImplementedError

    def signed_moment(self, alpha) -> float:
        """Exact integral of u^alpha K(u) du (closed form or separable)."""
        raise NotImplementedError

    def tail_abs_mass(self, r: float, power: int = 1) -> float:
        """Upper bound on integral of |K|^power outside radius r."""
        raise NotImplementedError

    def params_json(self) -> dict:
        return {}

    def to_json(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "params": self.params_json()}

    def _check_moment_order(self, j: int) -> None:
        if not 0 <= j <= MAX_MOMENT_ORDER:
            raise InputError(f"moment order must be in [0, {MAX_MOMENT_ORDER}], got {j}")


@dataclass(frozen=True)
class GaussianKernel(Kernel):
    dim: int = 1

    kind = KIND_GAUSSIAN
    declared_order = 2
    support_radius = math.inf
    support_halfwidth = None

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatch("dim must be >= 1")

    def eval_batch(self, u):
        u = np.asarray(u, dtype=float)
        norm = (2.0 * math.pi) ** (-self.dim / 2.0)
        return norm * np.exp(-0.5 * np.sum(u * u, axis=-1))

    def radial_profile(self, r):
        r = np.asarray(r, dtype=float)
        return (2.0 * math.pi) ** (-self.dim / 2.0) * np.exp(-0.5 * r * r)

    def decay_envelope(self, r):
        return float((2.0 * math.pi) ** (-self.dim / 2.0) * math.exp(-0.5 * r * r))

    def moment(self, j):
        self._check_moment_order(j)
        d = self.dim
        value = 2.0 ** (j / 2.0) * math.gamma((d + j) / 2.0) / math.gamma(d / 2.0)
        return MomentResult(value, True)

    def signed_moment(self, alpha):
        return float(np.prod([_gauss_raw_moment(int(a)) for a in alpha]))

    def tail_abs_mass(self, r, power=1):
        d = self.dim
        if power == 1:
            return float(gammaincc(d / 2.0, 0.5 * r * r))
        if power == 2:
            return float((4.0 * math.pi) ** (-d / 2.0) * gammaincc(d / 2.0, r * r))
        raise InputError(f"unsupported power {power}")


@dataclass(frozen=True)
class EpanechnikovKernel(Kernel):
    dim: int = 1

    kind = KIND_EPANECHNIKOV
    declared_order = 2
    support_radius = 1.0
    support_halfwidth = 1.0

    def __post_init__(self):
        if self.dim != 1:
            raise DimensionMismatch(
                "the Epanechnikov kind is one-dimensional; use product_of_1d for d > 1"
            )

    def eval_batch(self, u):
        u = np.asarray(u, dtype=float)[:, 0]
        out = 0.75 * (1.0 - u * u)
        return np.where(np.abs(u) <= 1.0, out, 0.0)

    def radial_profile(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= 1.0, 0.75 * (1.0 - r * r), 0.0)

    def decay_envelope(self, r):
        if r >= 1.0:
            return 0.0
        return 0.75 * (1.0 - r * r)

    def moment(self, j):
        self._check_moment_order(j)
        res = quadrature.integrate_radial(
            self.radial_profile, d=1, j=j, r_max=1.0, rel_tol=1e-12, abs_tol=1e-14
        )
        return MomentResult(res.value, res.converged)

    def signed_moment(self, alpha):
        a = int(alpha[0])
        if a % 2 == 1:
            return 0.0
        return 1.5 * (1.0 / (a + 1) - 1.0 / (a + 3))

    def tail_abs_mass(self, r, power=1):
        return 0.0 if r >= 1.0 else 1.0


@dataclass(frozen=True)
class HigherOrder4Kernel(Kernel):
    """Fourth-order Gaussian-based filter (3 - u^2)/2 * phi(u), d=1.

    Its second moment cancels, so the leading bias term is fourth order;
    the price is that the kernel dips negative beyond |u| = sqrt(3).
    """

    dim: int = 1

    kind = KIND_HIGHER_ORDER4
    declared_order = 4
    support_radius = math.inf
    support_halfwidth = None

    def __post_init__(self):
        if self.dim != 1:
            raise DimensionMismatch(
                "the fourth-order kind is one-dimensional; use product_of_1d for d > 1"
            )

    def eval_batch(self, u):
        u = np.asarray(u, dtype=float)[:, 0]
        phi = (2.0 * math.pi) ** -0.5 * np.exp(-0.5 * u * u)
        return 0.5 * (3.0 - u * u) * phi

    def _value(self, r):
        phi = (2.0 * math.pi) ** -0.5 * math.exp(-0.5 * r * r)
        return 0.5 * (3.0 - r * r) * phi

    def abs_radial_profile(self, r):
        r = np.asarray(r, dtype=float)
        phi = (2.0 * math.pi) ** -0.5 * np.exp(-0.5 * r * r)
        return 0.5 * np.abs(3.0 - r * r) * phi

    def decay_envelope(self, r):
        # decreasing on [0, sqrt(3)], negative beyond; sup over the tail is
        # approached at infinity once the positive part is gone
        return max(self._value(r), 0.0)

    def moment(self, j):
        self._check_moment_order(j)
        res = quadrature.integrate_radial(
            self.abs_radial_profile,
            d=1,
            j=j,
            breakpoints=[math.sqrt(3.0)],
            rel_tol=1e-12,
            abs_tol=1e-14,
        )
        return MomentResult(res.value, res.converged)

    def signed_moment(self, alpha):
        a = int(alpha[0])
        if a % 2 == 1:
            return 0.0
        return 0.5 * (3.0 * _gauss_raw_moment(a) - _gauss_raw_moment(a + 2))

    def _abs_sup_beyond(self, r):
        s5 = math.sqrt(5.0)
        if r >= s5:
            return abs(self._value(r))
        trough = abs(self._value(s5))
        if r >= math.sqrt(3.0):
            return trough
        return max(self._value(r), trough)

    def tail_abs_mass(self, r, power=1):
        s3 = math.sqrt(3.0)
        if r < s3:
            base = 1.15  # above the true absolute mass 1.14183...
        else:
            # two-sided tail: 2 * int_r^inf (u^2-3)/2 phi = r*phi(r) - 2*Q(r)
            phi = (2.0 * math.pi) ** -0.5 * math.exp(-0.5 * r * r)
            q = float(ndtr(-r))
            base = max(r * phi - 2.0 * q, 0.0)
        if power == 1:
            return base
        return self._abs_sup_beyond(r) ** (power - 1) * base


_BASE_1D = {
    KIND_GAUSSIAN: GaussianKernel,
    KIND_EPANECHNIKOV: EpanechnikovKernel,
    KIND_HIGHER_ORDER4: HigherOrder4Kernel,
}


@dataclass(frozen=True)
class ProductKernel(Kernel):
    """Product of d copies of a 1-d base kernel."""

    base_kind: str
    dim: int

    kind = KIND_PRODUCT

    def __post_init__(self):
        if self.base_kind not in _BASE_1D:
            raise InputError(f"unknown base kind {self.base_kind!r}")
        if self.dim < 1:
            raise DimensionMismatch("dim must be >= 1")

    @property
    def base(self) -> Kernel:
        return _BASE_1D[self.base_kind]()

    @property
    def declared_order(self):
        return self.base.declared_order

    @property
    def support_halfwidth(self):
        return self.base.support_halfwidth

    @property
    def support_radius(self):
        hw = self.base.support_halfwidth
        return math.inf if hw is None else hw * math.sqrt(self.dim)

    def params_json(self):
        return {"base": self.base_kind}

    def eval_batch(self, u):
        u = np.asarray(u, dtype=float)
        base = self.base
        out = np.ones(u.shape[0])
        for i in range(self.dim):
            out = out * base.eval_batch(u[:, i : i + 1])
        return out

    def decay_envelope(self, r):
        d = self.dim
        if self.base_kind == KIND_GAUSSIAN:
            return GaussianKernel(d).decay_envelope(r)
        if self.base_kind == KIND_EPANECHNIKOV:
            # radially decreasing along rays; the sphere maximum splits the
            # squared radius equally across coordinates (concavity of
            # log(1 - t)), giving a closed form
            if r >= math.sqrt(d):
                return 0.0
            return (0.75 * (1.0 - r * r / d)) ** d
        return self._numeric_envelope(r)

    def _numeric_envelope(self, r):
        # coarse but honest: scan radii and directions; fine for diagnostics
        if self.dim > 3:
            raise DimensionMismatch("numeric envelope supports d <= 3")
        radii = np.linspace(r, max(r + 10.0, 12.0), 400)[1:]
        best = 0.0
        for s in radii:
            best = max(best, self._sphere_max(s))
        return best

    def _sphere_max(self, s):
        d = self.dim
        if d == 1:
            pts = np.array([[s], [-s]])
        elif d == 2:
            th = np.linspace(0.0, 2.0 * math.pi, 256, endpoint=False)
            pts = s * np.stack([np.cos(th), np.sin(th)], axis=-1)
        else:
            th = np.linspace(0.0, 2.0 * math.pi, 48, endpoint=False)
            ph = np.linspace(0.0, math.pi, 24)
            tt, pp = np.meshgrid(th, ph, indexing="ij")
            pts = s * np.stack(
                [
                    (np.cos(tt) * np.sin(pp)).ravel(),
                    (np.sin(tt) * np.sin(pp)).ravel(),
                    np.cos(pp).ravel(),
                ],
                axis=-1,
            )
        return float(np.max(self.eval_batch(pts)))

    def moment(self, j):
        self._check_moment_order(j)
        if self.dim > 3:
            raise DimensionMismatch("product moments support d <= 3")
        hw = self.base.support_halfwidth
        half = hw if hw is not None else 10.0

        def fn(pts):
            vals = np.abs(self.eval_batch(pts))
            if j > 0:
                vals = vals * np.linalg.norm(pts, axis=-1) ** j
            return vals

        region = quadrature.Box(tuple([-half] * self.dim), tuple([half] * self.dim))
        res = quadrature.integrate(fn, region, rel_tol=1e-10, abs_tol=1e-12)
        return MomentResult(res.value, res.converged)

    def signed_moment(self, alpha):
        base = self.base
        out = 1.0
        for a in alpha:
            out *= base.signed_moment((int(a),))
        return out

    def tail_abs_mass(self, r, power=1):
        hw = self.base.support_halfwidth
        if hw is not None:
            return 0.0 if r >= hw * math.sqrt(self.dim) else 1.0
        d = self.dim
        m1 = self.base.moment(0).value
        per_axis = self.base.tail_abs_mass(r / math.sqrt(d), power=1)
        bound = d * per_axis * m1 ** (d - 1)
        if power == 1:
            return bound
        # |K| <= peak^(power-1) * |K| outside the radius
        peak = self.base.eval(np.zeros(1)) ** d
        return peak ** (power - 1) * bound


@dataclass(frozen=True)
class SpikeTrainParams:
    """Parameters of the spike-train kernel.

    decay_exp p >= 0 bounds how slowly the spike peaks may decay; moment_order
    ell is how many radial moments stay finite; n_max truncates the series;
    c is the normalization constant (1.0 until normalized).
    """

    decay_exp: float
    moment_order: int
    dim: int
    n_max: int = 10_000
    c: float = 1.0

    def __post_init__(self):
        if self.decay_exp < 0 or self.moment_order < 0 or self.dim < 1:
            raise InputError("spike-train parameters must be non-negative, dim >= 1")
        if self.n_max < 2:
            raise InputError("n_max must be >= 2")
        if self.c <= 0:
            raise InputError("normalization constant must be positive")
        if math.log10(2.0 * self.n_max) * self.shrink_exp > 290.0:
            raise InputError("spike widths underflow: reduce p, ell or n_max")

    @property
    def shrink_exp(self) -> float:
        """Spike width exponent q = p + ell + d + 1 (width of spike n is n^-q)."""
        return self.decay_exp + self.moment_order + self.dim + 1.0


@dataclass(frozen=True)
class SpikeTrainKernel(Kernel):
    """Radial kernel k(|u|) with bumps of half-width n^-q/2 at radii n >= 2.

    The peak at radius n has height c * n^-p / e, so n^p K(n e_1) is constant
    in n: the kernel decays no faster than |u|^-p along the spikes, while
    staying smooth (each point is covered by at most one bump) and zero near
    the origin.
    """

    params: SpikeTrainParams

    kind = KIND_SPIKE_TRAIN
    declared_order = None
    support_halfwidth = None

    @property
    def dim(self):
        return self.params.dim

    @property
    def support_radius(self):
        p = self.params
        return p.n_max + 0.5 * p.n_max**-p.shrink_exp

    def params_json(self):
        p = self.params
        return {
            "p": p.decay_exp,
            "ell": p.moment_order,
            "n_max": p.n_max,
            "c": p.c,
        }

    # -- spike geometry ----------------------------------------------------

    def spike_centers(self, n_max: int | None = None) -> np.ndarray:
        n_max = self.params.n_max if n_max is None else n_max
        return np.arange(2, n_max + 1, dtype=float)

    def spike_half_widths(self, n_max: int | None = None) -> np.ndarray:
        return 0.5 * self.spike_centers(n_max) ** -self.params.shrink_exp

    def spike_heights(self, n_max: int | None = None) -> np.ndarray:
        """Coefficient c * n^-p of each bump (peak value is this over e)."""
        return self.params.c * self.spike_centers(n_max) ** -self.params.decay_exp

    @staticmethod
    def bump_profile(s):
        return bump(s)

    # -- evaluation ---------------------------------------------------------

    def radial_profile(self, r):
        p = self.params
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        # spikes are disjoint: only the integers adjacent to r can cover it
        base = np.rint(r)
        for off in (-1.0, 0.0, 1.0):
            n = base + off
            valid = (n >= 2) & (n <= p.n_max)
            if not np.any(valid):
                continue
            nv = np.where(valid, n, 2.0)
            s = 2.0 * nv**p.shrink_exp * (r - nv)
            contrib = p.c * nv**-p.decay_exp * bump(np.clip(s, -2.0, 2.0))
            out = np.where(valid, out + contrib, out)
        return out

    def eval_batch(self, u):
        u = np.asarray(u, dtype=float)
        return self.radial_profile(np.linalg.norm(u, axis=-1))

    def decay_envelope(self, r):
        p = self.params
        first = max(2, int(math.floor(r)))
        for n in range(first, first + 3):
            if n > p.n_max:
                return 0.0
            if n >= 2 and n + 0.5 * n**-p.shrink_exp > r:
                return p.c * math.exp(-1.0) * n**-p.decay_exp
        return 0.0

    # -- integrals ----------------------------------------------------------

    def radial_integral(self, exponent: float, n_max: int | None = None) -> float:
        """integral r^exponent k(r) dr as an exact sum of per-spike integrals.

        Each spike is integrated in its local coordinate s = 2 n^q (r - n),
        which stays well-conditioned even when the spike width n^-q is below
        the floating-point spacing at radius n.
        """
        p = self.params
        n_max = p.n_max if n_max is None else n_max
        s, w = bump_rule()
        centers = self.spike_centers(n_max)
        hw = 0.5 * centers**-p.shrink_exp
        radii = centers[:, None] + s[None, :] * hw[:, None]
        vals = radii**exponent * bump(np.broadcast_to(s, radii.shape))
        per_spike = (vals @ w) * hw
        coeff = p.c * centers**-p.decay_exp
        return float(np.sum((coeff * per_spike)[::-1]))

    def moment(self, j, n_max: int | None = None):
        self._check_moment_order(j)
        p = self.params
        n_max = p.n_max if n_max is None else n_max
        exponent = p.dim + j - 1
        surface = quadrature.sphere_surface(p.dim)
        value = surface * self.radial_integral(exponent, n_max)
        doubled = surface * self.radial_integral(exponent, 2 * n_max)
        rel_change = abs(doubled - value) / max(abs(doubled), 1e-300)
        return MomentResult(value, rel_change < MOMENT_DOUBLING_RTOL)

    def signed_moment(self, alpha):
        alpha = tuple(int(a) for a in alpha)
        if any(a % 2 == 1 for a in alpha):
            return 0.0
        total = sum(alpha)
        radial = self.radial_integral(self.params.dim + total - 1)
        return radial * _sphere_monomial(alpha, self.params.dim)

    def tail_abs_mass(self, r, power=1):
        p = self.params
        centers = self.spike_centers()
        hw = 0.5 * centers**-p.shrink_exp
        mask = centers + hw > r
        coeff = (p.c * centers**-p.decay_exp) ** power
        surface = quadrature.sphere_surface(p.dim)
        masses = (
            coeff * surface * (centers + hw) ** (p.dim - 1) * 2.0 * hw
        )
        return float(np.sum(masses[mask][::-1]))

    def normalized(self) -> "SpikeTrainKernel":
        mass = self.moment(0)
        if not mass.converged:
            raise QuadratureFailed("spike-train unit mass failed the doubling test")
        if mass.value <= 0:
            raise QuadratureFailed("spike-train unit mass is not positive")
        return SpikeTrainKernel(replace(self.params, c=self.params.c / mass.value))


def _sphere_monomial(alpha, d) -> float:
    """integral over the unit sphere of prod omega_i^alpha_i (all even)."""
    total = sum(alpha)
    num = 2.0
    for a in alpha:
        num *= math.gamma((a + 1) / 2.0)
    return num / math.gamma((total + d) / 2.0)


def make_spike_train(
    p: float, ell: int, dim: int, n_max: int = 10_000
) -> SpikeTrainKernel:
    """Construct and normalize a spike-train kernel."""
    return SpikeTrainKernel(SpikeTrainParams(p, ell, dim, n_max)).normalized()


# ---------------------------------------------------------------------------
# order verification


def _signed_moment_quadrature(kernel: Kernel, alpha) -> float:
    """Numeric signed monomial integral, independent of closed forms."""
    d = kernel.dim
    if isinstance(kernel, SpikeTrainKernel):
        # tensor grids cannot resolve the spikes; use the exact radial/angular
        # factorization with the radial part summed spike by spike
        if any(int(a) % 2 == 1 for a in alpha):
            return 0.0
        total = sum(int(a) for a in alpha)
        radial = kernel.radial_integral(d + total - 1)
        return radial * _sphere_monomial(tuple(int(a) for a in alpha), d)
    if d > 3:
        raise DimensionMismatch("order verification uses tensor quadrature, d <= 3")
    half = kernel.support_halfwidth
    if half is None:
        half = 10.0

    def fn(pts):
        vals = kernel.eval_batch(pts)
        for i, a in enumerate(alpha):
            if a:
                vals = vals * pts[:, i] ** int(a)
        return vals

    region = quadrature.Box(tuple([-half] * d), tuple([half] * d))
    res = quadrature.integrate(fn, region, rel_tol=1e-11, abs_tol=1e-13)
    res.require_converged(f"signed moment {alpha}")
    return res.value


def verify_order(kernel: Kernel, v: int) -> OrderReport:
    """Check unit mass and vanishing of all monomial moments below order v.

    Integrals are recomputed numerically (they are the verdict, not the
    declaration), each to within 1e-8.
    """
    if v < 1:
        raise InputError("order must be >= 1")
    d = kernel.dim
    unit = _signed_moment_quadrature(kernel, (0,) * d)
    unit_ok = abs(unit - 1.0) < ORDER_CHECK_ATOL
    checks = []
    ok = unit_ok
    for total in range(1, v):
        for alpha in _multi_indices(d, total):
            val = _signed_moment_quadrature(kernel, alpha)
            passed = abs(val) < ORDER_CHECK_ATOL
            ok = ok and passed
            checks.append(OrderCheck(alpha, val, passed))
    return OrderReport(v, unit, unit_ok, checks, ok)


def _multi_indices(d, total):
    for combo in iter_product(range(total + 1), repeat=d):
        if sum(combo) == total:
            yield combo


# ---------------------------------------------------------------------------
# construction from wire format


def make_kernel(kind: str, dim: int, params: dict | None = None) -> Kernel:
    params = dict(params or {})
    if kind == KIND_GAUSSIAN:
        return GaussianKernel(dim)
    if kind == KIND_EPANECHNIKOV:
        return EpanechnikovKernel(dim)
    if kind == KIND_HIGHER_ORDER4:
        return HigherOrder4Kernel(dim)
    if kind == KIND_PRODUCT:
        base = params.get("base")
        if base is None:
            raise InputError("product_of_1d needs params.base")
        return ProductKernel(base_kind=base, dim=dim)
    if kind == KIND_SPIKE_TRAIN:
        try:
            p = float(params["p"])
            ell = int(params["ell"])
        except KeyError as exc:
            raise InputError(f"spike_train needs params.{exc.args[0]}") from exc
        n_max = int(params.get("n_max", 10_000))
        c = params.get("c")
        sp = SpikeTrainParams(p, ell, dim, n_max, float(c) if c is not None else 1.0)
        kernel = SpikeTrainKernel(sp)
        if c is None:
            kernel = kernel.normalized()
        return kernel
    raise InputError(f"unknown kernel kind {kind!r}")


def kernel_from_json(obj: dict) -> Kernel:
    try:
        return make_kernel(obj["kind"], int(obj["dim"]), obj.get("params"))
    except (TypeError, KeyError) as exc:
        raise InputError(f"malformed kernel spec: {exc}") from exc
