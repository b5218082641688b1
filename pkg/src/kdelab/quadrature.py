"""Deterministic adaptive quadrature in 1 to 3 dimensions.

The engine is a tensor Gauss-Legendre rule with adaptive dyadic subdivision:
every cell is scored by the two-level difference between its one-shot value
and the sum over its two halves, tried along each axis, and the worst cell
is refined (along its worst axis) until the summed error estimate meets the
requested tolerance.  All control decisions are value-driven and tie-broken
by creation index, so a call is bit-reproducible.

Integrands must be vectorized: ``fn(points)`` receives an (m, d) array and
returns an (m,) array.  Radial profiles receive an (m,) radius array.

Narrow integrand features (the spike-train kernel, thin density shells) are
never discovered reliably by refinement alone; callers must seed them as
initial boxes or breakpoints.  ``convolve_at`` knows how to do this for the
kernel kinds in this package.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InputError,
    MomentDiverged,
    QuadratureFailed,
)

DEFAULT_REL_TOL = {1: 1e-9, 2: 1e-7, 3: 1e-6}
DEFAULT_ABS_TOL = 1e-12
DEFAULT_MAX_DEPTH = 40
DEFAULT_NODES_PER_AXIS = {1: 15, 2: 9, 3: 7}
DEFAULT_MAX_CELLS = 50_000


def default_rel_tol(d: int) -> float:
    return DEFAULT_REL_TOL.get(d, 1e-6)


def default_nodes_per_axis(d: int) -> int:
    return DEFAULT_NODES_PER_AXIS.get(d, 7)


@dataclass
class QuadratureResult:
    value: float
    error_estimate: float
    nodes_used: int
    converged: bool

    def require_converged(self, what: str = "integral") -> "QuadratureResult":
        if not self.converged:
            raise QuadratureFailed(
                f"{what} did not converge: value={self.value!r}, "
                f"error_estimate={self.error_estimate!r}, nodes={self.nodes_used}"
            )
        return self


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    @property
    def dim(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    @property
    def dim(self) -> int:
        return len(self.center)


@dataclass(frozen=True)
class Annulus:
    center: tuple
    r_inner: float
    r_outer: float

    @property
    def dim(self) -> int:
        return len(self.center)


def sphere_surface(d: int) -> float:
    """Surface area of the unit sphere in R^d (2 for d=1, 2*pi for d=2)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


_LEGENDRE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def legendre_rule(m: int) -> tuple[np.ndarray, np.ndarray]:
    if m not in _LEGENDRE_CACHE:
        x, w = np.polynomial.legendre.leggauss(m)
        x.setflags(write=False)
        w.setflags(write=False)
        _LEGENDRE_CACHE[m] = (x, w)
    return _LEGENDRE_CACHE[m]


def box_rule(fn, lower, upper, m: int) -> float:
    """Fixed tensor Gauss-Legendre rule with m nodes per axis.

    Exact (to roundoff) for polynomials of degree 2m-1 per axis.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = lower.size
    x, w = legendre_rule(m)
    pts_1d = []
    wts_1d = []
    for i in range(d):
        mid = 0.5 * (lower[i] + upper[i])
        half = 0.5 * (upper[i] - lower[i])
        pts_1d.append(mid + half * x)
        wts_1d.append(half * w)
    if d == 1:
        pts = pts_1d[0][:, None]
        wts = wts_1d[0]
    else:
        grids = np.meshgrid(*pts_1d, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=-1)
        wts = wts_1d[0]
        for ww in wts_1d[1:]:
            wts = np.multiply.outer(wts, ww)
        wts = wts.ravel()
    vals = np.asarray(fn(pts), dtype=float)
    if vals.shape != (pts.shape[0],):
        raise InputError(
            f"integrand returned shape {vals.shape}, expected ({pts.shape[0]},)"
        )
    if not np.all(np.isfinite(vals)):
        raise QuadratureFailed("integrand returned non-finite values")
    return float(np.sum(vals * wts))


class _Cell:
    __slots__ = ("lower", "upper", "coarse", "fine", "err", "depth", "seq", "halves")

    def __init__(self, lower, upper, coarse, fine, err, depth, seq, halves):
        self.lower = lower
        self.upper = upper
        self.coarse = coarse
        self.fine = fine
        self.err = err
        self.depth = depth
        self.seq = seq
        self.halves = halves  # ((lo_l, hi_l, val_l), (lo_r, hi_r, val_r))


def _split_bounds(lower, upper, axis):
    mid = 0.5 * (lower[axis] + upper[axis])
    hi_l = upper.copy()
    hi_l[axis] = mid
    lo_r = lower.copy()
    lo_r[axis] = mid
    return (lower, hi_l), (lo_r, upper)


def integrate_boxes(
    fn,
    boxes,
    rel_tol: float | None = None,
    abs_tol: float | None = None,
    max_depth: int = DEFAULT_MAX_DEPTH,
    nodes_per_axis: int | None = None,
    max_cells: int = DEFAULT_MAX_CELLS,
) -> QuadratureResult:
    """Adaptive integration over a union of axis-aligned boxes.

    The boxes act as seed cells, so known breakpoints or thin features
    should be encoded as box boundaries by the caller.
    """
    first = np.asarray(boxes[0][0], dtype=float)
    d = first.size
    if d < 1 or d > 3:
        raise DimensionMismatch(f"adaptive quadrature supports d in [1,3], got {d}")
    rel_tol = default_rel_tol(d) if rel_tol is None else rel_tol
    abs_tol = DEFAULT_ABS_TOL if abs_tol is None else abs_tol
    m = default_nodes_per_axis(d) if nodes_per_axis is None else nodes_per_axis

    nodes = 0
    seq = 0
    cells: dict[int, _Cell] = {}
    heap: list[tuple[float, int]] = []

    def make_cell(lower, upper, coarse, depth):
        """Score the cell by half-splitting along every axis; keep the halves
        of the worst axis for reuse when the cell is refined.

        Splitting just one axis would blind the error estimate to directions
        the integrand happens to be flat in (e.g. an angular coordinate of a
        radial integrand), silently converging on an unresolved cell.
        """
        nonlocal nodes, seq
        err = 0.0
        worst = 0.0
        best_halves = None
        best_fine = None
        for axis in range(d):
            if d > 1 and upper[axis] - lower[axis] <= 1e-300:
                continue
            (lo_l, hi_l), (lo_r, hi_r) = _split_bounds(lower, upper, axis)
            val_l = box_rule(fn, lo_l, hi_l, m)
            val_r = box_rule(fn, lo_r, hi_r, m)
            nodes += 2 * m**d
            fine = val_l + val_r
            diff = abs(fine - coarse)
            err += diff
            if best_halves is None or diff > worst:
                worst = diff
                best_halves = ((lo_l, hi_l, val_l), (lo_r, hi_r, val_r))
                best_fine = fine
        cell = _Cell(lower, upper, coarse, best_fine, err, depth, seq, best_halves)
        cells[seq] = cell
        heapq.heappush(heap, (-err, seq))
        seq += 1
        return cell

    for lo, hi in boxes:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.size != d or hi.size != d or np.any(hi <= lo):
            raise InputError(f"degenerate box {lo} .. {hi}")
        coarse = box_rule(fn, lo, hi, m)
        nodes += m**d
        make_cell(lo, hi, coarse, 0)

    total = sum(c.fine for c in cells.values())
    total_err = sum(c.err for c in cells.values())

    while total_err > max(abs_tol, rel_tol * abs(total)):
        while heap and heap[0][1] not in cells:
            heapq.heappop(heap)
        if not heap:
            break
        _, key = heapq.heappop(heap)
        cell = cells[key]
        if cell.depth >= max_depth or len(cells) >= max_cells:
            # park it: its contribution stays, it can no longer be refined
            del cells[key]
            cells[-key - 1] = cell
            continue
        del cells[key]
        total -= cell.fine
        total_err -= cell.err
        for lo_h, hi_h, val_h in cell.halves:
            child = make_cell(lo_h, hi_h, val_h, cell.depth + 1)
            total += child.fine
            total_err += child.err

    ordered = sorted(cells.values(), key=lambda c: c.seq)
    value = float(sum(c.fine for c in ordered))
    err = float(sum(c.err for c in ordered))
    converged = err <= max(abs_tol, rel_tol * abs(value))
    return QuadratureResult(value, err, nodes, converged)


def _spherical_fn(fn, center, d):
    center = np.asarray(center, dtype=float)
    if d == 2:

        def wrapped(pts):
            rho = pts[:, 0]
            th = pts[:, 1]
            xy = np.stack(
                [center[0] + rho * np.cos(th), center[1] + rho * np.sin(th)], axis=-1
            )
            return np.asarray(fn(xy), dtype=float) * rho

        return wrapped
    if d == 3:

        def wrapped(pts):
            rho = pts[:, 0]
            th = pts[:, 1]
            ph = pts[:, 2]
            sp = np.sin(ph)
            xyz = np.stack(
                [
                    center[0] + rho * np.cos(th) * sp,
                    center[1] + rho * np.sin(th) * sp,
                    center[2] + rho * np.cos(ph),
                ],
                axis=-1,
            )
            return np.asarray(fn(xyz), dtype=float) * rho * rho * sp

        return wrapped
    raise DimensionMismatch(f"spherical map needs d in {{2,3}}, got {d}")


def _region_boxes(fn, region):
    """Reduce a region to (integrand, boxes) in integration coordinates."""
    d = region.dim
    if isinstance(region, Box):
        return fn, [(np.asarray(region.lower, float), np.asarray(region.upper, float))]
    if isinstance(region, Ball):
        r0, r1, center = 0.0, region.radius, np.asarray(region.center, float)
    elif isinstance(region, Annulus):
        r0, r1, center = region.r_inner, region.r_outer, np.asarray(region.center, float)
        if not 0.0 <= r0 < r1:
            raise InputError(f"degenerate annulus radii ({r0}, {r1})")
    else:
        raise InputError(f"unknown region {region!r}")
    if r1 <= 0:
        raise InputError("region has non-positive outer radius")
    if d == 1:
        boxes = []
        if r0 == 0.0:
            boxes.append((center - r1, center + r1))
        else:
            boxes.append((center - r1, center - r0))
            boxes.append((center + r0, center + r1))
        return fn, boxes
    wrapped = _spherical_fn(fn, center, d)
    if d == 2:
        box = (np.array([r0, 0.0]), np.array([r1, 2.0 * math.pi]))
    else:
        box = (np.array([r0, 0.0, 0.0]), np.array([r1, 2.0 * math.pi, math.pi]))
    return wrapped, [box]


def integrate(
    fn,
    region,
    rel_tol: float | None = None,
    abs_tol: float | None = None,
    max_depth: int = DEFAULT_MAX_DEPTH,
    nodes_per_axis: int | None = None,
    max_cells: int = DEFAULT_MAX_CELLS,
) -> QuadratureResult:
    """Integrate a vectorized function over a Box, Ball or Annulus."""
    wrapped, boxes = _region_boxes(fn, region)
    return integrate_boxes(
        wrapped,
        boxes,
        rel_tol=rel_tol,
        abs_tol=abs_tol,
        max_depth=max_depth,
        nodes_per_axis=nodes_per_axis,
        max_cells=max_cells,
    )


def integrate_radial(
    profile,
    d: int,
    j: int = 0,
    breakpoints=(),
    rel_tol: float | None = None,
    abs_tol: float | None = None,
    r_max: float | None = None,
    tail_start: float = 8.0,
    max_doublings: int = 60,
) -> QuadratureResult:
    """S_{d-1} * integral of r^(d+j-1) * profile(r) over r >= 0.

    ``breakpoints`` seed the initial subdivision (mandatory for profiles
    with narrow features).  When ``r_max`` is None the upper limit is
    extended by doubling until two consecutive chunks are negligible;
    persistent growth raises MomentDiverged.
    """
    if d < 1:
        raise DimensionMismatch(f"d must be >= 1, got {d}")
    rel_tol = default_rel_tol(1) if rel_tol is None else rel_tol
    abs_tol = DEFAULT_ABS_TOL if abs_tol is None else abs_tol
    surface = sphere_surface(d)
    expo = d + j - 1

    def fn(pts):
        r = pts[:, 0]
        vals = np.asarray(profile(r), dtype=float)
        if expo != 0:
            vals = vals * r**expo
        return vals

    bps = sorted({float(b) for b in breakpoints if 0.0 < float(b)})
    r_stop = r_max if r_max is not None else max(tail_start, (bps[-1] + 1.0) if bps else 0.0)
    edges = [0.0] + [b for b in bps if b < r_stop] + [r_stop]
    boxes = [
        (np.array([a]), np.array([b]))
        for a, b in zip(edges[:-1], edges[1:])
        if b > a
    ]
    res = integrate_boxes(fn, boxes, rel_tol=rel_tol, abs_tol=abs_tol)
    value, err, nodes, ok = res.value, res.error_estimate, res.nodes_used, res.converged

    if r_max is None:
        low = r_stop
        quiet = 0
        grow = 0
        prev_chunk = math.inf
        for _ in range(max_doublings):
            chunk = integrate_boxes(
                fn,
                [(np.array([low]), np.array([2.0 * low]))],
                rel_tol=rel_tol,
                abs_tol=abs_tol,
            )
            value += chunk.value
            err += chunk.error_estimate
            nodes += chunk.nodes_used
            ok = ok and chunk.converged
            mag = abs(chunk.value)
            grow = grow + 1 if mag > prev_chunk * 1.0000001 and mag > abs_tol else 0
            if grow >= 3:
                raise MomentDiverged(
                    f"radial tail grows under doubling (last chunk {chunk.value!r})"
                )
            quiet = quiet + 1 if mag <= max(abs_tol, rel_tol * abs(value)) / 4.0 else 0
            prev_chunk = mag
            low *= 2.0
            if quiet >= 2:
                break
        else:
            raise MomentDiverged("radial tail failed to settle under doubling")

    return QuadratureResult(surface * value, surface * err, nodes, ok)


# ---------------------------------------------------------------------------
# convolution of a scaled kernel with a density at a point


def _truncation_radius(kernel, sup_f, abs_tol, power):
    r = 6.0
    while r < 80.0:
        tail = kernel.tail_abs_mass(r, power=power)
        if sup_f * tail <= 0.1 * abs_tol:
            return r, True
        r += 2.0
    return r, False


def convolve_at(
    kernel,
    h,
    model,
    x_query,
    rel_tol: float | None = None,
    abs_tol: float | None = None,
    power: int = 1,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> QuadratureResult:
    """integral of K(u)^power * f(x' - h u) du.

    With power=1 and a normalized kernel this is the expectation of the
    scaled-kernel estimator at x'.  power=2 is used by the exact variance.

    The integration region is chosen per kernel kind: the exact support box
    for compact kernels, a truncated box whose omitted tail is provably
    below a tenth of the absolute tolerance for smoothly decaying kernels,
    and the union of spike supports (in spike-local coordinates) for the
    spike-train kernel.
    """
    from .kernels import SpikeTrainKernel  # local import to avoid a cycle

    x_query = np.asarray(x_query, dtype=float)
    d = kernel.dim
    if x_query.shape != (d,):
        raise DimensionMismatch(
            f"query point shape {x_query.shape} against kernel dim {d}"
        )
    if h.dim != d or model.dim != d:
        raise DimensionMismatch("kernel, bandwidth and density dims disagree")
    if d > 3:
        raise DimensionMismatch("convolve_at supports d <= 3")
    rel_tol = default_rel_tol(d) if rel_tol is None else rel_tol
    abs_tol = DEFAULT_ABS_TOL if abs_tol is None else abs_tol

    if isinstance(kernel, SpikeTrainKernel):
        return _convolve_spike_train(
            kernel, h, model, x_query, rel_tol, abs_tol, max_depth
        )

    def integrand(pts):
        kv = kernel.eval_batch(pts)
        if power != 1:
            kv = kv**power
        fx = model.pdf_batch(x_query[None, :] - pts @ h.entries.T)
        return kv * fx

    half = kernel.support_halfwidth
    if half is not None:
        region = Box(tuple([-half] * d), tuple([half] * d))
        return integrate(
            integrand, region, rel_tol=rel_tol, abs_tol=abs_tol, max_depth=max_depth
        )

    sup_f = model.pdf_upper_bound()
    radius, tail_ok = _truncation_radius(kernel, sup_f, abs_tol, power)
    region = Box(tuple([-radius] * d), tuple([radius] * d))
    res = integrate(
        integrand, region, rel_tol=rel_tol, abs_tol=abs_tol, max_depth=max_depth
    )
    if not tail_ok:
        res.converged = False
    return res


def _cross_angles(center_fn, radius, n_scan=2048):
    """Angles where |center_fn(theta)| crosses ``radius`` (grid + bisection)."""
    th = np.linspace(0.0, 2.0 * math.pi, n_scan + 1)
    g = center_fn(th) - radius
    out = []
    for i in range(n_scan):
        a, b = th[i], th[i + 1]
        ga, gb = g[i], g[i + 1]
        if ga == 0.0:
            out.append(a)
            continue
        if ga * gb < 0.0:
            for _ in range(60):
                mid = 0.5 * (a + b)
                gm = float(center_fn(np.array([mid]))[0]) - radius
                if ga * gm <= 0.0:
                    b = mid
                else:
                    a, ga = mid, gm
            out.append(0.5 * (a + b))
    return out


def _convolve_spike_train(kernel, h, model, x_query, rel_tol, abs_tol, max_depth=DEFAULT_MAX_DEPTH):
    """Spike-by-spike convolution in spike-local coordinates.

    Each spike n contributes an integral over its scaled offset s in
    [-1, 1] (radius n + s * w_n with w_n the half-width); the offsets are
    exact in floating point where a global radial coordinate would have
    lost the spike entirely.  Supported for d <= 2.
    """
    d = kernel.dim
    if d > 2:
        raise DimensionMismatch("spike-train convolution supports d <= 2")

    lam_min = float(h.eigenvalues[-1])
    xnorm = float(np.linalg.norm(x_query))
    centers = kernel.spike_centers()
    half_widths = kernel.spike_half_widths()
    heights = kernel.spike_heights()
    # |x' - h u| >= lam_min * |u| - |x'|; skip spikes whose best-case density
    # value times their total kernel mass cannot move the result
    dist = np.maximum(0.0, lam_min * (centers - half_widths) - xnorm)
    f_bound = np.asarray([model.tail_sup(t) for t in dist])
    spike_mass = (
        heights
        * sphere_surface(d)
        * (centers + half_widths) ** (d - 1)
        * 2.0
        * half_widths
    )
    keep = f_bound * spike_mass > 0.05 * abs_tol / max(len(centers), 1)
    idx = np.nonzero(keep)[0]

    feature_radii = model.feature_radii()
    # angular features (thin shells) need a scan fine enough to land several
    # points inside their window, else the crossing detector and the
    # adaptive boxes both miss them
    n_scan = 2048
    scan_ok = True
    width_fn = getattr(model, "min_feature_width", lambda: None)
    feature_width = width_fn()
    if d == 2 and feature_radii and feature_width is not None:
        window = feature_width / max(feature_radii)
        wanted = int(16.0 * 2.0 * math.pi / window)
        n_scan = max(n_scan, min(wanted, 262_144))
        if wanted > 262_144:
            scan_ok = False  # feature thinner than any feasible scan

    value = 0.0
    err = 0.0
    nodes = 0
    ok = scan_ok
    hmat = h.entries

    for i in idx:
        n = centers[i]
        w = half_widths[i]
        amp = heights[i]

        if d == 1:
            hval = float(hmat[0, 0])

            def fn(pts, sign, n=n, w=w, amp=amp, hval=hval):
                s = pts[:, 0]
                r = n + s * w
                y = x_query[0] - hval * sign * r
                fv = model.pdf_batch(y[:, None])
                return amp * kernel.bump_profile(s) * w * fv

            for sign in (1.0, -1.0):
                cuts = {-1.0, 1.0}
                for rho in feature_radii:
                    # |x' - sign*h*r| = rho  =>  r = (x' -+ rho) / (sign*h)
                    for root in (
                        (x_query[0] - rho) / (hval * sign),
                        (x_query[0] + rho) / (hval * sign),
                    ):
                        s_root = (root - n) / w
                        if -1.0 < s_root < 1.0:
                            cuts.add(float(s_root))
                edges = sorted(cuts)
                boxes = [
                    (np.array([a]), np.array([b]))
                    for a, b in zip(edges[:-1], edges[1:])
                ]
                res = integrate_boxes(
                    lambda p, s=sign: fn(p, s),
                    boxes,
                    rel_tol=rel_tol,
                    abs_tol=abs_tol / max(len(idx), 1),
                    max_depth=max_depth,
                )
                value += res.value
                err += res.error_estimate
                nodes += res.nodes_used
                ok = ok and res.converged
        else:

            def center_dist(th, n=n):
                u = np.stack([n * np.cos(th), n * np.sin(th)], axis=-1)
                return np.linalg.norm(x_query[None, :] - u @ hmat.T, axis=-1)

            cuts = {0.0, 2.0 * math.pi}
            for rho in feature_radii:
                for ang in _cross_angles(center_dist, rho, n_scan=n_scan):
                    cuts.add(float(ang))
            edges = sorted(cuts)

            def fn2(pts, n=n, w=w, amp=amp):
                s = pts[:, 0]
                th = pts[:, 1]
                r = n + s * w
                u = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
                fv = model.pdf_batch(x_query[None, :] - u @ hmat.T)
                return amp * kernel.bump_profile(s) * w * r * fv

            boxes = [
                (np.array([-1.0, a]), np.array([1.0, b]))
                for a, b in zip(edges[:-1], edges[1:])
                if b > a + 1e-12
            ]
            res = integrate_boxes(
                fn2,
                boxes,
                rel_tol=rel_tol,
                abs_tol=abs_tol / max(len(idx), 1),
                max_depth=max_depth,
            )
            value += res.value
            err += res.error_estimate
            nodes += res.nodes_used
            ok = ok and res.converged

    return QuadratureResult(float(value), float(err), nodes, ok)
