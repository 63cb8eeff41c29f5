"""Delayed-potential evaluation.

The potential of a source of mass M is an exponentially weighted average of
instantaneous Newton potentials over the source's past positions:

    phi(r, t) = integral_0^inf  (-G M / |r - x(t - tau)|) e^(-tau/tau_g) dtau / tau_g

evaluated either along a caller-supplied path (the "naive" form, valid only
in the source's co-moving free-fall frame) or via the full prescription that
builds that frame first and transforms the result back, which is a no-op for
the scalar potential because the frame is a pure translation.

Quadrature truncates at t_max_factor * tau_g; the dropped tail mass
e^(-t_max_factor) is below double precision relevance at the default 40 and
is not renormalized away.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .constants import G
from .errors import SingularApproach
from .frames import build_frame
from .kinematics import as_vec3

__all__ = [
    "GaussLegendre",
    "AdaptiveSimpson",
    "KernelParams",
    "Source",
    "KernelNodes",
    "kernel_weights",
    "delayed_potential_naive",
    "delayed_potential",
    "delayed_field",
    "superposed_potential",
    "PreparedScene",
    "prepare_scene",
    "scene_potential_field",
]

CHUNK = 512  # grid points per evaluation block; fixed so thread count never changes results


@dataclass(frozen=True)
class GaussLegendre:
    """Composite Gauss-Legendre rule, one panel per kernel segment.

    Segments never exceed ``max_segment_tau_g`` kernel time constants, so a
    32-point panel integrates the exponential times any smooth path factor to
    near machine precision.
    """

    order: int = 32
    max_segment_tau_g: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "max_segment_tau_g", float(self.max_segment_tau_g))
        if self.order < 2:
            raise ValueError("order must be at least 2")
        if not self.max_segment_tau_g > 0.0:
            raise ValueError("max_segment_tau_g must be positive")


@dataclass(frozen=True)
class AdaptiveSimpson:
    """Globally adaptive Simpson rule with Richardson acceptance test."""

    rel_tol: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "rel_tol", float(self.rel_tol))
        if not 0.0 < self.rel_tol <= 1e-6:
            raise ValueError("rel_tol must be in (0, 1e-6]")


@dataclass(frozen=True)
class KernelParams:
    """Memory-kernel time constant and evaluation controls.

    tau_g = 0 selects the instantaneous Newtonian limit (no quadrature).
    softening_eps is a guard radius: any evaluation that comes closer than
    this to a past source position raises SingularApproach instead of being
    smoothed over.
    """

    tau_g: float
    t_max_factor: float = 40.0
    softening_eps: float = 1e-9
    quadrature: object = field(default_factory=GaussLegendre)

    def __post_init__(self):
        object.__setattr__(self, "tau_g", float(self.tau_g))
        object.__setattr__(self, "t_max_factor", float(self.t_max_factor))
        object.__setattr__(self, "softening_eps", float(self.softening_eps))
        if not (math.isfinite(self.tau_g) and self.tau_g >= 0.0):
            raise ValueError("tau_g must be finite and >= 0")
        if not self.t_max_factor >= 20.0:
            raise ValueError("t_max_factor must be >= 20 (keeps the dropped tail negligible)")
        if not self.softening_eps > 0.0:
            raise ValueError("softening_eps must be positive")
        if not isinstance(self.quadrature, (GaussLegendre, AdaptiveSimpson)):
            raise ValueError("quadrature must be GaussLegendre or AdaptiveSimpson")

    @property
    def t_max(self):
        """Look-back truncation time t_max_factor * tau_g."""
        return self.t_max_factor * self.tau_g


@dataclass(frozen=True, eq=False)
class Source:
    """A point mass riding a trajectory."""

    mass: float
    trajectory: object

    def __post_init__(self):
        object.__setattr__(self, "mass", float(self.mass))
        if not self.mass > 0.0:
            raise ValueError("mass must be positive")


@dataclass(frozen=True, eq=False)
class KernelNodes:
    """Fixed quadrature nodes for the kernel integral; iterates as (tau, weight) pairs.

    Weights absorb the exponential density, so sum(weights) equals the kernel
    mass on [0, t_max], 1 - e^(-t_max_factor).
    """

    taus: np.ndarray
    weights: np.ndarray
    n_segments: int

    def __iter__(self):
        return iter(zip(self.taus, self.weights))

    def __len__(self):
        return self.taus.size


@lru_cache(maxsize=8)
def _leggauss(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _clean_breakpoints(breakpoints, t_max):
    """Sorted breakpoints strictly inside (0, t_max), deduplicated."""
    eps = 1e-12 * t_max
    out = []
    for b in sorted(float(b) for b in breakpoints):
        if b <= eps or b >= t_max - eps:
            continue
        if out and b - out[-1] <= eps:
            continue
        out.append(b)
    return out


def kernel_weights(params, breakpoints=()):
    """Node/weight table covering [0, t_max], split at the given kernel lags.

    Only the Gauss-Legendre scheme has a fixed node table; the adaptive
    scheme chooses nodes per integrand and is rejected here. tau_g = 0 has no
    kernel at all (instantaneous limit).
    """
    if params.tau_g == 0.0:
        raise ValueError("tau_g = 0 is the instantaneous limit; it has no kernel nodes")
    spec = params.quadrature
    if not isinstance(spec, GaussLegendre):
        raise ValueError("kernel_weights needs the fixed-node GaussLegendre scheme")
    t_max = params.t_max
    tau_g = params.tau_g
    bounds = [0.0] + _clean_breakpoints(breakpoints, t_max) + [t_max]
    x, w = _leggauss(spec.order)
    max_seg = spec.max_segment_tau_g * tau_g
    taus = []
    weights = []
    n_segments = 0
    for a, b in zip(bounds[:-1], bounds[1:]):
        n_sub = max(1, math.ceil((b - a) / max_seg - 1e-12))
        edges = np.linspace(a, b, n_sub + 1)
        n_segments += n_sub
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            mid = 0.5 * (hi + lo)
            t_seg = mid + half * x
            taus.append(t_seg)
            weights.append(half * w * np.exp(-t_seg / tau_g) / tau_g)
    return KernelNodes(np.concatenate(taus), np.concatenate(weights), n_segments)


def _instantaneous(mass, pos, r, eps):
    """Newtonian potential and field of a point mass at ``pos``."""
    u = r - pos
    d = float(np.sqrt(u @ u))
    if d <= eps:
        raise SingularApproach(
            f"field point {d:.3e} m from the source (guard radius {eps:.3e} m)",
            distance=d,
        )
    return -G * mass / d, (-G * mass / d**3) * u


def _eval_nodes(mass, path, nodes, r, t, eps):
    """Weighted node sum of potential and field along ``path``."""
    pos = path(t - nodes.taus)  # (n, 3)
    u = r - pos
    d2 = np.einsum("ij,ij->i", u, u)
    d = np.sqrt(d2)
    i_min = int(np.argmin(d))
    if d[i_min] <= eps:
        raise SingularApproach(
            f"field point {d[i_min]:.3e} m from the past source path "
            f"(guard radius {eps:.3e} m)",
            distance=float(d[i_min]),
            when=float(t - nodes.taus[i_min]),
        )
    # exactly rounded sums: downstream fits amplify ulp-level noise by the
    # probe-distance / displacement ratio, so plain accumulation is too loose
    phi = -G * mass * math.fsum(nodes.weights / d)
    coeff = nodes.weights / (d2 * d)
    g = -G * mass * np.array(
        [math.fsum(coeff * u[:, 0]), math.fsum(coeff * u[:, 1]), math.fsum(coeff * u[:, 2])]
    )
    return phi, g


def _adaptive_step(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = f(lm)
    frm = f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or float(np.max(np.abs(delta))) <= 15.0 * tol:
        return left + right + delta / 15.0
    return _adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + _adaptive_step(
        f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
    )


def _adaptive_integral(f, bounds, rel_tol):
    """Adaptive Simpson of a vector integrand over consecutive segments."""
    segs = []
    coarse = None
    for a, b in zip(bounds[:-1], bounds[1:]):
        fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
        whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        coarse = whole if coarse is None else coarse + whole
        segs.append((a, b, fa, fm, fb, whole))
    scale = float(np.max(np.abs(coarse)))
    tol = rel_tol * (scale if scale > 0.0 else 1.0) / len(segs)
    total = None
    for a, b, fa, fm, fb, whole in segs:
        part = _adaptive_step(f, a, b, fa, fm, fb, whole, tol, 48)
        total = part if total is None else total + part
    return total


def _eval_adaptive(mass, path, breakpoints, r, t, params):
    tau_g = params.tau_g
    eps = params.softening_eps

    def f(tau):
        u = r - path(t - tau)
        d2 = float(u @ u)
        d = math.sqrt(d2)
        if d <= eps:
            raise SingularApproach(
                f"field point {d:.3e} m from the past source path "
                f"(guard radius {eps:.3e} m)",
                distance=d,
                when=t - tau,
            )
        c = math.exp(-tau / tau_g) / tau_g * (-G * mass)
        return np.array([c / d, c * u[0] / (d2 * d), c * u[1] / (d2 * d), c * u[2] / (d2 * d)])

    bounds = [0.0] + _clean_breakpoints(breakpoints, params.t_max) + [params.t_max]
    out = _adaptive_integral(f, bounds, params.quadrature.rel_tol)
    return float(out[0]), out[1:4]


def _tau_breakpoints(trajectory, t, params):
    return [t - s for s in trajectory.breakpoints_in(t - params.t_max, t)]


def _eval_along_path(mass, trajectory, path, r, t, params):
    """(potential, field) of one source whose frame-relative path is ``path``."""
    if params.tau_g == 0.0:
        return _instantaneous(mass, path(t), r, params.softening_eps)
    bps = _tau_breakpoints(trajectory, t, params)
    if isinstance(params.quadrature, GaussLegendre):
        nodes = kernel_weights(params, bps)
        return _eval_nodes(mass, path, nodes, r, t, params.softening_eps)
    return _eval_adaptive(mass, path, bps, r, t, params)


def delayed_potential_naive(source, r, t, params, *, path=None):
    """Delayed potential along an explicit path, no frame construction.

    ``path`` defaults to the source's lab trajectory. This form is only
    physically meaningful when the supplied path already lives in the
    source's co-moving free-fall frame; applied to a boosted lab description
    it reproduces the frame-dependence this law's frame prescription removes.
    """
    r = as_vec3(r, "r")
    if path is None:
        path = source.trajectory.position
    phi, _ = _eval_along_path(source.mass, source.trajectory, path, r, float(t), params)
    return phi


class _FramedGeometry:
    """Field point and source path mapped into the source's free-fall frame."""

    def __init__(self, source, ambient, t, params):
        self.frame = build_frame(source.trajectory, ambient, t, params.t_max)
        self.origin_t = self.frame.origin(t)
        traj = source.trajectory

        def rel_path(s):
            return traj.position(s) - self.frame.origin(s)

        self.rel_path = rel_path


def _framed_eval(source, ambient, r, t, params):
    r = as_vec3(r, "r")
    t = float(t)
    if params.tau_g == 0.0:
        return _instantaneous(source.mass, source.trajectory.position(t), r, params.softening_eps)
    geo = _FramedGeometry(source, ambient, t, params)
    r_frame = r - geo.origin_t
    return _eval_along_path(source.mass, source.trajectory, geo.rel_path, r_frame, t, params)


def delayed_potential(source, ambient, r, t, params):
    """Full prescription: evaluate in the co-moving free-fall frame at t.

    The frame is a pure translation, so the scalar value needs no transform
    back to the lab.
    """
    return _framed_eval(source, ambient, r, t, params)[0]


def delayed_field(source, ambient, r, t, params):
    """Gravitational acceleration -grad(phi); directions are translation-invariant."""
    return _framed_eval(source, ambient, r, t, params)[1]


def superposed_potential(sources, ambient, r, t, params):
    """Sum of independently framed single-source potentials."""
    total = 0.0
    for i, src in enumerate(sources):
        try:
            total += delayed_potential(src, ambient, r, t, params)
        except SingularApproach as exc:
            raise SingularApproach(
                f"source {i}: {exc}", distance=exc.distance, when=exc.when, source_index=i
            ) from None
    return total


@dataclass(frozen=True, eq=False)
class PreparedScene:
    """Sources reduced to weighted effective point masses at one evaluation time.

    In each source's free-fall frame the retarded position at lag tau is
    xi(t - tau); shifting back by the frame origin at t gives a lab-frame
    point whose instantaneous Newton kernel, weighted by the kernel node
    weight times -G M, contributes linearly to potential and field. A whole
    scene then evaluates as a plain N-body sum over these nodes.
    """

    positions: np.ndarray  # (K, 3)
    weights: np.ndarray  # (K,), include the -G*M factor
    softening_eps: float
    n_nodes_per_source: tuple


def prepare_scene(sources, ambient, t, params):
    """Collapse every source to its effective kernel-node masses at time t."""
    if isinstance(params.quadrature, AdaptiveSimpson) and params.tau_g > 0.0:
        raise ValueError("scene preparation needs a fixed node table; use GaussLegendre")
    t = float(t)
    pos_parts = []
    w_parts = []
    counts = []
    for src in sources:
        if params.tau_g == 0.0:
            pos_parts.append(np.asarray(src.trajectory.position(t))[None, :])
            w_parts.append(np.array([-G * src.mass]))
            counts.append(1)
            continue
        geo = _FramedGeometry(src, ambient, t, params)
        nodes = kernel_weights(params, _tau_breakpoints(src.trajectory, t, params))
        rel = geo.rel_path(t - nodes.taus)
        pos_parts.append(rel + geo.origin_t)
        w_parts.append(-G * src.mass * nodes.weights)
        counts.append(len(nodes))
    if not pos_parts:
        pos_parts = [np.zeros((0, 3))]
        w_parts = [np.zeros(0)]
    return PreparedScene(
        np.vstack(pos_parts), np.concatenate(w_parts), params.softening_eps, tuple(counts)
    )


def _eval_block(scene, pts):
    """Potential/field of a prepared scene on one block of points.

    einsum with default (non-optimized) contraction keeps the reduction
    order fixed, so results are bitwise reproducible for a given block
    regardless of thread count.
    """
    d = pts[:, None, :] - scene.positions[None, :, :]  # (b, K, 3)
    r2 = np.einsum("bkj,bkj->bk", d, d)
    r = np.sqrt(r2)
    singular = np.any(r <= scene.softening_eps, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = scene.weights / r
        phi = np.einsum("bk->b", inv)
        grad = np.einsum("bk,bkj->bj", inv / r2, d)
    phi[singular] = np.nan
    grad[singular] = np.nan
    return phi, grad, singular


def _resolve_threads(threads):
    if threads in (None, 0):
        return min(8, os.cpu_count() or 1)
    n = int(threads)
    if n < 0:
        raise ValueError("thread count must be >= 0")
    return max(1, n)


def scene_potential_field(sources, ambient, points, t, params, threads=0):
    """Potential and field of a scene on many points at one time.

    Returns (phi (n,), grad (n,3), singular (n,) bool). Points inside the
    guard radius of any effective node produce nan rows and a True mask
    entry instead of raising, so grid sweeps can report and continue.
    Identical inputs give byte-identical outputs for any ``threads``;
    0 means automatic.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    n = pts.shape[0]
    phi = np.empty(n)
    grad = np.empty((n, 3))
    singular = np.zeros(n, dtype=bool)

    if isinstance(params.quadrature, AdaptiveSimpson) and params.tau_g > 0.0:
        geos = [_FramedGeometry(src, ambient, float(t), params) for src in sources]

        def run_block(lo, hi):
            for i in range(lo, hi):
                acc_phi = 0.0
                acc_grad = np.zeros(3)
                try:
                    for src, geo in zip(sources, geos):
                        p, g = _eval_along_path(
                            src.mass,
                            src.trajectory,
                            geo.rel_path,
                            pts[i] - geo.origin_t,
                            float(t),
                            params,
                        )
                        acc_phi += p
                        acc_grad += g
                except SingularApproach:
                    phi[i] = np.nan
                    grad[i] = np.nan
                    singular[i] = True
                else:
                    phi[i] = acc_phi
                    grad[i] = acc_grad
    else:
        scene = prepare_scene(sources, ambient, float(t), params)

        def run_block(lo, hi):
            phi[lo:hi], grad[lo:hi], singular[lo:hi] = _eval_block(scene, pts[lo:hi])

    blocks = [(lo, min(lo + CHUNK, n)) for lo in range(0, n, CHUNK)]
    workers = _resolve_threads(threads)
    if workers == 1 or len(blocks) <= 1:
        for lo, hi in blocks:
            run_block(lo, hi)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: run_block(*b), blocks))
    return phi, grad, singular
