"""Ambient fields and co-moving free-fall frames.

The delayed-potential law is applied in a frame that falls freely with each
source: a pure translation (lab axes, no rotation) whose origin y(s) obeys
y..(s) = ambient(y(s)) and matches the source position and velocity at the
evaluation time t. This module prescribes the ambient field, splits source
acceleration into gravitational and non-gravitational parts, and builds the
frame's origin path over the look-back horizon.

Frames are immutable after construction and queries are pure, so they are
safe to share across threads.
"""

import math

import numpy as np

from .constants import G
from .errors import SingularApproach
from .kinematics import _times, _unwrap, as_vec3

__all__ = [
    "AmbientField",
    "ZeroField",
    "UniformField",
    "PointMassField",
    "FreeFallFrame",
    "ambient_accel",
    "nongrav_accel",
    "build_frame",
    "relative_source_path",
]

# Quintic Hermite basis on u in [0, 1], matching value, first and second
# derivative at both ends. Coefficients in ascending powers u^0 .. u^5.
_H_COEF = np.array([
    [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],   # y0
    [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],     # v0 * h
    [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],     # a0 * h^2
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],    # y1
    [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],     # v1 * h
    [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],      # a1 * h^2
])


def _basis(u, derivative):
    """Evaluate the six Hermite basis polynomials (or a derivative) at u."""
    coef = _H_COEF
    for _ in range(derivative):
        coef = coef[:, 1:] * np.arange(1, coef.shape[1])
    powers = u[None, :] ** np.arange(coef.shape[1])[:, None]
    return coef @ powers  # shape (6, len(u))


class AmbientField:
    """Background gravitational field the frame origin falls through."""

    def accel(self, x):
        """Field acceleration at point(s) x, shape (3,) or (n, 3)."""
        raise NotImplementedError

    def _accel_floats(self, x, y, z):
        """Scalar fast path for the frame integrator; returns a 3-tuple."""
        out = self.accel(np.array([x, y, z]))
        return float(out[0]), float(out[1]), float(out[2])


class ZeroField(AmbientField):
    """No ambient gravity."""

    def accel(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x)

    def _accel_floats(self, x, y, z):
        return 0.0, 0.0, 0.0


class UniformField(AmbientField):
    """Homogeneous field of constant acceleration ``g``."""

    def __init__(self, g):
        self.g = as_vec3(g, "g")

    def accel(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.g.copy()
        return np.broadcast_to(self.g, x.shape).copy()

    def _accel_floats(self, x, y, z):
        return float(self.g[0]), float(self.g[1]), float(self.g[2])


class PointMassField(AmbientField):
    """Inverse-square field of one external point mass.

    ``softening`` is a guard radius, not a smoothing length: any evaluation
    within it raises SingularApproach, because the supported scenarios never
    probe a mass interior and a near-singular query means the setup is broken.
    """

    def __init__(self, position, mass, softening=1e-9):
        self.position = as_vec3(position, "position")
        self.mass = float(mass)
        self.softening = float(softening)
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if self.softening <= 0.0:
            raise ValueError("softening must be positive")

    def accel(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        d = pts - self.position
        r = np.sqrt(np.einsum("ij,ij->i", d, d))
        if np.any(r <= self.softening):
            raise SingularApproach(
                f"field evaluated {r.min():.3e} m from the external mass "
                f"(guard radius {self.softening:.3e} m)",
                distance=float(r.min()),
            )
        out = (-G * self.mass / r**3)[:, None] * d
        return out[0] if single else out

    def _accel_floats(self, x, y, z):
        dx = x - self.position[0]
        dy = y - self.position[1]
        dz = z - self.position[2]
        r2 = dx * dx + dy * dy + dz * dz
        r = math.sqrt(r2)
        if r <= self.softening:
            raise SingularApproach(
                f"field evaluated {r:.3e} m from the external mass "
                f"(guard radius {self.softening:.3e} m)",
                distance=r,
            )
        c = -G * self.mass / (r2 * r)
        return c * dx, c * dy, c * dz


def ambient_accel(field, x, s=0.0):
    """Ambient acceleration at x. All supported fields are static; s is ignored."""
    del s
    return field.accel(x)


def nongrav_accel(traj, field, s):
    """Non-gravitational part of the source's acceleration at time(s) s."""
    return traj.acceleration(s) - field.accel(traj.position(s))


class FreeFallFrame:
    """Origin path y(s) of a non-rotating frame in free fall with a source.

    Covers s in [match_time - horizon, match_time] with y.. = ambient(y) and
    terminal data y(t) = source position, y.(t) = source velocity. Zero and
    uniform fields use the exact parabola; other fields carry an RK4 node
    table with quintic Hermite dense output (position, velocity and field
    acceleration stored per node).
    """

    def __init__(self, match_time, horizon, field, p_t, v_t, *, g=None, table=None):
        self.match_time = float(match_time)
        self.horizon = float(horizon)
        self.field = field
        self._p_t = p_t
        self._v_t = v_t
        self._g = g
        if table is None:
            self._nodes = None
        else:
            self._nodes, self._pos, self._vel, self._acc = table
            self._h = float(self._nodes[1] - self._nodes[0])
        # edge slack for quadrature nodes landing a rounding error outside
        self._slack = 1e-9 * max(1.0, abs(self.match_time), self.horizon)

    def _clamped(self, s):
        s, scalar = _times(s)
        lo = self.match_time - self.horizon
        if np.any(s < lo - self._slack) or np.any(s > self.match_time + self._slack):
            raise ValueError(
                f"frame queried outside [{lo:.6g}, {self.match_time:.6g}]"
            )
        return np.clip(s, lo, self.match_time), scalar

    def _analytic(self, s, derivative):
        dt = s - self.match_time
        if derivative == 0:
            return self._p_t + dt[:, None] * self._v_t + 0.5 * (dt * dt)[:, None] * self._g
        if derivative == 1:
            return self._v_t + dt[:, None] * self._g
        return np.broadcast_to(self._g, (s.size, 3)).copy()

    def _hermite(self, s, derivative):
        idx = np.floor((s - self._nodes[0]) / self._h).astype(int)
        np.clip(idx, 0, self._nodes.size - 2, out=idx)
        u = np.clip((s - self._nodes[idx]) / self._h, 0.0, 1.0)
        b = _basis(u, derivative) / self._h**derivative
        h = self._h
        return (
            b[0, :, None] * self._pos[idx]
            + b[1, :, None] * self._vel[idx] * h
            + b[2, :, None] * self._acc[idx] * h**2
            + b[3, :, None] * self._pos[idx + 1]
            + b[4, :, None] * self._vel[idx + 1] * h
            + b[5, :, None] * self._acc[idx + 1] * h**2
        )

    def _eval(self, s, derivative):
        s, scalar = self._clamped(s)
        if self._nodes is None:
            out = self._analytic(s, derivative)
        else:
            out = self._hermite(s, derivative)
        return _unwrap(out, scalar)

    def origin(self, s):
        """Frame origin y(s), shape (3,) or (n, 3)."""
        return self._eval(s, 0)

    def origin_velocity(self, s):
        return self._eval(s, 1)

    def origin_acceleration(self, s):
        return self._eval(s, 2)


def build_frame(traj, field, t, horizon, *, rk4_step=None):
    """Construct the free-fall frame of ``traj`` in ``field`` matched at time t.

    ``rk4_step`` overrides the integrator step for tabulated (non-analytic)
    fields.  The default horizon/2000 balances integrator truncation against
    roundoff amplified by the interpolant's second derivative: finer steps
    make the tabulated acceleration noisier, not better.
    """
    t = float(t)
    horizon = float(horizon)
    if not horizon > 0.0:
        raise ValueError("horizon must be positive")
    p_t = np.array(traj.position(t), dtype=float)
    v_t = np.array(traj.velocity(t), dtype=float)

    if isinstance(field, ZeroField):
        g = np.zeros(3)
        return FreeFallFrame(t, horizon, field, p_t, v_t, g=g)
    if isinstance(field, UniformField):
        return FreeFallFrame(t, horizon, field, p_t, v_t, g=field.g.copy())

    if rk4_step is None:
        rk4_step = horizon / 2000.0
    if not rk4_step > 0.0:
        raise ValueError("rk4_step must be positive")
    n = max(1, math.ceil(horizon / rk4_step - 1e-12))
    h = -horizon / n  # integrate backward in time
    f = field._accel_floats

    yx, yy, yz = float(p_t[0]), float(p_t[1]), float(p_t[2])
    vx, vy, vz = float(v_t[0]), float(v_t[1]), float(v_t[2])
    pos = np.empty((n + 1, 3))
    vel = np.empty((n + 1, 3))
    acc = np.empty((n + 1, 3))
    s_now = t
    try:
        for k in range(n + 1):
            ax, ay, az = f(yx, yy, yz)
            pos[k] = yx, yy, yz
            vel[k] = vx, vy, vz
            acc[k] = ax, ay, az
            if k == n:
                break
            # classic RK4 on (y, v) with step h < 0
            k2x, k2y, k2z = f(yx + 0.5 * h * vx, yy + 0.5 * h * vy, yz + 0.5 * h * vz)
            v2x, v2y, v2z = vx + 0.5 * h * ax, vy + 0.5 * h * ay, vz + 0.5 * h * az
            k3x, k3y, k3z = f(yx + 0.5 * h * v2x, yy + 0.5 * h * v2y, yz + 0.5 * h * v2z)
            v3x, v3y, v3z = vx + 0.5 * h * k2x, vy + 0.5 * h * k2y, vz + 0.5 * h * k2z
            k4x, k4y, k4z = f(yx + h * v3x, yy + h * v3y, yz + h * v3z)
            v4x, v4y, v4z = vx + h * k3x, vy + h * k3y, vz + h * k3z
            yx += h / 6.0 * (vx + 2.0 * v2x + 2.0 * v3x + v4x)
            yy += h / 6.0 * (vy + 2.0 * v2y + 2.0 * v3y + v4y)
            yz += h / 6.0 * (vz + 2.0 * v2z + 2.0 * v3z + v4z)
            vx += h / 6.0 * (ax + 2.0 * k2x + 2.0 * k3x + k4x)
            vy += h / 6.0 * (ay + 2.0 * k2y + 2.0 * k3y + k4y)
            vz += h / 6.0 * (az + 2.0 * k2z + 2.0 * k3z + k4z)
            s_now = t + (k + 1) * h
    except SingularApproach as exc:
        raise SingularApproach(
            f"free-fall path came within {exc.distance:.3e} m of the external "
            f"mass near s = {s_now:.6g} s",
            distance=exc.distance,
            when=s_now,
        ) from None

    # stored backward from t; flip to ascending time for interpolation
    nodes = t + h * np.arange(n, -1, -1.0)
    table = (nodes, pos[::-1].copy(), vel[::-1].copy(), acc[::-1].copy())
    return FreeFallFrame(t, horizon, field, p_t, v_t, table=table)


def relative_source_path(frame, traj, s):
    """Source position relative to the frame origin: position(s) - y(s)."""
    return traj.position(s) - frame.origin(s)
