"""Orientation estimation and kinematic signal derivation.

The filter fuses gyroscope integration with a normalized gradient-descent
correction toward the orientation implied by measured gravity (and, when
available, the magnetic field). Quaternions are stored (w, x, y, z) and map
device-frame vectors into the world frame: v_world = q * v_device * q^-1,
with the world z axis pointing up.

Also home to two generic alignment utilities: a best-fit rotation between
point sets (orthogonal Procrustes with det +1) and correlation-based time
shift estimation between equally sampled scalar streams.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import TrialRecording
from .errors import ValidationError

log = logging.getLogger(__name__)

DEFAULT_BETA = 0.1
_GRADIENT_EPS = 1e-12


@dataclass(frozen=True)
class MountingConfig:
    """How the device sits on the thigh.

    femur_axis: device-frame unit vector along the femur.
    frontal_normal_axis: device-frame unit vector perpendicular to the femur
        in the frontal plane; the signed gyro projection on it is omega.
    beta: gradient-descent filter gain in (0, 1].
    """

    femur_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    frontal_normal_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0, 0.0]))
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        fa = np.asarray(self.femur_axis, dtype=float)
        na = np.asarray(self.frontal_normal_axis, dtype=float)
        object.__setattr__(self, "femur_axis", fa)
        object.__setattr__(self, "frontal_normal_axis", na)
        for name, v in (("femur_axis", fa), ("frontal_normal_axis", na)):
            if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-6:
                raise ValidationError(f"{name} must be a unit 3-vector")
        if abs(float(fa @ na)) > 1e-6:
            raise ValidationError("mounting axes must be orthogonal")
        if not (0.0 < self.beta <= 1.0):
            raise ValidationError(f"filter gain beta must be in (0, 1], got {self.beta}")


# -- quaternion helpers ------------------------------------------------------

def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValidationError("zero-norm quaternion")
    return q / n


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q):
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_rotate(q, v):
    """Rotate one 3-vector by one quaternion (device -> world)."""
    w = q[0]
    u = np.asarray(q[1:4], dtype=float)
    t = 2.0 * np.cross(u, v)
    return np.asarray(v, dtype=float) + w * t + np.cross(u, t)


def rotate_vectors(quats: np.ndarray, v) -> np.ndarray:
    """Rotate a fixed 3-vector by each quaternion in an (n, 4) array."""
    quats = np.asarray(quats, dtype=float)
    v = np.asarray(v, dtype=float)
    w = quats[:, 0:1]
    u = quats[:, 1:4]
    t = 2.0 * np.cross(u, np.broadcast_to(v, u.shape))
    return v + w * t + np.cross(u, t)


def quat_angle_between(a, b) -> float:
    """Rotation angle in degrees taking orientation a to orientation b."""
    d = quat_multiply(quat_conjugate(a), b)
    w = min(1.0, abs(float(d[0])))
    return math.degrees(2.0 * math.acos(w))


def quat_from_gravity(acc) -> np.ndarray:
    """Initial orientation from one accelerometer sample (heading arbitrary).

    Picks the quaternion rotating the measured up-direction (the at-rest
    accelerometer reading) onto the world z axis.
    """
    a = np.asarray(acc, dtype=float)
    n = np.linalg.norm(a)
    if n == 0.0:
        raise ValidationError("zero-norm accelerometer sample cannot set attitude")
    u = a / n
    d = u[2]  # dot(u, z)
    if d < -1.0 + 1e-12:
        return np.array([0.0, 1.0, 0.0, 0.0])  # upside down: 180 deg about x
    axis = np.array([u[1], -u[0], 0.0])  # cross(u, z)
    q = np.array([1.0 + d, axis[0], axis[1], axis[2]])
    return quat_normalize(q)


def quat_from_gravity_mag(acc, mag) -> np.ndarray:
    """Initial orientation from one accelerometer + magnetometer sample.

    Gravity fixes the attitude, the horizontal field component the heading
    (world x points toward magnetic north). Falls back to gravity-only when
    the field is degenerate or parallel to gravity.
    """
    a = np.asarray(acc, dtype=float)
    an = np.linalg.norm(a)
    if an == 0.0:
        raise ValidationError("zero-norm accelerometer sample cannot set attitude")
    up = a / an
    m = np.asarray(mag, dtype=float)
    horiz = m - (m @ up) * up
    hn = np.linalg.norm(horiz)
    if hn < 1e-9 * max(1.0, np.linalg.norm(m)):
        return quat_from_gravity(acc)
    north = horiz / hn
    east = np.cross(up, north)
    # Rows of the device->world rotation are the world axes in device frame.
    r = np.vstack([north, east, up])
    return _quat_from_matrix(r)


def _quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Shepperd's method; r maps device-frame vectors to world frame."""
    w2 = 0.25 * (1.0 + r[0, 0] + r[1, 1] + r[2, 2])
    x2 = 0.25 * (1.0 + r[0, 0] - r[1, 1] - r[2, 2])
    y2 = 0.25 * (1.0 - r[0, 0] + r[1, 1] - r[2, 2])
    z2 = 0.25 * (1.0 - r[0, 0] - r[1, 1] + r[2, 2])
    i = int(np.argmax([w2, x2, y2, z2]))
    if i == 0:
        w = math.sqrt(w2)
        q = [w, (r[2, 1] - r[1, 2]) / (4 * w), (r[0, 2] - r[2, 0]) / (4 * w),
             (r[1, 0] - r[0, 1]) / (4 * w)]
    elif i == 1:
        x = math.sqrt(x2)
        q = [(r[2, 1] - r[1, 2]) / (4 * x), x, (r[0, 1] + r[1, 0]) / (4 * x),
             (r[0, 2] + r[2, 0]) / (4 * x)]
    elif i == 2:
        y = math.sqrt(y2)
        q = [(r[0, 2] - r[2, 0]) / (4 * y), (r[0, 1] + r[1, 0]) / (4 * y), y,
             (r[1, 2] + r[2, 1]) / (4 * y)]
    else:
        z = math.sqrt(z2)
        q = [(r[1, 0] - r[0, 1]) / (4 * z), (r[0, 2] + r[2, 0]) / (4 * z),
             (r[1, 2] + r[2, 1]) / (4 * z), z]
    return quat_normalize(np.array(q))


# -- gradient-descent MARG fusion --------------------------------------------

def _fusion_step(q, gx, gy, gz, acc, mag, dt, beta):
    """One filter update; gyro rates in rad/s. Returns the new unit quaternion.

    Predict with the gyro over dt, then apply the gradient correction at the
    predicted state so that measurement-consistent tracking is a fixed point.
    """
    qw, qx, qy, qz = q

    qdw = 0.5 * (-qx * gx - qy * gy - qz * gz)
    qdx = 0.5 * (qw * gx + qy * gz - qz * gy)
    qdy = 0.5 * (qw * gy - qx * gz + qz * gx)
    qdz = 0.5 * (qw * gz + qx * gy - qy * gx)
    qw += qdw * dt
    qx += qdx * dt
    qy += qdy * dt
    qz += qdz * dt
    n = math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
    qw, qx, qy, qz = qw / n, qx / n, qy / n, qz / n

    anorm = math.sqrt(acc[0] ** 2 + acc[1] ** 2 + acc[2] ** 2)
    if anorm > 0.0:
        f_sq = 0.0
        ax, ay, az = acc[0] / anorm, acc[1] / anorm, acc[2] / anorm

        # Gravity objective: predicted device-frame up minus measured.
        f1 = 2.0 * (qx * qz - qw * qy) - ax
        f2 = 2.0 * (qw * qx + qy * qz) - ay
        f3 = 2.0 * (0.5 - qx * qx - qy * qy) - az
        f_sq += f1 * f1 + f2 * f2 + f3 * f3

        sw = -2.0 * qy * f1 + 2.0 * qx * f2
        sx = 2.0 * qz * f1 + 2.0 * qw * f2 - 4.0 * qx * f3
        sy = -2.0 * qw * f1 + 2.0 * qz * f2 - 4.0 * qy * f3
        sz = 2.0 * qx * f1 + 2.0 * qy * f2

        mnorm = 0.0
        if mag is not None:
            mnorm = math.sqrt(mag[0] ** 2 + mag[1] ** 2 + mag[2] ** 2)
        if mnorm > 0.0:
            mx, my, mz = mag[0] / mnorm, mag[1] / mnorm, mag[2] / mnorm

            # Reference field from the current estimate: horizontal + vertical
            # components of the measured field rotated into the world frame.
            ww, xx, yy, zz = qw * qw, qx * qx, qy * qy, qz * qz
            hx = (mx * (1.0 - 2.0 * (yy + zz)) + my * 2.0 * (qx * qy - qw * qz)
                  + mz * 2.0 * (qx * qz + qw * qy))
            hy = (mx * 2.0 * (qx * qy + qw * qz) + my * (1.0 - 2.0 * (xx + zz))
                  + mz * 2.0 * (qy * qz - qw * qx))
            hz = (mx * 2.0 * (qx * qz - qw * qy) + my * 2.0 * (qy * qz + qw * qx)
                  + mz * (1.0 - 2.0 * (xx + yy)))
            bx = math.hypot(hx, hy)
            bz = hz

            f4 = 2.0 * bx * (0.5 - qy * qy - qz * qz) + 2.0 * bz * (qx * qz - qw * qy) - mx
            f5 = 2.0 * bx * (qx * qy - qw * qz) + 2.0 * bz * (qw * qx + qy * qz) - my
            f6 = 2.0 * bx * (qw * qy + qx * qz) + 2.0 * bz * (0.5 - qx * qx - qy * qy) - mz
            f_sq += f4 * f4 + f5 * f5 + f6 * f6

            sw += (-2.0 * bz * qy) * f4 + (-2.0 * bx * qz + 2.0 * bz * qx) * f5 \
                + (2.0 * bx * qy) * f6
            sx += (2.0 * bz * qz) * f4 + (2.0 * bx * qy + 2.0 * bz * qw) * f5 \
                + (2.0 * bx * qz - 4.0 * bz * qx) * f6
            sy += (-4.0 * bx * qy - 2.0 * bz * qw) * f4 \
                + (2.0 * bx * qx + 2.0 * bz * qz) * f5 \
                + (2.0 * bx * qw - 4.0 * bz * qy) * f6
            sz += (-4.0 * bx * qz + 2.0 * bz * qx) * f4 \
                + (-2.0 * bx * qw + 2.0 * bz * qy) * f5 + (2.0 * bx * qx) * f6

        snorm = math.sqrt(sw * sw + sx * sx + sy * sy + sz * sz)
        if snorm > _GRADIENT_EPS:
            # Step size beta*dt along the unit gradient, but never past the
            # scale of the residual itself: without the cap the fixed-size
            # step orbits the minimum instead of settling onto it.
            step = min(beta * dt, 0.25 * math.sqrt(f_sq)) / snorm
            qw -= step * sw
            qx -= step * sx
            qy -= step * sy
            qz -= step * sz
            n = math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
            qw, qx, qy, qz = qw / n, qx / n, qy / n, qz / n

    return qw, qx, qy, qz


def fuse_orientation(recording: TrialRecording, cfg: MountingConfig,
                     q0=None, use_mag: bool = True) -> np.ndarray:
    """Estimate one unit quaternion per sample.

    Gyro integration with per-step dt from the timestamps, corrected each
    step by a gradient-descent pull (gain ``cfg.beta``) toward the
    orientation consistent with measured gravity and, when present,
    magnetic field. A zero-norm accelerometer sample skips the corrective
    term for that step (gyro-only propagation).
    """
    t = recording.t
    acc = recording.acc
    gyr = np.deg2rad(recording.gyr)
    mag = recording.mag if (use_mag and recording.mag is not None) else None

    if q0 is None:
        try:
            if mag is not None:
                q = quat_from_gravity_mag(acc[0], mag[0])
            else:
                q = quat_from_gravity(acc[0])
        except ValidationError:
            log.warning("first accelerometer sample is zero; starting from identity")
            q = np.array([1.0, 0.0, 0.0, 0.0])
    else:
        q = quat_normalize(q0)

    beta = cfg.beta
    out = np.empty((len(t), 4))
    out[0] = q
    qc = (float(q[0]), float(q[1]), float(q[2]), float(q[3]))
    n_skipped = 0
    for i in range(1, len(t)):
        dt = float(t[i] - t[i - 1])
        a = acc[i]
        if a[0] == 0.0 and a[1] == 0.0 and a[2] == 0.0:
            n_skipped += 1
        m = mag[i] if mag is not None else None
        qc = _fusion_step(qc, float(gyr[i, 0]), float(gyr[i, 1]), float(gyr[i, 2]),
                          a, m, dt, beta)
        out[i] = qc
    if n_skipped:
        log.warning("%s: %d zero-norm accelerometer samples; used gyro-only steps",
                    recording.meta.trial_id, n_skipped)
    return out


def inclination_series(quats: np.ndarray, cfg: MountingConfig) -> np.ndarray:
    """Thigh inclination in degrees: elevation of the femur axis above horizontal.

    Zero when the femur is horizontal (sitting); positive when the device
    axis tips up. Equals the angle from the world vertical reduced by 90
    degrees, up to the mounting sign convention.
    """
    world_femur = rotate_vectors(quats, cfg.femur_axis)
    vz = np.clip(world_femur[:, 2], -1.0, 1.0)
    return np.degrees(np.arcsin(vz))


def angular_velocity_series(recording: TrialRecording, cfg: MountingConfig) -> np.ndarray:
    """Signed gyro projection (deg/s) on the frontal-plane normal axis."""
    return recording.gyr @ cfg.frontal_normal_axis


def resolve_sign(theta: np.ndarray, omega: np.ndarray, t: np.ndarray | None = None,
                 peak_times=None) -> tuple[np.ndarray, np.ndarray, bool]:
    """Fix the raising-positive sign convention for theta and omega.

    With labeled peaks: flip both when the mean inclination at the peaks is
    negative. Without labels: flip when the downward excursion dominates
    (5th/95th percentile heuristic).
    """
    if peak_times is not None and t is not None and len(peak_times):
        ref = float(np.mean(np.interp(peak_times, t, theta)))
    else:
        lo, hi = np.percentile(theta, [5.0, 95.0])
        ref = hi + lo
    if ref < 0.0:
        return -theta, -omega, True
    return theta, omega, False


# -- rigid alignment and synchronization utilities ---------------------------

def best_fit_rotation(reference: np.ndarray, measured: np.ndarray) -> np.ndarray:
    """Rotation R minimizing ||R @ reference_i - measured_i||^2 after
    centroid removal, with det(R) = +1 enforced.
    """
    ref = np.asarray(reference, dtype=float)
    mea = np.asarray(measured, dtype=float)
    if ref.shape != mea.shape or ref.ndim != 2 or ref.shape[1] != 3 or ref.shape[0] < 3:
        raise ValidationError("point sets must both be (n >= 3, 3)")
    p = ref - ref.mean(axis=0)
    q = mea - mea.mean(axis=0)
    h = q.T @ p  # maps reference coordinates onto measured ones
    u, s, vt = np.linalg.svd(h)
    if s[0] <= 0.0 or s[1] <= 1e-9 * s[0]:
        raise ValidationError("degenerate (collinear) point set: rotation not unique")
    d = np.sign(np.linalg.det(u @ vt))
    r = u @ np.diag([1.0, 1.0, d]) @ vt
    return r


def estimate_time_shift(a, b, sample_rate: float = 1.0) -> float:
    """Lag (seconds) maximizing the normalized cross-correlation of a and b.

    Positive lag means b is a delayed copy of a: b[n] ~ a[n - lag*rate].
    Integer-sample shifts only; shifts are limited to half the shorter
    series so the overlap stays >= 50%. Ties break toward the smallest
    absolute lag.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or b.ndim != 1 or len(a) < 2 or len(b) < 2:
        raise ValidationError("need two 1-D series of length >= 2")
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise ValidationError("constant series: correlation undefined")
    if not sample_rate > 0:
        raise ValidationError("sample_rate must be > 0")

    kmax = min(len(a), len(b)) // 2
    candidates = sorted(range(-kmax, kmax + 1), key=lambda k: (abs(k), k))
    best_k = None
    best_r = -np.inf
    for k in candidates:
        # align a[i] with b[i + k]
        lo = max(0, -k)
        hi = min(len(a), len(b) - k)
        if hi - lo < 2:
            continue
        sa = a[lo:hi]
        sb = b[lo + k:hi + k]
        da = sa - sa.mean()
        db = sb - sb.mean()
        denom = math.sqrt(float(da @ da) * float(db @ db))
        if denom == 0.0:
            continue
        r = float(da @ db) / denom
        if r > best_r:
            best_r = r
            best_k = k
    if best_k is None:
        raise ValidationError("correlation undefined for every candidate shift")
    return best_k / sample_rate
