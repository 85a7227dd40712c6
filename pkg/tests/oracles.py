"""Reference implementations written independently of the package."""
import math

import numpy as np

DELTA, LENGTH, GRAVITY = 0.1, 0.2, 0.981


def step_scalar(alpha, omega, tau):
    omega = omega + DELTA * (tau + 0.5 * LENGTH * GRAVITY * math.sin(alpha))
    return alpha + DELTA * omega, omega


def scalar_rollout(torques, alpha=0.0, omega=0.0, w=1.0, reward=False):
    total = 0.0
    for tau in torques:
        alpha, omega = step_scalar(alpha, omega, tau)
        if reward:
            total += math.exp(-alpha * alpha) + w * math.exp(-tau * tau)
        else:
            total += alpha * alpha + w * tau * tau
    return total


def linearized_hessian(T, kind="torque", w=1.0, kp=1.0, kd=-1.0):
    """Exact Hessian at the upright optimum from the linearized dynamics.

    With sin(a) ~ a the angles and torques are linear in the actions,
    ``alpha = Ja x`` and ``tau = Jt x``, and both the cost and the negated
    reward have second-order term ``|Ja x|^2 + w |Jt x|^2``.
    """
    gain = 0.5 * LENGTH * GRAVITY
    ja = np.zeros((T, T))
    jt = np.zeros((T, T))
    for s in range(T):
        alpha = omega = 0.0
        for t in range(T):
            action = 1.0 if t == s else 0.0
            tau = action if kind == "torque" else kp * (action - alpha) + kd * omega
            omega = omega + DELTA * (tau + gain * alpha)
            alpha = alpha + DELTA * omega
            ja[t, s] = alpha
            jt[t, s] = tau
    return 2.0 * (ja.T @ ja + w * jt.T @ jt)


def catmull_rom_value(points, t, spacing):
    """Evaluate the clamped uniform Catmull-Rom curve at integer timestep ``t``."""
    n = len(points)
    seg = t // spacing
    u = (t - seg * spacing) / spacing

    def p(i):
        return points[min(max(i, 0), n - 1)]

    p0, p1, p2, p3 = p(seg - 1), p(seg), p(seg + 1), p(seg + 2)
    return 0.5 * (2 * p1 + (-p0 + p2) * u + (2 * p0 - 5 * p1 + 4 * p2 - p3) * u ** 2
                  + (-p0 + 3 * p1 - 3 * p2 + p3) * u ** 3)


def gaussian_weights(sigma):
    radius = math.ceil(3 * sigma)
    raw = [math.exp(-0.5 * (k / sigma) ** 2) for k in range(-radius, radius + 1)]
    total = sum(raw)
    return [r / total for r in raw]
