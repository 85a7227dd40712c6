"""Inverted pendulum dynamics, action parameterizations and objectives.

The angle ``alpha`` measures deviation from upright, so the zero state is the
unstable equilibrium. Every simulation path in this module (single rollouts,
batched objective evaluation, policy episodes) runs through
:func:`_simulate`, which keeps the paths bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidArgument
from .objectives import ObjectiveHandle

ACTION_KINDS = ("torque", "target_angle", "spline_target_angle")
OBJECTIVE_KINDS = ("cost", "reward")
TERMINATION_MODES = ("none", "plain", "alive_bonus", "penalty")

DEFAULT_INITIAL_ANGLES = tuple(np.linspace(-1.0, 1.0, 10).tolist())


@dataclass(frozen=True)
class PendulumParams:
    delta: float = 0.1
    l: float = 0.2
    g: float = 0.981

    def __post_init__(self):
        if not (self.delta > 0 and self.l > 0 and self.g > 0):
            raise InvalidArgument("pendulum parameters must be strictly positive")

    @property
    def gravity_gain(self) -> float:
        return 0.5 * self.l * self.g


@dataclass(frozen=True)
class PendulumState:
    alpha: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.omega)):
            raise InvalidArgument("pendulum state must be finite")


@dataclass(frozen=True)
class ActionSpace:
    """How an action value becomes a torque.

    ``torque`` applies the action directly; the target-angle kinds feed the
    action through a PD controller ``kp * (target - alpha) + kd * omega``.
    """

    kind: str = "torque"
    kp: float = 1.0
    kd: float = -1.0
    spline_spacing: int = 10

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise InvalidArgument(f"unknown action space {self.kind!r}")
        if self.kind == "spline_target_angle" and self.spline_spacing < 2:
            raise InvalidArgument("spline_spacing must be at least 2")

    def action_dimension(self, T: int) -> int:
        if self.kind == "spline_target_angle":
            return spline_control_count(T, self.spline_spacing)
        return T


@dataclass(frozen=True)
class TerminationConfig:
    """Early termination when ``|alpha| > threshold``.

    ``alive_bonus`` is credited for every non-terminal step (added to rewards,
    subtracted from costs); ``penalty_per_step`` is charged once per step lost
    to termination.
    """

    mode: str = "none"
    threshold: float = 2.0
    alive_bonus: float = 1.0
    penalty_per_step: float = 4.0

    def __post_init__(self):
        if self.mode not in TERMINATION_MODES:
            raise InvalidArgument(f"unknown termination mode {self.mode!r}")
        if not self.threshold > 0:
            raise InvalidArgument("termination threshold must be positive")
        if self.alive_bonus < 0 or self.penalty_per_step < 0:
            raise InvalidArgument("alive bonus and penalty must be nonnegative")

    @property
    def enabled(self) -> bool:
        return self.mode != "none"


@dataclass(frozen=True)
class PendulumTask:
    T: int = 100
    w: float = 1.0
    action_space: ActionSpace = field(default_factory=ActionSpace)
    objective_kind: str = "cost"
    termination: TerminationConfig = field(default_factory=TerminationConfig)
    initial_state: PendulumState = field(default_factory=PendulumState)
    params: PendulumParams = field(default_factory=PendulumParams)

    def __post_init__(self):
        if self.T < 1:
            raise InvalidArgument("horizon T must be at least 1")
        if not self.w >= 0:
            raise InvalidArgument("action weight w must be nonnegative")
        if self.objective_kind not in OBJECTIVE_KINDS:
            raise InvalidArgument(f"unknown objective kind {self.objective_kind!r}")

    @property
    def action_dimension(self) -> int:
        return self.action_space.action_dimension(self.T)


@dataclass
class Trajectory:
    """Record of one rollout.

    ``terminated_at`` is the zero-based index of the step whose resulting
    state crossed the threshold; that step contributes nothing, so
    ``per_step_values`` has exactly ``terminated_at`` entries. ``states`` always
    has one more entry than ``torques``.
    """

    states: list[PendulumState]
    torques: np.ndarray
    per_step_values: np.ndarray
    terminated_at: Optional[int]
    total: float


def step(state: PendulumState, torque: float, params: PendulumParams = PendulumParams()) -> PendulumState:
    """Semi-implicit Euler: velocity first, then angle from the new velocity."""
    omega = state.omega + params.delta * (torque + params.gravity_gain * math.sin(state.alpha))
    alpha = state.alpha + params.delta * omega
    return PendulumState(alpha, omega)


def pd_torque(target: float, state: PendulumState, space: ActionSpace) -> float:
    if space.kind == "torque":
        raise InvalidArgument("pd_torque requires a target-angle action space")
    return space.kp * (target - state.alpha) + space.kd * state.omega


def p_policy_action(theta: float, state: PendulumState) -> float:
    return theta * state.alpha


def spline_control_count(T: int, spacing: int) -> int:
    return -(-T // spacing) + 1


def catmull_rom_matrix(T: int, spacing: int) -> np.ndarray:
    """``(T, n)`` matrix mapping control points to per-timestep values.

    Knot ``k`` sits at timestep ``k * spacing``. Segments touching the ends
    reuse the boundary control point as the missing neighbour.
    """
    if spacing < 2:
        raise InvalidArgument("spacing must be at least 2")
    n = spline_control_count(T, spacing)
    basis = np.zeros((T, n))
    for t in range(T):
        seg, rem = divmod(t, spacing)
        u = rem / spacing
        weights = (
            0.5 * (-u + 2 * u * u - u ** 3),
            0.5 * (2 - 5 * u * u + 3 * u ** 3),
            0.5 * (u + 4 * u * u - 3 * u ** 3),
            0.5 * (-u * u + u ** 3),
        )
        for offset, wgt in zip((-1, 0, 1, 2), weights):
            idx = min(max(seg + offset, 0), n - 1)
            basis[t, idx] += wgt
    return basis


def spline_expand(control_points: Sequence[float], T: int, spacing: int) -> np.ndarray:
    cp = np.asarray(control_points, dtype=float)
    expected = spline_control_count(T, spacing)
    if cp.ndim != 1 or cp.shape[0] != expected:
        raise InvalidArgument(
            f"expected {expected} control points for T={T}, spacing={spacing}; got {cp.shape}")
    return catmull_rom_matrix(T, spacing) @ cp


TorqueFn = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


def _simulate(task: PendulumTask, torque_fn: TorqueFn, alpha0: np.ndarray, omega0: np.ndarray,
              record: bool = False):
    """Run ``len(alpha0)`` pendulums in lockstep and accumulate the task objective.

    Returns totals in the task's own sense (cost or reward, not negated) and,
    with ``record``, full per-step arrays.
    """
    p = task.params
    term = task.termination
    reward = task.objective_kind == "reward"
    alpha = np.array(alpha0, dtype=float)
    omega = np.array(omega0, dtype=float)
    n = alpha.shape[0]
    total = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    terminated_at = np.full(n, -1, dtype=int)
    bonus = 0.0
    if term.mode == "alive_bonus":
        bonus = term.alive_bonus if reward else -term.alive_bonus
    if record:
        alphas, omegas, taus, values = [alpha.copy()], [omega.copy()], [], []

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(task.T):
            tau = torque_fn(t, alpha, omega)
            omega = omega + p.delta * (tau + p.gravity_gain * np.sin(alpha))
            alpha = alpha + p.delta * omega
            if term.enabled:
                crossed = alive & (np.abs(alpha) > term.threshold)
                terminated_at[crossed] = t
                alive &= ~crossed
            if reward:
                value = np.exp(-alpha * alpha) + task.w * np.exp(-tau * tau)
            else:
                value = alpha * alpha + task.w * tau * tau
            if bonus:
                value = value + bonus
            total = total + np.where(alive, value, 0.0)
            if record:
                alphas.append(alpha.copy())
                omegas.append(omega.copy())
                taus.append(np.broadcast_to(tau, (n,)).copy())
                values.append(value)
            if term.enabled and not alive.any():
                break

    if term.mode == "penalty":
        lost = np.where(terminated_at >= 0, task.T - terminated_at, 0)
        penalty = term.penalty_per_step * lost
        total = total - penalty if reward else total + penalty
    if not record:
        return total, terminated_at
    return total, terminated_at, (np.array(alphas), np.array(omegas), np.array(taus), np.array(values))


def _action_torque_fn(task: PendulumTask, actions: np.ndarray) -> TorqueFn:
    """Torque callback for an ``(n, action_dim)`` batch of action vectors."""
    space = task.action_space
    if space.kind == "spline_target_angle":
        actions = actions @ catmull_rom_matrix(task.T, space.spline_spacing).T
    if space.kind == "torque":
        return lambda t, alpha, omega: actions[:, t]
    kp, kd = space.kp, space.kd
    return lambda t, alpha, omega: kp * (actions[:, t] - alpha) + kd * omega


def _check_actions(task: PendulumTask, actions) -> np.ndarray:
    actions = np.asarray(actions, dtype=float)
    squeeze = actions.ndim == 1
    if squeeze:
        actions = actions[None, :]
    if actions.ndim != 2 or actions.shape[1] != task.action_dimension:
        raise InvalidArgument(
            f"expected {task.action_dimension} actions per rollout, got shape {actions.shape}")
    return actions


def rollout_totals(task: PendulumTask, actions) -> np.ndarray:
    """Objective totals for each row of an ``(n, action_dim)`` action array."""
    actions = _check_actions(task, actions)
    n = actions.shape[0]
    s0 = task.initial_state
    total, _ = _simulate(task, _action_torque_fn(task, actions),
                         np.full(n, s0.alpha), np.full(n, s0.omega))
    return total


def rollout(task: PendulumTask, actions) -> Trajectory:
    actions = _check_actions(task, actions)
    if actions.shape[0] != 1:
        raise InvalidArgument("rollout takes a single action sequence")
    s0 = task.initial_state
    total, term_at, (alphas, omegas, taus, values) = _simulate(
        task, _action_torque_fn(task, actions),
        np.array([s0.alpha]), np.array([s0.omega]), record=True)
    stop = int(term_at[0])
    n_steps = task.T if stop < 0 else stop + 1
    n_values = task.T if stop < 0 else stop
    states = [PendulumState(float(a), float(o))
              for a, o in zip(alphas[: n_steps + 1, 0], omegas[: n_steps + 1, 0])]
    return Trajectory(
        states=states,
        torques=taus[:n_steps, 0].copy(),
        per_step_values=values[:n_values, 0].copy(),
        terminated_at=None if stop < 0 else stop,
        total=float(total[0]),
    )


def closed_form_target_angle_states(task: PendulumTask, targets) -> np.ndarray:
    """Angles from the reduced recursion that eliminates the PD torque.

    Only valid for ``kp = 1``, ``kd = -1``; used as an independent check of the
    PD rollout.
    """
    p = task.params
    d = p.delta
    targets = np.asarray(targets, dtype=float)
    alpha, omega = task.initial_state.alpha, task.initial_state.omega
    out = [alpha]
    for target in targets:
        new_alpha = ((1 - d * d) * alpha + (d - d * d) * omega
                     + d * d * (target + p.gravity_gain * math.sin(alpha)))
        omega = (new_alpha - alpha) / d
        alpha = new_alpha
        out.append(alpha)
    return np.array(out)


def policy_objective_many(thetas, task: PendulumTask,
                          initial_angles: Sequence[float] = DEFAULT_INITIAL_ANGLES) -> np.ndarray:
    """Mean episode total of the P-controller ``tau = theta * alpha`` for each theta.

    Values are in the task's own sense (costs or rewards, not negated).
    """
    if task.action_space.kind != "torque":
        raise InvalidArgument("policy evaluation requires the torque action space")
    angles = np.asarray(initial_angles, dtype=float)
    if angles.ndim != 1 or angles.size == 0:
        raise InvalidArgument("initial_angles must be a nonempty sequence")
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    gains = np.repeat(thetas, angles.size)
    alpha0 = np.tile(angles, thetas.size)
    totals, _ = _simulate(task, lambda t, alpha, omega: gains * alpha,
                          alpha0, np.zeros_like(alpha0))
    totals = totals.reshape(thetas.size, angles.size)
    out = np.zeros(thetas.size)
    for e in range(angles.size):
        out = out + totals[:, e]
    return out / angles.size


def policy_objective(theta: float, task: PendulumTask,
                     initial_angles: Sequence[float] = DEFAULT_INITIAL_ANGLES) -> float:
    return float(policy_objective_many([theta], task, initial_angles)[0])


def trajectory_objective(task: PendulumTask) -> ObjectiveHandle:
    """Wrap rollouts as a minimization handle over the action vector.

    Reward tasks are negated. The known optimum is the zero vector whenever
    the pendulum starts at rest in the upright position.
    """
    sign = -1.0 if task.objective_kind == "reward" else 1.0
    dim = task.action_dimension

    def batch(xs):
        return sign * rollout_totals(task, xs)

    s0 = task.initial_state
    upright = s0.alpha == 0.0 and s0.omega == 0.0
    return ObjectiveHandle(
        dimension=dim,
        fn=lambda x, seed=0: float(batch(np.asarray(x, dtype=float)[None, :])[0]),
        known_optimum=np.zeros(dim) if upright else None,
        batch_fn=batch,
        name=f"pendulum-{task.action_space.kind}-{task.objective_kind}",
        params={"T": task.T, "w": task.w},
    )
