"""Five-stage, fourth-order low-storage Runge-Kutta time marching.

The scheme advances u' = rhs(t, u) with five stages that touch only two
state-sized buffers; the stage coefficients are the classical rational
constants of the five-stage low-storage family.  The time step for the
Maxwell operator comes from a CFL rule built on the per-element volume to
surface ratio and wave speed.
"""

from __future__ import annotations

import math

import numpy as np

# stage coefficients as exact integer fractions
_A_FRACTIONS = (
    (0, 1),
    (-567301805773, 1357537059087),
    (-2404267990393, 2016746695238),
    (-3550918686646, 2091501179385),
    (-1275806237668, 842570457699),
)
_B_FRACTIONS = (
    (1432997174477, 9575080441755),
    (5161836677717, 13612068292357),
    (1720146321549, 2090206949498),
    (3134564353537, 4481467310338),
    (2277821191437, 14882151754819),
)
_C_FRACTIONS = (
    (0, 1),
    (1432997174477, 9575080441755),
    (2526269341429, 6820363962896),
    (2006345519317, 3224310063776),
    (2802321613138, 2924317926251),
)

LSRK_A = tuple(n / d for n, d in _A_FRACTIONS)
LSRK_B = tuple(n / d for n, d in _B_FRACTIONS)
LSRK_C = tuple(n / d for n, d in _C_FRACTIONS)

#: CFL constants per polynomial degree.
CFL_ALPHA = {1: 0.70, 2: 0.46, 3: 0.30, 4: 0.21}


class SimulationDiverged(RuntimeError):
    """Raised when the state stops being finite (e.g. CFL violation)."""

    def __init__(self, step: int, t: float):
        super().__init__(f"non-finite state detected after step {step} (t = {t:.6e} s)")
        self.step = step
        self.t = t


def cfl_time_step(mesh, degree: int) -> float:
    """Largest stable time step: alpha_k * min over elements of (V/A)/c."""
    if degree not in CFL_ALPHA:
        raise ValueError(f"no CFL constant for degree {degree}")
    slowness = np.sqrt(mesh.eps * mesh.mu)  # 1/c per element
    return CFL_ALPHA[degree] * float(np.min(slowness * mesh.volumes / mesh.areas))


def _as_flat(state):
    """Return (flat_view, field_state_or_None, t0) for ndarray or FieldState."""
    if isinstance(state, np.ndarray):
        return state.reshape(-1), None, 0.0
    return state.data.reshape(-1), state, float(state.t)


def _stage_loop(y: np.ndarray, res: np.ndarray, t: float, dt: float, rhs_flat):
    for a, b, c in zip(LSRK_A, LSRK_B, LSRK_C):
        k = rhs_flat(t + c * dt, y)
        k *= dt
        res *= a
        res += k
        np.multiply(res, b, out=k)
        y += k


def _wrap_rhs(rhs, template):
    """Adapt a FieldState rhs to a flat-array rhs without copying state data."""
    if template is None:
        return lambda t, y: np.asarray(rhs(t, y), dtype=float).reshape(-1)
    view = template.like(template.data)

    def rhs_flat(t, y):
        view.data = y.reshape(template.data.shape)
        view.t = t
        return rhs(t, view).data.reshape(-1)

    return rhs_flat


def lsrk_step(state, dt: float, rhs, t: float | None = None):
    """Advance one step of size dt; returns a new state of the input's kind.

    `state` is an ndarray (with start time `t`, default 0) or a FieldState
    (which carries its own time).  `rhs(t, state)` must return an object of
    the same kind; returned derivative arrays are consumed as scratch space.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    flat, template, t0 = _as_flat(state)
    if t is not None:
        t0 = t
    y = np.array(flat, dtype=float)
    res = np.zeros_like(y)
    _stage_loop(y, res, t0, dt, _wrap_rhs(rhs, template))
    if not math.isfinite(float(np.sum(y))):
        raise SimulationDiverged(1, t0 + dt)
    if template is None:
        return y.reshape(np.shape(state))
    return template.like(y.reshape(template.data.shape), t=t0 + dt)


def run_simulation(initial, T: float, dt: float, rhs, observers=()):
    """March from the initial state to time T and return the final state.

    Performs N = ceil(T/dt) steps, shortening the last step so the final time
    lands exactly on T.  Each observer is called as observer(n, t_n, state)
    after step n = 1..N; the passed state aliases the integrator buffer, so
    observers must copy whatever they retain.  Raises SimulationDiverged as
    soon as the state stops being finite.
    """
    if T <= 0 or dt <= 0:
        raise ValueError("T and dt must be positive")
    n_steps = max(1, math.ceil(T / dt - 1e-12))

    flat, template, t0 = _as_flat(initial)
    y = np.array(flat, dtype=float)
    res = np.zeros_like(y)
    rhs_flat = _wrap_rhs(rhs, template)

    if template is None:
        current = y.reshape(np.shape(initial))
    else:
        current = template.like(y.reshape(template.data.shape), t=t0)

    for n in range(1, n_steps + 1):
        t_prev = t0 + (n - 1) * dt
        step = dt if n < n_steps else (t0 + T) - t_prev
        _stage_loop(y, res, t_prev, step, rhs_flat)
        t_now = t0 + n * dt if n < n_steps else t0 + T
        # a non-finite entry poisons the sum, so this detects divergence
        # without allocating a temporary
        if not math.isfinite(float(np.sum(y))):
            raise SimulationDiverged(n, t_now)
        if template is not None:
            current.t = t_now
        for obs in observers:
            obs(n, t_now, current)
    return current
