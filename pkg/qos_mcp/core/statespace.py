"""
Linear discrete-time state-space model x(t+1) = A x(t) + B u(t).

Simulation under box constraints, least-squares identification from traces and
the stability / controllability / observability analyses.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike

from qos_mcp.core.errors import (
    BoundsError,
    DimensionError,
    InsufficientSamplesError,
    NonFiniteError,
    UnidentifiableError,
)

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-12


def _as_matrix(value: ArrayLike, name: str) -> np.ndarray:
    matrix = np.array(value, dtype=float, ndmin=2)
    if matrix.ndim != 2:
        raise DimensionError(f"{name} must be a 2-D matrix, got {matrix.ndim} dimensions")
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteError(f"{name} has non-finite entries")
    matrix.setflags(write=False)
    return matrix


def _as_bounds(value: ArrayLike | None, size: int, name: str) -> np.ndarray:
    if value is None:
        bounds = np.tile([-np.inf, np.inf], (size, 1))
    else:
        bounds = np.array(value, dtype=float)
    if bounds.shape != (size, 2):
        raise DimensionError(f"{name} must have shape ({size}, 2), got {bounds.shape}")
    if np.any(np.isnan(bounds)):
        raise NonFiniteError(f"{name} contains NaN")
    if np.any(bounds[:, 0] > bounds[:, 1]):
        raise BoundsError(f"{name} has an interval with lo > hi")
    bounds.setflags(write=False)
    return bounds


def _as_vector(value: ArrayLike, size: int, name: str) -> np.ndarray:
    vector = np.array(value, dtype=float).reshape(-1)
    if vector.shape != (size,):
        raise DimensionError(f"{name} must have length {size}, got {vector.size}")
    if not np.all(np.isfinite(vector)):
        raise NonFiniteError(f"{name} has non-finite entries")
    vector.setflags(write=False)
    return vector


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """
    Plant x(t+1) = A x(t) + B u(t), y(t) = C x(t) with box constraints.

    state_bounds and input_bounds are (dim, 2) arrays of closed intervals
    [lo, hi]; infinite entries mean unconstrained. C defaults to identity.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray | None = None
    state_bounds: np.ndarray | None = None
    input_bounds: np.ndarray | None = None

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        B = _as_matrix(self.B, "B")
        if B.shape[0] != n:
            # A column vector given as a flat list arrives as a single row.
            if B.shape[0] == 1 and B.shape[1] == n:
                B = _as_matrix(B.T, "B")
            else:
                raise DimensionError(f"B must have {n} rows, got {B.shape[0]}")
        C = _as_matrix(np.eye(n) if self.C is None else self.C, "C")
        if C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {C.shape[1]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(
            self, "state_bounds", _as_bounds(self.state_bounds, n, "state_bounds")
        )
        object.__setattr__(
            self,
            "input_bounds",
            _as_bounds(self.input_bounds, B.shape[1], "input_bounds"),
        )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StateSpaceModel):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("A", "B", "C", "state_bounds", "input_bounds")
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class StateVector:
    values: np.ndarray
    t: int = 0

    def __post_init__(self):
        vector = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(vector)):
            raise NonFiniteError("state vector has non-finite entries")
        vector.setflags(write=False)
        object.__setattr__(self, "values", vector)


@dataclass(frozen=True, eq=False)
class ControlVector:
    values: np.ndarray
    t: int = 0

    def __post_init__(self):
        vector = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(vector)):
            raise NonFiniteError("control vector has non-finite entries")
        vector.setflags(write=False)
        object.__setattr__(self, "values", vector)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    states is (N, n); inputs is (N - 1, m): inputs[t] drives states[t] -> states[t + 1].
    """

    states: np.ndarray
    inputs: np.ndarray = field(default=None)

    def __post_init__(self):
        states = np.array(self.states, dtype=float, ndmin=2)
        if states.ndim != 2:
            raise DimensionError("trajectory states must be a 2-D array")
        inputs = np.array(
            np.zeros((max(states.shape[0] - 1, 0), 0)) if self.inputs is None else self.inputs,
            dtype=float,
        )
        if inputs.ndim == 1:
            inputs = inputs.reshape(-1, 1)
        if inputs.shape[0] != states.shape[0] - 1:
            raise DimensionError(
                f"trajectory needs {states.shape[0] - 1} inputs for {states.shape[0]} states, "
                f"got {inputs.shape[0]}"
            )
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(inputs))):
            raise NonFiniteError("trajectory has non-finite entries")
        states.setflags(write=False)
        inputs.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return self.states.shape[0]


class StepResult(NamedTuple):
    state: StateVector
    clamped: bool


class IdentificationResult(NamedTuple):
    A: np.ndarray
    B: np.ndarray
    residual: float


class Mode(NamedTuple):
    eigenvalue: complex
    magnitude: float
    behaviour: str  # decaying | marginal | growing
    oscillatory: bool


def step(model: StateSpaceModel, x: StateVector, u: ControlVector) -> StepResult:
    """
    Advance one tick: x' = A x + B u, clamped componentwise into the state box.

    Raises BoundsError when u lies outside the input box U.
    """
    xv = _as_vector(x.values, model.n, "x")
    uv = _as_vector(u.values, model.m, "u")
    lo, hi = model.input_bounds[:, 0], model.input_bounds[:, 1]
    if np.any(uv < lo) or np.any(uv > hi):
        raise BoundsError(f"control {uv.tolist()} outside input bounds")
    raw = model.A @ xv + model.B @ uv
    if not np.all(np.isfinite(raw)):
        raise NonFiniteError("state overflowed to a non-finite value")
    clamped = np.clip(raw, model.state_bounds[:, 0], model.state_bounds[:, 1])
    return StepResult(StateVector(clamped, x.t + 1), bool(np.any(clamped != raw)))


def simulate(
    model: StateSpaceModel, x0: ArrayLike, inputs: ArrayLike
) -> tuple[Trajectory, int]:
    """Run step() over an input sequence; returns the trajectory and the number of clamped steps."""
    inputs = np.array(inputs, dtype=float, ndmin=2)
    if model.m == 1 and inputs.shape[0] == 1 and inputs.shape[1] != 1:
        inputs = inputs.T
    state = StateVector(_as_vector(x0, model.n, "x0"), 0)
    states = [state.values]
    clamped_steps = 0
    for t, u in enumerate(inputs):
        state, clamped = step(model, state, ControlVector(u, t))
        clamped_steps += clamped
        states.append(state.values)
    return Trajectory(np.vstack(states), inputs.reshape(len(inputs), model.m)), clamped_steps


def free_response(model: StateSpaceModel, x0: ArrayLike, ticks: int) -> np.ndarray:
    """States of the unforced system (u = 0) for ticks steps, shape (ticks + 1, n)."""
    zeros = np.zeros((ticks, model.m))
    trajectory, _ = simulate(model, x0, zeros)
    return trajectory.states


def spectral_radius(A: ArrayLike) -> float:
    matrix = _as_matrix(A, "A")
    if matrix.shape[0] != matrix.shape[1]:
        raise DimensionError(f"A must be square, got {matrix.shape}")
    if matrix.size == 0:
        return 0.0
    return float(np.max(np.abs(scipy.linalg.eigvals(matrix))))


def is_stable(A: ArrayLike) -> bool:
    return spectral_radius(A) < 1.0


def modes(A: ArrayLike, tolerance: float = 1e-9) -> list[Mode]:
    """Eigenvalues of A sorted by magnitude (largest first) with their qualitative behaviour."""
    matrix = _as_matrix(A, "A")
    if matrix.shape[0] != matrix.shape[1]:
        raise DimensionError(f"A must be square, got {matrix.shape}")
    result = []
    for eigenvalue in scipy.linalg.eigvals(matrix):
        magnitude = float(abs(eigenvalue))
        if magnitude < 1.0 - tolerance:
            behaviour = "decaying"
        elif magnitude > 1.0 + tolerance:
            behaviour = "growing"
        else:
            behaviour = "marginal"
        oscillatory = abs(eigenvalue.imag) > tolerance or (
            eigenvalue.real < -tolerance and magnitude > tolerance
        )
        result.append(Mode(complex(eigenvalue), magnitude, behaviour, bool(oscillatory)))
    return sorted(result, key=lambda mode: (-mode.magnitude, mode.eigenvalue.imag))


def numerical_rank(matrix: ArrayLike, dimension: int) -> int:
    """Rank from singular values with threshold dimension * sigma_max * 1e-12."""
    values = np.array(matrix, dtype=float, ndmin=2)
    if values.size == 0:
        return 0
    singular = scipy.linalg.svdvals(values)
    sigma_max = singular[0] if singular.size else 0.0
    if sigma_max == 0.0:
        return 0
    return int(np.sum(singular > dimension * sigma_max * RANK_TOLERANCE))


def reachability_matrix(model: StateSpaceModel, steps: int) -> np.ndarray:
    """[B | AB | ... | A^(steps-1) B]: the states reachable from the origin in `steps` ticks."""
    if steps < 1:
        raise DimensionError("steps must be at least 1")
    blocks = [model.B]
    for _ in range(1, steps):
        blocks.append(model.A @ blocks[-1])
    return np.hstack(blocks)


def controllability_matrix(model: StateSpaceModel) -> np.ndarray:
    return reachability_matrix(model, model.n)


def controllability_rank(model: StateSpaceModel) -> int:
    return numerical_rank(controllability_matrix(model), model.n)


def is_controllable(model: StateSpaceModel) -> bool:
    return controllability_rank(model) == model.n


def is_reachable_in(model: StateSpaceModel, steps: int) -> bool:
    return numerical_rank(reachability_matrix(model, steps), model.n) == model.n


def observability_matrix(model: StateSpaceModel) -> np.ndarray:
    """C stacked over CA, ..., C A^(n-1)."""
    blocks = [model.C]
    for _ in range(1, model.n):
        blocks.append(blocks[-1] @ model.A)
    return np.vstack(blocks)


def observability_rank(model: StateSpaceModel) -> int:
    return numerical_rank(observability_matrix(model), model.n)


def is_observable(model: StateSpaceModel) -> bool:
    return observability_rank(model) == model.n


def identify(traj: Trajectory) -> IdentificationResult:
    """
    Least-squares fit of (A, B) minimising sum ||x(t+1) - A x(t) - B u(t)||^2.

    Solved through scipy's SVD-based lstsq. The residual is the root mean square
    of the per-transition residual norms.
    """
    n, m = traj.n, traj.m
    if len(traj) < n + m + 1:
        raise InsufficientSamplesError(
            f"identification of n={n}, m={m} needs at least {n + m + 1} states, got {len(traj)}"
        )
    regressors = np.hstack([traj.states[:-1], traj.inputs])
    targets = traj.states[1:]
    rank = numerical_rank(regressors, n + m)
    if rank < n + m:
        raise UnidentifiableError(
            f"regressors [x; u] have rank {rank} < {n + m}; the trajectory is not informative enough"
        )
    theta, *_ = scipy.linalg.lstsq(regressors, targets)
    A = theta[:n].T
    B = theta[n:].T
    residuals = targets - regressors @ theta
    residual = float(np.sqrt(np.sum(residuals**2) / targets.shape[0]))
    logger.debug("identified n=%d m=%d from %d samples, residual %.3g", n, m, len(traj), residual)
    return IdentificationResult(A, B, residual)


@dataclass(frozen=True)
class ModelAnalysis:
    spectral_radius: float
    stable: bool
    modes: tuple[Mode, ...]
    controllability_rank: int
    controllable: bool
    observability_rank: int
    observable: bool
    n: int
    reach_steps: int | None = None
    reach_rank: int | None = None


def analyze(model: StateSpaceModel, reach_steps: int | None = None) -> ModelAnalysis:
    """Stability, controllability and observability verdicts for one model."""
    reach_rank = None
    if reach_steps is not None:
        reach_rank = numerical_rank(reachability_matrix(model, reach_steps), model.n)
    c_rank = controllability_rank(model)
    o_rank = observability_rank(model)
    radius = spectral_radius(model.A)
    return ModelAnalysis(
        spectral_radius=radius,
        stable=radius < 1.0,
        modes=tuple(modes(model.A)),
        controllability_rank=c_rank,
        controllable=c_rank == model.n,
        observability_rank=o_rank,
        observable=o_rank == model.n,
        n=model.n,
        reach_steps=reach_steps,
        reach_rank=reach_rank,
    )


def random_inputs(model: StateSpaceModel, ticks: int, seed: int = 0) -> np.ndarray:
    """
    Uniform random inputs inside the input box, shape (ticks, m).

    An unbounded side sits 2 units from the bounded one, or at +/-1 when both are open.
    """
    lo, hi = model.input_bounds[:, 0].copy(), model.input_bounds[:, 1].copy()
    open_lo, open_hi = ~np.isfinite(lo), ~np.isfinite(hi)
    lo[open_lo] = np.where(open_hi[open_lo], -1.0, hi[open_lo] - 2.0)
    hi[open_hi] = np.where(open_lo[open_hi], 1.0, lo[open_hi] + 2.0)
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=(ticks, model.m))
