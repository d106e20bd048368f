"""Single-input single-output state-space recurrence with ZOH discretization.

Time indices follow the recurrence convention: inputs ``x_1..x_T`` are stored
as ``inputs[0..T-1]`` and ``HiddenTrajectory.states[t - 1]`` holds ``h_t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from lrdlab.errors import InvalidArgumentError, NumericalError
from lrdlab.numerics import as_square_matrix, matrix_exp


@dataclass(frozen=True)
class FixedStep:
    delta: float = 1.0

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidArgumentError(f"fixed step must be positive, got {self.delta}")


@dataclass(frozen=True)
class SelectiveStep:
    """Input-dependent step ``softplus(a * x + c)``."""

    a: float = 1.0
    c: float = 0.0


StepPolicy = Union[FixedStep, SelectiveStep]


@dataclass(frozen=True)
class ContinuousSsm:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    step_policy: StepPolicy = field(default_factory=FixedStep)

    def __post_init__(self):
        A = as_square_matrix(self.A, "A")
        B = np.asarray(self.B, dtype=float).reshape(-1)
        C = np.asarray(self.C, dtype=float).reshape(-1)
        H = A.shape[0]
        if B.shape != (H,) or C.shape != (H,):
            raise InvalidArgumentError(f"B and C must have length {H}, got {B.shape} and {C.shape}")
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(C))):
            raise InvalidArgumentError("B and C must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def dim(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class DiscretizedStep:
    a_bar: np.ndarray
    b_bar: np.ndarray
    delta: float


@dataclass(frozen=True)
class HiddenTrajectory:
    states: np.ndarray  # (T, H); row t-1 is h_t
    outputs: np.ndarray  # (T,)
    initial: np.ndarray  # (H,)

    def __len__(self):
        return self.states.shape[0]


def softplus(z):
    return np.logaddexp(0.0, z)


def discretize_zoh(ssm: ContinuousSsm, delta: float) -> DiscretizedStep:
    """Zero-order-hold discretization at step ``delta``.

    ``b_bar`` is read off the top-right block of ``exp([[dA, dB], [0, 0]])``,
    which stays well defined when ``A`` is singular.
    """
    delta = float(delta)
    if not delta > 0:
        raise InvalidArgumentError(f"delta must be positive, got {delta}")
    H = ssm.dim
    aug = np.zeros((H + 1, H + 1))
    aug[:H, :H] = delta * ssm.A
    aug[:H, H] = delta * ssm.B
    e = matrix_exp(aug)
    a_bar = e[:H, :H]
    b_bar = e[:H, H].copy()
    if not (np.all(np.isfinite(a_bar)) and np.all(np.isfinite(b_bar))):
        raise NumericalError(f"ZOH discretization produced non-finite values at delta={delta}")
    return DiscretizedStep(a_bar=a_bar, b_bar=b_bar, delta=delta)


def _as_inputs(inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("inputs must be finite")
    return x


def _as_h0(h0, H: int) -> np.ndarray:
    if h0 is None:
        return np.zeros(H)
    h0 = np.asarray(h0, dtype=float).reshape(-1)
    if h0.shape != (H,):
        raise InvalidArgumentError(f"h0 must have length {H}, got {h0.shape}")
    return h0


def step_sizes(ssm: ContinuousSsm, inputs: Sequence[float]) -> np.ndarray:
    x = _as_inputs(inputs)
    policy = ssm.step_policy
    if isinstance(policy, FixedStep):
        return np.full(x.shape, float(policy.delta))
    return softplus(policy.a * x + policy.c)


def discretize_sequence(ssm: ContinuousSsm, inputs: Sequence[float]) -> list[DiscretizedStep]:
    """One :class:`DiscretizedStep` per input; fixed steps share a single discretization."""
    deltas = step_sizes(ssm, inputs)
    if isinstance(ssm.step_policy, FixedStep):
        if len(deltas) == 0:
            return []
        step = discretize_zoh(ssm, deltas[0])
        return [step] * len(deltas)
    return [discretize_zoh(ssm, d) for d in deltas]


def _check_state(h: np.ndarray, t: int):
    if not np.all(np.isfinite(h)):
        raise NumericalError(f"hidden state became non-finite at step t={t}")


def scan(ssm: ContinuousSsm, inputs: Sequence[float], h0=None) -> HiddenTrajectory:
    """Sequential recurrence ``h_t = A_bar_t h_{t-1} + B_bar_t x_t``."""
    x = _as_inputs(inputs)
    h = _as_h0(h0, ssm.dim)
    steps = discretize_sequence(ssm, x)
    states = np.empty((len(x), ssm.dim))
    for t, (step, xt) in enumerate(zip(steps, x), start=1):
        h = step.a_bar @ h + step.b_bar * xt
        _check_state(h, t)
        states[t - 1] = h
    return HiddenTrajectory(states=states, outputs=states @ ssm.C, initial=_as_h0(h0, ssm.dim))


def unrolled_states(transitions: Sequence[np.ndarray], drives: Sequence[np.ndarray], h0: np.ndarray) -> np.ndarray:
    """Evaluate ``h_t = (prod_{i<=t} M_i) h_0 + sum_i (prod_{i<j<=t} M_j) d_i`` for every t.

    Products are left-multiplied (later factors on the left). For each target
    ``t`` the suffix products are accumulated right-to-left from the identity,
    so the sum is evaluated term by term rather than through the recurrence.
    """
    T = len(transitions)
    H = h0.shape[0]
    states = np.empty((T, H))
    eye = np.eye(H)
    for t in range(1, T + 1):
        suffix = eye  # prod_{j=i+1..t} M_j, starting from the empty product at i = t
        acc = np.zeros(H)
        for i in range(t, 0, -1):
            acc += suffix @ drives[i - 1]
            suffix = suffix @ transitions[i - 1]
        acc += suffix @ h0
        _check_state(acc, t)
        states[t - 1] = acc
    return states


def unroll_closed_form(ssm: ContinuousSsm, inputs: Sequence[float], h0=None) -> HiddenTrajectory:
    """Hidden states from the explicit product-sum expansion of the recurrence."""
    x = _as_inputs(inputs)
    h0 = _as_h0(h0, ssm.dim)
    steps = discretize_sequence(ssm, x)
    states = unrolled_states([s.a_bar for s in steps], [s.b_bar * xt for s, xt in zip(steps, x)], h0)
    return HiddenTrajectory(states=states, outputs=states @ ssm.C, initial=h0)
