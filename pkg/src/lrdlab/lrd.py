"""Long-range dependency: the derivative of h_{t+k} with respect to the input x_t.

Indices ``t`` are 1-based to match the recurrence (``x_1`` is ``inputs[0]``).
The finite-difference oracle only ever calls the forward models, so it is
independent of every closed form in this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from lrdlab.attention import AttentionParams, Masking, attention_forward, attention_lrd
from lrdlab.errors import InvalidArgumentError, NumericalError
from lrdlab.interaction import InteractionParams, interaction_scan, interaction_transition
from lrdlab.ssm import ContinuousSsm, DiscretizedStep, _as_h0, discretize_sequence, scan

DEFAULT_FD_STEP = 1e-5


@dataclass(frozen=True)
class SsmModel:
    ssm: ContinuousSsm
    inputs: np.ndarray
    h0: np.ndarray | None = None

    def hidden(self, inputs: np.ndarray, tau: int) -> np.ndarray:
        return scan(self.ssm, inputs[:tau], self.h0).states[tau - 1]


@dataclass(frozen=True)
class InteractionModel:
    params: InteractionParams
    inputs: np.ndarray
    h0: np.ndarray | None = None

    def hidden(self, inputs: np.ndarray, tau: int) -> np.ndarray:
        return interaction_scan(self.params, inputs[:tau], self.h0).states[tau - 1]


@dataclass(frozen=True)
class AttentionModel:
    params: AttentionParams
    inputs: np.ndarray
    masking: Masking = Masking.FULL

    def hidden(self, inputs: np.ndarray, tau: int) -> np.ndarray:
        return attention_forward(inputs, self.params, self.masking).hidden[tau - 1]


Model = Union[SsmModel, InteractionModel, AttentionModel]


@dataclass(frozen=True)
class LrdQuery:
    model: Model
    t: int
    k: int

    def __post_init__(self):
        T = len(np.asarray(self.model.inputs))
        if self.t < 1 or self.k < 0 or self.t + self.k > T:
            raise InvalidArgumentError(f"need 1 <= t and t + k <= T, got t={self.t}, k={self.k}, T={T}")


@dataclass(frozen=True)
class LrdProfile:
    t: int
    norms: np.ndarray  # index k -> ||LRD(t+k, t)||
    raw: list[np.ndarray] | None = field(default=None, repr=False)


def central_difference(f: Callable[[float], np.ndarray], x: float, step: float) -> np.ndarray:
    """``(f(x + step) - f(x - step)) / (2 step)``."""
    if not step > 0:
        raise InvalidArgumentError("step must be positive")
    hi = np.asarray(f(x + step), dtype=float)
    lo = np.asarray(f(x - step), dtype=float)
    out = (hi - lo) / (2.0 * step)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"finite difference is not finite at x={x!r}, step={step!r}")
    return out


def lrd_finite_difference(query: LrdQuery, step: float = DEFAULT_FD_STEP, scale_step: bool = True) -> np.ndarray:
    """Central-difference estimate of LRD(t+k, t).

    Scalar-input models give an H-vector; attention gives the d x d Jacobian
    with one column per input coordinate. With ``scale_step`` the step is
    multiplied by ``max(1, |x|)`` for the perturbed coordinate.
    """
    model = query.model
    base = np.array(model.inputs, dtype=float)
    tau = query.t + query.k
    src = query.t - 1

    if base.ndim == 1:
        def f(v):
            x = base.copy()
            x[src] = v
            return model.hidden(x, tau)

        h = step * max(1.0, abs(base[src])) if scale_step else step
        return central_difference(f, base[src], h)

    cols = []
    for b in range(base.shape[1]):
        def f(v, b=b):
            x = base.copy()
            x[src, b] = v
            return model.hidden(x, tau)

        h = step * max(1.0, abs(base[src, b])) if scale_step else step
        cols.append(central_difference(f, base[src, b], h))
    return np.stack(cols, axis=1)


# -- closed forms ------------------------------------------------------------


def _check_range(n_steps: int, t: int, k: int):
    if t < 1 or k < 0 or t + k > n_steps:
        raise InvalidArgumentError(f"need 1 <= t and t + k <= {n_steps}, got t={t}, k={k}")


def lrd_ssm_closed_form(steps: Sequence[DiscretizedStep], t: int, k: int) -> np.ndarray:
    """``A_bar_{t+k} ... A_bar_{t+1} B_bar_t``; the empty product at k = 0 is the identity."""
    _check_range(len(steps), t, k)
    v = steps[t - 1].b_bar.copy()
    for j in range(t + 1, t + k + 1):
        v = steps[j - 1].a_bar @ v
    return v


def _state_before(mats, drives, h0, t: int) -> np.ndarray:
    """h_{t-1} from the explicit product-sum expansion (h_0 when t = 1)."""
    H = h0.shape[0]
    suffix = np.eye(H)
    acc = np.zeros(H)
    for i in range(t - 1, 0, -1):
        acc += suffix @ drives[i - 1]
        suffix = suffix @ mats[i - 1]
    return acc + suffix @ h0


def _interaction_seed_vector(params: InteractionParams, inputs, h0, t: int, middle_through_t: bool):
    x = np.asarray(inputs, dtype=float).reshape(-1)
    h0 = _as_h0(h0, params.dim)
    steps = discretize_sequence(params.base, x)
    mats = [interaction_transition(s.a_bar, xt, params) for s, xt in zip(steps, x)]
    drives = [s.b_bar * xt for s, xt in zip(steps, x)]
    # derivative of the step-t transition: 2 x_t g w^T
    d_transition = 2.0 * x[t - 1] * params.coupling
    # terms (i) and (ii): the h0 part and the i < t sources, both flowing through d_transition
    v = d_transition @ _state_before(mats, drives, h0, t)
    if middle_through_t:
        v = v + d_transition @ drives[t - 1]
    # term (iii): direct injection at step t
    v = v + steps[t - 1].b_bar
    return v, mats


def lrd_interaction_closed_form(
    params: InteractionParams,
    inputs,
    h0,
    t: int,
    k: int,
    middle_through_t: bool = False,
) -> np.ndarray:
    """LRD(t+k, t) of the interaction recurrence as a sum of three terms.

    ``S (2 x_t g w^T) [prod_{i<t} M_i] h_0
      + sum_{i<t} S (2 x_t g w^T) [prod_{i<j<t} M_j] B_bar_i x_i
      + S B_bar_t``, with ``S = M_{t+k} ... M_{t+1}``.

    ``middle_through_t=True`` extends the middle sum to ``i = t`` (treating the
    reversed product as the identity); it exists to let the finite-difference
    oracle reject that variant.
    """
    x = np.asarray(inputs, dtype=float).reshape(-1)
    _check_range(len(x), t, k)
    v, mats = _interaction_seed_vector(params, x, h0, t, middle_through_t)
    for j in range(t + 1, t + k + 1):
        v = mats[j - 1] @ v
    return v


def _matrix_norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(v, 2)) if v.ndim == 2 else float(np.linalg.norm(v))


def lrd_profile(model: Model, t: int, k_max: int, keep_raw: bool = False) -> LrdProfile:
    """Closed-form LRD norms for k = 0..k_max.

    Scalar-input models push a single vector through successive transitions,
    so the whole profile costs one pass over the sequence.
    """
    x = np.asarray(model.inputs, dtype=float)
    _check_range(len(x), t, k_max)
    raw = []
    if isinstance(model, SsmModel):
        steps = discretize_sequence(model.ssm, x)
        v = steps[t - 1].b_bar.copy()
        raw.append(v)
        for j in range(t + 1, t + k_max + 1):
            v = steps[j - 1].a_bar @ v
            raw.append(v)
    elif isinstance(model, InteractionModel):
        v, mats = _interaction_seed_vector(model.params, x, model.h0, t, False)
        raw.append(v)
        for j in range(t + 1, t + k_max + 1):
            v = mats[j - 1] @ v
            raw.append(v)
    elif isinstance(model, AttentionModel):
        raw = [attention_lrd(x, model.params, model.masking, t, k) for k in range(k_max + 1)]
    else:
        raise InvalidArgumentError(f"unsupported model {type(model).__name__}")
    norms = np.array([_matrix_norm(r) for r in raw])
    if not np.all(np.isfinite(norms)):
        raise NumericalError(f"LRD profile became non-finite (t={t})")
    return LrdProfile(t=t, norms=norms, raw=raw if keep_raw else None)


@dataclass(frozen=True)
class DecayCheck:
    k: int
    lhs: float  # ||LRD(t+k+1, t)||
    rhs: float  # exp(lambda1 * delta_{t+k+1}) ||LRD(t+k, t)||
    holds: bool


def check_decay_bound(
    steps: Sequence[DiscretizedStep],
    t: int,
    k_max: int,
    lambda1: float,
    rel_tol: float = 1e-9,
) -> list[DecayCheck]:
    """One-step decay inequality for k = 0..k_max-1.

    Tolerance is ``rel_tol * ||LRD(t+k, t)||`` on the right-hand side.
    """
    _check_range(len(steps), t, k_max)
    out = []
    v = steps[t - 1].b_bar.copy()
    prev = float(np.linalg.norm(v))
    for k in range(k_max):
        step = steps[t + k]  # step index t+k+1
        v = step.a_bar @ v
        lhs = float(np.linalg.norm(v))
        rhs = float(np.exp(lambda1 * step.delta)) * prev
        out.append(DecayCheck(k=k, lhs=lhs, rhs=rhs, holds=lhs <= rhs + rel_tol * prev))
        prev = lhs
    return out


def has_interior_peak(norms: Sequence[float], k_min: int = 10) -> bool:
    """True if some ``k > k_min`` is a strict local maximum of the profile."""
    n = np.asarray(norms, dtype=float)
    for k in range(k_min + 1, len(n) - 1):
        if n[k] > n[k - 1] and n[k] > n[k + 1]:
            return True
    return False
