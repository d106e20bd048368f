"""Dense linear algebra, seeded sampling and Gauss-Hermite quadrature.

Everything here is a pure function of its arguments. Random draws come from a
:class:`RandomStream` value: the same ``(seed, path, stream_index)`` always
produces the same numbers, no matter which thread asks for them or in what
order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from lrdlab.errors import InvalidArgumentError, NumericalError

GENERATOR_NAME = "Philox4x64-10"
NORMAL_TRANSFORM_NAME = "Box-Muller"
DEFAULT_QUADRATURE_ORDER = 96

_UINT64_MAX = 2**64 - 1


def as_square_matrix(m, name: str = "matrix") -> np.ndarray:
    """Validate ``m`` as a finite square float matrix and return it as an array."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise InvalidArgumentError(f"{name} must be a non-empty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return arr


def matrix_exp(m) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a degree-13 Padé approximant."""
    arr = as_square_matrix(m)
    out = scipy.linalg.expm(arr)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"matrix exponential overflowed (norm of input {np.linalg.norm(arr, 1):.3g})")
    return out


def largest_eigenvalue_real(m) -> float:
    """Largest real part over the eigenvalues of ``m``."""
    arr = as_square_matrix(m)
    try:
        eig = np.linalg.eigvals(arr)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigenvalue iteration did not converge for {arr.shape[0]}x{arr.shape[0]} matrix "
            f"(1-norm {np.linalg.norm(arr, 1):.3g}): {exc}"
        ) from exc
    return float(np.max(eig.real))


# -- random streams ----------------------------------------------------------


@dataclass(frozen=True)
class RandomStream:
    """Address of an independent, reproducible stream of random numbers.

    ``path`` records the parent streams a child was derived from, so nested
    fan-out (experiment -> seed sweep -> sample) never collides.
    """

    seed: int
    stream_index: int = 0
    path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _UINT64_MAX:
            raise InvalidArgumentError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")
        if self.stream_index < 0 or any(p < 0 for p in self.path):
            raise InvalidArgumentError("stream indices must be non-negative")

    def child(self, index: int) -> RandomStream:
        return RandomStream(self.seed, index, self.path + (self.stream_index,))

    def generator(self) -> np.random.Generator:
        """A fresh Philox-backed generator positioned at the start of this stream."""
        seq = np.random.SeedSequence(int(self.seed), spawn_key=self.path + (self.stream_index,))
        return np.random.Generator(np.random.Philox(seq))


def sample_uniform(stream: RandomStream, n: int) -> np.ndarray:
    """``n`` uniforms on [0, 1)."""
    if n < 0:
        raise InvalidArgumentError("n must be non-negative")
    return stream.generator().random(n)


def box_muller(u: np.ndarray) -> np.ndarray:
    """Map an even-length array of [0, 1) uniforms onto standard normals, pairwise."""
    pairs = u.reshape(-1, 2)
    radius = np.sqrt(-2.0 * np.log1p(-pairs[:, 0]))  # 1 - u lies in (0, 1]
    angle = 2.0 * np.pi * pairs[:, 1]
    out = np.empty(pairs.shape, dtype=float)
    out[:, 0] = radius * np.cos(angle)
    out[:, 1] = radius * np.sin(angle)
    return out.reshape(-1)


def sample_standard_normal(stream: RandomStream, n: int) -> np.ndarray:
    """``n`` i.i.d. N(0, 1) variates from Philox uniforms via the Box-Muller transform."""
    if n < 0:
        raise InvalidArgumentError("n must be non-negative")
    if n == 0:
        return np.empty(0)
    m = (n + 1) // 2
    return box_muller(stream.generator().random(2 * m))[:n]


@dataclass(frozen=True)
class StableMatrix:
    """``matrix = basis @ diag(eigenvalues) @ basis.T`` with an orthogonal ``basis``."""

    matrix: np.ndarray
    eigenvalues: np.ndarray
    basis: np.ndarray


def random_orthogonal(dim: int, stream: RandomStream) -> np.ndarray:
    """Haar-distributed orthogonal matrix: QR of a Gaussian matrix with sign-fixed R diagonal."""
    z = sample_standard_normal(stream, dim * dim).reshape(dim, dim)
    q, r = np.linalg.qr(z)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def random_stable_matrix(dim: int, eig_range: tuple[float, float], stream: RandomStream) -> StableMatrix:
    """Symmetric matrix with eigenvalues drawn uniformly from ``eig_range``."""
    lo, hi = (float(v) for v in eig_range)
    if dim < 1:
        raise InvalidArgumentError("dim must be positive")
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
        raise InvalidArgumentError(f"empty eigenvalue interval [{lo}, {hi}]")
    if hi > 0:
        raise InvalidArgumentError(f"eigenvalue interval must lie in (-inf, 0], got upper bound {hi}")
    eigenvalues = lo + (hi - lo) * sample_uniform(stream.child(0), dim)
    basis = random_orthogonal(dim, stream.child(1))
    matrix = (basis * eigenvalues) @ basis.T
    return StableMatrix(matrix=matrix, eigenvalues=eigenvalues, basis=basis)


# -- quadrature --------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite nodes and weights for the weight function exp(-x^2)."""

    nodes: np.ndarray
    weights: np.ndarray
    order: int


def gauss_hermite_rule(order: int = DEFAULT_QUADRATURE_ORDER) -> QuadratureRule:
    if order < 1:
        raise InvalidArgumentError("quadrature order must be positive")
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    return QuadratureRule(nodes=nodes, weights=weights, order=order)


def gauss_hermite_expectation(f: Callable, rule: QuadratureRule | None = None) -> float:
    """Approximate E[f(X)] for X ~ N(0, 1).

    ``f`` is called once on the full array of scaled nodes; scalar-only
    callables are evaluated node by node instead.
    """
    if rule is None:
        rule = gauss_hermite_rule()
    points = np.sqrt(2.0) * rule.nodes
    with np.errstate(all="ignore"):
        try:
            values = np.asarray(f(points), dtype=float)
            if values.shape != points.shape:
                raise TypeError
        except (TypeError, ValueError):
            values = np.array([float(f(float(p))) for p in points])
    bad = ~np.isfinite(values)
    if np.any(bad):
        node = points[np.argmax(bad)]
        raise NumericalError(f"integrand is not finite at node x={node!r}")
    return float(np.dot(rule.weights, values) / np.sqrt(np.pi))
