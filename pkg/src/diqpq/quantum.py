"""Two-qubit pure states, real single-qubit measurement bases and Born-rule sampling.

Qubit ordering is ``|b>_B |a>_A``: the first qubit is the particle Bob keeps
(measured with the X settings), the second is the one sent to Alice (measured
with the Y settings during the Bell test, by Alice during the key phase).
An outcome index 0 means the projection on ``|angle>``, 1 on ``|angle-perp>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

NORM_TOL = 1e-12
RENORMALIZE_TOL = 1e-9


@dataclass(frozen=True)
class TwoQubitState:
    amp00: complex
    amp01: complex
    amp10: complex
    amp11: complex

    def __post_init__(self) -> None:
        amps = [complex(a) for a in (self.amp00, self.amp01, self.amp10, self.amp11)]
        norm2 = sum(abs(a) ** 2 for a in amps)
        dev = abs(norm2 - 1.0)
        if dev > RENORMALIZE_TOL:
            raise DomainError(f"state is not normalized (|psi|^2 = {norm2!r})")
        if dev > NORM_TOL:
            scale = 1.0 / math.sqrt(norm2)
            amps = [a * scale for a in amps]
        for name, a in zip(("amp00", "amp01", "amp10", "amp11"), amps):
            object.__setattr__(self, name, a)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.amp00, self.amp01, self.amp10, self.amp11], dtype=complex)

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.vector) ** 2))


@dataclass(frozen=True)
class QubitBasis:
    """The pair ``|angle> = cos(angle/2)|0> + sin(angle/2)|1>`` and its orthogonal partner."""

    angle: float

    def vectors(self) -> tuple[np.ndarray, np.ndarray]:
        c, s = math.cos(self.angle / 2), math.sin(self.angle / 2)
        return np.array([c, s], dtype=complex), np.array([s, -c], dtype=complex)


COMPUTATIONAL = QubitBasis(0.0)
HADAMARD = QubitBasis(math.pi / 2)


@dataclass(frozen=True)
class SettingPair:
    x: int
    y: int

    def __post_init__(self) -> None:
        if self.x not in (0, 1) or self.y not in (0, 1):
            raise DomainError(f"settings must be bits, got ({self.x}, {self.y})")


def _check_theta(theta: float) -> None:
    # theta = pi/2 (maximally entangled) is admitted on purpose
    if not (0.0 < theta <= math.pi / 2):
        raise DomainError(f"theta must lie in (0, pi/2], got {theta!r}", field="theta")


def make_biased_state(theta: float, epsilon: float) -> TwoQubitState:
    """``alpha|0>|phi0> + beta|1>|phi1>`` with ``alpha = sqrt(1/2+eps)``, ``beta = sqrt(1/2-eps)``.

    ``phi0``/``phi1`` are the qubit states at angle ``+theta``/``-theta``.
    """
    _check_theta(theta)
    if not (-0.5 < epsilon < 0.5):
        raise DomainError(f"bias epsilon must lie in (-1/2, 1/2), got {epsilon!r}", field="epsilon")
    alpha = math.sqrt(0.5 + epsilon)
    beta = math.sqrt(0.5 - epsilon)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return TwoQubitState(alpha * c, alpha * s, beta * c, -beta * s)


def make_honest_state(theta: float) -> TwoQubitState:
    return make_biased_state(theta, 0.0)


def joint_distribution(
    state: TwoQubitState, bob_basis: QubitBasis, alice_basis: QubitBasis
) -> np.ndarray:
    """Born probabilities ``p[a, b]`` for measuring the first qubit in ``bob_basis``
    and the second in ``alice_basis``."""
    if abs(state.norm_squared() - 1.0) > NORM_TOL:
        raise DomainError("joint_distribution needs a normalized state")
    psi = state.vector
    p = np.empty((2, 2))
    for a, u in enumerate(bob_basis.vectors()):
        for b, v in enumerate(alice_basis.vectors()):
            amp = np.vdot(np.kron(u, v), psi)
            p[a, b] = abs(amp) ** 2
    return p


def sample_outcome(distribution: np.ndarray, rng: np.random.Generator) -> tuple[int, int]:
    flat = np.asarray(distribution, dtype=float).reshape(4)
    k = int(np.searchsorted(np.cumsum(flat), rng.random(), side="right"))
    k = min(k, 3)
    return k // 2, k % 2


def sample_outcomes(
    tables: np.ndarray, which: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized draws: ``tables[k]`` is a 2x2 distribution, ``which[i]`` picks the table for draw ``i``."""
    cdf = np.cumsum(np.asarray(tables, dtype=float).reshape(len(tables), 4), axis=1)
    u = rng.random(len(which))
    k = (u[:, None] >= cdf[which]).sum(axis=1)
    np.minimum(k, 3, out=k)
    return (k // 2).astype(np.int8), (k % 2).astype(np.int8)
