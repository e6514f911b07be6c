"""CHSH game and test statistics, their analytic reference values, and the
detector-inefficiency attack region.

Angle conventions: ``theta`` parametrizes Alice's states ``phi0``/``phi1`` at
angles ``+theta``/``-theta``; the Y settings measure at ``psi1``/``psi2`` with
``psi1 + psi2 = pi``; the X settings are the computational (x=0) and Hadamard
(x=1) bases.

Two shorthand sums appear everywhere below::

    A = sin(theta) (sin psi1 + sin psi2)
    B = cos psi1 - cos psi2

so the ideal CHSH value is ``A + B`` and a biased source with bias ``eps``
yields ``A + 2 sqrt(1/4 - eps^2) B``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .quantum import COMPUTATIONAL, HADAMARD, QubitBasis, TwoQubitState, joint_distribution

# Below this efficiency the detection loophole of the CHSH test stays open.
ETA_LOOPHOLE = 2.0 / (1.0 + math.sqrt(2.0))
ANGLE_TOL = 1e-12
# Weight 1/p(x,y) of a single Bell round under uniform settings.
SETTING_WEIGHT = 4.0


def validate_angles(theta: float, psi1: float, psi2: float) -> None:
    if not (0.0 < theta <= math.pi / 2):
        raise DomainError(f"theta must lie in (0, pi/2], got {theta!r}", field="theta")
    if not (0.0 < psi1 < math.pi / 2):
        raise DomainError(f"psi1 must lie in (0, pi/2), got {psi1!r}", field="psi1")
    if not (math.pi / 2 < psi2 < math.pi):
        raise DomainError(f"psi2 must lie in (pi/2, pi), got {psi2!r}", field="psi2")
    if abs(psi1 + psi2 - math.pi) > ANGLE_TOL:
        raise DomainError(f"psi1 + psi2 must equal pi, got {psi1 + psi2!r}", field="psi2")


def _check_epsilon(epsilon: float) -> None:
    if not (-0.5 < epsilon < 0.5):
        raise DomainError(f"bias epsilon must lie in (-1/2, 1/2), got {epsilon!r}", field="epsilon")


def _check_eta(eta: float) -> None:
    if not (0.0 < eta <= 1.0):
        raise DomainError(f"detection efficiency must lie in (0, 1], got {eta!r}", field="eta")


def overlap_factor(epsilon: float) -> float:
    """``2 alpha beta = 2 sqrt(1/4 - eps^2)``; 1 for the honest source."""
    _check_epsilon(epsilon)
    return 2.0 * math.sqrt(0.25 - epsilon * epsilon)


@dataclass(frozen=True)
class AttackRegionParams:
    A: float
    B: float
    C: float

    @classmethod
    def from_angles(cls, theta: float, psi1: float, psi2: float, eta: float) -> "AttackRegionParams":
        A = math.sin(theta) * (math.sin(psi1) + math.sin(psi2))
        B = math.cos(psi1) - math.cos(psi2)
        return cls(A, B, (8 - 2 * A + B) * eta - 8 + 2 * A)


def _ab(theta: float, psi1: float, psi2: float) -> tuple[float, float]:
    validate_angles(theta, psi1, psi2)
    return (
        math.sin(theta) * (math.sin(psi1) + math.sin(psi2)),
        math.cos(psi1) - math.cos(psi2),
    )


# -- game (statistical method 1) -------------------------------------------


def game_score(a: int, b: int, x: int, y: int) -> int:
    return int((a ^ b) == (x & y))


def game_threshold(theta: float, psi1: float, psi2: float) -> float:
    A, B = _ab(theta, psi1, psi2)
    return (A + B) / 8 + 0.5


def biased_game_value(theta: float, psi1: float, psi2: float, epsilon: float) -> float:
    A, B = _ab(theta, psi1, psi2)
    _check_epsilon(epsilon)
    return A / 8 + math.sqrt(0.25 - epsilon**2) / 4 * B + 0.5


@dataclass
class GameStats:
    per_round_scores: np.ndarray
    Y: float
    YBar: float

    @classmethod
    def from_scores(cls, scores: np.ndarray, YBar: float) -> "GameStats":
        scores = np.asarray(scores, dtype=np.int8)
        Y = float(scores.sum()) / len(scores) if len(scores) else 0.0
        return cls(scores, Y, YBar)

    @property
    def standard_error(self) -> float:
        n = len(self.per_round_scores)
        return math.sqrt(max(self.Y * (1 - self.Y), 0.0) / n) if n else math.inf


# -- test (statistical method 2) -------------------------------------------


@dataclass
class TestStats:
    I: float
    IHat: float
    IBar: float
    standard_error: float = math.nan
    correlators: np.ndarray = field(default_factory=lambda: np.full((2, 2), np.nan))

    __test__ = False  # not a pytest class


@dataclass(frozen=True)
class ChshBases:
    """Measurement bases indexed by setting: ``bob[x]`` on the first qubit, ``alice[y]`` on the second."""

    bob: tuple[QubitBasis, QubitBasis]
    alice: tuple[QubitBasis, QubitBasis]

    @classmethod
    def standard(cls, psi1: float, psi2: float) -> "ChshBases":
        return cls((COMPUTATIONAL, HADAMARD), (QubitBasis(psi1), QubitBasis(psi2)))

    def tables(self, state: TwoQubitState) -> np.ndarray:
        """Joint distributions for the four settings, indexed ``2*x + y``."""
        return np.array(
            [joint_distribution(state, self.bob[x], self.alice[y]) for x in (0, 1) for y in (0, 1)]
        )


def correlator(state: TwoQubitState, x: int, y: int, bases: ChshBases) -> float:
    p = joint_distribution(state, bases.bob[x], bases.alice[y])
    return float(p[0, 0] + p[1, 1] - p[0, 1] - p[1, 0])


def chsh_from_state(state: TwoQubitState, bases: ChshBases) -> float:
    E = [[correlator(state, x, y, bases) for y in (0, 1)] for x in (0, 1)]
    return E[0][0] + E[0][1] + E[1][0] - E[1][1]


def chsh_ideal(theta: float, psi1: float, psi2: float) -> float:
    A, B = _ab(theta, psi1, psi2)
    return A + B


def biased_chsh_value(theta: float, psi1: float, psi2: float, epsilon: float) -> float:
    A, B = _ab(theta, psi1, psi2)
    return A + overlap_factor(epsilon) * B


def chsh_bound_given_delta(S: float, delta: float) -> float:
    """Largest observable CHSH value when a fraction ``delta`` of every
    conditional ensemble behaves like a source with CHSH value ``S``."""
    return 4.0 + (S - 4.0) * delta


def delta_lower_bound(eta: float) -> float:
    _check_eta(eta)
    return 3.0 - 2.0 / eta


def threshold_with_eta(theta: float, psi1: float, psi2: float, eta: float) -> float:
    """Efficiency-corrected certification threshold.

    Raises for ``eta <= 2/(1+sqrt 2)``, where no threshold can close the
    detection loophole.
    """
    _check_eta(eta)
    if eta <= ETA_LOOPHOLE:
        raise DomainError(
            f"eta={eta!r} is at or below 2/(1+sqrt 2) ~ {ETA_LOOPHOLE:.6f}; detection loophole open",
            field="eta",
        )
    S = chsh_ideal(theta, psi1, psi2)
    return -8.0 + 3.0 * S + (8.0 - 2.0 * S) / eta


def attack_chsh_value(theta: float, psi1: float, psi2: float, epsilon: float, eta: float) -> float:
    """CHSH value a biased source can present through detectors of efficiency ``eta``."""
    A, B = _ab(theta, psi1, psi2)
    _check_eta(eta)
    S = A + overlap_factor(epsilon) * B
    return (8.0 - 2.0 * S) / eta + 3.0 * S - 8.0


class AttackRegion(str, enum.Enum):
    NO_ATTACK = "NoAttack"
    CASE1 = "Case1"
    CASE2 = "Case2"


def case1_eta_limit(theta: float, psi1: float, psi2: float) -> float:
    A, B = _ab(theta, psi1, psi2)
    return (8 - 2 * A) / (8 - 2 * A + B)


def case2_epsilon_limit(theta: float, psi1: float, psi2: float, eta: float) -> float:
    """Largest |eps| for which the Case 2 attack works at this ``eta`` (0 if none)."""
    p = AttackRegionParams.from_angles(theta, psi1, psi2, eta)
    k = (3 * eta - 2) * p.B
    disc = k * k - p.C * p.C
    if k <= 0 or disc <= 0:
        return 0.0
    return math.sqrt(disc) / (2 * k)


def classify_attack_region(
    theta: float, psi1: float, psi2: float, epsilon: float, eta: float
) -> AttackRegion:
    """Where a biased source beats a certifier that assumes perfect detectors.

    Case 1 covers efficiencies below ``(8-2A)/(8-2A+B)`` for every nonzero
    bias; Case 2 the efficiencies above it, for small enough bias. The upper
    efficiency limit of Case 2 is 1, since ``(3 eta - 2) B > C`` reduces to
    ``(8 - 2A - 2B)(1 - eta) > 0``. Boundary points are NoAttack.
    """
    validate_angles(theta, psi1, psi2)
    _check_epsilon(epsilon)
    _check_eta(eta)
    if epsilon == 0.0 or not (ETA_LOOPHOLE < eta < 1.0):
        return AttackRegion.NO_ATTACK
    eta_split = case1_eta_limit(theta, psi1, psi2)
    if eta < eta_split:
        return AttackRegion.CASE1
    if eta > eta_split and abs(epsilon) < case2_epsilon_limit(theta, psi1, psi2, eta):
        return AttackRegion.CASE2
    return AttackRegion.NO_ATTACK
