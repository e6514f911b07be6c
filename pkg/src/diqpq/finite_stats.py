"""Finite-sample deviation bounds for the certification statistic.

``xi`` bounds how far the observed CHSH average may stray from its expectation
over the ``ceil(gamma N)`` test rounds; ``nu`` bounds the gap between the test
subset and the whole sample of ``N`` rounds.

Both formulas as usually printed are Hoeffding bounds for per-round values in
a range of width 1. A single CHSH test round takes values in ``[-4, 4]``
(sign times the uniform-setting weight 4), a width of ``CHSH_RANGE = 8``, so a
valid bound for that statistic is the printed one times 8. The per-round game
score lies in ``{0, 1}`` and needs no scaling. Functions take ``stat_range``
and default to the printed (width 1) constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError

UNIT_RANGE = 1.0
CHSH_RANGE = 8.0
GAME_RANGE = 1.0


def n_test_rounds(gamma: float, n_pairs: int) -> int:
    # round() strips float noise such as 0.3 * 10 = 3.0000000000000004
    return math.ceil(round(gamma * n_pairs, 9))


def n_key_rounds(gamma: float, n_pairs: int) -> int:
    return n_pairs - n_test_rounds(gamma, n_pairs)


def _check(gamma: float, n_pairs: int, eps: float, name: str) -> None:
    if not (0.0 < gamma < 1.0):
        raise DomainError(f"gamma must lie in (0, 1), got {gamma!r}", field="gamma")
    if n_pairs < 1:
        raise DomainError(f"N must be positive, got {n_pairs!r}", field="n_pairs")
    if not (0.0 < eps <= 1.0):
        raise DomainError(f"{name} must lie in (0, 1], got {eps!r}", field=name)


def xi(gamma: float, n_pairs: int, eps_chsh: float, stat_range: float = UNIT_RANGE) -> float:
    _check(gamma, n_pairs, eps_chsh, "eps_chsh")
    n = n_test_rounds(gamma, n_pairs)
    return stat_range * math.sqrt(math.log(1.0 / eps_chsh) / (2 * n))


def nu(gamma: float, n_pairs: int, eps_qpq: float, stat_range: float = UNIT_RANGE) -> float:
    _check(gamma, n_pairs, eps_qpq, "eps_qpq")
    N = n_pairs
    n = n_test_rounds(gamma, N)
    m = n_key_rounds(gamma, N)
    return stat_range * math.sqrt((N - n + 1) * m * m * math.log(1.0 / eps_qpq) / (2 * n * N**3))


@dataclass(frozen=True)
class ConcentrationBounds:
    xi: float
    nu: float
    eps_chsh: float
    eps_qpq: float
    stat_range: float = UNIT_RANGE

    @classmethod
    def compute(
        cls, gamma: float, n_pairs: int, eps_chsh: float, eps_qpq: float, stat_range: float = UNIT_RANGE
    ) -> "ConcentrationBounds":
        return cls(
            xi(gamma, n_pairs, eps_chsh, stat_range),
            nu(gamma, n_pairs, eps_qpq, stat_range),
            eps_chsh,
            eps_qpq,
            stat_range,
        )


def key_subset_deviation(gamma: float, n_pairs: int, eps_qpq: float, stat_range: float = UNIT_RANGE) -> float:
    """Bound on ``|I_test - I_key|`` implied by ``nu``: ``N / floor((1-gamma)N) * nu``."""
    return n_pairs / n_key_rounds(gamma, n_pairs) * nu(gamma, n_pairs, eps_qpq, stat_range)


def hoeffding_failure_allowance(eps_chsh: float, repetitions: int) -> float:
    """Largest empirical failure fraction consistent with the bound: ``eps + 3 sqrt(eps(1-eps)/R)``."""
    return eps_chsh + 3.0 * math.sqrt(eps_chsh * (1.0 - eps_chsh) / repetitions)


@dataclass
class ConcentrationReport:
    repetitions: int
    failures: int
    xi: float
    expected: float
    allowance: float
    deviations: list

    @property
    def failure_fraction(self) -> float:
        return self.failures / self.repetitions

    @property
    def within_bound(self) -> bool:
        return self.failure_fraction <= self.allowance


def validate_concentration(
    params,
    repetitions: int,
    stat_range: float = CHSH_RANGE,
    xi_override: float | None = None,
    source=None,
    workers: int = 1,
) -> ConcentrationReport:
    """Repeat honest certification and count ``|I - I_expected| >= xi``.

    Repetition ``r`` uses seed ``derive_seed(params.seed, 8, r)``. The expected
    value is the threshold of ``params`` (at ``eta = 1`` this is the ideal value).
    """
    from dataclasses import replace

    from .protocol import chsh_threshold, derive_seed, run_certification
    from .quantum import make_biased_state

    if repetitions < 1:
        raise DomainError(f"repetitions must be >= 1, got {repetitions!r}", field="repetitions")
    margin = xi(params.gamma, params.n_pairs, params.eps_chsh, stat_range) if xi_override is None else xi_override
    expected = chsh_threshold(params)
    state = make_biased_state(params.theta, params.agreed_epsilon) if source is None else source
    devs = []
    for r in range(repetitions):
        res = run_certification(replace(params, seed=derive_seed(params.seed, 8, r)), state, workers=workers)
        devs.append(abs(res.observed - expected))
    failures = sum(d >= margin for d in devs)
    return ConcentrationReport(
        repetitions, failures, margin, expected, hoeffding_failure_allowance(params.eps_chsh, repetitions), devs
    )
