"""Biased-source attack: Alice hands Bob an unbalanced state and hides the
resulting drop in CHSH value behind inefficient detectors.

The pipeline is fixed: prepare the biased state, run the Bell rounds, let
``AdversarialClicks`` suppress clicks so the conditional CHSH value climbs
towards ``4 + (S' - 4)(3 - 2/eta)``, then certify. If Bob proceeds, Alice's
conclusive rate in the key phase is measured against
``(1/2 + 2 eps^2) sin^2 theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from . import bell
from .bell import AttackRegion
from .detectors import AdversarialClicks
from .errors import DomainError
from .protocol import (
    CertificationResult,
    ProtocolParams,
    alice_guess_success,
    derive_seed,
    qpq_rounds,
    run_certification,
)
from .quantum import TwoQubitState, make_biased_state


@dataclass(frozen=True)
class BiasedSourceSpec:
    theta: float
    epsilon: float

    def __post_init__(self) -> None:
        if not (-0.5 < self.epsilon < 0.5):
            raise DomainError(f"bias epsilon must lie in (-1/2, 1/2), got {self.epsilon!r}", field="epsilon")
        if not (0.0 < self.theta <= math.pi / 2):
            raise DomainError(f"theta must lie in (0, pi/2], got {self.theta!r}", field="theta")

    @property
    def alpha(self) -> float:
        return math.sqrt(0.5 + self.epsilon)

    @property
    def beta(self) -> float:
        return math.sqrt(0.5 - self.epsilon)

    def state(self) -> TwoQubitState:
        return make_biased_state(self.theta, self.epsilon)


@dataclass
class AttackOutcome:
    region: AttackRegion
    certification_passed: bool
    alice_known_fraction: float
    analytic_guess_rate: float
    # what the adversary aims for vs what the click policy produced
    target_chsh: float
    observed_chsh: float
    threshold: float
    certification: CertificationResult

    @property
    def target_gap(self) -> float:
        return self.target_chsh - self.observed_chsh


def attack_advantage(theta: float, epsilon: float) -> float:
    """Extra conclusive fraction the bias buys Alice: ``2 eps^2 sin^2 theta``."""
    return alice_guess_success(theta, epsilon) - alice_guess_success(theta, 0.0)


def evaluate_attack(
    params: ProtocolParams,
    epsilon: float,
    key_rounds: int | None = None,
    workers: int = 1,
) -> AttackOutcome:
    """Run the full attack against ``params`` (whose ``variant`` picks the certifier).

    The key phase uses the bias-matched basis coin ``P(basis 1) = alpha^2``,
    under which Alice's conclusive rate is ``(1/2 + 2 eps^2) sin^2 theta``.
    ``key_rounds`` defaults to ``params.n_key`` and is only used on Proceed.
    """
    spec = BiasedSourceSpec(params.theta, epsilon)
    region = bell.classify_attack_region(params.theta, params.psi1, params.psi2, epsilon, params.eta)
    cert = run_certification(params, spec.state(), AdversarialClicks(params.eta), workers=workers)
    known = math.nan
    if cert.verdict.proceed:
        n = params.n_key if key_rounds is None else key_rounds
        raw = qpq_rounds(spec.state(), params.theta, n, derive_seed(params.seed, 4), spec.alpha**2)
        known = raw.known_fraction()
    return AttackOutcome(
        region=region,
        certification_passed=cert.verdict.proceed,
        alice_known_fraction=known,
        analytic_guess_rate=alice_guess_success(params.theta, epsilon),
        target_chsh=bell.attack_chsh_value(params.theta, params.psi1, params.psi2, epsilon, params.eta),
        observed_chsh=cert.observed,
        threshold=cert.threshold,
        certification=cert,
    )


def pass_frequency(params: ProtocolParams, epsilon: float, repetitions: int, workers: int = 1) -> float:
    """Fraction of ``repetitions`` independent attack runs that Bob lets through."""
    passed = 0
    for r in range(repetitions):
        p = replace(params, seed=derive_seed(params.seed, 8, r))
        cert = run_certification(p, make_biased_state(p.theta, epsilon), AdversarialClicks(p.eta), workers=workers)
        passed += cert.verdict.proceed
    return passed / repetitions
