"""Simulator for device-independent quantum private queries with inefficient detectors."""

from .bell import (
    ETA_LOOPHOLE,
    AttackRegion,
    attack_chsh_value,
    chsh_ideal,
    classify_attack_region,
    threshold_with_eta,
)
from .detectors import AdversarialClicks, HonestClicks, TrialRecords
from .errors import ConfigError, DomainError, InsufficientDataError, RestartRequired
from .protocol import Database, ProtocolParams, run_certification, run_full_protocol
from .quantum import TwoQubitState, make_biased_state, make_honest_state

__version__ = "0.1.0"
