"""End-to-end device-independent QPQ runs: certification on the test subset,
raw-key generation on the key subset, block-XOR dilution and the one-bit
database query.

Randomness: every random draw comes from a ``numpy`` generator seeded by
``SeedSequence([seed, stream, chunk])``; Bell rounds are produced in chunks of
``detectors.CHUNK`` rounds, so the same seed gives the same records however
many worker threads are used.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import bell
from .bell import ChshBases, GameStats, TestStats
from .detectors import (
    CHUNK,
    HonestClicks,
    InsufficientDataError,
    TrialRecords,
    conditional_chsh_error,
    conditional_correlators,
    combine,
    estimate_eta,
    zero_fill_chsh,
    zero_fill_chsh_error,
)
from .errors import ConfigError, DomainError, RestartRequired
from .finite_stats import CHSH_RANGE, GAME_RANGE, UNIT_RANGE, n_key_rounds, n_test_rounds, xi
from .quantum import (
    COMPUTATIONAL,
    QubitBasis,
    TwoQubitState,
    joint_distribution,
    sample_outcome,
    sample_outcomes,
)

STREAM_BELL = 1
STREAM_QPQ = 4
STREAM_DILUTION = 5
STREAM_LOSS = 6
STREAM_ATTEMPT = 7
STREAM_REPETITION = 8

VARIANTS = ("corrected", "mrt17")
XI_RANGES = ("hoeffding", "printed")


def derive_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ProtocolParams:
    """Run parameters.

    ``variant`` picks the certification threshold: ``"corrected"`` compares
    against the efficiency-corrected value at ``eta``, ``"mrt17"`` against the
    perfect-detector value (what a certifier that assumes ``eta = 1`` uses).
    ``agreed_epsilon`` is the bias of an agreed epsilon-close source (0 for
    the standard state). ``xi_range`` selects the finite-sample margin:
    ``"hoeffding"`` scales it by the statistic's range, ``"printed"`` uses
    the width-1 constant.
    """

    theta: float
    psi1: float = math.pi / 4
    psi2: float = 3 * math.pi / 4
    gamma: float = 0.5
    n_pairs: int = 1000
    eta: float = 1.0
    eps_chsh: float = 1e-6
    eps_qpq: float = 1e-6
    seed: int = 0
    variant: str = "corrected"
    agreed_epsilon: float = 0.0
    loss: float = 0.0
    xi_range: str = "hoeffding"

    def __post_init__(self) -> None:
        bell.validate_angles(self.theta, self.psi1, self.psi2)
        if not (0.0 < self.gamma < 1.0):
            raise DomainError(f"gamma must lie in (0, 1), got {self.gamma!r}", field="gamma")
        if int(self.n_pairs) != self.n_pairs or self.n_pairs < 4:
            raise DomainError(f"N must be an integer >= 4, got {self.n_pairs!r}", field="n_pairs")
        if not (0.0 < self.eta <= 1.0):
            raise DomainError(f"eta must lie in (0, 1], got {self.eta!r}", field="eta")
        for name in ("eps_chsh", "eps_qpq"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise DomainError(f"{name} must lie in (0, 1), got {v!r}", field=name)
        if not (0 <= int(self.seed) < 2**64):
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}", field="seed")
        if self.variant not in VARIANTS:
            raise DomainError(f"variant must be one of {VARIANTS}, got {self.variant!r}", field="variant")
        if not (-0.5 < self.agreed_epsilon < 0.5):
            raise DomainError(
                f"agreed_epsilon must lie in (-1/2, 1/2), got {self.agreed_epsilon!r}", field="agreed_epsilon"
            )
        if not (0.0 <= self.loss < 1.0):
            raise DomainError(f"loss must lie in [0, 1), got {self.loss!r}", field="loss")
        if self.xi_range not in XI_RANGES:
            raise DomainError(f"xi_range must be one of {XI_RANGES}, got {self.xi_range!r}", field="xi_range")
        object.__setattr__(self, "n_pairs", int(self.n_pairs))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_test(self) -> int:
        return n_test_rounds(self.gamma, self.n_pairs)

    @property
    def n_key(self) -> int:
        return n_key_rounds(self.gamma, self.n_pairs)


# -- analytic helpers -------------------------------------------------------


def alice_guess_success(theta: float, epsilon: float) -> float:
    if not (-0.5 < epsilon < 0.5):
        raise DomainError(f"bias epsilon must lie in (-1/2, 1/2), got {epsilon!r}", field="epsilon")
    return (0.5 + 2 * epsilon**2) * math.sin(theta) ** 2


def epsilon_close_threshold(theta: float, psi1: float, psi2: float, eta: float, epsilon: float) -> float:
    """Threshold when both parties agree on the biased source with bias ``epsilon``.

    Same expression as ``bell.attack_chsh_value``: the agreed state is the
    attacker's state, now announced.
    """
    if eta <= bell.ETA_LOOPHOLE:
        raise DomainError(f"eta={eta!r} at or below the detection-loophole bound", field="eta")
    return bell.attack_chsh_value(theta, psi1, psi2, epsilon, eta)


def chsh_threshold(params: ProtocolParams) -> float:
    eta = params.eta if params.variant == "corrected" else 1.0
    return epsilon_close_threshold(params.theta, params.psi1, params.psi2, eta, params.agreed_epsilon)


# -- Bell rounds and certification ----------------------------------------


def _bell_chunk(tables: np.ndarray, seed: int, chunk: int, start: int, stop: int) -> TrialRecords:
    rng = np.random.default_rng(np.random.SeedSequence([seed, STREAM_BELL, chunk]))
    n = stop - start
    x = rng.integers(0, 2, n, dtype=np.int8)
    y = rng.integers(0, 2, n, dtype=np.int8)
    a, b = sample_outcomes(tables, 2 * x.astype(np.int64) + y, rng)
    return TrialRecords(np.arange(start, stop), x, y, a, b)


def bell_rounds(
    state: TwoQubitState, bases: ChshBases, n: int, seed: int, workers: int = 1
) -> TrialRecords:
    """``n`` rounds with uniform settings and perfect detection."""
    tables = bases.tables(state)
    jobs = [(c, s, min(s + CHUNK, n)) for c, s in enumerate(range(0, n, CHUNK))]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda j: _bell_chunk(tables, seed, *j), jobs))
    else:
        parts = [_bell_chunk(tables, seed, *j) for j in jobs]
    return TrialRecords.merge(parts)


@dataclass(frozen=True)
class Verdict:
    proceed: bool
    reason: str | None = None

    def __str__(self) -> str:
        return "Proceed" if self.proceed else f"Abort({self.reason})"


PROCEED = Verdict(True)


@dataclass
class CertificationResult:
    method: str
    stats: GameStats | TestStats | None
    verdict: Verdict
    threshold: float
    xi: float
    eta_hat: float
    records: TrialRecords

    @property
    def observed(self) -> float:
        if self.stats is None:
            return math.nan
        return self.stats.Y if isinstance(self.stats, GameStats) else self.stats.I


def run_certification(
    params: ProtocolParams,
    source: TwoQubitState,
    clicks=None,
    method: str = "test",
    estimator: str = "conditional",
    seed: int | None = None,
    workers: int = 1,
) -> CertificationResult:
    """Run the ``ceil(gamma N)`` Bell rounds and decide whether to proceed.

    ``clicks`` is a click policy (default: honest detectors of efficiency
    ``params.eta``). Proceeds iff the observed statistic is at least the
    threshold minus the finite-sample margin. Aborts with reason
    ``"detection-loophole-open"`` when the measured efficiency is at or below
    ``2/(1+sqrt 2)``, and ``"insufficient-data"`` when a setting has no
    fully-clicked round.
    """
    if method not in ("test", "game"):
        raise ValueError(f"method must be 'test' or 'game', got {method!r}")
    if estimator not in ("conditional", "zero_fill"):
        raise ValueError(f"estimator must be 'conditional' or 'zero_fill', got {estimator!r}")
    seed = params.seed if seed is None else seed
    clicks = HonestClicks(params.eta) if clicks is None else clicks
    bases = ChshBases.standard(params.psi1, params.psi2)
    records = clicks.apply(bell_rounds(source, bases, params.n_test, seed, workers), seed)

    stat_range = CHSH_RANGE if method == "test" else GAME_RANGE
    if params.xi_range == "printed":
        stat_range = UNIT_RANGE
    margin = xi(params.gamma, params.n_pairs, params.eps_chsh, stat_range)
    eta_hat = estimate_eta(records)

    def abort(reason: str, stats=None, threshold=math.nan) -> CertificationResult:
        return CertificationResult(method, stats, Verdict(False, reason), threshold, margin, eta_hat, records)

    if eta_hat <= bell.ETA_LOOPHOLE:
        return abort("detection-loophole-open")
    if params.variant == "corrected" and params.eta <= bell.ETA_LOOPHOLE:
        return abort("detection-loophole-open")
    chsh_t = chsh_threshold(params)

    if method == "game":
        threshold = 0.5 + chsh_t / 8
        both = records.both_clicked
        scores = np.where(both, ((records.a ^ records.b) == (records.x & records.y)), False).astype(np.int8)
        stats = GameStats.from_scores(scores, threshold)
        observed = stats.Y
    else:
        threshold = chsh_t
        ideal = bell.biased_chsh_value(params.theta, params.psi1, params.psi2, params.agreed_epsilon)
        try:
            if estimator == "conditional":
                E, _ = conditional_correlators(records)
                stats = TestStats(combine(E), ideal, threshold, conditional_chsh_error(records), E)
            else:
                stats = TestStats(zero_fill_chsh(records), ideal, threshold, zero_fill_chsh_error(records))
        except InsufficientDataError:
            return abort("insufficient-data", threshold=threshold)
        observed = stats.I

    if observed >= threshold - margin:
        return CertificationResult(method, stats, PROCEED, threshold, margin, eta_hat, records)
    return abort("below-threshold", stats, threshold)


# -- key phase --------------------------------------------------------------


class AliceKnowledge(enum.IntEnum):
    INCONCLUSIVE = -1
    ZERO = 0
    ONE = 1


def alice_bases(theta: float) -> tuple[QubitBasis, QubitBasis]:
    """Alice's two key-phase bases: ``{phi0, phi0-perp}`` and ``{phi1, phi1-perp}``."""
    return QubitBasis(theta), QubitBasis(-theta)


# Seeing phi0-perp rules out Bob holding 0, seeing phi1-perp rules out 1.
_CONCLUSIVE_BIT = (AliceKnowledge.ONE, AliceKnowledge.ZERO)


def qpq_round(
    state: TwoQubitState, theta: float, rng: np.random.Generator, alice_basis_p1: float = 0.5
) -> tuple[int, AliceKnowledge]:
    """One key-phase pair: Bob measures Z, Alice picks basis 1 with probability ``alice_basis_p1``."""
    c = int(rng.random() < alice_basis_p1)
    bob_bit, outcome = sample_outcome(joint_distribution(state, COMPUTATIONAL, alice_bases(theta)[c]), rng)
    return bob_bit, (_CONCLUSIVE_BIT[c] if outcome == 1 else AliceKnowledge.INCONCLUSIVE)


@dataclass
class RawKey:
    bob_bits: np.ndarray
    alice_known: np.ndarray  # AliceKnowledge values

    def __post_init__(self) -> None:
        self.bob_bits = np.asarray(self.bob_bits, dtype=np.uint8)
        self.alice_known = np.asarray(self.alice_known, dtype=np.int8)
        if self.bob_bits.shape != self.alice_known.shape:
            raise ValueError("bob_bits and alice_known must have the same length")

    def __len__(self) -> int:
        return len(self.bob_bits)

    @property
    def conclusive(self) -> np.ndarray:
        return self.alice_known != AliceKnowledge.INCONCLUSIVE

    def known_fraction(self) -> float:
        return float(self.conclusive.mean()) if len(self) else 0.0

    def mismatches(self) -> int:
        c = self.conclusive
        return int(np.count_nonzero(self.alice_known[c] != self.bob_bits[c]))


def qpq_rounds(
    state: TwoQubitState,
    theta: float,
    n: int,
    seed: int,
    alice_basis_p1: float = 0.5,
    loss: float = 0.0,
) -> RawKey:
    """Vectorized key phase over ``n`` pairs; pairs Alice reports as lost are dropped."""
    b0, b1 = alice_bases(theta)
    tables = np.array([joint_distribution(state, COMPUTATIONAL, b0), joint_distribution(state, COMPUTATIONAL, b1)])
    bits = []
    known = []
    for c, start in enumerate(range(0, n, CHUNK)):
        m = min(start + CHUNK, n) - start
        rng = np.random.default_rng(np.random.SeedSequence([seed, STREAM_QPQ, c]))
        basis = (rng.random(m) < alice_basis_p1).astype(np.int64)
        bob, out = sample_outcomes(tables, basis, rng)
        status = np.where(out == 1, np.where(basis == 0, 1, 0), -1).astype(np.int8)
        if loss > 0.0:
            keep = np.random.default_rng(np.random.SeedSequence([seed, STREAM_LOSS, c])).random(m) >= loss
            bob, status = bob[keep], status[keep]
        bits.append(bob)
        known.append(status)
    if not bits:
        return RawKey(np.zeros(0, np.uint8), np.zeros(0, np.int8))
    return RawKey(np.concatenate(bits), np.concatenate(known))


# -- dilution and query -----------------------------------------------------


def block_size_for(known_rate: float, final_length: int, target_known: float = 1.0) -> int:
    """Smallest block size ``k`` with ``final_length * known_rate**k <= target_known``."""
    if not (0.0 <= known_rate < 1.0):
        raise DomainError(f"per-bit knowledge rate must lie in [0, 1), got {known_rate!r}")
    if known_rate == 0.0 or final_length <= target_known:
        return 1
    return max(1, math.ceil(math.log(final_length / target_known) / math.log(1.0 / known_rate) - 1e-12))


@dataclass
class FinalKey:
    bits: np.ndarray
    alice_bits: np.ndarray  # -1 where Alice does not know the bit
    block_size: int

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def known_positions(self) -> np.ndarray:
        return np.flatnonzero(self.alice_bits >= 0)


def dilute_key(
    raw: RawKey, block_size: int, final_length: int | None = None, rng: np.random.Generator | None = None
) -> FinalKey:
    """XOR disjoint blocks of ``block_size`` raw bits into one final bit each.

    With ``rng`` the raw positions are shuffled first (Bob's announced
    partition). Alice knows a final bit only if she knows every bit of its block.
    """
    if block_size < 1:
        raise DomainError(f"block size must be >= 1, got {block_size!r}")
    if not raw.conclusive.any():
        raise RestartRequired("Alice holds no conclusive raw-key bit")
    L = len(raw) // block_size if final_length is None else final_length
    need = L * block_size
    if need > len(raw):
        raise DomainError(f"raw key has {len(raw)} bits, dilution needs {need}", field="n_pairs")
    order = rng.permutation(len(raw))[:need] if rng is not None else np.arange(need)
    bob = raw.bob_bits[order].reshape(L, block_size)
    alice = raw.alice_known[order].reshape(L, block_size)
    bits = np.bitwise_xor.reduce(bob, axis=1).astype(np.uint8)
    known = (alice >= 0).all(axis=1)
    alice_bits = np.where(known, np.bitwise_xor.reduce(np.maximum(alice, 0), axis=1), -1).astype(np.int8)
    return FinalKey(bits, alice_bits, block_size)


@dataclass(frozen=True)
class Database:
    items: np.ndarray

    def __post_init__(self) -> None:
        items = np.asarray(self.items, dtype=np.uint8)
        if items.ndim != 1 or len(items) < 1:
            raise DomainError("database needs at least one item")
        if np.any(items > 1):
            raise DomainError("database items are single bits")
        object.__setattr__(self, "items", items)

    def __len__(self) -> int:
        return len(self.items)

    @classmethod
    def from_text(cls, text: str) -> "Database":
        bits = [c for c in text if not c.isspace()]
        if any(c not in "01" for c in bits):
            raise DomainError("database file must contain only 0/1 characters")
        return cls(np.array([int(c) for c in bits], dtype=np.uint8))


@dataclass(frozen=True)
class QueryResult:
    alice_index: int
    known_position: int
    shift: int
    retrieved: int
    # how many items Alice could decrypt with everything she knows
    items_readable: int


def execute_query(
    key: FinalKey, database: Database, alice_index: int, known_position: int | None = None
) -> QueryResult:
    """Alice announces the shift ``s = j - i (mod M)``; Bob rotates his key by ``s``
    and one-time-pads the database; Alice reads item ``i`` with her bit at ``j``."""
    M = len(database)
    if len(key) != M:
        raise ConfigError(f"final key has {len(key)} bits but the database has {M} items")
    if not (0 <= alice_index < M):
        raise DomainError(f"query index must lie in [0, {M}), got {alice_index!r}", field="index")
    known = key.known_positions
    if known_position is None:
        if len(known) == 0:
            raise RestartRequired("Alice knows no bit of the final key")
        known_position = int(known[0])
    elif key.alice_bits[known_position] < 0:
        raise DomainError(f"Alice does not know final-key bit {known_position}")
    shift = (known_position - alice_index) % M
    # Bob's side: only the shift is revealed to him
    shifted = np.roll(key.bits, -shift)
    cipher = database.items ^ shifted
    # Alice's side
    retrieved = int(cipher[alice_index] ^ key.alice_bits[known_position])
    return QueryResult(alice_index, known_position, shift, retrieved, len(known))


# -- full run ---------------------------------------------------------------


@dataclass
class Transcript:
    params: ProtocolParams
    method: str
    source: str
    policy: str
    records: TrialRecords
    verdict: Verdict
    observed: float
    threshold: float
    xi: float
    eta_hat: float
    attempts: int = 1
    raw_key: RawKey | None = None
    final_key: FinalKey | None = None
    query: QueryResult | None = None

    def __post_init__(self) -> None:
        if not self.verdict.proceed and self.raw_key is not None:
            raise ValueError("an aborted run carries no raw key")


def describe_source(state: TwoQubitState) -> str:
    return " ".join(repr(complex(a)) for a in (state.amp00, state.amp01, state.amp10, state.amp11))


def run_full_protocol(
    params: ProtocolParams,
    source: TwoQubitState,
    database: Database,
    alice_index: int,
    clicks=None,
    method: str = "test",
    alice_basis_p1: float = 0.5,
    max_attempts: int = 8,
    workers: int = 1,
) -> Transcript:
    """Certification, then (on Proceed) key phase, dilution and query.

    Bob sizes the dilution from the knowledge rate he expects for the agreed
    source, ``(1/2 + 2 eps^2) sin^2 theta``. When Alice ends up knowing no
    final-key bit the whole run is repeated on fresh pairs, up to
    ``max_attempts`` times.
    """
    if not (0 <= alice_index < len(database)):
        raise DomainError(f"query index must lie in [0, {len(database)}), got {alice_index!r}", field="index")
    clicks = HonestClicks(params.eta) if clicks is None else clicks
    M = len(database)
    k = block_size_for(alice_guess_success(params.theta, params.agreed_epsilon), M)
    for attempt in range(max_attempts):
        seed = params.seed if attempt == 0 else derive_seed(params.seed, STREAM_ATTEMPT, attempt)
        cert = run_certification(params, source, clicks, method, seed=seed, workers=workers)
        base = dict(
            params=params, method=method, source=describe_source(source), policy=repr(clicks),
            records=cert.records, verdict=cert.verdict, observed=cert.observed,
            threshold=cert.threshold, xi=cert.xi, eta_hat=cert.eta_hat, attempts=attempt + 1,
        )
        if not cert.verdict.proceed:
            return Transcript(**base)
        raw = qpq_rounds(source, params.theta, params.n_key, seed, alice_basis_p1, params.loss)
        if len(raw) < M * k:
            raise DomainError(
                f"key phase gave {len(raw)} raw bits; {M} items with block size {k} need {M * k}",
                field="n_pairs",
            )
        rng = np.random.default_rng(np.random.SeedSequence([seed, STREAM_DILUTION]))
        try:
            final = dilute_key(raw, k, M, rng)
            query = execute_query(final, database, alice_index)
        except RestartRequired:
            continue
        return Transcript(**base, raw_key=raw, final_key=final, query=query)
    raise RestartRequired(f"Alice knew no final-key bit in {max_attempts} attempts")

