"""Click/no-click detection: trial records, click policies and the
subensemble-conditioned CHSH estimators.

Conditional correlators for settings (j, k) average only over the trials
with those settings in which both detectors clicked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bell import SETTING_WEIGHT, delta_lower_bound
from .errors import DomainError, InsufficientDataError

NOCLICK = -1
CHUNK = 1 << 16


@dataclass(frozen=True)
class DetectorSpec:
    eta: float

    def __post_init__(self) -> None:
        if not (0.0 < self.eta <= 1.0):
            raise DomainError(f"detection efficiency must lie in (0, 1], got {self.eta!r}", field="eta")


@dataclass(frozen=True)
class TrialRecord:
    index: int
    x: int
    y: int
    a: int
    b: int

    @property
    def clicked(self) -> bool:
        return self.a != NOCLICK and self.b != NOCLICK


class TrialRecords:
    """Column store of Bell rounds. ``a``/``b`` hold 0, 1 or ``NOCLICK``."""

    def __init__(self, index, x, y, a, b) -> None:
        self.index = np.asarray(index, dtype=np.int64)
        self.x = np.asarray(x, dtype=np.int8)
        self.y = np.asarray(y, dtype=np.int8)
        self.a = np.asarray(a, dtype=np.int8)
        self.b = np.asarray(b, dtype=np.int8)
        n = len(self.index)
        if not all(len(col) == n for col in (self.x, self.y, self.a, self.b)):
            raise ValueError("record columns must have equal length")

    @classmethod
    def from_records(cls, records) -> "TrialRecords":
        rows = list(records)
        cols = list(zip(*[(r.index, r.x, r.y, r.a, r.b) for r in rows])) or [()] * 5
        return cls(*cols)

    @classmethod
    def merge(cls, parts) -> "TrialRecords":
        """Concatenate and sort by trial index, so merge order never matters."""
        parts = list(parts)
        if not parts:
            return cls([], [], [], [], [])
        cat = {k: np.concatenate([getattr(p, k) for p in parts]) for k in ("index", "x", "y", "a", "b")}
        order = np.argsort(cat["index"], kind="stable")
        return cls(*(cat[k][order] for k in ("index", "x", "y", "a", "b")))

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, i: int) -> TrialRecord:
        return TrialRecord(int(self.index[i]), int(self.x[i]), int(self.y[i]), int(self.a[i]), int(self.b[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrialRecords):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k)) for k in ("index", "x", "y", "a", "b")
        )

    @property
    def clicked_a(self) -> np.ndarray:
        return self.a != NOCLICK

    @property
    def clicked_b(self) -> np.ndarray:
        return self.b != NOCLICK

    @property
    def both_clicked(self) -> np.ndarray:
        return self.clicked_a & self.clicked_b

    def with_clicks(self, click_a: np.ndarray, click_b: np.ndarray) -> "TrialRecords":
        a = np.where(click_a, self.a, NOCLICK)
        b = np.where(click_b, self.b, NOCLICK)
        return TrialRecords(self.index, self.x, self.y, a, b)


# -- click policies ---------------------------------------------------------


def honest_click_policy(eta: float, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Independent per-particle clicks with probability ``eta``, blind to settings and outcomes."""
    DetectorSpec(eta)
    if eta == 1.0:
        return np.ones(size, dtype=bool), np.ones(size, dtype=bool)
    u = rng.random((2, size))
    return u[0] < eta, u[1] < eta


def _chunk_rng(seed: int, stream: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, chunk]))


class HonestClicks:
    """Detectors of efficiency ``eta`` that fail at random."""

    STREAM = 2

    def __init__(self, eta: float = 1.0) -> None:
        self.eta = DetectorSpec(eta).eta

    def apply(self, records: TrialRecords, seed: int) -> TrialRecords:
        n = len(records)
        ca = np.empty(n, dtype=bool)
        cb = np.empty(n, dtype=bool)
        # one stream per fixed-size chunk keeps draws independent of how work is split
        for c, start in enumerate(range(0, n, CHUNK)):
            stop = min(start + CHUNK, n)
            ca[start:stop], cb[start:stop] = honest_click_policy(self.eta, _chunk_rng(seed, self.STREAM, c), stop - start)
        return records.with_clicks(ca, cb)

    def __repr__(self) -> str:
        return f"HonestClicks(eta={self.eta})"


class AdversarialClicks:
    """Outcome-aware click suppression that post-selects the CHSH statistic upward.

    Trials are visited in index order. A trial whose outcome scores -1 in the
    CHSH sum, i.e. ``(-1)**(a^b^(x&y)) == -1``, is suppressed whenever keeping
    it would pull that setting's conditional correlator below the target
    ``(1 - delta) + delta * E_raw``, where ``delta = 3 - 2/eta`` and ``E_raw``
    is the running correlator of the unfiltered stream. Summed over settings
    this aims at ``4 + (S - 4) delta``, the largest value the detection
    loophole permits for a source with CHSH value ``S``.

    Suppression drops the click on whichever side (X for Bob's first particle,
    Y for the second) has more slack, preferring X on ties, and is refused
    when it would push that side's per-setting click rate below ``eta``.
    Afterwards random clicks are removed until every per-setting rate is
    ``ceil(eta * n) / n``, so the device looks like an efficiency-``eta``
    detector. The random padding does not bias the conditional correlators.
    """

    STREAM = 3

    def __init__(self, eta: float) -> None:
        self.eta = DetectorSpec(eta).eta
        self.delta = min(1.0, delta_lower_bound(self.eta))

    def __repr__(self) -> str:
        return f"AdversarialClicks(eta={self.eta})"

    def suppress(self, records: TrialRecords) -> tuple[np.ndarray, np.ndarray]:
        """Greedy pass only; returns the click masks before padding."""
        n = len(records)
        ca = np.ones(n, dtype=bool)
        cb = np.ones(n, dtype=bool)
        if self.eta == 1.0 or n == 0:
            return ca, cb
        x = records.x.astype(np.int64)
        y = records.y.astype(np.int64)
        setting = 2 * x + y
        good = ((records.a ^ records.b ^ (records.x & records.y)) == 0)
        seen = np.empty(n, dtype=np.int64)
        good_seen = np.empty(n, dtype=np.int64)
        n_x = np.empty(n, dtype=np.int64)
        n_y = np.empty(n, dtype=np.int64)
        for s in range(4):
            m = setting == s
            seen[m] = np.arange(1, m.sum() + 1)
            good_seen[m] = np.cumsum(good[m])
        for j in range(2):
            m = x == j
            n_x[m] = np.arange(1, m.sum() + 1)
            m = y == j
            n_y[m] = np.arange(1, m.sum() + 1)

        bad = np.flatnonzero(~good)
        delta, eta = self.delta, self.eta
        kept_bad = [0, 0, 0, 0]
        drop_x = [0, 0]
        drop_y = [0, 0]
        rows = zip(
            bad.tolist(), setting[bad].tolist(), x[bad].tolist(), y[bad].tolist(),
            seen[bad].tolist(), good_seen[bad].tolist(), n_x[bad].tolist(), n_y[bad].tolist(),
        )
        for i, s, xi, yi, k, g, nx, ny in rows:
            target = min(1.0, (1.0 - delta) + delta * (2 * g - k) / k)
            kb = kept_bad[s]
            if (g - kb - 1) / (g + kb + 1) >= target:
                kept_bad[s] = kb + 1
                continue
            slack_x = (nx - drop_x[xi] - 1) - eta * nx
            slack_y = (ny - drop_y[yi] - 1) - eta * ny
            if slack_x >= 0 and slack_x >= slack_y:
                drop_x[xi] += 1
                ca[i] = False
            elif slack_y >= 0:
                drop_y[yi] += 1
                cb[i] = False
            else:
                kept_bad[s] = kb + 1
        return ca, cb

    def apply(self, records: TrialRecords, seed: int) -> TrialRecords:
        ca, cb = self.suppress(records)
        if self.eta < 1.0:
            rng = _chunk_rng(seed, self.STREAM, 0)
            for side, clicks in ((records.x, ca), (records.y, cb)):
                for j in (0, 1):
                    members = np.flatnonzero(side == j)
                    target = math.ceil(self.eta * len(members) - 1e-9)
                    live = members[clicks[members]]
                    excess = len(live) - target
                    if excess > 0:
                        clicks[rng.choice(live, size=excess, replace=False)] = False
        return records.with_clicks(ca, cb)


# -- estimators -------------------------------------------------------------


@dataclass
class SubensembleStats:
    per_setting_counts: np.ndarray  # [x, y, (both clicked, total)]
    conditional_E: np.ndarray  # [x, y]
    estimated_eta: float


def conditional_correlators(records: TrialRecords) -> tuple[np.ndarray, np.ndarray]:
    """Correlators over both-click trials per setting pair, plus the counts used, both 2x2."""
    both = records.both_clicked
    sign = 1 - 2 * (records.a ^ records.b).astype(np.int64)
    E = np.full((2, 2), np.nan)
    counts = np.zeros((2, 2), dtype=np.int64)
    for x in (0, 1):
        for y in (0, 1):
            m = both & (records.x == x) & (records.y == y)
            counts[x, y] = k = int(m.sum())
            if k == 0:
                raise InsufficientDataError(
                    f"no trial with both detectors clicking for setting (x={x}, y={y})", setting=(x, y)
                )
            E[x, y] = sign[m].sum() / k
    return E, counts


def combine(E: np.ndarray) -> float:
    return float(E[0, 0] + E[0, 1] + E[1, 0] - E[1, 1])


def conditional_chsh(records: TrialRecords) -> float:
    E, _ = conditional_correlators(records)
    return combine(E)


def conditional_chsh_error(records: TrialRecords) -> float:
    """Standard error of ``conditional_chsh`` from the per-setting binomial variances."""
    E, counts = conditional_correlators(records)
    return float(np.sqrt(np.sum((1.0 - E**2) / counts)))


def zero_fill_chsh(records: TrialRecords) -> float:
    """Per-round average of ``4 (-1)^(a+b+xy)`` with non-clicking rounds contributing 0."""
    if len(records) == 0:
        raise InsufficientDataError("no trials")
    both = records.both_clicked
    sign = 1 - 2 * (records.a ^ records.b ^ (records.x & records.y)).astype(np.int64)
    return float(SETTING_WEIGHT * np.sum(np.where(both, sign, 0)) / len(records))


def zero_fill_chsh_error(records: TrialRecords) -> float:
    both = records.both_clicked
    sign = 1 - 2 * (records.a ^ records.b ^ (records.x & records.y)).astype(np.int64)
    vals = SETTING_WEIGHT * np.where(both, sign, 0)
    return float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.inf


def side_click_rates(records: TrialRecords) -> np.ndarray:
    """Per-setting click rates, row 0 for Alice and row 1 for Bob (nan if a setting is unused)."""
    rates = np.full((2, 2), np.nan)
    for side, (setting, clicked) in enumerate(((records.x, records.clicked_a), (records.y, records.clicked_b))):
        for j in (0, 1):
            m = setting == j
            k = int(m.sum())
            if k:
                rates[side, j] = clicked[m].sum() / k
    return rates


def estimate_eta(records: TrialRecords) -> float:
    if len(records) == 0:
        raise InsufficientDataError("no trials to estimate efficiency from")
    return float(np.nanmin(side_click_rates(records)))


def subensemble_stats(records: TrialRecords) -> SubensembleStats:
    counts = np.zeros((2, 2, 2), dtype=np.int64)
    both = records.both_clicked
    for x in (0, 1):
        for y in (0, 1):
            m = (records.x == x) & (records.y == y)
            counts[x, y] = (int((both & m).sum()), int(m.sum()))
    E, _ = conditional_correlators(records)
    return SubensembleStats(counts, E, estimate_eta(records))
