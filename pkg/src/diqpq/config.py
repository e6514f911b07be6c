"""Experiment configuration files (TOML, versioned).

Angles carry an explicit ``_rad`` suffix and may be written as numbers or as
arithmetic over ``pi`` (``"3*pi/4"``). Example::

    version = 1

    [protocol]
    theta_rad = "pi/2"
    psi1_rad = "pi/4"
    psi2_rad = "3*pi/4"
    gamma = 0.5
    n_pairs = 1000000
    eta = 1.0
    seed = 7

    [source]
    kind = "biased"        # honest | biased
    epsilon = 0.3

    [detectors]
    policy = "adversarial" # honest | adversarial

Validation errors name the file line of the offending key.
"""

from __future__ import annotations

import ast
import dataclasses
import math
import operator
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .detectors import AdversarialClicks, HonestClicks
from .errors import ConfigError, DomainError
from .protocol import ProtocolParams
from .quantum import TwoQubitState, make_biased_state

CONFIG_VERSION = 1

_ANGLE_KEYS = {"theta_rad": "theta", "psi1_rad": "psi1", "psi2_rad": "psi2"}
_PROTOCOL_KEYS = {f.name for f in dataclasses.fields(ProtocolParams)} - set(_ANGLE_KEYS.values())

_SECTIONS = {
    "protocol": set(_ANGLE_KEYS) | _PROTOCOL_KEYS,
    "source": {"kind", "epsilon"},
    "detectors": {"policy"},
    "run": {"method", "estimator", "repetitions", "workers", "alice_basis", "max_attempts"},
    "scan": {"epsilon_min", "epsilon_max", "eta_min", "eta_max", "resolution"},
    "output": {"transcript", "csv"},
}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}


def parse_angle(value) -> float:
    """Number or arithmetic expression in ``pi`` (``+ - * /``, parentheses)."""
    if isinstance(value, bool):
        raise ValueError("angle must be a number or expression")
    if isinstance(value, (int, float)):
        return float(value)
    if not isinstance(value, str):
        raise ValueError(f"angle must be a number or expression, got {value!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        raise ValueError(f"unsupported angle expression {value!r}")

    try:
        tree = ast.parse(value, mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"unsupported angle expression {value!r}") from exc
    try:
        return ev(tree)
    except ZeroDivisionError as exc:
        raise ValueError(f"division by zero in {value!r}") from exc


@dataclass(frozen=True)
class ScanRange:
    epsilon_min: float = -0.49
    epsilon_max: float = 0.49
    eta_min: float = 0.83
    eta_max: float = 1.0
    resolution: int = 200


@dataclass(frozen=True)
class ExperimentConfig:
    params: ProtocolParams
    source_kind: str = "honest"
    source_epsilon: float = 0.0
    policy: str = "honest"
    method: str = "test"
    estimator: str = "conditional"
    repetitions: int = 1
    workers: int = 1
    alice_basis: str = "uniform"
    max_attempts: int = 8
    scan: ScanRange = field(default_factory=ScanRange)
    transcript_path: str | None = None
    csv_path: str | None = None

    def source(self) -> TwoQubitState:
        eps = self.source_epsilon if self.source_kind == "biased" else self.params.agreed_epsilon
        return make_biased_state(self.params.theta, eps)

    def clicks(self):
        if self.policy == "adversarial":
            return AdversarialClicks(self.params.eta)
        return HonestClicks(self.params.eta)

    def alice_basis_p1(self) -> float:
        """``uniform`` gives 1/2; ``matched`` gives ``1/2 + eps`` of the actual source."""
        if self.alice_basis == "uniform":
            return 0.5
        eps = self.source_epsilon if self.source_kind == "biased" else self.params.agreed_epsilon
        return 0.5 + eps


def _key_line(text: str, section: str | None, key: str) -> int | None:
    current = None
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for n, line in enumerate(text.splitlines(), 1):
        head = re.match(r"^\s*\[([^\]]+)\]", line)
        if head:
            current = head.group(1).strip()
            continue
        if current == section and pat.match(line):
            return n
    return None


def _section_line(text: str, section: str) -> int | None:
    for n, line in enumerate(text.splitlines(), 1):
        if re.match(rf"^\s*\[\s*{re.escape(section)}\s*\]", line):
            return n
    return None


def loads(text: str, path: str | None = None) -> ExperimentConfig:
    def fail(msg: str, section: str | None = None, key: str | None = None):
        line = _key_line(text, section, key) if key else (_section_line(text, section) if section else None)
        raise ConfigError(msg, line, path)

    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", int(m.group(1)) if m else None, path) from exc

    version = data.pop("version", None)
    if version is None:
        raise ConfigError("missing 'version' field", None, path)
    if version != CONFIG_VERSION:
        fail(f"unsupported config version {version!r} (expected {CONFIG_VERSION})", None, "version")
    for name, body in data.items():
        if name not in _SECTIONS or not isinstance(body, dict):
            line = _section_line(text, name) or _key_line(text, None, name)
            raise ConfigError(f"unknown section or key {name!r}", line, path)
        for key in body:
            if key not in _SECTIONS[name]:
                hint = f" (angles need the '_rad' suffix: {key}_rad)" if key in _ANGLE_KEYS.values() else ""
                fail(f"unknown key {name}.{key}{hint}", name, key)

    proto = dict(data.get("protocol", {}))
    if "theta_rad" not in proto:
        fail("protocol.theta_rad is required", "protocol")
    kwargs = {}
    for key, value in proto.items():
        if key in _ANGLE_KEYS:
            try:
                kwargs[_ANGLE_KEYS[key]] = parse_angle(value)
            except ValueError as exc:
                fail(f"protocol.{key}: {exc}", "protocol", key)
        else:
            kwargs[key] = value
    for key in ("n_pairs", "seed"):
        if key in kwargs and (isinstance(kwargs[key], bool) or not isinstance(kwargs[key], int)):
            fail(f"protocol.{key} must be an integer", "protocol", key)
    try:
        params = ProtocolParams(**kwargs)
    except DomainError as exc:
        key = {v: k for k, v in _ANGLE_KEYS.items()}.get(exc.field, exc.field)
        fail(f"protocol.{key}: {exc}", "protocol", key)
    except TypeError as exc:
        fail(f"protocol: {exc}", "protocol")

    def choice(section, key, options, default):
        v = data.get(section, {}).get(key, default)
        if v not in options:
            fail(f"{section}.{key} must be one of {options}, got {v!r}", section, key)
        return v

    def positive_int(section, key, default):
        v = data.get(section, {}).get(key, default)
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            fail(f"{section}.{key} must be a positive integer, got {v!r}", section, key)
        return v

    kind = choice("source", "kind", ("honest", "biased"), "honest")
    eps = data.get("source", {}).get("epsilon", 0.0)
    if isinstance(eps, bool) or not isinstance(eps, (int, float)) or not (-0.5 < eps < 0.5):
        fail(f"source.epsilon must lie in (-1/2, 1/2), got {eps!r}", "source", "epsilon")
    scan_raw = data.get("scan", {})
    try:
        scan = ScanRange(**scan_raw)
    except TypeError as exc:
        fail(f"scan: {exc}", "scan")
    if not (-0.5 < scan.epsilon_min <= scan.epsilon_max < 0.5):
        fail("scan epsilon range must satisfy -1/2 < min <= max < 1/2", "scan", "epsilon_min")
    if not (0.0 < scan.eta_min <= scan.eta_max <= 1.0):
        fail("scan eta range must satisfy 0 < min <= max <= 1", "scan", "eta_min")
    if isinstance(scan.resolution, bool) or not isinstance(scan.resolution, int) or scan.resolution < 1:
        fail("scan.resolution must be a positive integer", "scan", "resolution")
    out = data.get("output", {})
    return ExperimentConfig(
        params=params,
        source_kind=kind,
        source_epsilon=float(eps),
        policy=choice("detectors", "policy", ("honest", "adversarial"), "honest"),
        method=choice("run", "method", ("test", "game"), "test"),
        estimator=choice("run", "estimator", ("conditional", "zero_fill"), "conditional"),
        repetitions=positive_int("run", "repetitions", 1),
        workers=positive_int("run", "workers", 1),
        alice_basis=choice("run", "alice_basis", ("uniform", "matched"), "uniform"),
        max_attempts=positive_int("run", "max_attempts", 8),
        scan=scan,
        transcript_path=out.get("transcript"),
        csv_path=out.get("csv"),
    )


def load(path: str | Path) -> ExperimentConfig:
    return loads(Path(path).read_text(encoding="utf-8"), str(path))
