"""Flat-text configuration files: potential definitions and transform ledgers.

Potential file format, one `key = value` per line::

    [system]
    reduced_mass = 3.0

    [component.0]
    kind = pseudo
    alpha = 1.4
    V = free
    r0 = free

    [component.1]
    kind = ordinary
    V = -45.0
    D = 75.0
    alpha = 1.4
    r0 = 2.0

    [joints]
    points = 1.5 2.9
    cutoff = 8.0

Values may be numbers or the literal `free`; free parameters are resolved by
`smooth_join`.  Unknown sections or keys are rejected.

Ledger file format, one operation per line::

    remove E=-20.5
    insert E=-12.0 C=1.5e40
    bargmann a=2.0 b=3.0
"""

from __future__ import annotations

import re
from pathlib import Path

from .errors import ConfigError
from .potential import ComponentSpec, PiecewisePotential, smooth_join
from .units import PhysicalSystem

_SYSTEM_KEYS = {"reduced_mass"}
_COMPONENT_KEYS = {"kind", "V", "D", "alpha", "r0", "asymptote", "branch"}
_JOINTS_KEYS = {"points", "cutoff", "cutoff_tol"}


def _parse_sections(text: str, source: str) -> dict:
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[([A-Za-z0-9_.]+)\]", line)
        if m:
            current = m.group(1)
            if current in sections:
                raise ConfigError(f"{source}:{lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if current is None:
            raise ConfigError(f"{source}:{lineno}: key outside any section")
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in sections[current]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        sections[current][key] = value
    return sections


def _number_or_free(value: str, where: str):
    if value == "free":
        return None
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{where}: expected number or 'free', got {value!r}") from None


def load_potential_config(path) -> PiecewisePotential:
    """Parse a potential config file and build the joined potential."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    sections = _parse_sections(text, str(path))

    if "system" not in sections:
        raise ConfigError(f"{path}: missing [system] section")
    unknown = set(sections["system"]) - _SYSTEM_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown [system] keys {sorted(unknown)}")
    try:
        mass = float(sections["system"]["reduced_mass"])
    except KeyError:
        raise ConfigError(f"{path}: [system] requires reduced_mass") from None
    except ValueError:
        raise ConfigError(f"{path}: reduced_mass must be a number") from None
    system = PhysicalSystem.from_mass(mass)

    comp_names = sorted(
        (name for name in sections if name.startswith("component.")),
        key=lambda s: int(s.split(".", 1)[1]),
    )
    if not comp_names:
        raise ConfigError(f"{path}: no [component.k] sections")
    expected = [f"component.{i}" for i in range(len(comp_names))]
    if comp_names != expected:
        raise ConfigError(f"{path}: component indices must be 0..{len(comp_names)-1}")

    extra = set(sections) - set(comp_names) - {"system", "joints"}
    if extra:
        raise ConfigError(f"{path}: unknown sections {sorted(extra)}")

    specs = []
    for name in comp_names:
        body = sections[name]
        unknown = set(body) - _COMPONENT_KEYS
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)} in [{name}]")
        if "kind" not in body or "alpha" not in body:
            raise ConfigError(f"{path}: [{name}] requires kind and alpha")
        try:
            alpha = float(body["alpha"])
        except ValueError:
            raise ConfigError(f"{path}: [{name}] alpha must be a number") from None
        kind = body["kind"]
        if kind == "pseudo" and "D" in body:
            raise ConfigError(f"{path}: [{name}] pseudo depth is derived; remove D")
        spec = ComponentSpec(
            kind=kind,
            alpha=alpha,
            v_offset=_number_or_free(body["V"], f"[{name}] V") if "V" in body else None,
            depth=_number_or_free(body["D"], f"[{name}] D") if "D" in body else None,
            r_min=_number_or_free(body["r0"], f"[{name}] r0") if "r0" in body else None,
            asymptote=float(body["asymptote"]) if "asymptote" in body else None,
            branch=body.get("branch"),
        )
        if spec.branch not in (None, "inner", "outer"):
            raise ConfigError(f"{path}: [{name}] branch must be inner or outer")
        specs.append(spec)

    joints_body = sections.get("joints", {})
    unknown = set(joints_body) - _JOINTS_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown [joints] keys {sorted(unknown)}")
    points = []
    if "points" in joints_body and joints_body["points"].strip():
        try:
            points = [float(tok) for tok in joints_body["points"].split()]
        except ValueError:
            raise ConfigError(f"{path}: joints points must be numbers") from None
    cutoff = float(joints_body["cutoff"]) if "cutoff" in joints_body else None
    cutoff_tol = float(joints_body.get("cutoff_tol", 1e-6))

    return smooth_join(specs, points, system, cutoff=cutoff, cutoff_tol=cutoff_tol)


_LEDGER_RE = {
    "remove": re.compile(r"remove\s+E=(?P<E>[^\s]+)$"),
    "insert": re.compile(r"insert\s+E=(?P<E>[^\s]+)\s+C=(?P<C>[^\s]+)$"),
    "bargmann": re.compile(r"bargmann\s+a=(?P<a>[^\s]+)\s+b=(?P<b>[^\s]+)$"),
}


def load_ledger(path) -> list:
    """Parse a transform ledger file into a list of operation tuples."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read ledger {path}: {exc}") from exc
    ops = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word = line.split()[0]
        if word not in _LEDGER_RE:
            raise ConfigError(f"{path}:{lineno}: unknown operation {word!r}")
        m = _LEDGER_RE[word].fullmatch(line)
        if not m:
            raise ConfigError(f"{path}:{lineno}: malformed {word} line")
        try:
            params = {k: float(v) for k, v in m.groupdict().items()}
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: non-numeric parameter") from None
        ops.append((word, params))
    return ops
