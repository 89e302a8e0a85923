"""Experiment configuration files: loading, schema validation, diagnostics.

Configs are YAML mappings.  Validation never runs numerics; it reports
every problem with the line of the offending field.
"""
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError, ExpressionError
from .expr import parse

KINDS = ("transform", "evolve", "sweep", "purity", "averaging", "madelung", "density1d")
FAMILIES = ("coherent", "scaled", "wkb", "hermite_mixture")
BACKENDS = ("schrodinger", "von_neumann", "wigner")
SWEEP_KINDS = ("sweep", "averaging")

TOP_KEYS = {"name", "kind", "description", "seed", "threads", "grid", "state", "potential",
            "hbars", "evolution", "params"}
GRID_KEYS = {"n", "length", "dim", "box_sqrt_hbar"}
EVOLUTION_KEYS = {"dt", "t_final", "backend", "mass", "record_stride"}
STATE_KEYS = {
    "coherent": {"q", "p", "periodize"},
    "scaled": {"a", "p", "alpha"},
    "wkb": {"a", "S"},
    "hermite_mixture": {"center", "rank", "omega"},
}
EXPRESSION_FIELDS = {"a", "S"}


@dataclass
class Diagnostic:
    path: str
    message: str
    line: int = None

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        return f"{where}{self.path}: {self.message}"


@dataclass
class ExperimentConfig:
    name: str
    kind: str
    data: dict
    source: str = ""
    text: str = ""
    description: str = ""
    seed: int = 0
    threads: int = None
    hbars: list = field(default_factory=list)

    @property
    def digest(self):
        return hashlib.sha256(self.text.encode()).hexdigest()

    def section(self, key):
        return dict(self.data.get(key) or {})

    @property
    def params(self):
        return self.section("params")


def _line_index(text):
    """Map dotted paths to 1-based line numbers using the YAML node tree."""
    out = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = f"{path}.{k.value}" if path else str(k.value)
                out[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                p = f"{path}[{i}]"
                out[p] = v.start_mark.line + 1
                walk(v, p)

    if root is not None:
        walk(root, "")
    return out


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_hbars(h, kind, diag):
    if not isinstance(h, list) or not h:
        diag("hbars", "must be a non-empty list")
        return
    for i, v in enumerate(h):
        if not _is_number(v) or v <= 0:
            diag(f"hbars[{i}]", "must be a positive number")
            return
    if any(b >= a for a, b in zip(h, h[1:])):
        diag("hbars", "must be strictly decreasing")
        return
    if kind in SWEEP_KINDS:
        if len(h) < 2:
            diag("hbars", "a sweep needs at least two values")
            return
        r = [b / a for a, b in zip(h, h[1:])]
        if any(abs(x - r[0]) > 1e-6 * r[0] for x in r):
            diag("hbars", "must be a geometric sequence")


def _check_expression(text, path, diag):
    if _is_number(text):
        return
    if not isinstance(text, str):
        diag(path, "must be an expression string")
        return
    try:
        parse(text)
    except ExpressionError as e:
        diag(path, f"expression error: {e}")


def validate_data(data, text=""):
    """Return a list of Diagnostics for a parsed config mapping."""
    lines = _line_index(text)
    diags = []

    def diag(path, msg):
        line = lines.get(path)
        if line is None:
            parent = path.rsplit(".", 1)[0] if "." in path else ""
            line = lines.get(parent)
        diags.append(Diagnostic(path, msg, line))

    if not isinstance(data, dict):
        return [Diagnostic("<root>", "config must be a mapping", 1)]
    for k in data:
        if k not in TOP_KEYS:
            diag(str(k), "unknown field")
    name = data.get("name")
    if not isinstance(name, str) or not name:
        diag("name", "required non-empty string")
    kind = data.get("kind")
    if kind not in KINDS:
        diag("kind", f"must be one of {', '.join(KINDS)}")
    if "seed" in data and not (isinstance(data["seed"], int) and not isinstance(data["seed"], bool)):
        diag("seed", "must be an integer")
    if "threads" in data and not (isinstance(data["threads"], int) and data["threads"] >= 1):
        diag("threads", "must be a positive integer")
    if "hbars" in data:
        _check_hbars(data["hbars"], kind, diag)
    elif kind in SWEEP_KINDS or kind in ("transform", "evolve", "purity", "madelung", "density1d"):
        diag("hbars", "required")

    grid = data.get("grid")
    if grid is not None:
        if not isinstance(grid, dict):
            diag("grid", "must be a mapping")
        else:
            for k in grid:
                if k not in GRID_KEYS:
                    diag(f"grid.{k}", "unknown field")
            n = grid.get("n")
            if not (isinstance(n, int) and n >= 8 and n & (n - 1) == 0):
                diag("grid.n", "must be a power of two >= 8")
            if "length" in grid and not (_is_number(grid["length"]) and grid["length"] > 0):
                diag("grid.length", "must be positive")
            if "box_sqrt_hbar" in grid and not (_is_number(grid["box_sqrt_hbar"]) and grid["box_sqrt_hbar"] > 0):
                diag("grid.box_sqrt_hbar", "must be positive")
            if "length" not in grid and "box_sqrt_hbar" not in grid:
                diag("grid", "needs length or box_sqrt_hbar")
            if grid.get("dim", 1) not in (1, 2):
                diag("grid.dim", "must be 1 or 2")
    elif kind not in ("density1d",):
        diag("grid", "required")

    state = data.get("state")
    if state is not None:
        if not isinstance(state, dict):
            diag("state", "must be a mapping")
        else:
            fam = state.get("family")
            if fam not in FAMILIES:
                diag("state.family", f"must be one of {', '.join(FAMILIES)}")
            else:
                for k, v in state.items():
                    if k == "family":
                        continue
                    if k not in STATE_KEYS[fam]:
                        diag(f"state.{k}", f"unknown field for family {fam}")
                    elif k in EXPRESSION_FIELDS:
                        _check_expression(v, f"state.{k}", diag)
                if fam == "scaled":
                    a = state.get("alpha")
                    if not (_is_number(a) and 0 <= a < 1):
                        diag("state.alpha", "must lie in [0, 1)")
                if fam == "wkb":
                    for k in ("a", "S"):
                        if k not in state:
                            diag(f"state.{k}", "required for wkb")
    elif kind in ("sweep",):
        diag("state", "required")

    pot = data.get("potential")
    if pot is not None:
        if isinstance(pot, dict):
            if pot.get("kind") != "harmonic":
                diag("potential.kind", "mapping form supports kind: harmonic")
            for k in pot:
                if k not in ("kind", "omega", "mass", "center"):
                    diag(f"potential.{k}", "unknown field")
        else:
            _check_expression(pot, "potential", diag)

    ev = data.get("evolution")
    if ev is not None:
        if not isinstance(ev, dict):
            diag("evolution", "must be a mapping")
        else:
            for k in ev:
                if k not in EVOLUTION_KEYS:
                    diag(f"evolution.{k}", "unknown field")
            for k in ("dt", "t_final"):
                if k in ev and not (_is_number(ev[k]) and ev[k] > 0):
                    diag(f"evolution.{k}", "must be positive")
            if "backend" in ev and ev["backend"] not in BACKENDS:
                diag("evolution.backend", f"must be one of {', '.join(BACKENDS)}")

    params = data.get("params")
    if params is not None and not isinstance(params, dict):
        diag("params", "must be a mapping")
    return diags


def load_config(path) -> ExperimentConfig:
    """Read and validate; raises ConfigError carrying every diagnostic."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError([Diagnostic(str(path), f"cannot read: {e}")]) from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark else None
        raise ConfigError([Diagnostic("<yaml>", str(getattr(e, "problem", e)), line)]) from None
    diags = validate_data(data, text)
    if diags:
        raise ConfigError(diags)
    return ExperimentConfig(
        name=data["name"], kind=data["kind"], data=data, source=str(path), text=text,
        description=data.get("description", ""), seed=int(data.get("seed", 0)),
        threads=data.get("threads"), hbars=[float(h) for h in data.get("hbars", [])])


def bundled_dir():
    return Path(__file__).parent / "configs"


def bundled_configs():
    return sorted(bundled_dir().glob("*.yaml"))
