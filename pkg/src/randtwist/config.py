"""JSON run configuration: schema validation and model construction.

One JSON document describes a whole run: the map family (potential
coefficient tables per symbol), the zone parameters, the simulation
budget, and the output layout.  Loading is strict: unknown keys are
rejected, malformed documents report line/column, and every value is
checked before any simulation starts.

Potentials are entered as tables mapping the harmonic index k to the
polynomial coefficients (in r, ascending) of the Fourier coefficient
c_k(r).  A coefficient is a real number or an [re, im] pair.  Tables
giving only k >= 0 are completed Hermitially (c_{-k} = conj(c_k)); tables
with any negative k must be complete and self-consistent.
"""

import json
from dataclasses import dataclass, field

from .dynamics import MapFamily
from .strips import ZoneParams
from .trig import TrigPoly

__all__ = ["Config", "ConfigError", "load_config"]


class ConfigError(Exception):
    """A configuration problem, with an optional document location."""

    def __init__(self, message, path=None, line=None, col=None):
        self.message = message
        self.path = path
        self.line = line
        self.col = col
        super().__init__(str(self))

    def __str__(self):
        loc = ""
        if self.line is not None:
            loc = f" (line {self.line}, column {self.col})"
        elif self.path:
            loc = f" (at {self.path})"
        return f"{self.message}{loc}"


def _check_keys(obj, allowed, path):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}",
            path=path,
        )


def _number(x, path, positive=False, integer=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"expected a number, got {type(x).__name__}",
                          path=path)
    if integer and int(x) != x:
        raise ConfigError(f"expected an integer, got {x}", path=path)
    if positive and x <= 0:
        raise ConfigError(f"expected a positive value, got {x}", path=path)
    return int(x) if integer else float(x)


def _coeff(entry, path):
    """One polynomial coefficient: a real number or an [re, im] pair."""
    if isinstance(entry, (int, float)) and not isinstance(entry, bool):
        return complex(entry)
    if (isinstance(entry, list) and len(entry) == 2
            and all(isinstance(t, (int, float)) and not isinstance(t, bool)
                    for t in entry)):
        return complex(entry[0], entry[1])
    raise ConfigError(
        f"coefficient must be a number or [re, im] pair, got {entry!r}",
        path=path,
    )


def _potential(table, path):
    """Build a TrigPoly from a {k: coeffs} table."""
    if not isinstance(table, dict):
        raise ConfigError(
            f"potential must be a table mapping harmonic to coefficients, "
            f"got {type(table).__name__}", path=path,
        )
    coeffs = {}
    for key, val in table.items():
        try:
            k = int(key)
        except (TypeError, ValueError):
            raise ConfigError(
                f"harmonic keys must be integers, got {key!r}", path=path
            ) from None
        if isinstance(val, (int, float)) and not isinstance(val, bool):
            val = [val]
        if not isinstance(val, list) or not val:
            raise ConfigError(
                "coefficients must be a nonempty list (polynomial in r, "
                f"ascending), got {val!r}", path=f"{path}.{key}",
            )
        coeffs[k] = [_coeff(c, f"{path}.{key}") for c in val]
    if not coeffs:
        return TrigPoly.zero()
    if any(k < 0 for k in coeffs):
        try:
            return TrigPoly(coeffs)
        except ValueError as exc:
            raise ConfigError(str(exc), path=path) from None
    try:
        return TrigPoly.hermitian(coeffs)
    except ValueError as exc:
        raise ConfigError(str(exc), path=path) from None


@dataclass
class Config:
    """A validated run configuration; see the module docstring for layout."""

    epsilon: float
    u: tuple
    v: tuple
    w: tuple
    symbols: tuple
    probabilities: tuple
    area_preserving: bool
    d: int
    zones: dict = field(default_factory=dict)
    n: int = 10000
    M: int = 10000
    master_seed: int = 0
    thin: int = 1
    budget: float = 2e10
    out_dir: str = "out"
    formats: tuple = ("csv", "json")

    def family(self):
        try:
            return MapFamily(
                epsilon=self.epsilon,
                u=self.u,
                v=self.v,
                w=self.w,
                symbols=self.symbols,
                probabilities=self.probabilities,
                area_preserving=self.area_preserving,
            )
        except ValueError as exc:
            raise ConfigError(str(exc), path="model") from None

    def zone_params(self):
        z = dict(self.zones)
        try:
            return ZoneParams(
                epsilon=self.epsilon,
                beta=z.get("beta", 0.2),
                rho=z.get("rho", 0.04),
                d=self.d,
                K1=z.get("K1", 1.0),
                K2=z.get("K2", 1.0),
                gamma=z.get("gamma"),
                l=z.get("l", 14),
            )
        except ValueError as exc:
            raise ConfigError(str(exc), path="zones") from None


_MODEL_KEYS = {"epsilon", "d", "symbols", "probabilities", "area_preserving",
               "u", "v", "w"}
_ZONE_KEYS = {"beta", "rho", "K1", "K2", "gamma", "l"}
_RUN_KEYS = {"n", "M", "master_seed", "thin", "budget"}
_OUTPUT_KEYS = {"directory", "formats"}


def _parse_model(model):
    if not isinstance(model, dict):
        raise ConfigError("'model' must be an object", path="model")
    _check_keys(model, _MODEL_KEYS, "model")
    if "epsilon" not in model:
        raise ConfigError("'model.epsilon' is required", path="model")
    if "v" not in model:
        raise ConfigError("'model.v' is required", path="model")
    epsilon = _number(model["epsilon"], "model.epsilon")
    if not (0.0 <= epsilon < 1.0):
        raise ConfigError(f"epsilon must be in [0, 1), got {epsilon}",
                          path="model.epsilon")
    symbols = model.get("symbols", [-1, 1])
    if not isinstance(symbols, list) or len(symbols) < 2:
        raise ConfigError("'model.symbols' must be a list of 2+ integers",
                          path="model.symbols")
    symbols = tuple(
        _number(s, f"model.symbols[{i}]", integer=True)
        for i, s in enumerate(symbols)
    )
    n_sym = len(symbols)
    probs = model.get("probabilities", [1.0 / n_sym] * n_sym)
    if not isinstance(probs, list) or len(probs) != n_sym:
        raise ConfigError(
            "'model.probabilities' must align with symbols",
            path="model.probabilities",
        )
    probs = tuple(_number(p, f"model.probabilities[{i}]")
                  for i, p in enumerate(probs))

    def parse_tables(name, entry):
        if not isinstance(entry, list) or len(entry) != n_sym:
            raise ConfigError(
                f"'model.{name}' must be a list of {n_sym} potential tables "
                "(one per symbol)", path=f"model.{name}",
            )
        return tuple(
            _potential(t, f"model.{name}[{i}]") for i, t in enumerate(entry)
        )

    v = parse_tables("v", model["v"])
    u = parse_tables("u", model["u"]) if "u" in model else v
    w = parse_tables("w", model["w"]) if "w" in model else tuple(
        TrigPoly.zero() for _ in symbols
    )
    degree = max(g.degree for g in u + v + w)
    d = model.get("d")
    if d is None:
        d = degree
    else:
        d = _number(d, "model.d", positive=True, integer=True)
        if d != degree:
            raise ConfigError(
                f"'model.d' = {d} but the potential tables have trig degree "
                f"{degree}; they must agree", path="model.d",
            )
    area = model.get("area_preserving", False)
    if not isinstance(area, bool):
        raise ConfigError("'model.area_preserving' must be a boolean",
                          path="model.area_preserving")
    return dict(epsilon=epsilon, u=u, v=v, w=w, symbols=symbols,
                probabilities=probs, area_preserving=area, d=int(d))


def load_config(path_or_text, from_string=False):
    """Load a Config from a JSON file path (or a raw string).

    Raises ConfigError with line/column for documents that do not parse,
    and with a key path for schema violations.
    """
    if from_string:
        text = path_or_text
    else:
        try:
            with open(path_or_text, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"invalid JSON: {exc.msg}", line=exc.lineno, col=exc.colno
        ) from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a JSON object")
    _check_keys(doc, {"model", "zones", "run", "output"}, "(top level)")
    if "model" not in doc:
        raise ConfigError("'model' section is required")
    parts = _parse_model(doc["model"])

    zones = doc.get("zones", {})
    if not isinstance(zones, dict):
        raise ConfigError("'zones' must be an object", path="zones")
    _check_keys(zones, _ZONE_KEYS, "zones")
    for key, val in zones.items():
        if val is not None:
            _number(val, f"zones.{key}")

    run = doc.get("run", {})
    if not isinstance(run, dict):
        raise ConfigError("'run' must be an object", path="run")
    _check_keys(run, _RUN_KEYS, "run")
    n = _number(run.get("n", 10000), "run.n", positive=True, integer=True)
    M = _number(run.get("M", 10000), "run.M", positive=True, integer=True)
    master_seed = _number(run.get("master_seed", 0), "run.master_seed",
                          integer=True)
    thin = _number(run.get("thin", 1), "run.thin", positive=True,
                   integer=True)
    budget = _number(run.get("budget", 2e10), "run.budget", positive=True)

    output = doc.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("'output' must be an object", path="output")
    _check_keys(output, _OUTPUT_KEYS, "output")
    out_dir = output.get("directory", "out")
    if not isinstance(out_dir, str):
        raise ConfigError("'output.directory' must be a string",
                          path="output.directory")
    formats = output.get("formats", ["csv", "json"])
    if (not isinstance(formats, list)
            or not all(f in ("csv", "json") for f in formats)):
        raise ConfigError(
            "'output.formats' must be a list drawn from ['csv', 'json']",
            path="output.formats",
        )

    cfg = Config(
        zones=zones, n=n, M=M, master_seed=master_seed, thin=thin,
        budget=budget, out_dir=out_dir, formats=tuple(formats), **parts,
    )
    # Surface family-level problems (normalization, alignment) at load.
    cfg.family()
    return cfg
