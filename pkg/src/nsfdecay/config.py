"""TOML configuration: defaults, schema validation and line-precise error messages."""

import copy
import json
import re
import sys
from importlib import resources

import jsonschema

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .harness import DecayParams, InitialDataSpec
from .linear import DimensionlessParams
from .nsf import PhysicalParams, nondimensionalize, pressure_from_config
from .solver import RecordTimes, SolverConfig
from .spectral import GridSpec


class ConfigError(ValueError):
    """Bad configuration; ``str()`` reads ``path:line: message`` when the line is known."""

    def __init__(self, message, path=None, line=None):
        self.message = message
        self.path = path
        self.line = line
        where = ""
        if path:
            where = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(where + message)


def _package_text(name):
    return resources.files("nsfdecay").joinpath(name).read_text()


def schema():
    return json.loads(_package_text("config_schema.json"))


def defaults():
    return tomllib.loads(_package_text("defaults.toml"))


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "pressure":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


_HEADER = re.compile(r"^\s*\[\s*([^\]]+?)\s*\]")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")


def locate(text, keypath):
    """1-based line defining ``keypath`` (a tuple of keys) in TOML ``text``; falls back to the enclosing table."""
    table = ()
    best = None
    for i, line in enumerate(text.splitlines(), start=1):
        m = _HEADER.match(line)
        if m:
            table = tuple(p.strip() for p in m.group(1).split("."))
            if table == tuple(keypath[:len(table)]) and best is None and len(table) <= len(keypath):
                best = i
            continue
        m = _KEY.match(line)
        if m:
            full = table + (m.group(1),)
            if tuple(keypath[:len(full)]) == full:
                if len(full) == len(keypath):
                    return i
                best = i
    return best


def load_config(path=None, text=None):
    """Defaults overlaid by the TOML file at ``path`` (or ``text``), validated against the schema."""
    user = {}
    if path is not None and text is None:
        try:
            with open(path, "rb") as fh:
                raw = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", path) from exc
        text = raw.decode("utf-8")
    if text is not None:
        try:
            user = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(f"TOML syntax error: {exc}", path or "<config>", int(m.group(1)) if m else None) from exc
        validator = jsonschema.Draft202012Validator(schema())
        errors = sorted(validator.iter_errors(user), key=lambda e: list(e.absolute_path))
        if errors:
            err = errors[0]
            keypath = tuple(str(p) for p in err.absolute_path if not isinstance(p, int))
            if err.validator == "additionalProperties":
                m = re.search(r"'([^']+)' was unexpected", err.message)
                if m:
                    keypath = keypath + (m.group(1),)
            label = ".".join(keypath) or "<root>"
            raise ConfigError(f"{label}: {err.message}", path or "<config>", locate(text, keypath))
    cfg = _merge(defaults(), user)
    cfg["_source"] = {"path": str(path) if path else None}
    try:
        build_objects(cfg)
    except _SectionError as exc:
        line = locate(text, exc.keypath) if text is not None else None
        raise ConfigError(exc.message, path or "<config>", line) from exc
    return cfg


class _SectionError(ConfigError):
    def __init__(self, message, keypath):
        self.keypath = keypath
        super().__init__(message)


def _section(name, key=None):
    """Context manager mapping ``ValueError`` to a config error tagged with the key path."""
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, et, ev, tb):
            if et is not None and issubclass(et, (ValueError, KeyError, TypeError)) and not isinstance(ev, ConfigError):
                keypath = (name,) + ((key,) if key else ())
                msg = ev.args[0] if ev.args else str(ev)
                raise _SectionError(f"[{name}] {msg}", keypath) from ev
            return False
    return _Ctx()


def _key_of(msg, candidates):
    for k in candidates:
        if re.search(rf"\b{re.escape(k)}\b", msg):
            return k
    return None


def build_objects(cfg):
    """Construct the typed objects a run needs; semantic errors name their config key."""
    out = {}
    g = cfg["grid"]
    try:
        out["grid"] = GridSpec(int(g["d"]), int(g["n"]), float(g["box_len"]))
    except ValueError as exc:
        key = _key_of(str(exc), ["dimension", "n", "box_len"])
        raise _SectionError(f"[grid] {exc}", ("grid", {"dimension": "d"}.get(key, key))) from exc
    ph = cfg["physics"]
    with _section("physics", "pressure"):
        pl = pressure_from_config(ph["pressure"])
    try:
        phys = PhysicalParams(float(ph["lambda"]), float(ph["mu"]), float(ph["kappa"]), float(ph["cv"]),
                              float(ph["rho_bar"]), float(ph["T_bar"]))
        params, table = nondimensionalize(phys, pl)
    except ValueError as exc:
        raise _SectionError(f"[physics] {exc}", ("physics",)) from exc
    out.update(phys=phys, pressure=pl, params=params, table=table)
    dc = cfg["decay"]
    if out["grid"].d == 3:
        try:
            out["decay"] = DecayParams(3, float(dc["s1"]), float(dc["p"]), float(dc["eps"]), int(dc["j0"]),
                                       tuple(dc["s_grid"]) if "s_grid" in dc else None,
                                       bool(dc.get("strong_low", False)))
        except ValueError as exc:
            key = _key_of(str(exc), ["s_grid", "s1", "eps", "p"])
            raise _SectionError(f"[decay] {exc}", ("decay", key) if key else ("decay",)) from exc
    else:
        out["decay"] = None
    idc = cfg["initial_data"]
    with _section("initial_data"):
        out["initial"] = InitialDataSpec(idc["kind"], float(idc["amplitude"]), float(idc["width"]), int(idc["seed"]))
    sc = cfg["solver"]
    with _section("solver"):
        out["solver"] = SolverConfig(
            dt=float(sc["dt"]) if "dt" in sc else None, t_end=float(sc["t_end"]), scheme=sc["scheme"],
            record_times=RecordTimes(float(sc["record_t0"]), float(sc["record_q"])),
            cfl_safety=float(sc["cfl_safety"]), nonlinear=bool(sc["nonlinear"]),
            record_p=(2.0, float(dc["p"])))
    w = cfg["fit"]["window"]
    if not w[0] < w[1]:
        raise _SectionError(f"[fit] window needs t_a < t_b, got {w}", ("fit", "window"))
    return out


def params_to_dict(params):
    if isinstance(params, DimensionlessParams):
        return {"beta": params.beta, "gamma": params.gamma, "mu_tilde": params.mu_tilde}
    return dict(params)
