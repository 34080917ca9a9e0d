"""Experiment configuration: a TOML file validated against a fixed schema.

Schema (every key optional)::

    seed = 7                      # integer
    grid = 256                    # power of two >= 16
    output_dir = "reports"        # overridden by OUTPUT_DIR, then by --out

    [coefficient]
    tag = "loglip_t"              # constant | lip_x | loglip_t | oscillatory_control
    params = { t0 = 0.2 }         # family parameters

    [weight_params]               # s, lam, alpha, gamma (beta is derived)
    [solver]                      # dt, T, scheme
    [sizes]                       # problem sizes, see experiments.Sizes
    [tolerance_overrides]         # keys of experiments.TOLERANCES

Errors are reported as :class:`ConfigError` carrying the offending line.
"""
from __future__ import annotations

import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .coefficients import FAMILY_TAGS, EllipticityError, builtin_family
from .experiments import TOLERANCES, Sizes
from .solver import SCHEMES
from .weights import WeightParams

TOP_KEYS = {"seed", "grid", "output_dir", "coefficient", "weight_params", "solver", "sizes",
            "tolerance_overrides"}
WEIGHT_KEYS = {"s", "lam", "alpha", "gamma"}
SOLVER_KEYS = {"dt", "T", "scheme"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source:
            where = f"{source}:{line}: " if line else f"{source}: "
        elif line:
            where = f"line {line}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    grid: int = 256
    output_dir: str = "reports"
    coefficient: dict = field(default_factory=lambda: {"tag": "loglip_t", "params": {}})
    weight_params: dict = field(default_factory=lambda: {"s": 0.5, "lam": 2.0, "alpha": 1.0,
                                                          "gamma": 1.0})
    solver: dict = field(default_factory=lambda: {"dt": 1.0 / 256, "T": 1.0,
                                                   "scheme": "crank_nicolson"})
    sizes: Sizes = field(default_factory=Sizes)
    tolerance_overrides: dict = field(default_factory=dict)
    subcommand: str = ""

    def weights(self) -> WeightParams:
        return WeightParams(**self.weight_params)

    def coefficient_field(self):
        return builtin_family(self.coefficient["tag"], dict(self.coefficient["params"]))

    def tolerances(self) -> dict:
        return {**TOLERANCES, **self.tolerance_overrides}

    def resolved(self) -> dict:
        """Everything that influences results (the output location does not)."""
        return {"seed": self.seed, "grid": self.grid, "coefficient": self.coefficient,
                "weight_params": self.weight_params, "solver": self.solver,
                "sizes": self.sizes.as_dict(), "tolerances": self.tolerances(),
                "subcommand": self.subcommand}


def _locate(text: str, section: str | None, key: str | None) -> int | None:
    """1-based line of ``key`` inside ``[section]`` (or the section header)."""
    current = None
    header_line = None
    for i, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            if current == section:
                header_line = i
            continue
        if key is not None and current == section and re.match(rf"\s*{re.escape(key)}\s*=", line):
            return i
    if section is not None and key is not None:
        # inline table such as ``coefficient = { ... }`` or ``params = { key = ... }``
        for i, line in enumerate(text.splitlines(), start=1):
            if re.search(rf"\b{re.escape(key)}\s*=", line):
                return i
    return header_line


def load_config(path: str | os.PathLike | None = None, text: str | None = None) -> ExperimentConfig:
    """Parse and validate a configuration file (or ``text``)."""
    source = None
    if text is None:
        if path is None:
            return ExperimentConfig()
        source = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read configuration: {exc}") from exc
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", int(m.group(1)) if m else None, source) from exc
    return validate_mapping(data, text, source)


def validate_mapping(data: dict, text: str = "", source: str | None = None) -> ExperimentConfig:
    def fail(msg, section=None, key=None):
        raise ConfigError(msg, _locate(text, section, key), source)

    for key in data:
        if key not in TOP_KEYS:
            fail(f"unknown key {key!r}; allowed: {sorted(TOP_KEYS)}", None, key)
    kw = {}
    if "seed" in data:
        if not isinstance(data["seed"], int) or isinstance(data["seed"], bool) or data["seed"] < 0:
            fail("seed must be a nonnegative integer", None, "seed")
        kw["seed"] = data["seed"]
    if "grid" in data:
        n = data["grid"]
        if not isinstance(n, int) or n < 16 or n & (n - 1):
            fail(f"grid must be a power of two >= 16, got {n!r}", None, "grid")
        kw["grid"] = n
    if "output_dir" in data:
        if not isinstance(data["output_dir"], str):
            fail("output_dir must be a string", None, "output_dir")
        kw["output_dir"] = data["output_dir"]
    coef = data.get("coefficient", {"tag": "loglip_t", "params": {}})
    if not isinstance(coef, dict):
        fail("coefficient must be a table", None, "coefficient")
    extra = set(coef) - {"tag", "params"}
    if extra:
        fail(f"unknown coefficient keys {sorted(extra)}", "coefficient", sorted(extra)[0])
    tag = coef.get("tag", "loglip_t")
    if tag not in FAMILY_TAGS:
        fail(f"coefficient tag {tag!r} not one of {list(FAMILY_TAGS)}", "coefficient", "tag")
    params = coef.get("params", {})
    if not isinstance(params, dict):
        fail("coefficient.params must be a table", "coefficient", "params")
    try:
        builtin_family(tag, dict(params))
    except EllipticityError as exc:
        key = "kappa" if "kappa" in params else "tag"
        section = "coefficient.params" if key == "kappa" else "coefficient"
        fail(f"ellipticity invariant kappa <= a <= 1/kappa, kappa in (0, 1): {exc}", section, key)
    except (ValueError, TypeError) as exc:
        fail(f"invalid coefficient parameters: {exc}", "coefficient", "params")
    kw["coefficient"] = {"tag": tag, "params": dict(sorted(params.items()))}
    if "weight_params" in data:
        wp = data["weight_params"]
        bad = set(wp) - WEIGHT_KEYS
        if bad:
            fail(f"unknown weight_params keys {sorted(bad)}", "weight_params", sorted(bad)[0])
        merged = {**ExperimentConfig().weight_params, **wp}
        try:
            WeightParams(**{k: float(v) for k, v in merged.items()})
        except (ValueError, TypeError) as exc:
            fail(f"invalid weight_params: {exc}", "weight_params", next(iter(wp), None))
        kw["weight_params"] = {k: float(v) for k, v in sorted(merged.items())}
    if "solver" in data:
        sv = data["solver"]
        bad = set(sv) - SOLVER_KEYS
        if bad:
            fail(f"unknown solver keys {sorted(bad)}", "solver", sorted(bad)[0])
        merged = {**ExperimentConfig().solver, **sv}
        if merged["scheme"] not in SCHEMES:
            fail(f"scheme must be one of {sorted(SCHEMES)}", "solver", "scheme")
        for key in ("dt", "T"):
            if not isinstance(merged[key], (int, float)) or merged[key] <= 0:
                fail(f"solver.{key} must be a positive number", "solver", key)
        steps = merged["T"] / merged["dt"]
        if abs(steps - round(steps)) > 1e-9 * steps:
            fail("solver.T must be an integer multiple of solver.dt", "solver", "dt")
        kw["solver"] = {"dt": float(merged["dt"]), "T": float(merged["T"]),
                        "scheme": merged["scheme"]}
    if "sizes" in data:
        try:
            kw["sizes"] = Sizes.from_mapping(data["sizes"])
        except KeyError as exc:
            fail(f"unknown sizes key {exc.args[0]!r}", "sizes", exc.args[0])
        except (TypeError, ValueError) as exc:
            fail(f"invalid sizes entry: {exc}", "sizes", None)
    if "tolerance_overrides" in data:
        tol = data["tolerance_overrides"]
        for key, value in tol.items():
            if key not in TOLERANCES:
                fail(f"unknown tolerance {key!r}", "tolerance_overrides", key)
            if not isinstance(value, (int, float)) or value <= 0:
                fail(f"tolerance {key!r} must be positive", "tolerance_overrides", key)
        kw["tolerance_overrides"] = {k: float(v) for k, v in sorted(tol.items())}
    return ExperimentConfig(**kw)


def resolve_output_dir(config: ExperimentConfig, cli_value: str | None) -> Path:
    """``--out`` wins over ``OUTPUT_DIR``, which wins over the file."""
    if cli_value:
        return Path(cli_value)
    env = os.environ.get("OUTPUT_DIR")
    return Path(env) if env else Path(config.output_dir)
