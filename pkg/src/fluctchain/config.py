"""Plain-text experiment configuration.

The format is INI-style (configparser): one [potential] section, one
[scaling] section, one [run] section and any number of [estimator.NAME]
sections.  Parsing then serializing then parsing again is an identity on
the parsed representation, which keeps configs diff-friendly artifacts.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .dynamics import ScalingConfig
from .errors import ConfigError
from .potential import PotentialSpec, ScaledPotential, fput, harmonic, toda

__all__ = [
    "EstimatorSpec",
    "ExperimentConfig",
    "load_config",
    "loads_config",
    "dumps_config",
    "save_config",
    "build_potential",
    "scaling_region",
]

ESTIMATOR_KINDS = (
    "qv",
    "equipartition",
    "bg2",
    "wrong_frame",
    "bracket",
    "correlation",
)

# keys whose values are comma-separated number lists
_LIST_KEYS = {"ells", "lags", "times"}
_STR_KEYS = {"kind", "phi", "variant", "which"}
_INT_KEYS = {"sigma", "phi_index"}


@dataclass
class EstimatorSpec:
    """One estimator invocation: kind plus its keyword parameters."""

    name: str
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ConfigError(
                f"estimator {self.name!r}: unknown kind {self.kind!r} "
                f"(expected one of {', '.join(ESTIMATOR_KINDS)})"
            )


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment run."""

    potential_kind: str
    potential_params: dict
    scaling: ScalingConfig
    replicas: int
    seed: int
    output_dir: str
    estimators: list
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        if not self.estimators:
            raise ConfigError("at least one [estimator.NAME] section is required")
        region = scaling_region(self.scaling.a_exp, self.scaling.b_exp)
        if region == "uncharted":
            self.warnings.append(
                f"(a_exp, b_exp) = ({self.scaling.a_exp}, {self.scaling.b_exp}) "
                "is outside the documented scaling regions"
            )


def scaling_region(a_exp: float, b_exp: float) -> str:
    """Classify the (time, anharmonicity) exponents.

    "sbe" is the proven diffusive point (2, 1/2); "sbe-line" is the
    conjectured continuation a = b + 3/2 for 1/4 < b < 1/2; "she" is the
    weak-anharmonicity half-line a = 2, b > 1/2 where the limit is linear.
    Anything else is "uncharted".
    """
    tol = 1e-9
    if abs(a_exp - 2.0) < tol and abs(b_exp - 0.5) < tol:
        return "sbe"
    if abs(a_exp - (b_exp + 1.5)) < tol and 0.25 < b_exp < 0.5:
        return "sbe-line"
    if abs(a_exp - 2.0) < tol and b_exp > 0.5:
        return "she"
    return "uncharted"


def build_potential(cfg: ExperimentConfig) -> ScaledPotential:
    """Instantiate the scaled potential named by the config."""
    kind = cfg.potential_kind
    p = cfg.potential_params
    if kind == "harmonic":
        base = harmonic(p.get("c2", 1.0))
    elif kind == "fput":
        base = fput(c3=p.get("c3", 0.0), c4=p.get("c4", 0.0), c2=p.get("c2", 1.0))
    elif kind == "toda":
        base = toda(p.get("eta", 1.0))
    else:
        raise ConfigError(f"unknown potential kind {kind!r}")
    return ScaledPotential(base=base, epsilon=cfg.scaling.epsilon)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _coerce(key: str, raw: str):
    if key in _STR_KEYS:
        return raw.strip()
    if key in _LIST_KEYS:
        parts = [s.strip() for s in raw.split(",") if s.strip()]
        return [_number(key, s) for s in parts]
    return _number(key, raw)


def _number(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT_KEYS or (raw.lstrip("+-").isdigit() and key not in ("t_final",)):
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"field {key!r}: cannot parse {raw!r} as a number") from exc


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case
    return cp


def loads_config(text: str) -> ExperimentConfig:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    for sect in ("potential", "scaling", "run"):
        if sect not in cp:
            raise ConfigError(f"missing required section [{sect}]")

    pot_items = dict(cp["potential"])
    pot_kind = pot_items.pop("kind", None)
    if pot_kind is None:
        raise ConfigError("section [potential]: missing key 'kind'")
    pot_params = {k: _number(k, v) for k, v in pot_items.items()}

    scaling_kw = {}
    for k, v in cp["scaling"].items():
        if k in ("n", "lattice_len"):
            scaling_kw[k] = int(_number(k, v))
        else:
            scaling_kw[k] = float(_number(k, v))
    try:
        scaling = ScalingConfig(**scaling_kw)
    except TypeError as exc:
        raise ConfigError(f"section [scaling]: {exc}") from exc

    run = cp["run"]
    try:
        replicas = run.getint("replicas")
        seed = run.getint("seed", 0)
    except ValueError as exc:
        raise ConfigError(f"section [run]: {exc}") from exc
    if replicas is None:
        raise ConfigError("section [run]: missing key 'replicas'")
    output_dir = run.get("output_dir", "results")

    estimators = []
    for section in cp.sections():
        if not section.startswith("estimator."):
            continue
        name = section.split(".", 1)[1]
        items = dict(cp[section])
        kind = items.pop("kind", None)
        if kind is None:
            raise ConfigError(f"section [{section}]: missing key 'kind'")
        params = {k: _coerce(k, v) for k, v in items.items()}
        estimators.append(EstimatorSpec(name=name, kind=kind.strip(), params=params))
    estimators.sort(key=lambda e: e.name)

    return ExperimentConfig(
        potential_kind=pot_kind.strip(),
        potential_params=pot_params,
        scaling=scaling,
        replicas=replicas,
        seed=seed,
        output_dir=output_dir,
        estimators=estimators,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads_config(text)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, list):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dumps_config(cfg: ExperimentConfig) -> str:
    cp = _parser()
    cp["potential"] = {"kind": cfg.potential_kind}
    for k, v in sorted(cfg.potential_params.items()):
        cp["potential"][k] = _fmt(v)
    cp["scaling"] = {
        k: _fmt(getattr(cfg.scaling, k))
        for k in (
            "n", "lattice_len", "a_exp", "b_exp", "alpha", "gamma",
            "beta", "tau", "mean_momentum", "dt_micro",
        )
    }
    cp["run"] = {
        "replicas": str(cfg.replicas),
        "seed": str(cfg.seed),
        "output_dir": cfg.output_dir,
    }
    for est in cfg.estimators:
        sect = f"estimator.{est.name}"
        cp[sect] = {"kind": est.kind}
        for k, v in sorted(est.params.items()):
            cp[sect][k] = _fmt(v)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_config(cfg))
