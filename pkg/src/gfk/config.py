"""Line-oriented run configuration: ``key = value`` pairs and ``#`` comments."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .regression import KINDS
from .scenarios import SCENARIOS

__all__ = ["RunConfig", "ConfigError", "parse_config", "serialize", "as_dict", "CHECKS"]

CHECKS = (
    "validate_conditions",
    "closed_form",
    "representation_error",
    "z_gradient_consistency",
    "flow_identity",
    "norm_equivalence",
    "weak_form_residual",
    "apriori_bound",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "heat"
    # weighted space
    d: int = 1
    q: float = 2.0
    L_domain: float = 20.0
    n_quad: int = 2001
    # time grid
    t: float = 0.0
    T: float = 1.0
    N_steps: int = 100
    # Monte Carlo
    M: int = 200_000
    seed: int = 0
    basis_kind: str = "auto"  # auto: hat functions in d = 1, polynomials otherwise
    basis_size: int = 0  # 0: 32 bins or total degree 3
    truncation: tuple = ("auto",)  # auto: 2 max(1, sup|h|)
    picard_iters: int = 3
    theta: float = 0.5
    transform: bool = False  # solve the exponentially transformed equation
    # finite differences
    fd: bool = True
    dx: float = 0.01
    dt_fd: float = 0.001
    L_fd: float = 10.0
    fd_slices: int = 11
    # verification
    checks: tuple = ("validate_conditions", "representation_error", "z_gradient_consistency")
    resamples: int = 16
    noise_factor: float = 3.0
    noise_atol: float = 1e-3
    tol_representation: float = 0.05
    tol_z_gradient: float = 0.15
    tol_closed_form: float = 0.05
    tol_fd_max: float = 1e-3
    tol_weak_form: float = 1e-3
    sandwich_window: tuple = (0.2, 5.0)
    sandwich_M: int = 1_000_000
    flow_step: int = 0  # 0: the middle node
    C_p: float = 2.0
    output: str = "out"

    def __post_init__(self):
        _validate(self)


_TUPLE_TYPES = {"truncation": str, "checks": str, "sandwich_window": float}


def _validate(c: RunConfig):
    if c.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {c.scenario!r}; choose from {sorted(SCENARIOS)}")
    if c.d < 1:
        raise ConfigError("d must be >= 1")
    if not c.q > c.d:
        raise ConfigError(f"q must exceed d (q={c.q}, d={c.d})")
    if not c.T > c.t >= 0:
        raise ConfigError("need 0 <= t < T")
    for name in ("N_steps", "M", "n_quad", "picard_iters", "sandwich_M"):
        if getattr(c, name) < 1:
            raise ConfigError(f"{name} must be >= 1")
    for name in ("L_domain", "dx", "dt_fd", "L_fd", "noise_factor", "noise_atol", "C_p"):
        if not getattr(c, name) > 0:
            raise ConfigError(f"{name} must be positive")
    if c.resamples < 0:
        raise ConfigError("resamples must be >= 0 (0 skips the bootstrap noise floor)")
    if c.basis_kind != "auto" and c.basis_kind not in KINDS:
        raise ConfigError(f"basis_kind must be auto or one of {KINDS}")
    if not 0 < c.theta <= 1:
        raise ConfigError("theta must lie in (0, 1]")
    for lvl in c.truncation:
        if lvl != "auto":
            try:
                ok = float(lvl) > 0
            except ValueError:
                ok = False
            if not ok:
                raise ConfigError(f"truncation levels must be 'auto' or positive, got {lvl!r}")
    unknown = [k for k in c.checks if k not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown checks {unknown}; choose from {list(CHECKS)}")
    if len(c.sandwich_window) != 2 or not 0 < c.sandwich_window[0] < c.sandwich_window[1]:
        raise ConfigError("sandwich_window needs two increasing positive numbers")
    if c.fd_slices < 2:
        raise ConfigError("fd_slices must be >= 2")


def _convert(name, typ, raw):
    if name in _TUPLE_TYPES:
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        conv = _TUPLE_TYPES[name]
        try:
            return tuple(conv(p) for p in parts)
        except ValueError:
            raise ConfigError(f"{name}: expected a comma-separated list of {conv.__name__}") from None
    if typ == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1"):
            return True
        if low in ("false", "no", "0"):
            return False
        raise ConfigError(f"{name}: expected true or false, got {raw!r}")
    if typ == "int":
        try:
            return int(raw.replace("_", ""))
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from None
    if typ == "float":
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from None
    return raw


def parse_config(text: str) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, types[key], raw)
    # q defaults to d + 1 when only d is given
    if "d" in values and "q" not in values:
        values["q"] = float(values["d"] + 1)
    try:
        return RunConfig(**values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _format(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    return str(v)


def serialize(config: RunConfig) -> str:
    """Every resolved field, one per line, in a form :func:`parse_config` reads back."""
    return "".join(f"{f.name} = {_format(getattr(config, f.name))}\n" for f in fields(config))


def as_dict(config: RunConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(config).items()}
