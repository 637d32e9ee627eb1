"""Scenario configuration and its flat key/value file format.

A config file is a list of ``key = value`` lines. Keys can be dotted
(``geometry.d_br = 50``) or grouped under an INI-style header
(``[geometry]`` followed by ``d_br = 50``); both spellings are equivalent.
Values are Python literals; anything that does not parse as a literal is
kept as a string. Unknown keys are rejected.
"""

from __future__ import annotations

import ast
import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class Geometry:
    d_br: float = 50.0
    d_rt: float = 3.0
    d_ru: float = 8.0
    # BS-user distance; None places each user d_ru away from the RIS,
    # perpendicular to the BS-RIS line
    d_bu: float | None = None
    phi_B_t: float = math.pi / 4
    phi_R_t: float = -math.pi / 4
    theta_R: float = math.pi / 4


@dataclass
class Atomic:
    # 52D5/2 -> 53P3/2 transition dipole, along y
    dipole_moment_z: float = 1785.916 * 1.602e-19 * 5.292e-11
    hbar: float = 1.054571817e-34
    carrier_freq: float = 5e9
    # optional optical readout wavelengths (coupling and probe lasers)
    lambda_c: float = 480e-9
    lambda_p: float = 852e-9
    s_b: float = 1.0


@dataclass
class SolverOptions:
    max_outer: int = 60
    rho1_init: float = 1.0
    rho1_decay: float = 0.8
    rho1_min: float = 1e-6
    rho_phi: float = 1.0
    admm_max_iter: int = 500
    admm_tol: float = 1e-6
    # rescale rho every 10 iterations when one residual dominates the other
    admm_adaptive_rho: bool = True
    qp_tol: float = 1e-7
    qp_max_iter: int = 5000
    sdp_tol: float = 1e-7
    tol_obj: float = 1e-4
    tol_consensus: float = 1e-4
    # "backtrack" doubles tau from 2||d||^2 + 1 until the candidate is majorised;
    # "certified" uses the global curvature bound directly
    tau_mode: str = "backtrack"
    tau_max_doublings: int = 60
    # "gauss_newton" keeps the linearised penalty in the phi surrogate and
    # backtracks only the isotropic remainder; "isotropic" uses tau_i I alone
    phi_majorizer: str = "gauss_newton"
    # starting fraction of the curvature constants when backtracking
    mm_init_scale: float = 2.0 ** -10
    normalize_penalty: bool = True
    # functionals are divided by penalty_unit * (initial scale); larger values
    # weaken the consensus penalty relative to the utility
    penalty_unit: float = 3.0
    # "diagonal" scales each functional; "whitened" maps the initial Gram
    # matrix of the derivative signals to the identity
    penalty_metric: str = "whitened"
    user_weights: tuple | None = None


@dataclass
class BaselineOptions:
    gd_mu_scale: float = 10.0
    gd_iters: int = 200
    bf_iters: int = 200
    bf_tol: float = 1e-8
    armijo_beta: float = 0.5
    armijo_sigma: float = 0.5
    # "unit" starts every line search at step 1; "warm" at twice the last accepted step
    gd_step_start: str = "unit"


@dataclass
class ScenarioConfig:
    n_tx: int = 8
    n_ris: int = 100
    n_cells: int = 35
    n_users: int = 3
    snapshots: int = 1024
    rician_kappa: float = 2.0
    snr_db: float = 25.0
    rsr_db: float = 10.0
    crb_eps: float = 0.025
    p_max: float = 1.0
    n_paths: int = 3
    alpha_t: complex = 1.0 + 0.0j
    # radar noise is set so the CRB of the isotropic design at phi = 1 is
    # crb_ref_eps / crb_ref_ratio; kept apart from crb_eps so sweeping the
    # constraint does not move the radar noise floor
    crb_ref_eps: float = 0.025
    crb_ref_ratio: float = 10.0
    rng_seed: int = 0
    geometry: Geometry = field(default_factory=Geometry)
    atomic: Atomic = field(default_factory=Atomic)
    solver: SolverOptions = field(default_factory=SolverOptions)
    baselines: BaselineOptions = field(default_factory=BaselineOptions)

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("n_tx", "n_ris", "n_cells", "n_users", "snapshots", "n_paths"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        if self.rician_kappa < 0:
            raise ConfigError("rician_kappa must be >= 0")
        for name in ("p_max", "crb_eps", "crb_ref_eps", "crb_ref_ratio"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        g = self.geometry
        for name in ("d_br", "d_rt", "d_ru"):
            if not getattr(g, name) > 0:
                raise ConfigError(f"geometry.{name} must be > 0")
        if g.d_bu is not None and not g.d_bu > 0:
            raise ConfigError("geometry.d_bu must be > 0")
        s = self.solver
        if s.tau_mode not in ("backtrack", "certified"):
            raise ConfigError(f"solver.tau_mode must be backtrack or certified, got {s.tau_mode!r}")
        if s.phi_majorizer not in ("gauss_newton", "isotropic"):
            raise ConfigError(f"solver.phi_majorizer must be gauss_newton or isotropic, got {s.phi_majorizer!r}")
        if s.penalty_metric not in ("diagonal", "whitened"):
            raise ConfigError(f"solver.penalty_metric must be diagonal or whitened, got {s.penalty_metric!r}")
        if self.baselines.gd_step_start not in ("unit", "warm"):
            raise ConfigError(f"baselines.gd_step_start must be unit or warm, got {self.baselines.gd_step_start!r}")
        if not (0 < s.rho1_decay <= 1) or s.rho1_init <= 0 or s.rho_phi <= 0:
            raise ConfigError("invalid penalty parameters")
        if s.user_weights is not None:
            w = tuple(float(x) for x in s.user_weights)
            if len(w) != self.n_users or min(w) <= 0:
                raise ConfigError("solver.user_weights needs n_users positive entries")
            s.user_weights = w

    def replace(self, **changes):
        """Copy with top-level or dotted-key overrides (``{"geometry.d_br": 10}``)."""
        flat = to_flat_dict(self)
        for k, v in changes.items():
            if k not in flat:
                raise ConfigError(f"unknown config key {k!r}")
            flat[k] = v
        return from_flat_dict(flat)


_SECTIONS = {"geometry": Geometry, "atomic": Atomic, "solver": SolverOptions,
             "baselines": BaselineOptions}


def to_flat_dict(cfg: ScenarioConfig) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            for sf in dataclasses.fields(v):
                out[f"{f.name}.{sf.name}"] = getattr(v, sf.name)
        else:
            out[f.name] = v
    return out


def _coerce(key, value, default):
    if isinstance(default, bool):
        if isinstance(value, str):
            if value.lower() in ("true", "yes", "1"):
                return True
            if value.lower() in ("false", "no", "0"):
                return False
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, complex):
        if isinstance(value, bool) or not isinstance(value, (int, float, complex)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return complex(value)
    if isinstance(default, str):
        return str(value)
    # optional fields (None default): accept numbers / sequences as given
    if isinstance(value, list):
        value = tuple(value)
    return value


def from_flat_dict(flat: dict) -> ScenarioConfig:
    defaults = to_flat_dict(ScenarioConfig())
    unknown = sorted(set(flat) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    vals = dict(defaults)
    for k, v in flat.items():
        vals[k] = v if v is None else _coerce(k, v, defaults[k])
    top = {}
    sections = {name: {} for name in _SECTIONS}
    for k, v in vals.items():
        if "." in k:
            sec, name = k.split(".", 1)
            sections[sec][name] = v
        else:
            top[k] = v
    try:
        return ScenarioConfig(**top, **{s: _SECTIONS[s](**kw) for s, kw in sections.items()})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


_ARITH = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b,
          ast.Mult: lambda a, b: a * b, ast.Div: lambda a, b: a / b,
          ast.Pow: lambda a, b: a ** b}


def _eval_arith(node):
    """Numbers, ``pi`` and + - * / ** only."""
    if isinstance(node, ast.Expression):
        return _eval_arith(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.Name) and node.id == "pi":
        return math.pi
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        v = _eval_arith(node.operand)
        return v if isinstance(node.op, ast.UAdd) else -v
    if isinstance(node, ast.BinOp) and type(node.op) in _ARITH:
        return _ARITH[type(node.op)](_eval_arith(node.left), _eval_arith(node.right))
    raise ValueError("not an arithmetic expression")


def _parse_value(text: str):
    text = text.strip()
    if text.lower() in ("none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        pass
    # allow simple expressions such as pi/4
    try:
        return float(_eval_arith(ast.parse(text, mode="eval")))
    except (ValueError, SyntaxError, ZeroDivisionError, OverflowError):
        return text


def parse_kv_text(text: str) -> dict:
    """Parse the flat key/value format into a {dotted_key: value} dict."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[__root__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    out = {}
    for sec in cp.sections():
        for k, v in cp.items(sec, raw=True):
            key = k if sec == "__root__" else f"{sec}.{k}"
            if key in out:
                raise ConfigError(f"duplicate key {key!r}")
            out[key] = _parse_value(v)
    return out


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return from_flat_dict(parse_kv_text(path.read_text(encoding="utf-8")))


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for k, v in to_flat_dict(cfg).items():
        lines.append(f"{k} = {v!r}")
    return "\n".join(lines) + "\n"
