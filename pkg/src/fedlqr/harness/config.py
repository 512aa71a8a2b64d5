"""JSON experiment configuration and problem presets.

A config file is one JSON object. ``problem`` is either a preset name
("coupled3x3", "cartpole") or an object with row-major matrices A, B, Q, R,
gamma and optionally sigma. Unknown keys are rejected.
"""
import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from ..cartpole import CartpoleParams, linearize, spaced_targets
from ..errors import ConfigError
from ..lqr import InitSampler, LqrProblem
from ..trainers import ESTIMATORS

COUPLED3X3 = {
    "A": [[1.0, 0.0, -10.0], [-1.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    "B": [[1.0, -10.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 1.0]],
    "Q": [[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]],
    "R": [[5.0, -3.0, 0.0], [-3.0, 5.0, -2.0], [0.0, -2.0, 5.0]],
    "gamma": 0.9,
}
PRESETS = ("coupled3x3", "cartpole")
ALGORITHMS = ("federated", "independent")


@dataclass
class ExperimentConfig:
    problem: object = "coupled3x3"
    m: list = field(default_factory=lambda: [8])
    target_scale: float = 0.1  # targets ~ N(0, target_scale * I)
    targets: list = None  # explicit targets override the Gaussian draw
    algorithm: str = "federated"
    estimator: str = "two_point"
    sampler: str = "canonical_basis"
    eta: float = 1e-4
    eta_lo: float = 1e-6
    eta_hi: float = 1e-2
    H: list = field(default_factory=lambda: [1])
    r: float = 1e-2
    T: int = 1000
    runs: int = 20
    eps: float = 0.05
    p_min: float = 0.7
    master_seed: int = 0
    init_K: list = None
    g_step_scale: float = None
    # cartpole only
    x0_range: list = field(default_factory=lambda: [-0.05, 0.05])
    cartpole_init_scale: float = 0.3  # start from this multiple of the linearized discounted-optimal gain
    output: str = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(name, msg):
            raise ConfigError(f"field '{name}': {msg}", field=name)

        p = self.problem
        if isinstance(p, str):
            if p not in PRESETS:
                bad("problem", f"unknown preset {p!r}; expected one of {PRESETS}")
        elif isinstance(p, dict):
            missing = [key for key in ("A", "B", "Q", "R", "gamma") if key not in p]
            if missing:
                bad("problem", f"missing keys {missing}")
            extra = set(p) - {"A", "B", "Q", "R", "gamma", "sigma"}
            if extra:
                bad("problem", f"unknown keys {sorted(extra)}")
        else:
            bad("problem", "must be a preset name or an object of matrices")
        if isinstance(self.m, int):
            self.m = [self.m]
        if isinstance(self.H, int):
            self.H = [self.H]
        for name in ("m", "H"):
            vals = getattr(self, name)
            if not isinstance(vals, list) or not vals or not all(isinstance(v, int) and v >= 1 for v in vals):
                bad(name, "must be a nonempty list of positive integers")
        if self.algorithm not in ALGORITHMS:
            bad("algorithm", f"must be one of {ALGORITHMS}")
        if self.estimator not in ESTIMATORS:
            bad("estimator", f"must be one of {ESTIMATORS}")
        if self.sampler not in [s.value for s in InitSampler]:
            bad("sampler", f"must be one of {[s.value for s in InitSampler]}")
        if isinstance(self.eta, list):
            if len(self.eta) != len(self.m) or not all(_is_number(e) and e >= 0 for e in self.eta):
                bad("eta", "a list of step sizes needs one non-negative entry per m")
        elif not _is_number(self.eta) or self.eta < 0:
            bad("eta", "must be a non-negative number or a list")
        if self.g_step_scale is not None and (not _is_number(self.g_step_scale) or self.g_step_scale < 0):
            bad("g_step_scale", "must be a non-negative number or null")
        for name in ("eta_lo", "eta_hi"):
            if not _is_number(getattr(self, name)) or getattr(self, name) < 0:
                bad(name, "must be a non-negative number")
        for name in ("r", "eps", "target_scale", "cartpole_init_scale"):
            if not _is_number(getattr(self, name)) or not getattr(self, name) > 0:
                bad(name, "must be a positive number")
        if not _is_number(self.p_min) or not 0.0 <= self.p_min <= 1.0:
            bad("p_min", "must lie in [0, 1]")
        for name in ("T", "runs"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                bad(name, "must be a positive integer")
        if not isinstance(self.master_seed, int):
            bad("master_seed", "must be an integer")
        for H in self.H:
            if self.T % H:
                bad("H", f"interval {H} does not divide T={self.T}")
        if not (isinstance(self.x0_range, list) and len(self.x0_range) == 2 and self.x0_range[0] < self.x0_range[1]):
            bad("x0_range", "must be [low, high] with low < high")

    @property
    def m_max(self):
        return max(self.m)

    def eta_for(self, m):
        if isinstance(self.eta, list):
            return float(self.eta[self.m.index(m)])
        return float(self.eta)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v)


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"field '{unknown[0]}': unknown field", field=unknown[0])
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


def loads_config(text):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}", line=exc.lineno) from exc
    return config_from_dict(data)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return loads_config(fh.read())


def dumps_config(cfg):
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def dump_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_config(cfg))


def draw_targets(n, m, scale, master_seed):
    """m targets from N(0, scale * I), drawn once from the master seed."""
    rng = np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(0xA11CE,)))
    return np.sqrt(scale) * rng.standard_normal((m, n))


def _matrix(data, name):
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'problem.{name}': not a numeric matrix", field=f"problem.{name}") from exc
    if arr.ndim != 2:
        raise ConfigError(f"field 'problem.{name}': must be a nested (row-major) array", field=f"problem.{name}")
    return arr


def problem_matrices(cfg):
    spec = COUPLED3X3 if cfg.problem == "coupled3x3" else cfg.problem
    if not isinstance(spec, dict):
        raise ConfigError("field 'problem': the cartpole preset has no LQR matrices", field="problem")
    mats = {name: _matrix(spec[name], name) for name in ("A", "B", "Q", "R")}
    n = mats["A"].shape[0]
    sigma = _matrix(spec["sigma"], "sigma") if spec.get("sigma") is not None else np.eye(n)
    return mats, float(spec["gamma"]), sigma


def build_problem(cfg, m=None):
    """LqrProblem with the first ``m`` of the experiment's fixed targets."""
    mats, gamma, sigma = problem_matrices(cfg)
    n = mats["A"].shape[0]
    m = cfg.m_max if m is None else m
    if cfg.targets is not None:
        targets = np.asarray(cfg.targets, dtype=float)
        if targets.ndim != 2 or targets.shape[1] != n or targets.shape[0] < m:
            raise ConfigError(f"field 'targets': need at least {m} rows of length {n}", field="targets")
    else:
        targets = draw_targets(n, max(m, cfg.m_max), cfg.target_scale, cfg.master_seed)
    try:
        return LqrProblem(A=mats["A"], B=mats["B"], Q=mats["Q"], R=mats["R"], gamma=gamma, sigma=sigma,
                          targets=targets[:m])
    except ValueError as exc:
        raise ConfigError(f"field 'problem': {exc}", field="problem") from exc


def cartpole_linear_problem(params, targets):
    """Discounted LQR on the linearized cartpole, used to pick a starting gain."""
    A, B = linearize(params)
    return LqrProblem(A=A, B=B, Q=params.Q, R=np.array([[params.Rscalar]]), gamma=params.gamma,
                      sigma=np.eye(4), targets=targets)


def cartpole_setup(cfg):
    params = CartpoleParams()
    m = cfg.m_max
    targets = np.asarray(cfg.targets, dtype=float) if cfg.targets is not None else spaced_targets(m)
    return params, targets[:m]
