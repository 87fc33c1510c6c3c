"""
Scenario configuration.

Each section declares its fields as annotated class attributes, the trailing comment on a field is its help text.
Class attributes are only defaults: every instance gets its own copies, so configs for a sweep never share state.
"""

import copy
import inspect
import json
import math
from typing import Dict, List

import argparse

from . import utils
from .errors import ConfigError

NAMED_FAIR_KINDS = ("demographic_parity", "equality_of_opportunity", "equalized_odds")
JOINT_KINDS = NAMED_FAIR_KINDS + ("custom",)
POLICY_KINDS = ("optimal", "greedy", "fixed", "social_welfare", "blind") + JOINT_KINDS


class BaseConfig:

    # name -> section class, for single child sections
    _children: Dict[str, type] = {}
    # name -> section class, for list valued sections
    _list_children: Dict[str, type] = {}

    def __init__(self, prefix: str = '', values: dict = None):
        self._prefix = prefix
        for name, _, default in self.fields():
            setattr(self, name, copy.deepcopy(default))
        for name, section in self._children.items():
            setattr(self, name, section(prefix=self._join(name)))
        for name, section in self._list_children.items():
            defaults = copy.deepcopy(getattr(type(self), name, []))
            setattr(self, name, [section(self._join(f"{name}.{i}"), item) for i, item in enumerate(defaults)])
        if values is not None:
            self.update(values)

    @property
    def prefix(self):
        return self._prefix

    def _join(self, name) -> str:
        return name if self._prefix == "" else f"{self._prefix}.{name}"

    def error(self, name: str, message: str) -> ConfigError:
        return ConfigError(message, field=self._join(name))

    @classmethod
    def fields(cls):
        """
        Returns (name, type, default) for each plain field, in declaration order.
        """
        result = []
        for klass in reversed(cls.__mro__):
            for name, var_type in vars(klass).get('__annotations__', {}).items():
                if cls._is_hidden_var(name) or name in cls._children or name in cls._list_children:
                    continue
                if any(name == existing for existing, _, _ in result):
                    continue
                result.append((name, var_type, getattr(cls, name, None)))
        return result

    @classmethod
    def field_helps(cls) -> Dict[str, str]:
        """
        Help text for each field, taken from the comment following its declaration.
        """
        helps = {}
        try:
            source_code = inspect.getsource(cls).split("\n")
        except (OSError, TypeError):
            # getsource might fail
            return helps
        class_vars = vars(cls)
        for line in source_code:
            line = line.lstrip(' \t')
            if line == "" or '#' not in line:
                continue
            comment_part = line[line.find('#') + 1:].strip(' ')
            first_word = line.split(' ')[0]
            if first_word.endswith(':'):
                first_word = first_word[:-1]
            if first_word in class_vars:
                helps[first_word] = comment_part
        return helps

    @staticmethod
    def _is_hidden_var(x: str):
        return x.startswith("_")

    def get_children(self) -> List["BaseConfig"]:
        """
        Returns list of config children, list valued sections included.
        """
        result = [getattr(self, name) for name in self._children]
        for name in self._list_children:
            result.extend(getattr(self, name))
        return result

    def _cast(self, name, var_type, value):
        default = getattr(type(self), name, None)
        if value is None:
            if default is None:
                return None
            raise self.error(name, "value may not be null")
        try:
            if var_type is bool:
                return utils.str2bool(value)
            if var_type is int:
                if isinstance(value, bool):
                    raise ValueError()
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError()
                return int(value)
            if var_type is float:
                if isinstance(value, bool):
                    raise ValueError()
                return float(value)
            if var_type is str:
                return str(value)
            return value
        except (ValueError, TypeError, argparse.ArgumentTypeError):
            raise self.error(name, f"expected {getattr(var_type, '__name__', var_type)}, found {value!r}")

    def update(self, params: dict):
        """
        Applies a nested dictionary of values, unknown keys are an error.
        """
        if not isinstance(params, dict):
            raise ConfigError(f"expected an object, found {params!r}", field=self._prefix or None)
        types = {name: var_type for name, var_type, _ in self.fields()}
        for key, value in params.items():
            if key in self._children:
                getattr(self, key).update(value)
            elif key in self._list_children:
                if not isinstance(value, list):
                    raise self.error(key, "expected a list")
                section = self._list_children[key]
                setattr(self, key, [section(self._join(f"{key}.{i}"), item) for i, item in enumerate(value)])
            elif key in types:
                setattr(self, key, self._cast(key, types[key], value))
            else:
                raise self.error(key, "unknown field")

    def set_path(self, path: str, raw: str):
        """
        Applies an override such as dynamics.beta=0.99 or groups.1.alpha=0.4. The value is read as JSON when
        possible and as a plain string otherwise.
        """
        try:
            value = json.loads(raw)
        except (ValueError, TypeError):
            value = raw
        parts = path.split(".")
        target = self
        for i, part in enumerate(parts[:-1]):
            if isinstance(target, list):
                if not part.isdigit() or int(part) >= len(target):
                    raise ConfigError("no such list item", field=".".join(parts[:i + 1]))
                target = target[int(part)]
            elif part in target._children:
                target = getattr(target, part)
            elif part in target._list_children:
                target = getattr(target, part)
            else:
                raise ConfigError("unknown section", field=".".join(parts[:i + 1]))
        if isinstance(target, list):
            raise ConfigError("cannot replace a whole list item", field=path)
        target.update({parts[-1]: value})

    def verify(self):
        """
        Make sure parameters are ok, raises ConfigError naming the offending field.
        """
        for child in self.get_children():
            child.verify()

    def auto(self):
        """
        Apply any auto logic.
        """
        for child in self.get_children():
            child.auto()

    def to_dict(self) -> dict:
        result = {name: copy.deepcopy(getattr(self, name)) for name, _, _ in self.fields()}
        for name in self._children:
            result[name] = getattr(self, name).to_dict()
        for name in self._list_children:
            result[name] = [item.to_dict() for item in getattr(self, name)]
        return result

    @classmethod
    def from_dict(cls, params: dict, prefix: str = ''):
        return cls(prefix, params)

    def schema(self) -> List[dict]:
        """
        name/type/default/help for every field, children included.
        """
        helps = self.field_helps()
        result = [
            {
                "name": self._join(name),
                "type": getattr(var_type, '__name__', str(var_type)),
                "default": getattr(type(self), name, None),
                "help": helps.get(name, ""),
            }
            for name, var_type, _ in self.fields()
        ]
        for name, section in self._children.items():
            result.extend(getattr(self, name).schema())
        for name, section in self._list_children.items():
            result.extend(section(self._join(f"{name}.N")).schema())
        return result

    def _check_range(self, name, lo=None, hi=None, lo_open=False, hi_open=False):
        value = getattr(self, name)
        if value is None or not math.isfinite(value):
            raise self.error(name, f"must be a finite number, found {value}")
        if lo is not None and (value < lo or (lo_open and value == lo)):
            raise self.error(name, f"must be {'>' if lo_open else '>='} {lo}, found {value}")
        if hi is not None and (value > hi or (hi_open and value == hi)):
            raise self.error(name, f"must be {'<' if hi_open else '<='} {hi}, found {value}")


class DynamicsConfig(BaseConfig):
    """
    Constants of the mean update.
    """
    beta: float = 0.99      # Scale of the benefit of a repaid loan, in [0,1].
    nu: float = 0.2         # Mean that groups denied credit revert to, in [0,1].

    def verify(self):
        self._check_range("beta", 0, 1)
        self._check_range("nu", 0, 1)

    def to_params(self, alpha: float = 0.0):
        from .dynamics import DynamicsParams
        return DynamicsParams(self.beta, self.nu, alpha)


class LenderConfig(BaseConfig):
    R: float = 0.25         # Interest earned on a repaid loan, > 0.
    gamma: float = 0.6      # Lender's discount factor, in [0,1).

    def verify(self):
        self._check_range("R", 0, lo_open=True)
        self._check_range("gamma", 0, 1, hi_open=True)

    def to_params(self):
        from .control import LenderParams
        return LenderParams(self.R, self.gamma)


class GroupConfig(BaseConfig):
    name: str = ""          # Display name, defaults to 'group <index>'.
    mu: float = 0.5         # Initial mean repayment probability, in (0,1).
    c: float = 1.6          # Beta shape (concentration), > 0.
    alpha: float = 0.0      # Misestimation level, in [0,1].

    def verify(self):
        self._check_range("mu", 0, 1, lo_open=True, hi_open=True)
        self._check_range("c", 0, lo_open=True)
        self._check_range("alpha", 0, 1)

    def to_state(self):
        from .population import PopulationState
        return PopulationState(self.mu, self.c)


class PolicyConfig(BaseConfig):
    kind: str = "optimal"   # optimal|greedy|fixed|social_welfare|blind|demographic_parity|equality_of_opportunity|equalized_odds|custom
    s: float = None         # Shared rate for fair policies, in (0,1).
    k1: float = 0.0         # First shape offset for custom fair policies.
    k2: float = 0.0         # Second shape offset for custom fair policies.
    threshold: float = None # Threshold for fixed and blind policies, in [0,1].
    optimize_s: bool = False  # Choose s (or the blind threshold) to maximize the discounted lender reward.
    name: str = ""          # Display name, defaults to kind.

    @property
    def label(self) -> str:
        return self.name or self.kind

    def verify(self):
        if self.kind not in POLICY_KINDS:
            raise self.error("kind", f"must be one of {'|'.join(POLICY_KINDS)}, found {self.kind!r}")
        if self.kind in ("demographic_parity", "equality_of_opportunity", "custom") and not self.optimize_s:
            if self.s is None:
                raise self.error("s", f"required for {self.kind}")
            self._check_range("s", 0, 1, lo_open=True, hi_open=True)
        if self.kind == "custom":
            self._check_range("k1")
            self._check_range("k2")
        if self.kind == "fixed" or (self.kind == "blind" and not self.optimize_s):
            if self.threshold is None:
                raise self.error("threshold", f"required for {self.kind}")
            self._check_range("threshold", 0, 1)
        if self.optimize_s and self.kind not in ("demographic_parity", "equality_of_opportunity", "custom", "blind"):
            raise self.error("optimize_s", f"not supported for {self.kind}")


class SolverConfig(BaseConfig):
    grid_size: int = 513            # Interior mu nodes of the Bellman solver, >= 64.
    action_grid: int = 257          # Thresholds tried per node before golden section refinement.
    tol: float = 1e-9               # Sup norm residual at which value iteration stops.
    refine_rounds: int = 2          # Golden section refinement rounds after the first convergence.
    max_iterations: int = 0         # Per round iteration cap, 0 derives it from the contraction bound.
    bifurcation_points: int = 49    # Starting means used to find basins of attraction.
    bifurcation_horizon: int = 5000 # Maximum steps followed from each starting mean.
    lemma1_check: bool = True       # Check solved thresholds never fall below nu/beta.
    A_steps: int = 1001             # Thresholds on the equilibrium curve.
    optimize_horizon: int = 200     # Horizon used when optimizing a fair policy's rate.

    def verify(self):
        if self.grid_size < 64:
            raise self.error("grid_size", f"must be >= 64, found {self.grid_size}")
        if self.action_grid < 2:
            raise self.error("action_grid", f"must be >= 2, found {self.action_grid}")
        self._check_range("tol", 0, lo_open=True)
        for name in ["refine_rounds", "max_iterations"]:
            if getattr(self, name) < 0:
                raise self.error(name, "must be >= 0")
        for name in ["bifurcation_points", "bifurcation_horizon", "A_steps", "optimize_horizon"]:
            if getattr(self, name) < 2:
                raise self.error(name, "must be >= 2")


class OutputConfig(BaseConfig):
    folder: str = "results"                     # Folder all outputs are written to.
    trajectory: str = "trajectory.csv"
    summary: str = "summary.json"
    value_function: str = "value_function.csv"
    solver_log: str = "solver_log.csv"          # Residual per value iteration sweep.
    bifurcation: str = "bifurcation.json"
    equilibrium: str = "equilibrium_curve.csv"
    fitted: str = "fitted_groups.json"
    comparison: str = "comparison.json"
    log: str = "log.txt"
    gnuplot: bool = False                       # Also write gnuplot scripts next to the CSV files.


class ScenarioConfig(BaseConfig):
    """
    Everything a command needs. groups and policies are lists of sections.
    """

    _children = {
        "dynamics": DynamicsConfig,
        "lender": LenderConfig,
        "policy": PolicyConfig,
        "solver": SolverConfig,
        "output": OutputConfig,
    }
    _list_children = {
        "groups": GroupConfig,
        "policies": PolicyConfig,
    }

    name: str = "scenario"          # Scenario name, used in summaries.
    horizon: int = 200              # Simulation steps T.
    data: str = ""                  # Score table CSV; when set, groups are fitted from it.
    bins: int = 100                 # Repayment histogram bins when fitting.
    smoothing: int = 1              # Moving average window when fitting, 1 disables smoothing.
    equalize_shapes: bool = False   # Give all fitted groups the average shape.

    groups = [
        {"name": "group 0", "mu": 0.5, "c": 1.6, "alpha": 0.0},
        {"name": "group 1", "mu": 0.9, "c": 1.6, "alpha": 0.0},
    ]
    policies = []

    def auto(self):
        super().auto()
        for i, group in enumerate(self.groups):
            if group.name == "":
                group.name = f"group {i}"
        for policy in self.policies + [self.policy]:
            if policy.name == "":
                policy.name = policy.kind

    def verify(self):
        super().verify()
        if self.horizon < 1:
            raise self.error("horizon", f"must be >= 1, found {self.horizon}")
        if self.bins < 2:
            raise self.error("bins", f"must be >= 2, found {self.bins}")
        if self.smoothing < 1:
            raise self.error("smoothing", f"must be >= 1, found {self.smoothing}")
        if not self.groups and not self.data:
            raise self.error("groups", "at least one group is required")
        names = [group.name for group in self.groups]
        if len(set(names)) != len(names):
            raise self.error("groups", f"group names must be unique, found {names}")
        labels = [policy.label for policy in self.policies]
        if len(set(labels)) != len(labels):
            raise self.error("policies", f"policy names must be unique, found {labels}")
        if not self.data:
            for i, policy in enumerate(self.policies):
                self.verify_policy(policy, f"policies.{i}")
            self.verify_policy(self.policy, "policy")

    def verify_policy(self, policy: PolicyConfig, path: str):
        """
        Checks a policy against the groups it will be applied to.
        """
        shapes = {group.c for group in self.groups}
        if policy.kind in JOINT_KINDS and len(shapes) > 1:
            raise ConfigError(f"{policy.kind} needs groups with a shared shape c, found {sorted(shapes)}",
                              field=f"{path}.kind")
        if policy.kind == "equalized_odds" and len(self.groups) != 2:
            raise ConfigError("equalized_odds needs exactly two groups", field=f"{path}.kind")
        if policy.kind in ("demographic_parity", "equality_of_opportunity", "custom"):
            k1 = 1.0 if policy.kind == "equality_of_opportunity" else (policy.k1 if policy.kind == "custom" else 0.0)
            k2 = policy.k2 if policy.kind == "custom" else 0.0
            min_a = min(group.c * group.mu for group in self.groups)
            min_b = min(group.c * (1 - group.mu) for group in self.groups)
            if not k1 > -min_a:
                raise ConfigError(f"must exceed {-min_a:.6g}", field=f"{path}.k1")
            if not k2 > -min_b:
                raise ConfigError(f"must exceed {-min_b:.6g}", field=f"{path}.k2")
        if policy.kind == "social_welfare":
            if not self.dynamics.beta > 0:
                raise ConfigError("social_welfare needs beta > 0", field="dynamics.beta")
            for i, group in enumerate(self.groups):
                if group.alpha >= 1:
                    raise ConfigError("social_welfare needs alpha < 1", field=f"groups.{i}.alpha")


def load_config(path: str = None, overrides: List[str] = None) -> ScenarioConfig:
    """
    Reads a scenario JSON file (or the defaults when path is None), applies name=value overrides, fills in
    automatic values and verifies the result.
    """
    config = ScenarioConfig()
    if path is not None:
        try:
            with open(path, "rt", encoding="utf-8") as f:
                params = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e}")
        config.update(params)
    for override in overrides or []:
        if "=" not in override:
            raise ConfigError(f"override must look like name=value, found {override!r}")
        key, value = override.split("=", 1)
        config.set_path(key.strip(), value.strip())
    config.auto()
    config.verify()
    return config
