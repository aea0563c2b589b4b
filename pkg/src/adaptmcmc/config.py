"""Experiment configuration: YAML text <-> validated :class:`ExperimentConfig`.

Every block is optional except ``target``; missing keys take the defaults
below. Validation collects every violation before reporting.
"""
import copy
import hashlib
import json
from dataclasses import dataclass

import numpy as np
import yaml

from . import target as tgt
from .algorithms import EmImhAlgorithm, NsrwmAlgorithm
from .controller import ConfigurationError, MixtureCoverage, NsrwmCoverage, StepsizeSchedule
from .kernels import Safeguard
from .mixture_em import MixtureXi

DEFAULTS = {
    "algorithm": {
        "kind": "nsrwm",
        "lambda": None,
        "mu0": None,
        "gamma0": None,
        "x0": None,
        "components": 2,
        "iota": 0.1,
        "init_weights": None,
        "init_means": None,
        "init_covs": None,
        "safeguard": {"kind": "gaussian", "scale": 25.0, "df": 4.0},
        "weight_floor": None,
        "cov_floor": None,
    },
    "schedule": {"c0": 0.5, "alpha": 0.7},
    "coverage": {"m0": None, "eps0": None, "m1": None, "f0": None},
    "run": {"steps": 1000, "burn_in": 0, "seed": 0, "replicates": 1, "cadence": 100,
            "write_traces": 1, "workers": None},
    "diagnostics": {
        "functions": ["x1", "x1^2"],
        "batches": 30,
        "required": False,
        "clt": None,
        "probes": None,
    },
    "output": "out",
}

CLT_DEFAULTS = {"function": "x1", "replicates": 200, "n": 20000, "burn_in": 2000,
                "sigma": "replication"}


class ConfigErrors(ValueError):
    """All violations found in a configuration, each as ``(path, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(out.get(k), dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    data: dict

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.data == other.data

    @property
    def target(self) -> tgt.TargetModel:
        return tgt.from_dict(self.data["target"])

    @property
    def schedule(self) -> StepsizeSchedule:
        s = self.data["schedule"]
        return StepsizeSchedule(float(s["c0"]), float(s["alpha"]))

    @property
    def run(self) -> dict:
        return self.data["run"]

    @property
    def diagnostics(self) -> dict:
        return self.data["diagnostics"]

    @property
    def clt(self) -> dict | None:
        c = self.data["diagnostics"].get("clt")
        return None if c is None else _merge(CLT_DEFAULTS, c)

    def to_text(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True)

    def hash(self) -> str:
        """Digest of every field that can change results (not ``output`` or ``run.workers``)."""
        d = {k: v for k, v in self.data.items() if k != "output"}
        d["run"] = {k: v for k, v in d["run"].items() if k != "workers"}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def with_overrides(self, seed=None, steps=None, output=None) -> "ExperimentConfig":
        d = copy.deepcopy(self.data)
        if seed is not None:
            d["run"]["seed"] = int(seed)
        if steps is not None:
            d["run"]["steps"] = int(steps)
        if output is not None:
            d["output"] = str(output)
        return validate(d)

    def build_algorithm(self):
        return build_algorithm(self.data, self.target)


def _initial_mixture(a: dict, d: int) -> MixtureXi:
    m = int(a["components"])
    w = a["init_weights"] or [1.0 / m] * m
    if a["init_means"] is not None:
        means = np.asarray(a["init_means"], dtype=float).reshape(m, d)
    else:
        means = np.zeros((m, d))
        means[:, 0] = np.arange(m) - (m - 1) / 2.0
    covs = (np.asarray(a["init_covs"], dtype=float).reshape(m, d, d)
            if a["init_covs"] is not None else np.array([np.eye(d)] * m))
    return MixtureXi.from_params(w, means, covs)


def build_algorithm(data: dict, t: tgt.TargetModel):
    a, c = data["algorithm"], data["coverage"]
    d = t.dim
    if a["kind"] == "nsrwm":
        mu0 = np.zeros(d) if a["mu0"] is None else np.asarray(a["mu0"], float)
        gamma0 = np.eye(d) if a["gamma0"] is None else np.asarray(a["gamma0"], float)
        cov = NsrwmCoverage.default_for(mu0, gamma0)
        cov = NsrwmCoverage(c["m0"] or cov.m0, c["eps0"] or cov.eps0, c["m1"] or cov.m1)
        return NsrwmAlgorithm(t, mu0, gamma0, a["x0"], a["lambda"], cov)
    xi0 = _initial_mixture(a, d)
    mean0, cov0 = xi0.moments()
    sg = a["safeguard"]
    if sg["kind"] == "student_t":
        safeguard = Safeguard.student_t(mean0, sg["scale"] * cov0, sg["df"])
    else:
        safeguard = Safeguard.gaussian(mean0, sg["scale"] * cov0)
    cov = MixtureCoverage.default_for(xi0)
    cov = MixtureCoverage(c["m0"] or cov.m0, c["eps0"] or cov.eps0, c["m1"] or cov.m1,
                          c["f0"] or cov.f0)
    return EmImhAlgorithm(t, xi0, a["iota"], safeguard, a["weight_floor"], a["cov_floor"],
                          a["x0"], cov)


def validate(raw: dict) -> ExperimentConfig:
    """Fills defaults and checks every cross-field constraint.

    Raises:
        ConfigErrors: listing every violation with its field path.
    """
    errors = []
    if not isinstance(raw, dict):
        raise ConfigErrors([("", "configuration must be a mapping")])
    unknown = set(raw) - set(DEFAULTS) - {"target"}
    errors += [(k, "unknown block") for k in sorted(unknown)]
    data = _merge(DEFAULTS, {k: v for k, v in raw.items() if k not in unknown})

    t = None
    if "target" not in raw:
        errors.append(("target", "missing target block"))
    else:
        try:
            t = tgt.from_dict(raw["target"])
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(("target", str(exc)))

    a = data["algorithm"]
    if a["kind"] not in ("nsrwm", "em_imh"):
        errors.append(("algorithm.kind", "must be 'nsrwm' or 'em_imh'"))
    if a["lambda"] is not None and not a["lambda"] > 0:
        errors.append(("algorithm.lambda", "must be positive"))
    if not (isinstance(a["iota"], (int, float)) and 0.0 < a["iota"] < 1.0):
        errors.append(("algorithm.iota", "iota out of (0,1)"))
    if not (isinstance(a["components"], int) and a["components"] >= 1):
        errors.append(("algorithm.components", "must be a positive integer"))
    if a["safeguard"].get("kind") not in ("gaussian", "student_t"):
        errors.append(("algorithm.safeguard.kind", "must be 'gaussian' or 'student_t'"))
    if not a["safeguard"].get("scale", 0) > 0:
        errors.append(("algorithm.safeguard.scale", "must be positive"))

    s = data["schedule"]
    if not (isinstance(s["c0"], (int, float)) and s["c0"] > 0):
        errors.append(("schedule.c0", "must be positive"))
    elif a["kind"] == "em_imh" and s["c0"] > 1:
        errors.append(("schedule.c0", "must be <= 1 for em_imh (convex statistic updates)"))
    if not (isinstance(s["alpha"], (int, float)) and 0.5 < s["alpha"] <= 1.0):
        errors.append(("schedule.alpha",
                       "stepsize condition violated: alpha must lie in (1/2, 1] so that "
                       "sum gamma_k diverges and sum(gamma_k^2 + k^-1/2 gamma_k) converges"))

    for k, v in data["coverage"].items():
        if v is not None and not v > 0:
            errors.append((f"coverage.{k}", "must be positive"))

    r = data["run"]
    if r["workers"] is not None and not (isinstance(r["workers"], int) and r["workers"] >= 1):
        errors.append(("run.workers", "must be a positive integer"))
    for k in ("steps", "replicates", "cadence"):
        if not (isinstance(r[k], int) and r[k] >= 1):
            errors.append((f"run.{k}", "must be a positive integer"))
    for k in ("burn_in", "write_traces", "seed"):
        if not (isinstance(r[k], int) and r[k] >= 0):
            errors.append((f"run.{k}", "must be a nonnegative integer"))
    if isinstance(r["burn_in"], int) and isinstance(r["steps"], int) and r["burn_in"] >= r["steps"]:
        errors.append(("run.burn_in", "must be smaller than run.steps"))

    dg = data["diagnostics"]
    from .diagnostics import parse_function
    for i, f in enumerate(dg["functions"] or []):
        try:
            kind, idx = parse_function(str(f))
            if t is not None and any(j >= t.dim for j in idx):
                errors.append((f"diagnostics.functions[{i}]", "coordinate beyond target dimension"))
        except ValueError as exc:
            errors.append((f"diagnostics.functions[{i}]", str(exc)))
    if dg["clt"] is not None:
        c = _merge(CLT_DEFAULTS, dg["clt"])
        if not (isinstance(c["replicates"], int) and c["replicates"] >= 100):
            errors.append(("diagnostics.clt.replicates", "must be >= 100"))
        if c["sigma"] not in ("replication", "batch_means"):
            errors.append(("diagnostics.clt.sigma", "must be 'replication' or 'batch_means'"))
        try:
            parse_function(str(c["function"]))
        except ValueError as exc:
            errors.append(("diagnostics.clt.function", str(exc)))

    if not errors and t is not None:
        try:
            build_algorithm(data, t)
        except (ConfigurationError, ValueError) as exc:
            errors.append(("algorithm", str(exc)))
    if errors:
        raise ConfigErrors(errors)
    return ExperimentConfig(data)


def parse_config(text: str) -> ExperimentConfig:
    """Parses YAML text into a validated configuration.

    Raises:
        ConfigErrors: on malformed YAML or any constraint violation.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigErrors([("", f"malformed YAML: {exc}")]) from exc
    return validate(raw)
