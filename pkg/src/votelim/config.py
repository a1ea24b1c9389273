"""Declarative experiment configs: YAML loading, validation, and hashing.

One file describes one experiment (model, experiment kind, n or n grid,
sample count, mandatory seed, thresholds).  Validation errors cite the
line of the offending key when the config came from a file.  The config
hash is the SHA-256 of the canonical JSON form of the effective document
and is embedded in every output artifact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .cwm import CouplingSpec
from .errors import ConfigError
from .measures import (
    ExplicitSchedule,
    Gaussian,
    Mixture,
    PointMassMixture,
    PowerLawSchedule,
    Product,
    UniformBox,
    bias_map,
)
from .models import (
    ContractedSequence,
    CurieWeissSequence,
    DeFinettiModel,
    GroupStructure,
    StaticSequence,
)

EXPERIMENT_KINDS = (
    "simulate",
    "verify-clt",
    "verify-llt",
    "verify-cwm",
    "estimate-alpha",
    "correlation-decay",
)


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(doc) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def _yaml_line_map(text: str) -> dict[str, int]:
    """Map dotted key paths to 1-based line numbers of a YAML document."""
    lines: dict[str, int] = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                sub = f"{path}.{key_node.value}" if path else str(key_node.value)
                lines[sub] = key_node.start_mark.line + 1
                walk(value_node, sub)
        elif isinstance(node, yaml.SequenceNode):
            for idx, item in enumerate(node.value):
                sub = f"{path}[{idx}]"
                lines[sub] = item.start_mark.line + 1
                walk(item, sub)

    root = yaml.compose(text)
    if root is not None:
        walk(root, "")
    return lines


class _Doc:
    """A dict wrapper that anchors validation errors to config lines."""

    def __init__(self, doc, lines=None, path=""):
        self.doc = doc
        self.lines = lines or {}
        self.path = path

    def error(self, message: str, key: str | None = None):
        path = f"{self.path}.{key}" if key and self.path else (key or self.path)
        line = self.lines.get(path)
        anchor = f"line {line}: " if line else ""
        where = f"{path}: " if path else ""
        raise ConfigError(f"{anchor}{where}{message}")

    def child(self, key):
        if not isinstance(self.doc, dict) or key not in self.doc:
            self.error(f"missing required key {key!r}")
        return _Doc(self.doc[key], self.lines, f"{self.path}.{key}" if self.path else key)

    def item(self, idx):
        if not isinstance(self.doc, (list, tuple)) or idx >= len(self.doc):
            self.error(f"expected a list with at least {idx + 1} entries")
        return _Doc(self.doc[idx], self.lines, f"{self.path}[{idx}]")

    def get(self, key, default=None):
        if not isinstance(self.doc, dict):
            self.error("expected a mapping")
        return self.doc.get(key, default)

    def require(self, key):
        if not isinstance(self.doc, dict) or key not in self.doc:
            self.error(f"missing required key {key!r}")
        return self.doc[key]

    def wrap(self, fn, key=None):
        """Run a constructor, re-anchoring any ConfigError it raises."""
        try:
            return fn()
        except ConfigError as exc:
            self.error(str(exc), key)


def _build_measure(node: _Doc):
    variant = node.require("variant")
    if variant == "point-mass-mixture":
        atoms = node.require("atoms")
        return node.wrap(
            lambda: PointMassMixture([(a["location"], a["weight"]) for a in atoms]),
            "atoms",
        )
    if variant == "uniform-box":
        return node.wrap(lambda: UniformBox(node.require("lower"), node.require("upper")))
    if variant == "gaussian":
        return node.wrap(lambda: Gaussian(node.require("mean"), node.require("covariance")))
    if variant == "product":
        factors = [_build_measure(node.child("factors").item(i)) for i in range(len(node.require("factors")))]
        return node.wrap(lambda: Product(factors), "factors")
    if variant == "mixture":
        components = node.require("components")
        built = [
            (_build_measure(node.child("components").item(i).child("measure")), components[i]["weight"])
            for i in range(len(components))
        ]
        return node.wrap(lambda: Mixture(built), "components")
    node.error(f"unknown measure variant {variant!r}", "variant")


def _build_schedule(node: _Doc):
    kind = node.require("kind")
    if kind == "power-law":
        return node.wrap(
            lambda: PowerLawSchedule(node.require("coefficient"), node.require("exponent"))
        )
    if kind == "explicit":
        return node.wrap(
            lambda: ExplicitSchedule(
                node.require("table"), node.require("regimes"), node.get("h")
            )
        )
    node.error(f"unknown schedule kind {kind!r}", "kind")


def _build_coupling(node: _Doc) -> CouplingSpec:
    if "beta" in node.doc:
        return node.wrap(lambda: CouplingSpec.single_group(node.doc["beta"]), "beta")
    if "j" in node.doc:
        return node.wrap(lambda: CouplingSpec(node.doc["j"]), "j")
    node.error("coupling needs either 'beta' or a matrix 'j'")


def build_model(node: _Doc) -> DeFinettiModel:
    groups_node = node.child("groups")
    groups = groups_node.wrap(
        lambda: GroupStructure(groups_node.require("m"), groups_node.require("proportions"))
    )
    bmap = node.wrap(lambda: bias_map(node.require("bias_map")), "bias_map")
    seq_node = node.child("sequence")
    kind = seq_node.require("kind")
    if kind == "static":
        sequence = seq_node.wrap(
            lambda: StaticSequence(_build_measure(seq_node.child("base"))), "base"
        )
    elif kind == "contracted":
        base = _build_measure(seq_node.child("base"))
        schedule = _build_schedule(seq_node.child("schedule"))
        m = groups.m
        if isinstance(schedule, PowerLawSchedule) and schedule.m == 1 and m > 1:
            schedule = PowerLawSchedule(
                schedule.coefficients * m, schedule.exponents * m, m=m
            )
        sequence = ContractedSequence(base, schedule)
    elif kind == "curie-weiss":
        sequence = CurieWeissSequence(_build_coupling(seq_node.child("coupling")))
    else:
        seq_node.error(f"unknown sequence kind {kind!r}", "kind")
    return node.wrap(lambda: DeFinettiModel(groups, sequence, bmap))


@dataclass
class ExperimentConfig:
    """A validated experiment plus the raw document it was built from."""

    experiment: str
    seed: int
    raw: dict
    model: DeFinettiModel | None = None
    n: int | None = None
    n_grid: tuple[int, ...] | None = None
    count: int | None = None
    workers: int = 1
    out: str | None = None
    thresholds: dict = field(default_factory=dict)
    input_path: str | None = None
    delta: float | None = None

    def hash(self) -> str:
        return config_hash(self.raw)


_NEEDS_MODEL = {"simulate", "verify-clt", "verify-llt", "verify-cwm", "correlation-decay"}
_NEEDS_COUNT = {"simulate", "verify-clt"}
_NEEDS_GRID = {"verify-llt", "correlation-decay"}


def config_from_dict(doc: dict, lines: dict | None = None) -> ExperimentConfig:
    root = _Doc(doc, lines)
    experiment = root.require("experiment")
    if experiment not in EXPERIMENT_KINDS:
        root.error(f"unknown experiment kind {experiment!r}; expected one of {EXPERIMENT_KINDS}", "experiment")
    seed = root.require("seed")
    if not isinstance(seed, int):
        root.error("seed must be an integer (no wall-clock default is provided)", "seed")

    model = None
    if experiment in _NEEDS_MODEL:
        if "model" not in doc:
            root.error("this experiment needs a model", "model")
        model = build_model(root.child("model"))
        if experiment == "verify-cwm" and model.sequence.kind != "curie-weiss":
            root.error("verify-cwm needs a curie-weiss sequence", "model")

    cfg = ExperimentConfig(
        experiment=experiment,
        seed=int(seed),
        raw=doc,
        model=model,
        n=int(doc["n"]) if doc.get("n") is not None else None,
        n_grid=tuple(int(x) for x in doc["n_grid"]) if "n_grid" in doc else None,
        count=int(doc["count"]) if doc.get("count") is not None else None,
        workers=int(doc.get("workers", 1)),
        out=doc.get("out"),
        thresholds=doc.get("thresholds", {}) or {},
        input_path=doc.get("input"),
        delta=doc.get("delta"),
    )
    if experiment in _NEEDS_COUNT and not cfg.count:
        root.error("this experiment needs a sample count", "count")
    if experiment in _NEEDS_GRID and not cfg.n_grid:
        root.error("this experiment needs an n_grid", "n_grid")
    if experiment in _NEEDS_MODEL and experiment != "verify-cwm" and cfg.n is None and cfg.n_grid is None:
        root.error("this experiment needs n or n_grid", "n")
    if experiment == "verify-cwm" and cfg.n is None and cfg.n_grid is None:
        root.error("verify-cwm needs n or n_grid for the equivalence check", "n")
    if experiment == "estimate-alpha" and not cfg.input_path and "points" not in doc:
        root.error("estimate-alpha needs an input CSV path or inline points", "input")
    if cfg.workers < 1:
        root.error("workers must be at least 1", "workers")
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"could not parse {path}: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(doc, _yaml_line_map(text))
