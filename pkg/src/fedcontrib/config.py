"""JSON experiment configuration: parsing, validation, defaults.

Top-level keys (``schema_version`` is optional and must be 1 when given)::

    dataset   {"source": "synthetic", num_classes, dim, per_class, validation_per_class, spread, seed}
              {"source": "idx", train_images, train_labels, test_images, test_labels,
               train_limit?, validation_limit?, num_classes?}
    clients   [{"id", "num_samples", "classes"}, ...]
    hyper     {batch_size, local_epochs, learning_rate, rounds}
    model     {"hidden": [widths...]}                       default {"hidden": [32]}
    methods   subset of ["naive", "swc", "h1", "h2"]
    seeds     [int, ...]
    options   {score_basis, allow_overlap, weighting, sweep_values, jobs}
    output    {"directory": path}                            default {"directory": "results"}

Every validation error names the JSON path of the offending value.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any

from .contribution import METHODS, SCORE_BASES
from .data import ClientSpec
from .engine import WEIGHTINGS
from .errors import ConfigError
from .nn import Hyper

SCHEMA_VERSION = 1
TOP_LEVEL_REQUIRED = ("dataset", "clients", "hyper", "methods", "seeds")
TOP_LEVEL_OPTIONAL = ("schema_version", "model", "options", "output")

DEFAULT_OPTIONS = {
    "score_basis": "accuracy",
    "allow_overlap": False,
    "weighting": "samples",
    "sweep_values": [50, 200, 350],
    "jobs": 1,
}


@dataclass(frozen=True)
class SyntheticSource:
    num_classes: int = 10
    dim: int = 128
    per_class: int = 700
    validation_per_class: int = 200
    spread: float = 0.5
    seed: int = 0
    source: str = "synthetic"


@dataclass(frozen=True)
class IdxSource:
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    train_limit: int | None = 50000
    validation_limit: int | None = None
    num_classes: int | None = None
    source: str = "idx"


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: SyntheticSource | IdxSource
    clients: tuple[ClientSpec, ...]
    hyper: Hyper
    hidden: tuple[int, ...] = (32,)
    methods: tuple[str, ...] = ("swc",)
    seeds: tuple[int, ...] = (0,)
    score_basis: str = "accuracy"
    allow_overlap: bool = False
    weighting: str = "samples"
    sweep_values: tuple[int, ...] = (50, 200, 350)
    jobs: int = 1
    output_dir: str = "results"

    def with_overrides(self, **changes: Any) -> ExperimentConfig:
        return replace(self, **changes)

    def with_client_sizes(self, sizes: dict[int, int]) -> ExperimentConfig:
        clients = tuple(replace(c, num_samples=sizes.get(c.id, c.num_samples)) for c in self.clients)
        return replace(self, clients=clients)

    def to_dict(self) -> dict:
        ds = asdict(self.dataset)
        source = ds.pop("source")
        return {
            "schema_version": SCHEMA_VERSION,
            "dataset": {"source": source, **ds},
            "clients": [
                {"id": c.id, "num_samples": c.num_samples, "classes": sorted(c.class_set)} for c in self.clients
            ],
            "hyper": asdict(self.hyper),
            "model": {"hidden": list(self.hidden)},
            "methods": list(self.methods),
            "seeds": list(self.seeds),
            "options": {
                "score_basis": self.score_basis,
                "allow_overlap": self.allow_overlap,
                "weighting": self.weighting,
                "sweep_values": list(self.sweep_values),
                "jobs": self.jobs,
            },
            "output": {"directory": self.output_dir},
        }


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v: Any) -> bool:
    return (isinstance(v, (int, float))) and not isinstance(v, bool)


def _object(v: Any, path: str, required: tuple[str, ...], optional: tuple[str, ...] = ()) -> dict:
    if not isinstance(v, dict):
        raise ConfigError(f"expected an object, got {type(v).__name__}", path)
    for key in v:
        if key not in required and key not in optional:
            raise ConfigError("unknown key", f"{path}.{key}" if path else key)
    for key in required:
        if key not in v:
            raise ConfigError("missing required key", f"{path}.{key}" if path else key)
    return v


def _int(v: Any, path: str, minimum: int | None = None) -> int:
    if not _is_int(v):
        raise ConfigError(f"expected an integer, got {v!r}", path)
    if minimum is not None and v < minimum:
        raise ConfigError(f"must be >= {minimum}, got {v}", path)
    return v


def _positive_real(v: Any, path: str) -> float:
    if not _is_real(v):
        raise ConfigError(f"expected a number, got {v!r}", path)
    if not v > 0:
        raise ConfigError(f"must be > 0, got {v}", path)
    return float(v)


def _choice(v: Any, path: str, allowed: tuple[str, ...]) -> str:
    if v not in allowed:
        raise ConfigError(f"expected one of {list(allowed)}, got {v!r}", path)
    return v


def _string(v: Any, path: str) -> str:
    if not isinstance(v, str) or not v:
        raise ConfigError(f"expected a nonempty string, got {v!r}", path)
    return v


def _int_list(v: Any, path: str, minimum: int | None = None, nonempty: bool = True) -> tuple[int, ...]:
    if not isinstance(v, list):
        raise ConfigError(f"expected a list, got {type(v).__name__}", path)
    if nonempty and not v:
        raise ConfigError("must not be empty", path)
    return tuple(_int(x, f"{path}[{i}]", minimum) for i, x in enumerate(v))


def _parse_dataset(v: Any, base_dir: Path) -> SyntheticSource | IdxSource:
    if not isinstance(v, dict) or "source" not in v:
        raise ConfigError("expected an object with a 'source' key", "dataset")
    source = _choice(v["source"], "dataset.source", ("synthetic", "idx"))
    if source == "synthetic":
        fields = ("num_classes", "dim", "per_class", "validation_per_class", "spread", "seed")
        _object(v, "dataset", ("source",), fields)
        d = SyntheticSource()
        return SyntheticSource(
            num_classes=_int(v.get("num_classes", d.num_classes), "dataset.num_classes", 2),
            dim=_int(v.get("dim", d.dim), "dataset.dim", 2),
            per_class=_int(v.get("per_class", d.per_class), "dataset.per_class", 1),
            validation_per_class=_int(v.get("validation_per_class", d.validation_per_class),
                                      "dataset.validation_per_class", 1),
            spread=_positive_real(v.get("spread", d.spread), "dataset.spread"),
            seed=_int(v.get("seed", d.seed), "dataset.seed", 0),
        )
    paths = ("train_images", "train_labels", "test_images", "test_labels")
    _object(v, "dataset", ("source", *paths), ("train_limit", "validation_limit", "num_classes"))
    resolved = {}
    for key in paths:
        p = Path(_string(v[key], f"dataset.{key}"))
        resolved[key] = str(p if p.is_absolute() else base_dir / p)
    limits = {}
    for key in ("train_limit", "validation_limit", "num_classes"):
        if key in v and v[key] is not None:
            limits[key] = _int(v[key], f"dataset.{key}", 1)
        elif key in v:
            limits[key] = None
    return IdxSource(**resolved, **limits)


def _parse_clients(v: Any, num_classes: int | None) -> tuple[ClientSpec, ...]:
    if not isinstance(v, list) or not v:
        raise ConfigError("expected a nonempty list of clients", "clients")
    specs = []
    seen = set()
    for i, entry in enumerate(v):
        path = f"clients[{i}]"
        _object(entry, path, ("id", "num_samples", "classes"))
        cid = _int(entry["id"], f"{path}.id", 0)
        if cid in seen:
            raise ConfigError(f"duplicate client id {cid}", f"{path}.id")
        seen.add(cid)
        # empty clients cannot train; rejected here rather than mid-run
        n = _int(entry["num_samples"], f"{path}.num_samples", 1)
        classes = _int_list(entry["classes"], f"{path}.classes", 0)
        if len(set(classes)) != len(classes):
            raise ConfigError("duplicate class ids", f"{path}.classes")
        if num_classes is not None:
            bad = [c for c in classes if c >= num_classes]
            if bad:
                raise ConfigError(f"classes {bad} outside [0, {num_classes})", f"{path}.classes")
        specs.append(ClientSpec(cid, n, frozenset(classes)))
    return tuple(specs)


def _parse_hyper(v: Any) -> Hyper:
    keys = ("batch_size", "local_epochs", "learning_rate", "rounds")
    _object(v, "hyper", keys)
    return Hyper(
        batch_size=_int(v["batch_size"], "hyper.batch_size", 1),
        local_epochs=_int(v["local_epochs"], "hyper.local_epochs", 1),
        learning_rate=_positive_real(v["learning_rate"], "hyper.learning_rate"),
        rounds=_int(v["rounds"], "hyper.rounds", 1),
    )


def _parse_options(v: Any) -> dict:
    _object(v, "options", (), tuple(DEFAULT_OPTIONS))
    opts = {**DEFAULT_OPTIONS, **v}
    allow = opts["allow_overlap"]
    if not isinstance(allow, bool):
        raise ConfigError(f"expected a boolean, got {allow!r}", "options.allow_overlap")
    return {
        "score_basis": _choice(opts["score_basis"], "options.score_basis", SCORE_BASES),
        "allow_overlap": allow,
        "weighting": _choice(opts["weighting"], "options.weighting", WEIGHTINGS),
        "sweep_values": _int_list(opts["sweep_values"], "options.sweep_values", 1),
        "jobs": _int(opts["jobs"], "options.jobs", 1),
    }


def config_from_dict(doc: Any, base_dir: str | Path = ".") -> ExperimentConfig:
    """Validate a decoded JSON document. Relative IDX paths resolve against ``base_dir``."""
    _object(doc, "", TOP_LEVEL_REQUIRED, TOP_LEVEL_OPTIONAL)
    if "schema_version" in doc and doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema version {doc['schema_version']!r}", "schema_version")
    dataset = _parse_dataset(doc["dataset"], Path(base_dir))
    clients = _parse_clients(doc["clients"], dataset.num_classes)
    hyper = _parse_hyper(doc["hyper"])

    model = _object(doc.get("model", {"hidden": [32]}), "model", (), ("hidden",))
    hidden = _int_list(model.get("hidden", [32]), "model.hidden", 1, nonempty=False)

    methods = doc["methods"]
    if not isinstance(methods, list) or not methods:
        raise ConfigError("expected a nonempty list", "methods")
    for i, m in enumerate(methods):
        _choice(m, f"methods[{i}]", METHODS)
    if len(set(methods)) != len(methods):
        raise ConfigError("duplicate methods", "methods")
    if ("naive" in methods or "swc" in methods) and len(clients) < 2:
        raise ConfigError("naive and swc need at least 2 clients", "clients")

    seeds = _int_list(doc["seeds"], "seeds", 0)
    options = _parse_options(doc.get("options", {}))
    output = _object(doc.get("output", {}), "output", (), ("directory",))
    out_dir = _string(output.get("directory", "results"), "output.directory")

    return ExperimentConfig(
        dataset=dataset,
        clients=clients,
        hyper=hyper,
        hidden=hidden,
        methods=tuple(methods),
        seeds=seeds,
        output_dir=out_dir,
        **options,
    )


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return config_from_dict(doc, base_dir=path.parent)


def preset_path(name: str) -> Path:
    """Path of a config shipped with the package (``full_variety7`` etc.)."""
    p = Path(__file__).parent / "presets" / f"{name}.json"
    if not p.exists():
        available = sorted(q.stem for q in p.parent.glob("*.json"))
        raise ConfigError(f"no preset {name!r}; available: {available}")
    return p


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_path(name))
