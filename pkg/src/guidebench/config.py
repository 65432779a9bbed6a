"""Run configuration: TOML file describing predictor roster and stage knobs."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .features import FeatureSet
from .graph import GuidelineGraph, load_graph, parse_graph
from .predictors import Backend, PredictorSpec
from .simulate import SimModel

BUILTIN_GRAPH = "builtin:toy"


@dataclass(frozen=True)
class ModelEntry:
    model_id: str
    backend: Backend
    options: dict

    def predictor_spec(self, predict_defaults: dict) -> PredictorSpec:
        merged = {**predict_defaults, **self.options}
        return PredictorSpec(
            model_id=self.model_id,
            backend=self.backend,
            temperature=float(merged.get("temperature", 1.0)),
            endpoint=merged.get("endpoint"),
            api_key_env=merged.get("api_key_env"),
            timeout=float(merged.get("timeout", 60.0)),
            retries=int(merged.get("retries", 3)),
            backoff=float(merged.get("backoff", 1.0)),
            concurrency=int(merged.get("concurrency", 4)),
            rate_per_sec=merged.get("rate_per_sec"),
            replay_path=merged.get("replay_path"),
            accuracy=float(merged.get("accuracy", 0.9)),
            consistency=float(merged.get("consistency", 0.0)),
            parse_failure_rate=float(merged.get("parse_failure_rate", 0.0)),
        )

    def sim_model(self) -> SimModel:
        if self.backend is not Backend.SIMULATED:
            raise ConfigError(
                f"model {self.model_id!r} is not simulated; cohort simulation "
                "needs accuracy/consistency knobs"
            )
        return SimModel(
            model_id=self.model_id,
            accuracy=float(self.options.get("accuracy", 0.9)),
            consistency=float(self.options.get("consistency", 0.0)),
        )


@dataclass
class RunConfig:
    seed: int
    k: int
    delta: float
    graph_source: str
    cohort_source: str  # "simulate" or a JSONL path
    n_patients: int
    models: list[ModelEntry]
    predict_defaults: dict
    graph_mode: str
    synthetic_enabled: bool
    synthetic_n_cases: int
    synthetic_generator: ModelEntry | None
    synthetic_evaluator: str | None
    feature_set: FeatureSet
    C: float
    split_ratio: float
    max_iter: int
    config_hash: str
    base_dir: Path
    raw: dict = field(default_factory=dict)

    def model_ids(self) -> list[str]:
        return [m.model_id for m in self.models]

    def model(self, model_id: str) -> ModelEntry:
        for entry in self.models:
            if entry.model_id == model_id:
                return entry
        raise ConfigError(f"unknown model {model_id!r}")

    def load_graph(self) -> GuidelineGraph:
        if self.graph_source == BUILTIN_GRAPH:
            text = (
                resources.files("guidebench")
                .joinpath("assets/toy_guideline.json")
                .read_text("utf-8")
            )
            return parse_graph(text)
        path = Path(self.graph_source)
        if not path.is_absolute():
            path = self.base_dir / path
        return load_graph(path)


def _model_entry(raw: dict, idx: int) -> ModelEntry:
    if not isinstance(raw, dict):
        raise ConfigError(f"models[{idx}] must be a table")
    model_id = raw.get("model_id")
    if not isinstance(model_id, str) or not model_id:
        raise ConfigError(f"models[{idx}] needs a nonempty model_id")
    backend_raw = raw.get("backend", "simulated")
    try:
        backend = Backend(backend_raw)
    except ValueError:
        raise ConfigError(f"models[{idx}]: unknown backend {backend_raw!r}")
    options = {k: v for k, v in raw.items() if k not in ("model_id", "backend")}
    return ModelEntry(model_id=model_id, backend=backend, options=options)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse and validate the TOML config; overrides come from CLI flags."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw_bytes = path.read_bytes()
    try:
        raw = tomllib.loads(raw_bytes.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    overrides = overrides or {}

    run = raw.get("run", {})
    seed = int(overrides.get("seed") if overrides.get("seed") is not None else run.get("seed", 0))
    k = int(overrides.get("k") if overrides.get("k") is not None else run.get("k", 10))
    delta = float(
        overrides.get("delta") if overrides.get("delta") is not None else run.get("delta", 0.9)
    )
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if not 0.0 <= delta <= 1.0:
        raise ConfigError(f"delta must be in [0,1], got {delta}")

    graph = raw.get("graph", {})
    graph_source = graph.get("source", BUILTIN_GRAPH)

    cohort = raw.get("cohort", {})
    cohort_source = cohort.get("source", "simulate")
    n_patients = int(cohort.get("n_patients", 50))

    models_raw = raw.get("models", [])
    if not models_raw:
        raise ConfigError("config must declare at least one [[models]] entry")
    models = [_model_entry(m, i) for i, m in enumerate(models_raw)]
    ids = [m.model_id for m in models]
    if len(set(ids)) != len(ids):
        raise ConfigError("model ids must be unique")
    if overrides.get("models"):
        keep = set(overrides["models"])
        unknown = keep - set(ids)
        if unknown:
            raise ConfigError(f"--models names unknown ids: {sorted(unknown)}")
        models = [m for m in models if m.model_id in keep]
    if overrides.get("backend"):
        try:
            forced = Backend(overrides["backend"])
        except ValueError:
            raise ConfigError(f"unknown backend {overrides['backend']!r}")
        models = [
            ModelEntry(model_id=m.model_id, backend=forced, options=m.options) for m in models
        ]

    predict = raw.get("predict", {})
    graph_mode = predict.get("graph_mode", "full")
    if graph_mode not in ("full", "pages"):
        raise ConfigError(f"predict.graph_mode must be 'full' or 'pages', got {graph_mode!r}")

    synthetic = raw.get("synthetic", {})
    synthetic_enabled = bool(synthetic.get("enabled", False))
    synthetic_n_cases = int(synthetic.get("n_cases", 10))
    generator_raw = synthetic.get("generator")
    synthetic_generator = (
        _model_entry(generator_raw, -1) if isinstance(generator_raw, dict) else None
    )
    synthetic_evaluator = synthetic.get("evaluator")
    if synthetic_enabled:
        if synthetic_generator is None:
            raise ConfigError("synthetic.enabled requires a synthetic.generator table")
        if not synthetic_evaluator or synthetic_evaluator not in ids:
            raise ConfigError("synthetic.evaluator must name a roster model")
        if synthetic_generator.model_id == synthetic_evaluator:
            raise ConfigError("synthetic generator and evaluator must differ")

    clf = raw.get("classifier", {})
    feature_set_raw = overrides.get("feature_set") or clf.get("feature_set", "base_aggregated")
    try:
        feature_set = FeatureSet(feature_set_raw)
    except ValueError:
        raise ConfigError(
            f"unknown feature set {feature_set_raw!r}; "
            f"choose from {[f.value for f in FeatureSet]}"
        )

    return RunConfig(
        seed=seed,
        k=k,
        delta=delta,
        graph_source=graph_source,
        cohort_source=cohort_source,
        n_patients=n_patients,
        models=models,
        predict_defaults=dict(predict),
        graph_mode=graph_mode,
        synthetic_enabled=synthetic_enabled,
        synthetic_n_cases=synthetic_n_cases,
        synthetic_generator=synthetic_generator,
        synthetic_evaluator=synthetic_evaluator,
        feature_set=feature_set,
        C=float(clf.get("C", 0.1)),
        split_ratio=float(clf.get("split_ratio", 0.7)),
        max_iter=int(clf.get("max_iter", 10000)),
        config_hash=hashlib.sha256(raw_bytes).hexdigest(),
        base_dir=path.parent.resolve(),
        raw=raw,
    )
