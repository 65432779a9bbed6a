"""Pipeline stages over a content-hashed artifact directory.

Stages read and write only declared artifacts under the output directory;
the manifest records hashes and seeds so an unchanged stage is a no-op.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cases import PatientCase, read_cohort, write_cohort
from .classifier import evaluate as eval_classifier
from .classifier import load_classifier, predict_proba, save_classifier, train
from .config import RunConfig
from .discovery import error_coverage, kmeans_separate, mine_confusion_points
from .errors import ConfigError, MissingArtifactError
from .features import (
    CROSS_COLUMNS,
    SELF_COLUMNS,
    FeatureTable,
    extract_features,
    read_feature_csv,
    stratified_split,
    write_feature_csv,
)
from .graph import GuidelineGraph, load_graph
from .manifest import RunManifest, file_digest, now_iso
from .metrics import MetricKind, pairwise_overlap
from .predictors import Backend, sample_rollouts
from .pseudo_labels import (
    BenchmarkMethod,
    ProxyBenchmark,
    build_cross_benchmark,
    build_self_benchmark,
    mode_predictions,
    read_benchmark,
    score_model_on_proxy,
    write_benchmark,
)
from .seeds import derive_seed
from .simulate import SimCohortSpec, simulate_cohort
from .stats import ModelScoreTable, benchmark_fidelity, roc_curve, write_roc_csv
from .store import RolloutStore, load_model_sets
from .svgplot import line_plot_svg, write_svg
from .synthetic import (
    Provenance,
    build_synthetic_benchmark,
    load_exemplars,
    write_audit,
    write_synthetic_cases,
)

STAGES = (
    "ingest",
    "simulate",
    "rollout",
    "proxy-build",
    "proxy-score",
    "fidelity",
    "features",
    "train",
    "evaluate",
    "cluster",
    "errors",
    "report",
)

# Which stage produces each artifact, for missing-artifact messages.
_PRODUCERS = {
    "graph.json": "ingest",
    "cohort.jsonl": "ingest or simulate",
    "scores.json": "proxy-score",
    "fidelity.json": "fidelity",
    "features.csv": "features",
    "classifier.json": "train",
    "split.json": "train",
    "eval.json": "evaluate",
    "cluster.csv": "cluster",
    "cluster_summary.json": "cluster",
    "errors.json": "errors",
}


@dataclass
class PipelineContext:
    config: RunConfig
    out_dir: Path

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(self.out_dir, self.config.config_hash, self.config.seed)
        self.manifest.save()

    # -- artifact helpers ---------------------------------------------------
    def path(self, rel: str) -> Path:
        return self.out_dir / rel

    def require(self, rel: str) -> Path:
        path = self.path(rel)
        if not path.exists():
            raise MissingArtifactError(rel, _PRODUCERS.get(rel, "an earlier stage"))
        return path

    def require_rollouts(self) -> dict[str, Path]:
        producer = "simulate" if self.config.cohort_source == "simulate" else "rollout"
        paths = {}
        for model_id in self.config.model_ids():
            rel = f"rollouts/{model_id}.jsonl"
            if not self.path(rel).exists():
                raise MissingArtifactError(rel, producer)
            paths[model_id] = self.path(rel)
        return paths

    def graph(self) -> GuidelineGraph:
        return load_graph(self.require("graph.json"))

    def stage_seed(self, stage: str) -> int:
        return derive_seed(self.config.seed, stage)

    def rollout_sets_by_model(self) -> dict[str, dict]:
        return {
            model_id: load_model_sets(path)
            for model_id, path in self.require_rollouts().items()
        }

    def annotations(self) -> dict:
        cases = read_cohort(self.require("cohort.jsonl"))
        return {c.patient_id: c.annotated_path for c in cases if c.annotated_path is not None}


def run_stage(ctx: PipelineContext, stage: str) -> bool:
    """Execute one stage; returns False when skipped via the hash short-circuit."""
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    runner = _RUNNERS[stage]
    inputs = runner.inputs(ctx)
    input_digests = {rel: file_digest(ctx.path(rel)) for rel in inputs}
    stage_seed = ctx.stage_seed(stage)
    if ctx.manifest.should_skip(stage, input_digests, stage_seed):
        return False
    started = now_iso()
    outputs = runner.run(ctx, stage_seed)
    output_digests = {rel: file_digest(ctx.path(rel)) for rel in sorted(outputs)}
    ctx.manifest.record(stage, input_digests, output_digests, stage_seed, started)
    return True


class _Stage:
    name: str = ""

    def inputs(self, ctx: PipelineContext) -> list[str]:
        return []

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        raise NotImplementedError


class _Ingest(_Stage):
    name = "ingest"

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        graph = ctx.config.load_graph()
        ctx.path("graph.json").write_text(graph.canonical_json() + "\n")
        outputs = ["graph.json"]
        if ctx.config.cohort_source != "simulate":
            cohort_path = Path(ctx.config.cohort_source)
            if not cohort_path.is_absolute():
                cohort_path = ctx.config.base_dir / cohort_path
            if not cohort_path.exists():
                raise ConfigError(f"cohort file not found: {cohort_path}")
            cases = read_cohort(cohort_path)
            write_cohort(cases, ctx.path("cohort.jsonl"))
            outputs.append("cohort.jsonl")
        return outputs


class _Simulate(_Stage):
    name = "simulate"

    def inputs(self, ctx: PipelineContext) -> list[str]:
        ctx.require("graph.json")
        return ["graph.json"]

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        if ctx.config.cohort_source != "simulate":
            raise ConfigError("simulate stage requires cohort.source = 'simulate'")
        graph = ctx.graph()
        spec = SimCohortSpec(
            n_patients=ctx.config.n_patients,
            models=tuple(entry.sim_model() for entry in ctx.config.models),
            seed=seed,
            k=ctx.config.k,
        )
        cohort = simulate_cohort(spec, graph)
        write_cohort(cohort.cases, ctx.path("cohort.jsonl"))
        cohort.write_stores(ctx.path("rollouts"))
        audit = {
            model_id: {
                patient_id: {
                    "decoy": aud.decoy.render(),
                    "branch_node": aud.branch_node.render() if aud.branch_node else None,
                    "hit_rate": aud.hit_rate,
                }
                for (m, patient_id), aud in sorted(cohort.decoys.items())
                if m == model_id
            }
            for model_id in sorted(cohort.records)
        }
        ctx.path("sim_audit.json").write_text(json.dumps(audit, sort_keys=True, indent=2) + "\n")
        outputs = ["cohort.jsonl", "sim_audit.json"]
        outputs += [f"rollouts/{model_id}.jsonl" for model_id in sorted(cohort.records)]
        return outputs


class _Rollout(_Stage):
    name = "rollout"

    def inputs(self, ctx: PipelineContext) -> list[str]:
        ctx.require("graph.json")
        ctx.require("cohort.jsonl")
        return ["graph.json", "cohort.jsonl"]

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        graph = ctx.graph()
        cases = read_cohort(ctx.path("cohort.jsonl"))
        ctx.path("rollouts").mkdir(exist_ok=True)
        outputs = []
        for entry in ctx.config.models:
            spec = entry.predictor_spec(ctx.config.predict_defaults)
            rel = f"rollouts/{entry.model_id}.jsonl"
            path = ctx.path(rel)
            if path.exists():
                path.unlink()
            store = RolloutStore(path)
            for case in cases:
                sample_rollouts(
                    spec,
                    graph,
                    case,
                    k=ctx.config.k,
                    seed=derive_seed(seed, entry.model_id, case.patient_id),
                    store=store,
                    graph_mode=ctx.config.graph_mode,
                )
            outputs.append(rel)
        return outputs


class _ProxyBuild(_Stage):
    name = "proxy-build"

    def inputs(self, ctx: PipelineContext) -> list[str]:
        ctx.require("graph.json")
        rels = ["graph.json"]
        rels += [f"rollouts/{m}.jsonl" for m in sorted(ctx.require_rollouts())]
        return rels

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        ctx.path("benchmarks").mkdir(exist_ok=True)
        sets_by_model = ctx.rollout_sets_by_model()
        outputs = []
        for model_id in sorted(sets_by_model):
            for metric, method in (
                (MetricKind.PATH_OVERLAP, "self_overlap"),
                (MetricKind.TREATMENT_MATCH, "self_treatment"),
            ):
                benchmark = build_self_benchmark(
                    sets_by_model[model_id], metric, ctx.config.delta
                )
                rel = f"benchmarks/{method}__{model_id}.jsonl"
                zero_rel = f"benchmarks/{method}__{model_id}.zero.json"
                write_benchmark(benchmark, ctx.path(rel), ctx.path(zero_rel))
                outputs += [rel, zero_rel]
        if len(sets_by_model) >= 2:
            for metric, method in (
                (MetricKind.PATH_OVERLAP, "cross_overlap"),
                (MetricKind.TREATMENT_MATCH, "cross_treatment"),
            ):
                benchmark = build_cross_benchmark(sets_by_model, metric)
                rel = f"benchmarks/{method}.jsonl"
                write_benchmark(benchmark, ctx.path(rel), ctx.path(rel + ".zero.json"))
                outputs += [rel, rel + ".zero.json"]
        if ctx.config.synthetic_enabled:
            graph = ctx.graph()
            generator = ctx.config.synthetic_generator.predictor_spec(
                ctx.config.predict_defaults
            )
            evaluator = ctx.config.model(ctx.config.synthetic_evaluator).predictor_spec(
                ctx.config.predict_defaults
            )
            for mode in (Provenance.STRUCTURED, Provenance.UNSTRUCTURED):
                result = build_synthetic_benchmark(
                    mode,
                    ctx.config.synthetic_n_cases,
                    generator,
                    evaluator,
                    graph,
                    exemplars=load_exemplars(),
                    seed=derive_seed(seed, "synthetic", mode.value),
                    graph_mode=ctx.config.graph_mode,
                )
                base = f"benchmarks/synth_{mode.value}"
                write_benchmark(result.benchmark, ctx.path(base + ".jsonl"))
                write_synthetic_cases(result.cases, ctx.path(base + ".cases.jsonl"))
                write_audit(result.audit, ctx.path(base + ".audit.jsonl"))
                outputs += [base + ".jsonl", base + ".cases.jsonl", base + ".audit.jsonl"]
        return outputs


def _benchmark_paths(ctx: PipelineContext) -> dict[str, list[str]]:
    """method -> list of benchmark files (self methods have one per model)."""
    out: dict[str, list[str]] = {}
    bench_dir = ctx.path("benchmarks")
    if not bench_dir.exists():
        raise MissingArtifactError("benchmarks/", "proxy-build")
    for path in sorted(bench_dir.glob("*.jsonl")):
        if path.name.endswith(".cases.jsonl") or path.name.endswith(".audit.jsonl"):
            continue
        method = path.stem.split("__")[0]
        out.setdefault(method, []).append(f"benchmarks/{path.name}")
    return out


def _score_payload(score) -> dict:
    return {"mean": score.mean, "stderr": score.stderr, "n": score.n_cases}


class _ProxyScore(_Stage):
    name = "proxy-score"

    def inputs(self, ctx: PipelineContext) -> list[str]:
        rels = ["graph.json", "cohort.jsonl"]
        ctx.require("graph.json")
        ctx.require("cohort.jsonl")
        rels += [f"rollouts/{m}.jsonl" for m in sorted(ctx.require_rollouts())]
        for paths in _benchmark_paths(ctx).values():
            rels += paths
        return sorted(rels)

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        graph = ctx.graph()
        sets_by_model = ctx.rollout_sets_by_model()
        annotations = ctx.annotations()
        predictions = {m: mode_predictions(sets) for m, sets in sets_by_model.items()}
        outputs = []

        true_scores: dict[str, dict] = {}
        for model_id, preds in predictions.items():
            overlap_vals, treat_vals = [], []
            for patient_id, annotation in annotations.items():
                pred = preds.get(patient_id)
                if pred is None:
                    overlap_vals.append(0.0)
                    treat_vals.append(0.0)
                    continue
                overlap_vals.append(pairwise_overlap(pred, annotation))
                treat_vals.append(1.0 if pred.final == annotation.final else 0.0)
            true_scores[model_id] = {
                "path_overlap": _mean_se(overlap_vals),
                "treatment_match": _mean_se(treat_vals),
            }

        proxy_scores: dict[str, dict] = {m: {} for m in sets_by_model}
        for method, rels in _benchmark_paths(ctx).items():
            method_enum = BenchmarkMethod(method)
            for rel in rels:
                sidecar = ctx.path(rel.replace(".jsonl", ".zero.json"))
                benchmark = read_benchmark(
                    ctx.path(rel), sidecar if sidecar.exists() else None
                )
                if method.startswith("self_"):
                    scored_models = [benchmark.source_model]
                elif method.startswith("cross_"):
                    scored_models = sorted(sets_by_model)
                else:
                    scored_models = sorted(sets_by_model)

                for model_id in scored_models:
                    if model_id not in sets_by_model:
                        continue
                    if method.startswith("synth_"):
                        preds = self._synthetic_predictions(
                            ctx, graph, model_id, method, benchmark, seed
                        )
                        outputs.append(f"synth_predictions/{method}__{model_id}.jsonl")
                    else:
                        preds = predictions[model_id]
                    entry = proxy_scores[model_id].setdefault(
                        method, {"path_overlap": None, "treatment_match": None}
                    )
                    treatment = score_model_on_proxy(
                        preds, benchmark, MetricKind.TREATMENT_MATCH, model_id=model_id
                    )
                    entry["treatment_match"] = _score_payload(treatment)
                    if method_enum.metric is MetricKind.PATH_OVERLAP or method.startswith(
                        "synth_"
                    ):
                        overlap = score_model_on_proxy(
                            preds, benchmark, MetricKind.PATH_OVERLAP, model_id=model_id
                        )
                        entry["path_overlap"] = _score_payload(overlap)

        payload = {"true": true_scores, "proxy": proxy_scores}
        ctx.path("scores.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        outputs.append("scores.json")
        return outputs

    def _synthetic_predictions(
        self,
        ctx: PipelineContext,
        graph: GuidelineGraph,
        model_id: str,
        method: str,
        benchmark: ProxyBenchmark,
        seed: int,
    ):
        from .predictors import predict_path

        spec = ctx.config.model(model_id).predictor_spec(ctx.config.predict_defaults)
        ctx.path("synth_predictions").mkdir(exist_ok=True)
        rel = f"synth_predictions/{method}__{model_id}.jsonl"
        path = ctx.path(rel)
        if path.exists():
            path.unlink()
        store = RolloutStore(path)
        preds = {}
        for entry in benchmark.entries:
            if entry.note_text is None:
                raise ConfigError(f"synthetic benchmark entry {entry.case_id} lacks note text")
            case = PatientCase(patient_id=entry.case_id, note_text=entry.note_text)
            rollout_set = sample_rollouts(
                spec,
                graph,
                case,
                k=1,
                seed=derive_seed(seed, "synthscore", method, model_id, entry.case_id),
                store=store,
                graph_mode=ctx.config.graph_mode,
            )
            parsed = rollout_set.parsed_paths()
            preds[entry.case_id] = parsed[0] if parsed else None
        return preds


def _mean_se(values: list[float]) -> dict:
    n = len(values)
    mean = sum(values) / n if n else 0.0
    if n > 1:
        var = sum((v - mean) ** 2 for v in values) / (n - 1)
        stderr = (var / n) ** 0.5
    else:
        stderr = 0.0
    return {"mean": mean, "stderr": stderr, "n": n}


class _Fidelity(_Stage):
    name = "fidelity"

    def inputs(self, ctx: PipelineContext) -> list[str]:
        ctx.require("scores.json")
        return ["scores.json"]

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        scores = json.loads(ctx.path("scores.json").read_text())
        result: dict[str, dict] = {}
        for metric in ("path_overlap", "treatment_match"):
            table = ModelScoreTable(metric=metric)
            for model_id, proxies in scores["proxy"].items():
                true_entry = scores["true"].get(model_id)
                proxy_means = {
                    method: entry[metric]["mean"]
                    for method, entry in proxies.items()
                    if entry.get(metric) is not None
                }
                table.add(
                    model_id,
                    true_entry[metric]["mean"] if true_entry else None,
                    proxy_means,
                )
            if len(table.true_scores) >= 2 and table.methods():
                result[metric] = benchmark_fidelity(table)
            else:
                result[metric] = {}
        ctx.path("fidelity.json").write_text(json.dumps(result, sort_keys=True, indent=2) + "\n")
        return ["fidelity.json"]


class _Features(_Stage):
    name = "features"

    def inputs(self, ctx: PipelineContext) -> list[str]:
        rels = ["cohort.jsonl", "scores.json"]
        ctx.require("cohort.jsonl")
        ctx.require("scores.json")
        rels += [f"rollouts/{m}.jsonl" for m in sorted(ctx.require_rollouts())]
        return sorted(rels)

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        scores = json.loads(ctx.path("scores.json").read_text())
        benchmark_scores: dict[str, dict[str, float]] = {}
        for model_id, proxies in scores["proxy"].items():
            per_method = {}
            for method, entry in proxies.items():
                metric = (
                    "path_overlap"
                    if method in ("self_overlap", "cross_overlap")
                    else "treatment_match"
                )
                if entry.get(metric) is not None:
                    per_method[method] = entry[metric]["mean"]
            benchmark_scores[model_id] = per_method
        table = extract_features(
            ctx.rollout_sets_by_model(), benchmark_scores, ctx.annotations()
        )
        write_feature_csv(table, ctx.path("features.csv"))
        return ["features.csv"]


class _Train(_Stage):
    name = "train"

    def inputs(self, ctx: PipelineContext) -> list[str]:
        ctx.require("features.csv")
        return ["features.csv"]

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        table = read_feature_csv(ctx.path("features.csv")).labeled()
        train_fold, test_fold = stratified_split(
            table, ratio=ctx.config.split_ratio, seed=derive_seed(seed, "split")
        )
        clf = train(
            train_fold,
            ctx.config.feature_set,
            C=ctx.config.C,
            max_iter=ctx.config.max_iter,
            seed=seed,
        )
        save_classifier(clf, ctx.path("classifier.json"))
        split_payload = {
            "train_patients": sorted(set(train_fold.patient_ids())),
            "test_patients": sorted(set(test_fold.patient_ids())),
            "ratio": ctx.config.split_ratio,
        }
        ctx.path("split.json").write_text(
            json.dumps(split_payload, sort_keys=True, indent=2) + "\n"
        )
        return ["classifier.json", "split.json"]


class _Evaluate(_Stage):
    name = "evaluate"

    def inputs(self, ctx: PipelineContext) -> list[str]:
        for rel in ("features.csv", "classifier.json", "split.json"):
            ctx.require(rel)
        return ["features.csv", "classifier.json", "split.json"]

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        table = read_feature_csv(ctx.path("features.csv")).labeled()
        split = json.loads(ctx.path("split.json").read_text())
        test_ids = set(split["test_patients"])
        test_fold = FeatureTable(rows=[r for r in table.rows if r.patient_id in test_ids])
        clf = load_classifier(ctx.path("classifier.json"))
        report = eval_classifier(clf, test_fold)
        payload = {
            "feature_set": clf.feature_set.value,
            "auroc": report.auroc,
            "f1_at_half": report.f1_at_half,
            "n_rows": report.n_rows,
            "roc_points": [[t, f, p] for f, p, t in report.curve.points],
        }
        ctx.path("eval.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        write_roc_csv(report.curve, ctx.path("roc.csv"))
        curve_xy = [(f, p) for f, p, _ in report.curve.points]
        svg = line_plot_svg(
            [(f"{clf.feature_set.value} (AUROC={report.auroc:.3f})", curve_xy)],
            title="Correctness classifier ROC (test fold)",
            x_label="False positive rate",
            y_label="True positive rate",
            diagonal=True,
        )
        write_svg(svg, ctx.path("roc.svg"))
        return ["eval.json", "roc.csv", "roc.svg"]


class _Cluster(_Stage):
    name = "cluster"

    def inputs(self, ctx: PipelineContext) -> list[str]:
        ctx.require("features.csv")
        return ["features.csv"]

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        table = read_feature_csv(ctx.path("features.csv")).labeled()
        columns = SELF_COLUMNS + CROSS_COLUMNS
        X = np.array([[r.values[c] for c in columns] for r in table.rows])
        truth = [r.label for r in table.rows]
        result = kmeans_separate(X, truth=truth, seed=derive_seed(seed, "kmeans"))
        with open(ctx.path("cluster.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write("model_id,patient_id,cluster,predicted_correct,label\n")
            for row, cluster, mapped in zip(table.rows, result.assignments, result.mapped):
                fh.write(
                    f"{row.model_id},{row.patient_id},{int(cluster)},{int(mapped)},{row.label}\n"
                )
            fh.write("# summary\n")
            fh.write(f"# f1,{result.f1}\n")
            fh.write(f"# correct_cluster,{result.correct_cluster}\n")
        summary = {
            "f1": result.f1,
            "correct_cluster": result.correct_cluster,
            "n_rows": len(table.rows),
            "columns": list(columns),
        }
        ctx.path("cluster_summary.json").write_text(
            json.dumps(summary, sort_keys=True, indent=2) + "\n"
        )
        return ["cluster.csv", "cluster_summary.json"]


class _Errors(_Stage):
    name = "errors"

    def inputs(self, ctx: PipelineContext) -> list[str]:
        rels = ["cohort.jsonl"]
        ctx.require("cohort.jsonl")
        rels += [f"rollouts/{m}.jsonl" for m in sorted(ctx.require_rollouts())]
        return sorted(rels)

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        annotations = ctx.annotations()
        payload: dict[str, dict] = {}
        for model_id, sets in sorted(ctx.rollout_sets_by_model().items()):
            points = mine_confusion_points(sets)
            coverage = error_coverage(points, sets, annotations, top_n=5)
            payload[model_id] = {
                "confusion_points": [
                    {
                        "node": p.node.render(),
                        "divergence_count": p.divergence_count,
                        "example_patient_ids": list(p.example_patient_ids),
                    }
                    for p in points
                ],
                "top5": [p.node.render() for p in points[:5]],
                "error_coverage_top5": coverage,
            }
        ctx.path("errors.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        return ["errors.json"]


class _Report(_Stage):
    name = "report"

    def inputs(self, ctx: PipelineContext) -> list[str]:
        rels = []
        for rel in ("scores.json", "fidelity.json", "eval.json", "cluster_summary.json", "errors.json"):
            ctx.require(rel)
            rels.append(rel)
        return rels

    def run(self, ctx: PipelineContext, seed: int) -> list[str]:
        scores = json.loads(ctx.path("scores.json").read_text())
        fidelity = json.loads(ctx.path("fidelity.json").read_text())
        eval_payload = json.loads(ctx.path("eval.json").read_text())
        cluster_summary = json.loads(ctx.path("cluster_summary.json").read_text())
        errors = json.loads(ctx.path("errors.json").read_text())
        payload = {
            "run_id": ctx.manifest.run_id,
            "config_hash": ctx.config.config_hash,
            "seed": ctx.config.seed,
            "model_scores": scores,
            "fidelity": fidelity,
            "classifier": {
                "feature_set": eval_payload["feature_set"],
                "auroc": eval_payload["auroc"],
                "f1_at_half": eval_payload["f1_at_half"],
            },
            "cluster": cluster_summary,
            "confusion_top5": {m: entry["top5"] for m, entry in errors.items()},
        }
        digest_source = json.dumps(payload, sort_keys=True)
        payload["content_digest"] = hashlib.sha256(digest_source.encode()).hexdigest()
        ctx.path("report.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")

        curves = [
            (
                f"{eval_payload['feature_set']} (AUROC={eval_payload['auroc']:.3f})",
                [(f, p) for _, f, p in eval_payload["roc_points"]],
            )
        ]
        svg = line_plot_svg(
            curves,
            title="Run report: classifier ROC",
            x_label="False positive rate",
            y_label="True positive rate",
            diagonal=True,
        )
        write_svg(svg, ctx.path("report.svg"))
        return ["report.json", "report.svg"]


_RUNNERS: dict[str, _Stage] = {
    stage.name: stage
    for stage in (
        _Ingest(),
        _Simulate(),
        _Rollout(),
        _ProxyBuild(),
        _ProxyScore(),
        _Fidelity(),
        _Features(),
        _Train(),
        _Evaluate(),
        _Cluster(),
        _Errors(),
        _Report(),
    )
}
