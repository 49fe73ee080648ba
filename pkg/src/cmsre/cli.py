"""Batch command-line front end.

Commands: ``validate``, ``embed``, ``classify``, ``retrieve``,
``sweep-lambda``, ``synth``. Flag values override config-file values, which
override built-in defaults. Exit codes: 0 success, 2 input or validation
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from ._io import FLOAT_FORMAT, atomic_write_json, atomic_write_matrix, atomic_write_text
from .dataset import (
    MultiViewDataset,
    build_neighbor_index,
    effective_neighbor_count,
    load_dataset,
    normalize_view,
)
from .embedding import CmsreConfig, fit_cmsre, termination_reason
from .errors import ConvergenceError, DatasetError, NumericalError
from .evaluation import (
    ClassificationReport,
    evaluate_classification,
    make_split_plan,
    relevance_from_labels,
    retrieve,
    sweep_lambda,
)
from .sparse_coding import CodingConfig, solve_view_codes
from .synthetic import generate_synthetic

NORMALIZE_CHOICES = {"none": "none", "zscore": "zscore", "unit": "unit_l2_columns"}
POLICY_CHOICES = {"best": "per_view_best", "concat": "concatenate"}


@dataclass
class RunConfig:
    """Effective parameters of one command after precedence resolution."""

    manifest: Optional[str] = None
    out: Optional[str] = None
    normalize: str = "zscore"
    k: int = 10
    gamma: Optional[float] = None  # None selects the automatic penalty
    d: int = 10
    lam: float = 0.8
    seed: int = 0
    trials: int = 20
    test_count: Optional[int] = None  # None selects 40% of the samples
    cutoff: Optional[int] = None
    view_policy: str = "concat"
    tolerance: float = 1e-6
    max_sweeps: int = 50


_CONFIG_KEYS = {
    "normalize": "normalize",
    "k": "k",
    "gamma": "gamma",
    "d": "d",
    "lambda": "lam",
    "seed": "seed",
    "trials": "trials",
    "test_count": "test_count",
    "cutoff": "cutoff",
    "view_policy": "view_policy",
    "tolerance": "tolerance",
    "max_sweeps": "max_sweeps",
}


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    config_path = getattr(args, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise DatasetError(f"config file not found: {path}")
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DatasetError(f"config file {path} is not valid JSON: {exc}") from exc
        for key, value in payload.items():
            if key not in _CONFIG_KEYS:
                raise DatasetError(f"unknown config key '{key}' in {path}")
            setattr(config, _CONFIG_KEYS[key], value)
    field_names = {f.name for f in fields(RunConfig)}
    for name in field_names:
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    if config.normalize not in NORMALIZE_CHOICES and config.normalize not in NORMALIZE_CHOICES.values():
        raise DatasetError(f"unknown normalization mode '{config.normalize}'")
    if config.view_policy not in POLICY_CHOICES and config.view_policy not in POLICY_CHOICES.values():
        raise DatasetError(f"unknown view policy '{config.view_policy}'")
    return config


def _normalize_mode(config: RunConfig) -> str:
    return NORMALIZE_CHOICES.get(config.normalize, config.normalize)


def _policy(config: RunConfig) -> str:
    return POLICY_CHOICES.get(config.view_policy, config.view_policy)


def _load_normalized(config: RunConfig) -> MultiViewDataset:
    if not config.manifest:
        raise DatasetError("a manifest is required (use --manifest)")
    dataset = load_dataset(config.manifest)
    mode = _normalize_mode(config)
    views = tuple(normalize_view(view, mode) for view in dataset.views)
    return MultiViewDataset(views=views, labels=dataset.labels)


def _fit_config(config: RunConfig, lam: Optional[float] = None) -> CmsreConfig:
    return CmsreConfig(
        d=config.d,
        lam=config.lam if lam is None else lam,
        max_outer_iterations=config.max_sweeps,
        convergence_tolerance=config.tolerance,
        seed=config.seed,
    )


def _coding_config(config: RunConfig) -> CodingConfig:
    return CodingConfig(gamma=config.gamma)


def _out_dir(config: RunConfig) -> Path:
    if not config.out:
        raise DatasetError("an output directory is required (use --out)")
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _safe_name(name: str) -> str:
    return re.sub(r"[^\w.-]", "_", name)


def _effective_test_count(config: RunConfig, n: int) -> int:
    if config.test_count is not None:
        return config.test_count
    return max(1, min(n - 1, int(round(0.4 * n))))


def _common_metadata(config: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "manifest": str(Path(config.manifest).resolve()) if config.manifest else None,
        "normalize": _normalize_mode(config),
        "k": config.k,
        "gamma": config.gamma,
        "gamma_policy": "auto (0.01 * ||x||^2 / k)" if config.gamma is None else "fixed",
        "d": config.d,
        "lambda": config.lam,
        "seed": config.seed,
        "tolerance": config.tolerance,
        "max_sweeps": config.max_sweeps,
    }


def cmd_validate(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    if not config.manifest:
        raise DatasetError("a manifest is required (use --manifest)")
    dataset = load_dataset(config.manifest)
    dims = ",".join(str(view.dim) for view in dataset.views)
    print(f"views={dataset.view_count} samples={dataset.sample_count} dims=[{dims}]")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    out = _out_dir(config)
    dataset = _load_normalized(config)
    n = dataset.sample_count
    k = effective_neighbor_count(config.k, n)
    coding = _coding_config(config)
    codes = [
        solve_view_codes(view, build_neighbor_index(view, k), coding)
        for view in dataset.views
    ]
    fit_config = _fit_config(config)
    embeddings, trace = fit_cmsre(dataset, codes, fit_config)

    for emb in embeddings:
        atomic_write_matrix(out / f"{_safe_name(emb.view)}_embedding.csv", emb.coordinates)

    header = ["iteration", "objective", "delta"] + [
        f"reconstruction_{_safe_name(view.name)}" for view in dataset.views
    ]
    lines = [",".join(header)]
    for record in trace:
        row = [str(record.iteration), FLOAT_FORMAT % record.objective, FLOAT_FORMAT % record.delta]
        row += [FLOAT_FORMAT % value for value in record.per_view_reconstruction]
        lines.append(",".join(row))
    atomic_write_text(out / "trace.csv", "\n".join(lines) + "\n")

    metadata = _common_metadata(config, "embed")
    metadata.update(
        {
            "effective_k": k,
            "samples": n,
            "views": [view.name for view in dataset.views],
            "termination": termination_reason(trace, fit_config),
            "sweeps_run": trace[-1].iteration,
            "final_objective": trace[-1].objective,
            "final_delta": trace[-1].delta,
            "notes": ["decoupled (single-view) mode"] if config.lam == 0 else [],
        }
    )
    atomic_write_json(out / "metadata.json", metadata)
    print(
        f"embedded {n} samples in {len(embeddings)} view(s), d={config.d}, "
        f"{metadata['termination']} after {metadata['sweeps_run']} sweep(s)"
    )
    return 0


def _classification_payload(config: RunConfig, report: ClassificationReport, test_count: int) -> dict:
    payload = _common_metadata(config, "classify")
    payload.update(
        {
            "view_policy": _policy(config),
            "trials": config.trials,
            "test_count": test_count,
            "per_trial_accuracy": list(report.per_trial_accuracy),
            "mean_accuracy": report.mean,
            "max_accuracy": report.max,
        }
    )
    return payload


def cmd_classify(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    out = _out_dir(config)
    dataset = _load_normalized(config)
    if dataset.labels is None:
        raise DatasetError("dataset has no labels; classification needs them")
    n = dataset.sample_count
    test_count = _effective_test_count(config, n)
    split = make_split_plan(n, test_count, config.trials, config.seed)
    report = evaluate_classification(
        dataset,
        _fit_config(config),
        split,
        _policy(config),
        k=effective_neighbor_count(config.k, n),
        coding=_coding_config(config),
    )
    atomic_write_json(out / "classification.json", _classification_payload(config, report, test_count))
    lines = ["trial,accuracy"] + [
        f"{trial},{FLOAT_FORMAT % accuracy}"
        for trial, accuracy in enumerate(report.per_trial_accuracy)
    ]
    atomic_write_text(out / "classification.csv", "\n".join(lines) + "\n")
    print(f"mean accuracy {report.mean:.4f}, max {report.max:.4f} over {config.trials} trial(s)")
    return 0


def _resolve_queries(
    config: RunConfig, args: argparse.Namespace, dataset: MultiViewDataset
) -> tuple[list[int], dict]:
    queries_path = getattr(args, "queries", None)
    per_class = getattr(args, "queries_per_class", None)
    if queries_path:
        path = Path(queries_path)
        if not path.is_file():
            raise DatasetError(f"queries file not found: {path}")
        if path.suffix == ".json":
            payload = json.loads(path.read_text())
            queries = [int(q) for q in payload["queries"]]
            if "relevant" in payload:
                relevant = {int(q): [int(r) for r in rel] for q, rel in payload["relevant"].items()}
                return queries, relevant
        else:
            queries = [int(line) for line in path.read_text().split()]
    elif per_class:
        if dataset.labels is None:
            raise DatasetError("--queries-per-class needs a labeled dataset")
        rng = np.random.default_rng(config.seed)
        labels = np.asarray(dataset.labels)
        queries = []
        for label in sorted(set(dataset.labels)):
            members = np.flatnonzero(labels == label)
            chosen = rng.choice(members, size=min(per_class, members.size), replace=False)
            queries.extend(int(q) for q in np.sort(chosen))
    else:
        raise DatasetError(
            "query/relevance spec missing: pass --queries or --queries-per-class"
        )
    if dataset.labels is None:
        raise DatasetError("relevance spec missing: dataset has no labels to derive it from")
    return queries, relevance_from_labels(dataset.labels, queries)


def cmd_retrieve(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    out = _out_dir(config)
    dataset = _load_normalized(config)
    queries, relevant = _resolve_queries(config, args, dataset)
    n = dataset.sample_count
    fit_config = _fit_config(config)
    coding = _coding_config(config)
    k = effective_neighbor_count(config.k, n)
    codes = [
        solve_view_codes(view, build_neighbor_index(view, k), coding)
        for view in dataset.views
    ]
    embeddings, _ = fit_cmsre(dataset, codes, fit_config)
    stacked = np.vstack([emb.coordinates for emb in embeddings])
    report = retrieve(stacked, queries, relevant, metric="l1", cutoff=config.cutoff)

    payload = _common_metadata(config, "retrieve")
    payload.update(
        {
            "cutoff": report.cutoff,
            "cutoff_policy": "per-query relevant-set size" if report.cutoff is None else "fixed",
            "queries_evaluated": report.queries_evaluated,
            "queries_skipped": report.queries_skipped,
            "precision": report.precision_at_n,
            "recall": report.recall_at_n,
            "map": report.map,
            "f1": report.f1,
        }
    )
    atomic_write_json(out / "retrieval.json", payload)
    print(
        f"precision {report.precision_at_n:.4f} recall {report.recall_at_n:.4f} "
        f"map {report.map:.4f} f1 {report.f1:.4f} over {report.queries_evaluated} query(ies)"
    )
    return 0


def cmd_sweep_lambda(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    out = _out_dir(config)
    dataset = _load_normalized(config)
    if dataset.labels is None:
        raise DatasetError("dataset has no labels; classification needs them")
    try:
        lambdas = [float(token) for token in args.lambdas.split(",") if token.strip() != ""]
    except ValueError as exc:
        raise DatasetError(f"could not parse --lambdas: {exc}") from exc
    if not lambdas:
        raise DatasetError("--lambdas must list at least one value")
    n = dataset.sample_count
    test_count = _effective_test_count(config, n)
    split = make_split_plan(n, test_count, config.trials, config.seed)
    results = sweep_lambda(
        dataset,
        lambdas,
        _fit_config(config),
        split,
        _policy(config),
        k=effective_neighbor_count(config.k, n),
        coding=_coding_config(config),
    )
    lines = ["lambda,mean_accuracy,max_accuracy,trials"]
    for lam, report in results:
        lines.append(
            f"{FLOAT_FORMAT % lam},{FLOAT_FORMAT % report.mean},"
            f"{FLOAT_FORMAT % report.max},{config.trials}"
        )
    atomic_write_text(out / "lambda_sweep.csv", "\n".join(lines) + "\n")
    payload = _common_metadata(config, "sweep-lambda")
    payload.update(
        {
            "view_policy": _policy(config),
            "trials": config.trials,
            "test_count": test_count,
            "rows": [
                {"lambda": lam, "mean_accuracy": rep.mean, "max_accuracy": rep.max}
                for lam, rep in results
            ],
        }
    )
    atomic_write_json(out / "lambda_sweep.json", payload)
    for lam, report in results:
        print(f"lambda={lam:g} mean={report.mean:.4f} max={report.max:.4f}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    config = _resolve_config(args)
    out = _out_dir(config)
    manifest = generate_synthetic(out, n=args.n, classes=args.classes, noise=args.noise, seed=config.seed)
    print(str(manifest))
    return 0


def _add_common_flags(parser: argparse.ArgumentParser, with_out: bool = True) -> None:
    parser.add_argument("--manifest", help="path to the dataset manifest JSON")
    if with_out:
        parser.add_argument("--out", help="output directory")
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--normalize", choices=sorted(NORMALIZE_CHOICES), default=None)
    parser.add_argument("--k", type=int, default=None, help="neighbor count")
    parser.add_argument("--gamma", type=float, default=None, help="l1 penalty (default: auto)")
    parser.add_argument("--d", type=int, default=None, help="target dimension")
    parser.add_argument("--lambda", dest="lam", type=float, default=None, help="coupling weight")
    parser.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmsre",
        description="Co-regularized multi-view sparse reconstruction embedding",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_validate = sub.add_parser("validate", help="check a dataset manifest")
    _add_common_flags(p_validate, with_out=False)
    p_validate.set_defaults(func=cmd_validate)

    p_embed = sub.add_parser("embed", help="fit embeddings and export them")
    _add_common_flags(p_embed)
    p_embed.set_defaults(func=cmd_embed)

    p_classify = sub.add_parser("classify", help="repeated-split 1NN classification")
    _add_common_flags(p_classify)
    p_classify.add_argument("--trials", type=int, default=None)
    p_classify.add_argument("--test-count", dest="test_count", type=int, default=None)
    p_classify.add_argument(
        "--view-policy", dest="view_policy", choices=sorted(POLICY_CHOICES), default=None
    )
    p_classify.set_defaults(func=cmd_classify)

    p_retrieve = sub.add_parser("retrieve", help="L1 retrieval metrics")
    _add_common_flags(p_retrieve)
    p_retrieve.add_argument("--queries", help="query index file (text or JSON)")
    p_retrieve.add_argument("--queries-per-class", dest="queries_per_class", type=int, default=None)
    p_retrieve.add_argument("--cutoff", type=int, default=None)
    p_retrieve.set_defaults(func=cmd_retrieve)

    p_sweep = sub.add_parser("sweep-lambda", help="classification accuracy per lambda")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--lambdas", required=True, help="comma-separated lambda values")
    p_sweep.add_argument("--trials", type=int, default=None)
    p_sweep.add_argument("--test-count", dest="test_count", type=int, default=None)
    p_sweep.add_argument(
        "--view-policy", dest="view_policy", choices=sorted(POLICY_CHOICES), default=None
    )
    p_sweep.set_defaults(func=cmd_sweep_lambda)

    p_synth = sub.add_parser("synth", help="generate the synthetic benchmark dataset")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--n", type=int, default=300)
    p_synth.add_argument("--classes", type=int, default=3)
    p_synth.add_argument("--noise", type=float, default=0.5)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--config", help="JSON config file (flags override it)")
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NumericalError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (DatasetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
