"""Command-line orchestration.

Subcommands: synth, prepare, train, evaluate, signatures, pca, equations,
neighbors, recommend, attention, gradcheck. Every run echoes its merged
configuration (defaults <- JSON config file <- explicit flags) into
`run_config.json` inside the output directory. Report subcommands render
matplotlib figures next to the delimited output unless --no-figures is
given.

Exit codes: 0 success, 1 validation error (bad flags/inputs), 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, figures, signatures as sigs
from .audio import SpectrogramConfig
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import TokenLoader, prepare_cache, scan_cache_tree
from .errors import GenresigError
from .gradcheck import run_suite
from .model import ModelConfig
from .synth import SyntheticSpec, default_classes, synth_dataset
from .training import FoldPlan, TrainConfig, cross_validate, evaluate as evaluate_model


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # validation problems exit 1, not argparse's default 2
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _add_common(sub, *names):
    if "out" in names:
        sub.add_argument("--out", required=True, help="output directory")
    if "cache" in names:
        sub.add_argument("--cache", help="spectrogram cache directory")
        sub.add_argument("--data", help="dataset root (accepted as cache if it holds .spec files)")
    if "seed" in names:
        sub.add_argument("--seed", type=int, default=0)
    if "temperature" in names:
        sub.add_argument("--temperature", type=float, default=10.0,
                         help="token-score softmax temperature")
    if "metric" in names:
        sub.add_argument("--metric", choices=["cosine", "euclidean"])
    if "figures" in names:
        sub.add_argument("--no-figures", action="store_true",
                         help="skip rendering PNG figures")
    sub.add_argument("--config", help="JSON file supplying flag defaults")
    sub.add_argument("--jobs", type=int, default=1)
    sub.add_argument("--deterministic", action="store_true",
                     help="force single-threaded execution")


def _suppress_defaults(parser):
    """Make parse_args report only explicitly supplied flags."""
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                _suppress_defaults(sub)
        action.default = argparse.SUPPRESS


def build_parser(suppress_defaults: bool = False) -> _Parser:
    parser = _Parser(prog="genresig", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("synth", help="generate a synthetic WAV dataset")
    sub.add_argument("--tracks-per-class", type=int, default=20)
    sub.add_argument("--duration", type=float, default=30.0)
    _add_common(sub, "out", "seed")

    sub = commands.add_parser("prepare", help="populate the spectrogram cache")
    sub.add_argument("--data", required=True, help="WAV dataset root")
    sub.add_argument("--cache", required=True, help="cache directory to fill")
    sub.add_argument("--config", help="JSON file supplying flag defaults")
    sub.add_argument("--jobs", type=int, default=1)
    sub.add_argument("--deterministic", action="store_true")

    sub = commands.add_parser("train", help="6-fold cross-validated training")
    sub.add_argument("--folds", type=int, default=6)
    sub.add_argument("--epochs", type=int, default=30)
    sub.add_argument("--batch", type=int, default=16)
    sub.add_argument("--lr", type=float, default=1e-3)
    sub.add_argument("--patience", type=int, default=5)
    _add_common(sub, "out", "cache", "seed", "figures")

    sub = commands.add_parser("evaluate", help="confusion matrix for one checkpoint")
    sub.add_argument("--model", required=True, help="checkpoint file")
    _add_common(sub, "out", "cache", "figures")

    sub = commands.add_parser("signatures", help="attention-weighted track signatures")
    sub.add_argument("--run", help="training output directory (per-fold models)")
    sub.add_argument("--model", help="single checkpoint used for every track")
    sub.add_argument("--attended", action="store_true",
                     help="weight attended rows instead of CNN embeddings")
    _add_common(sub, "out", "cache", "temperature")

    sub = commands.add_parser("pca", help="principal components of the encodings")
    sub.add_argument("--signatures", required=True, help="signatures CSV")
    sub.add_argument("--components", type=int, default=2)
    sub.add_argument("--per-track", action="store_true",
                     help="fit on every signature instead of the genre means")
    _add_common(sub, "out", "figures")

    sub = commands.add_parser("equations", help="A - B + C = D genre relations")
    sub.add_argument("--signatures", required=True)
    sub.add_argument("--max-results", type=int, default=10)
    sub.add_argument("--threshold", type=float)
    sub.add_argument("--in-pca", type=int, metavar="N",
                     help="search in N-dimensional PCA space instead of raw space")
    _add_common(sub, "out")

    sub = commands.add_parser("neighbors", help="nearest genres per genre")
    sub.add_argument("--signatures", required=True)
    sub.add_argument("--k", type=int, default=2)
    _add_common(sub, "out", "metric", "figures")

    sub = commands.add_parser("recommend", help="most similar tracks to a query")
    sub.add_argument("--signatures", required=True)
    sub.add_argument("--track", required=True, help="query track id")
    sub.add_argument("--k", type=int, default=5)
    _add_common(sub, "out", "metric")

    sub = commands.add_parser("attention", help="token importance report")
    sub.add_argument("--run", help="training output directory (per-fold models)")
    sub.add_argument("--model", help="single checkpoint used for every track")
    sub.add_argument("--samples-per-genre", type=int, default=5)
    _add_common(sub, "out", "cache", "seed", "temperature", "figures")

    sub = commands.add_parser("gradcheck", help="finite-difference gradient audit")
    sub.add_argument("--points", type=int, default=10)
    _add_common(sub, "seed")

    if suppress_defaults:
        _suppress_defaults(parser)
    return parser


def _merge_config(argv, args):
    """defaults <- config file <- explicit flags."""
    config_path = getattr(args, "config", None)
    if not config_path:
        return args
    with open(config_path) as fh:
        file_values = json.load(fh)
    explicit = vars(build_parser(suppress_defaults=True).parse_args(argv))
    merged = vars(args).copy()
    for key, value in file_values.items():
        if key in merged and key not in explicit:
            merged[key] = value
    return argparse.Namespace(**merged)


def _echo_run_config(args, out_dir):
    payload = {k: (str(v) if isinstance(v, Path) else v)
               for k, v in sorted(vars(args).items())}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "run_config.json", "w") as fh:
        json.dump(payload, fh, indent=2)


def _cache_dir(args):
    cache = getattr(args, "cache", None) or getattr(args, "data", None)
    if not cache:
        raise _UsageError("one of --cache/--data is required")
    return cache


def _scan_index(args):
    index = scan_cache_tree(_cache_dir(args))
    if not index.entries:
        raise GenresigError(f"no cached spectrograms under {_cache_dir(args)}; run `prepare`")
    return index


def _load_run_models(run_dir, index):
    """Map each track to the model of the fold where it was validation."""
    run_dir = Path(run_dir)
    with open(run_dir / "fold_plan.json") as fh:
        payload = json.load(fh)
    plan = FoldPlan.from_dict(payload)
    stored_ids = payload.get("track_ids")
    current_ids = [e.track_id for e in index.entries]
    if stored_ids is not None and stored_ids != current_ids:
        raise GenresigError("cache contents changed since training; fold plan does not apply")
    fold_params = []
    for fold in range(plan.k):
        params, genres = load_checkpoint(run_dir / f"fold{fold}.tsig")
        if genres and genres != index.genre_names:
            raise GenresigError(f"checkpoint fold{fold} was trained on different genres")
        fold_params.append(params)
    fold_of = {}
    for fold, members in enumerate(plan.folds):
        for i in members:
            fold_of[i] = fold
    return lambda i: fold_params[fold_of[i]]


def _params_provider(args, index):
    run = getattr(args, "run", None)
    model = getattr(args, "model", None)
    if (run is None) == (model is None):
        raise _UsageError("exactly one of --run/--model is required")
    if model is not None:
        params, genres = load_checkpoint(model)
        if genres and genres != index.genre_names:
            raise GenresigError("checkpoint was trained on different genres")
        return lambda i: params
    return _load_run_models(run, index)


def _want_figures(args):
    return not getattr(args, "no_figures", False)


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_synth(args):
    spec = SyntheticSpec(
        classes=tuple(default_classes()),
        tracks_per_class=args.tracks_per_class,
        duration=args.duration,
        seed=args.seed,
    )
    written = synth_dataset(spec, args.out)
    _echo_run_config(args, args.out)
    print(f"wrote {len(written)} tracks across {len(spec.classes)} classes to {args.out}")
    return 0


def _cmd_prepare(args):
    jobs = 1 if args.deterministic else args.jobs
    index = prepare_cache(args.data, args.cache, SpectrogramConfig(), jobs=jobs)
    _echo_run_config(args, args.cache)
    print(f"cached {len(index.entries)} spectrograms "
          f"({len(index.genre_names)} genres) under {args.cache}")
    return 0


def _cmd_train(args):
    index = _scan_index(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                      learning_rate=args.lr, seed=args.seed, patience=args.patience)
    model_cfg = ModelConfig(class_count=len(index.genre_names))
    result = cross_validate(index, cfg, k=args.folds, model_cfg=model_cfg,
                            loader=TokenLoader())

    for fold, params in enumerate(result.fold_params):
        save_checkpoint(params, out / f"fold{fold}.tsig", index.genre_names)
    plan_payload = result.plan.to_dict()
    plan_payload["track_ids"] = [e.track_id for e in index.entries]
    with open(out / "fold_plan.json", "w") as fh:
        json.dump(plan_payload, fh, indent=2)
    result.matrix.write_csv(out / "confusion.csv")
    with open(out / "training_log.jsonl", "w") as fh:
        for record in result.logs:
            fh.write(json.dumps(record) + "\n")
    _echo_run_config(args, out)
    if _want_figures(args):
        figures.confusion_figure(result.matrix, out / "confusion.png")
        figures.training_curves_figure(result.logs, out / "training_curves.png")

    for fold, acc in enumerate(result.fold_accuracies):
        print(f"fold {fold}: accuracy {acc:.4f}")
    print(f"aggregate accuracy {result.matrix.accuracy:.4f} "
          f"(macro {result.matrix.macro_accuracy:.4f}) over {result.matrix.total} tracks")
    return 0


def _cmd_evaluate(args):
    index = _scan_index(args)
    params, genres = load_checkpoint(args.model)
    if genres and genres != index.genre_names:
        raise GenresigError("checkpoint was trained on different genres")
    matrix = evaluate_model(params, index.entries, index.genre_names, TokenLoader())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    matrix.write_csv(out / "confusion.csv")
    _echo_run_config(args, out)
    if _want_figures(args):
        figures.confusion_figure(matrix, out / "confusion.png")
    print(f"accuracy {matrix.accuracy:.4f} (macro {matrix.macro_accuracy:.4f}) "
          f"over {matrix.total} tracks")
    return 0


def _cmd_signatures(args):
    index = _scan_index(args)
    params_for = _params_provider(args, index)
    result = sigs.compute_signatures(index, params_for, TokenLoader(),
                                     temperature=args.temperature,
                                     use_attended=args.attended)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sigs.write_signatures_csv(out / "signatures.csv", result)
    _echo_run_config(args, out)
    print(f"wrote {len(result)} signatures to {out / 'signatures.csv'}")
    return 0


def _load_encodings(signatures_path):
    tracks = sigs.read_signatures_csv(signatures_path)
    return tracks, sigs.genre_encodings(tracks)


def _cmd_pca(args):
    tracks, encodings = _load_encodings(args.signatures)
    if args.per_track:
        labels = [s.track_id for s in tracks]
        vectors = np.stack([s.vector for s in tracks])
    else:
        labels = sorted(encodings)
        vectors = np.stack([encodings[g].vector for g in labels])
    model = analysis.fit_pca(vectors, args.components)
    coords = analysis.pca_project(model, vectors)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_pca_csv(out / "pca_coords.csv", labels, coords, model.explained_ratio)
    _echo_run_config(args, out)
    if _want_figures(args) and args.components >= 2:
        figures.pca_figure(labels, coords, model.explained_ratio, out / "pca.png")
    ratios = ", ".join(f"{r:.3f}" for r in model.explained_ratio)
    print(f"explained variance ratios: {ratios}")
    return 0


def _cmd_equations(args):
    _, encodings = _load_encodings(args.signatures)
    vectors = {g: e.vector for g, e in encodings.items()}
    if args.in_pca:
        model = analysis.fit_pca(np.stack([vectors[g] for g in sorted(vectors)]), args.in_pca)
        vectors = {g: analysis.pca_project(model, v) for g, v in vectors.items()}
    equations = analysis.find_genre_equations(vectors, max_results=args.max_results,
                                              threshold=args.threshold)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_equations_csv(out / "equations.csv", equations)
    _echo_run_config(args, out)
    for e in equations:
        print(f"{e.a} - {e.b} + {e.c} = {e.d}  (residual {e.residual:.4f})")
    return 0


def _cmd_neighbors(args):
    _, encodings = _load_encodings(args.signatures)
    metric = args.metric or "euclidean"
    result = analysis.genre_neighbors(encodings, k=args.k, metric=metric)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_neighbors_csv(out / "neighbors.csv", result)
    _echo_run_config(args, out)
    if _want_figures(args):
        names = sorted(encodings)
        dist_fn = analysis.euclidean_distance if metric == "euclidean" else analysis.cosine_distance
        matrix = np.array([[dist_fn(encodings[a].vector, encodings[b].vector)
                            for b in names] for a in names])
        figures.neighbor_figure(names, matrix, out / "neighbors.png")
    for genre in sorted(result.neighbors):
        pairs = ", ".join(f"{n} ({d:.4f})" for n, d in result.neighbors[genre])
        print(f"{genre}: {pairs}")
    return 0


def _cmd_recommend(args):
    tracks = sigs.read_signatures_csv(args.signatures)
    by_id = {s.track_id: s for s in tracks}
    if args.track not in by_id:
        raise GenresigError(f"track {args.track!r} not found in {args.signatures}")
    metric = args.metric or "cosine"
    result = analysis.recommend_tracks(by_id[args.track], tracks, k=args.k, metric=metric)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    analysis.write_recommendations_csv(out / "recommendations.csv", result)
    _echo_run_config(args, out)
    for rank, (track_id, genre, d) in enumerate(result.items, start=1):
        print(f"{rank}. {track_id} [{genre}]  distance {d:.4f}")
    return 0


def _cmd_attention(args):
    index = _scan_index(args)
    params_for = _params_provider(args, index)
    report = sigs.attention_report(index, params_for, TokenLoader(),
                                   samples_per_genre=args.samples_per_genre,
                                   seed=args.seed, temperature=args.temperature)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sigs.write_attention_json(out / "attention_report.json", report)
    _echo_run_config(args, out)
    if _want_figures(args):
        figures.attention_figure(report, out / "attention.png")
    print(f"reported {len(report)} tracks "
          f"({args.samples_per_genre} per genre) to {out / 'attention_report.json'}")
    return 0


def _cmd_gradcheck(args):
    results = run_suite(seed=args.seed, points=args.points)
    failed = False
    for name, err, threshold in results:
        status = "ok" if err < threshold else "FAIL"
        if status == "FAIL":
            failed = True
        print(f"{name:<28} max rel err {err:.3e}  (threshold {threshold:.0e})  {status}")
    return 1 if failed else 0


_HANDLERS = {
    "synth": _cmd_synth,
    "prepare": _cmd_prepare,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "signatures": _cmd_signatures,
    "pca": _cmd_pca,
    "equations": _cmd_equations,
    "neighbors": _cmd_neighbors,
    "recommend": _cmd_recommend,
    "attention": _cmd_attention,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _merge_config(argv, args)
        return _HANDLERS[args.command](args)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        print("run `genresig --help` for usage", file=sys.stderr)
        return 1
    except GenresigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def console_main():
    sys.exit(main())


if __name__ == "__main__":
    console_main()
