"""Command-line surface.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import experiment, labelspace, metrics, pipeline, textfeat, zoo
from .errors import ConfigError, DataError, GenrekitError, NumericError
from .nn import load_model


def _add_common(parser):
    parser.add_argument("--manifest", help="manifest.jsonl path")
    parser.add_argument("--taxonomy", help="taxonomy file path")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--out", help="output file or directory")
    parser.add_argument("--config", help="experiment config JSON")


def _load_inputs(args):
    if not args.manifest or not args.taxonomy:
        raise ConfigError("--manifest and --taxonomy are required")
    manifest = pipeline.load_manifest(args.manifest)
    tax = labelspace.load_taxonomy(args.taxonomy)
    return manifest, tax


def _config(args, **overrides):
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
    else:
        data = {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return experiment.ExperimentConfig.from_dict(data)


def cmd_synth(args):
    out = args.out or "synth_data"
    spec = pipeline.SynthSpec(
        n_top_genres=args.top_genres, subs_per_genre=args.subs_per_genre,
        albums=args.albums, tracks_per_album=args.tracks_per_album, seed=args.seed)
    manifest, tax = pipeline.synth_dataset(spec, out)
    print(f"wrote {len(manifest)} albums, {tax.n_labels} labels under {out}")


def cmd_factorize(args):
    manifest, tax = _load_inputs(args)
    cfg = _config(args, seed=args.seed, d=args.d)
    setup = experiment.prepare_labels(manifest, tax, cfg.seed, cfg.min_label_support)
    model = experiment.fit_factors(setup, cfg.d)
    out = args.out or "factors.muf"
    labelspace.save_factor_model(model, out)
    print(f"wrote {out}: {model.label_factors.shape[0]} labels x {model.d} dims")


def cmd_train(args):
    manifest, tax = _load_inputs(args)
    cfg = _config(args, seed=args.seed, out_dir=args.out)
    result = experiment.run_experiment(cfg, manifest, tax)
    print(json.dumps(result["row"], sort_keys=True))
    print(f"artifacts under {cfg.out_dir}")


def cmd_extract(args):
    manifest, tax = _load_inputs(args)
    cfg = _config(args, seed=args.seed)
    model = load_model(args.model)
    setup = experiment.prepare_labels(manifest, tax, cfg.seed, cfg.min_label_support)
    tr, va = setup.idx["train"], setup.idx["val"]
    if cfg.modality == "text":
        features, _ = experiment.text_features(manifest, cfg, tr + va)
        mat = zoo.extract_features(model, features)
        ids = manifest.ids()
    elif cfg.modality == "timbre":
        features = experiment._column_standardize(experiment.timbre_features(manifest), tr)
        mat = zoo.extract_features(model, features)
        ids = manifest.ids()
    elif cfg.modality == "image":
        features = experiment._column_standardize(experiment.image_features(manifest), tr)
        mat = zoo.extract_features(model, features)
        ids = manifest.ids()
    elif cfg.modality == "audio":
        from . import audiofeat
        patches, album_of_track = experiment.audio_patches(manifest, cfg)
        track_tag = np.array([setup.assignment.tags[manifest.items[a].id]
                              for a in album_of_track])
        stats = audiofeat.fit_bin_stats(patches[track_tag == "train"])
        patches = audiofeat.standardize(patches, stats)[:, None, :, :]
        track_feats = zoo.extract_features(model, patches, batch_size=cfg.batch_size)
        grouped = {}
        for feat, a in zip(track_feats, album_of_track):
            grouped.setdefault(int(a), []).append(feat)
        album_vecs = zoo.average_tracks(grouped)
        mat = np.asarray([album_vecs[i] for i in range(len(manifest.items))])
        ids = manifest.ids()
    else:
        raise ConfigError(f"extract does not support modality {cfg.modality!r}")
    out = args.out or "features.mufv"
    zoo.save_feature_vectors(mat, ids, out)
    print(f"wrote {out}: {mat.shape[0]} x {mat.shape[1]}")


def cmd_fuse(args):
    vectors = {}
    ids = None
    for spec in args.inputs:
        if "=" not in spec:
            raise ConfigError("fuse inputs look like A=path.mufv")
        mod, path = spec.split("=", 1)
        mat, file_ids = zoo.load_feature_vectors(path)
        if ids is None:
            ids = file_ids
        elif ids != file_ids:
            raise DataError(f"{path}: item ids differ between feature files")
        vectors[mod] = mat
    fused = zoo.fuse(vectors, list(vectors))
    out = args.out or "fused.mufv"
    zoo.save_feature_vectors(fused.matrix, ids, out)
    print(f"wrote {out}: {fused.matrix.shape[0]} x {fused.matrix.shape[1]}")


def cmd_evaluate(args):
    manifest, tax = _load_inputs(args)
    cfg = _config(args, seed=args.seed)
    setup = experiment.prepare_labels(manifest, tax, cfg.seed, cfg.min_label_support)
    scores, ids = zoo.load_feature_vectors(args.predictions)
    pos = {item_id: i for i, item_id in enumerate(manifest.ids())}
    rows = [pos[i] for i in ids]
    truth = setup.truth[rows]
    report = metrics.evaluate(metrics.PredictionMatrix(scores, truth))
    text = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    print(text, end="")


def cmd_experiment(args):
    manifest, tax = _load_inputs(args)
    out = args.out or "runs"
    grid = None
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            grid = json.load(fh)
    rows, _results = experiment.run_grid(manifest, tax, out_root=out,
                                         seed=args.seed, grid=grid)
    table = experiment.report_table(rows)
    with open(os.path.join(out, "rows.jsonl"), "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    with open(os.path.join(out, "table.txt"), "w", encoding="utf-8") as fh:
        fh.write(table)
    print(table, end="")


def cmd_infogain(args):
    manifest, tax = _load_inputs(args)
    cfg = _config(args, seed=args.seed)
    corpus = experiment.text_corpus(manifest, cfg)
    label_id = tax.path_index.get(args.label)
    if label_id is None:
        raise DataError(f"label {args.label!r} not in taxonomy")
    column = [label_id in labelspace.close_labels(it.labels, tax)
              for it in manifest.items]
    gains = textfeat.term_information_gain([set(t) for t in corpus], column)
    top = sorted(gains.items(), key=lambda kv: (-kv[1], kv[0]))[:args.top]
    for term, gain in top:
        print(f"{gain:.4f}\t{term}")


def cmd_report(args):
    with open(args.rows, encoding="utf-8") as fh:
        rows = [json.loads(ln) for ln in fh if ln.strip()]
    print(experiment.report_table(rows), end="")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="genrekit",
        description="Multi-label music genre classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multimodal dataset")
    _add_common(p)
    p.add_argument("--top-genres", type=int, default=3)
    p.add_argument("--subs-per-genre", type=int, default=4)
    p.add_argument("--albums", type=int, default=300)
    p.add_argument("--tracks-per-album", type=int, default=3)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("factorize", help="fit label factors on train+validation")
    _add_common(p)
    p.add_argument("--d", type=int, default=50)
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("train", help="train one experiment row")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("extract", help="extract penultimate feature vectors")
    _add_common(p)
    p.add_argument("--model", required=True, help="model checkpoint (.munn)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fuse", help="concatenate l2-normalized feature files")
    _add_common(p)
    p.add_argument("inputs", nargs="+", help="A=path.mufv T=path.mufv ...")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("evaluate", help="score a prediction matrix")
    _add_common(p)
    p.add_argument("--predictions", required=True, help="predictions .mufv file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run the full results grid")
    _add_common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("infogain", help="information gain of terms for a label")
    _add_common(p)
    p.add_argument("--label", required=True, help="label path, e.g. genre00/style01")
    p.add_argument("--top", type=int, default=20)
    p.set_defaults(func=cmd_infogain)

    p = sub.add_parser("report", help="format a rows.jsonl as a text table")
    _add_common(p)
    p.add_argument("--rows", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except (DataError, GenrekitError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
