"""Experiment orchestration: per-modality pipelines, the results-table grid,
and the text report.

Each experiment runs features → model → train → predict → metrics for one
modality/target/settings row.  Vocabulary, standardization statistics, and
the label factorization are fitted on train+validation items only; test
items never contribute their labels to anything but the final metrics.
"""

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import audiofeat, labelspace, metrics, textfeat, zoo
from .errors import ConfigError, DataError
from .nn import save_model
from .pipeline import split

AUDIO_SETTINGS = ("low-3x3", "high-3x3", "low-4x96", "high-4x96", "low-4x70", "high-4x70")
_SETTINGS_BY_MODALITY = {
    "audio": AUDIO_SETTINGS,
    "timbre": ("timbre-mlp",),
    "text": ("vsm", "vsm+sem"),
    "image": ("ingested",),
    "fusion": ("mlp",),
}
FUSION_COSINE_DROPOUT = 0.7


@dataclass
class ExperimentConfig:
    modality: str = "text"
    target: str = "logistic"
    settings: str = "vsm"
    fusion_modalities: list = field(default_factory=lambda: ["A", "T", "I"])
    feature_files: dict = field(default_factory=dict)  # "A"/"T"/"I" -> MUFV path
    d: int = 50
    seed: int = 42
    min_label_support: int = 1
    patch_width: int = audiofeat.DEFAULT_PATCH_WIDTH
    vocab_size: int = textfeat.DEFAULT_VOCAB_SIZE
    truncate_chars: int = textfeat.DEFAULT_TRUNCATE
    batch_size: int = 32
    epochs: int = 50
    patience: int = 5
    optimizer: dict = field(default_factory=lambda: {"kind": "adam", "lr": 1e-3})
    out_dir: str = "runs"

    def __post_init__(self):
        if self.modality not in _SETTINGS_BY_MODALITY:
            raise ConfigError(f"unknown modality {self.modality!r}")
        if self.target not in ("logistic", "cosine"):
            raise ConfigError(f"unknown target {self.target!r}")
        if self.settings not in _SETTINGS_BY_MODALITY[self.modality]:
            raise ConfigError(
                f"settings {self.settings!r} invalid for modality {self.modality!r}")

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class LabelSetup:
    assignment: object
    kept_labels: list  # taxonomy label ids, dense order
    truth: np.ndarray  # (m, n_kept) over all manifest items
    rows: list  # per item, kept-label ids
    idx: dict  # split tag -> item positions in manifest order


def prepare_labels(manifest, tax, seed, min_support=1):
    ids = manifest.ids()
    closed = [sorted(labelspace.close_labels(it.labels, tax)) for it in manifest.items]
    assignment = split(ids, seed)
    idx = {tag: [i for i, item_id in enumerate(ids) if assignment.tags[item_id] == tag]
           for tag in ("train", "val", "test")}
    trainval = idx["train"] + idx["val"]
    support = np.zeros(tax.n_labels, dtype=np.int64)
    for i in trainval:
        support[closed[i]] += 1
    kept = [j for j in range(tax.n_labels) if support[j] >= max(1, min_support)]
    if not kept:
        raise DataError("no label meets the support threshold on train+val")
    remap = {old: new for new, old in enumerate(kept)}
    rows = [sorted(remap[j] for j in r if j in remap) for r in closed]
    for i in trainval:
        if not rows[i]:
            raise DataError(f"item {ids[i]!r} lost all labels under the support threshold")
    truth = np.zeros((len(ids), len(kept)))
    for i, r in enumerate(rows):
        truth[i, r] = 1.0
    return LabelSetup(assignment, kept, truth, rows, idx)


def fit_factors(setup, d):
    """PPMI + SVD on train+validation annotations; d is clamped to the
    number of kept labels."""
    trainval = setup.idx["train"] + setup.idx["val"]
    sub = labelspace.ItemLabelMatrix.from_rows(
        [setup.rows[i] for i in trainval], len(setup.kept_labels))
    ppmi = labelspace.compute_ppmi(sub)
    d_eff = min(d, len(setup.kept_labels))
    return labelspace.factorize(ppmi, d_eff)


def _item_factor_targets(setup, factor_model, positions):
    mat = labelspace.ItemLabelMatrix.from_rows(
        [setup.rows[i] for i in positions], len(setup.kept_labels))
    return labelspace.item_factors(factor_model.label_factors, mat)


# ----------------------------------------------------------------- features

def text_corpus(manifest, cfg):
    corpus = []
    for it in manifest.items:
        text = textfeat.aggregate_and_truncate(it.reviews, cfg.truncate_chars)
        tokens = textfeat.tokenize(text)
        if cfg.settings.endswith("+sem"):
            tokens = textfeat.append_enrichment(tokens, it.enrichment)
        corpus.append(tokens)
    return corpus


def text_features(manifest, cfg, trainval_positions):
    corpus = text_corpus(manifest, cfg)
    vocab = textfeat.build_vocabulary(
        [corpus[i] for i in trainval_positions], cfg.vocab_size)
    return textfeat.tfidf(corpus, vocab).matrix.toarray(), vocab


def timbre_features(manifest):
    out = []
    for it in manifest.items:
        stats = [audiofeat.timbre_stats(audiofeat.load_timbre(manifest.resolve(p)))
                 for p in it.timbre]
        if not stats:
            raise DataError(f"item {it.id!r} has no timbre matrices")
        out.append(np.mean(stats, axis=0))
    return np.asarray(out)


def image_features(manifest):
    out = []
    for it in manifest.items:
        if not it.image_vec:
            raise DataError(f"item {it.id!r} has no image vector")
        mat, _ = zoo.load_feature_vectors(manifest.resolve(it.image_vec))
        out.append(mat[0])
    return np.asarray(out)


def audio_patches(manifest, cfg):
    """One seeded patch per track. Returns (patches, album position per track)."""
    patches = []
    album_of_track = []
    counter = 0
    for pos, it in enumerate(manifest.items):
        for rel in it.tracks:
            spec = audiofeat.load_spectrogram(manifest.resolve(rel))
            rng = np.random.default_rng([cfg.seed, 7, counter])
            patches.append(audiofeat.sample_patch(spec, cfg.patch_width, rng))
            album_of_track.append(pos)
            counter += 1
    if not patches:
        raise DataError("manifest has no audio tracks")
    return np.asarray(patches), np.asarray(album_of_track)


def _column_standardize(features, train_positions):
    mean = features[train_positions].mean(axis=0)
    std = features[train_positions].std(axis=0)
    return (features - mean) / np.maximum(std, 1e-6)


# ------------------------------------------------------------ orchestration

def _train_config(cfg, seed_offset=0):
    return zoo.TrainConfig(batch_size=cfg.batch_size, epochs=cfg.epochs,
                           patience=cfg.patience, seed=cfg.seed + seed_offset,
                           optimizer=dict(cfg.optimizer))


def _targets(setup, factor_model, cfg, positions):
    if cfg.target == "logistic":
        return setup.truth[positions]
    return _item_factor_targets(setup, factor_model, positions)


def _prediction_matrix(model, x_test, setup, factor_model, cfg):
    outputs = zoo.predict(model, x_test)
    if cfg.target == "logistic":
        scores = outputs
    else:
        scores, _ = metrics.scores_from_cosine_head(outputs, factor_model.label_factors)
    truth = setup.truth[setup.idx["test"]]
    return metrics.PredictionMatrix(scores, truth)


def _shallow_stage(features, setup, factor_model, cfg, in_dropout=0.0, seed_offset=1):
    """Train a shallow model on per-item vectors and predict the test split."""
    n_out = (len(setup.kept_labels) if cfg.target == "logistic"
             else factor_model.label_factors.shape[1])
    model = zoo.build_shallow(features.shape[1], n_out, cfg.target,
                              dropout=in_dropout, seed=cfg.seed + seed_offset)
    tr, va = setup.idx["train"], setup.idx["val"]
    history = zoo.train(
        model, features[tr], _targets(setup, factor_model, cfg, tr),
        features[va], _targets(setup, factor_model, cfg, va),
        _train_config(cfg, seed_offset))
    pred = _prediction_matrix(model, features[setup.idx["test"]], setup, factor_model, cfg)
    return model, history, pred


def run_experiment(cfg, manifest, tax):
    """Execute one results row. Returns a dict with the evaluation report,
    the table row, the album-level feature matrix, and artifact paths."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    setup = prepare_labels(manifest, tax, cfg.seed, cfg.min_label_support)
    factor_model = fit_factors(setup, cfg.d) if cfg.target == "cosine" else None
    n_out = (len(setup.kept_labels) if cfg.target == "logistic"
             else factor_model.label_factors.shape[1])
    tr, va = setup.idx["train"], setup.idx["val"]
    feature_matrix = None
    histories = {}

    if cfg.modality == "audio":
        width_name, shape_name = cfg.settings.split("-")
        patches, album_of_track = audio_patches(manifest, cfg)
        track_tag = np.array([setup.assignment.tags[manifest.items[a].id]
                              for a in album_of_track])
        stats = audiofeat.fit_bin_stats(patches[track_tag == "train"])
        patches = audiofeat.standardize(patches, stats)[:, None, :, :]
        track_targets = _targets(setup, factor_model, cfg,
                                 album_of_track.tolist())  # tracks inherit album targets
        cnn_cfg = zoo.AudioCnnConfig(filter_shape=shape_name, width=width_name,
                                     head=cfg.target)
        cnn = zoo.build_audio_cnn(cnn_cfg, n_out, n_bins=patches.shape[2],
                                  width=cfg.patch_width, seed=cfg.seed)
        histories["track"] = zoo.train(
            cnn, patches[track_tag == "train"], track_targets[track_tag == "train"],
            patches[track_tag == "val"], track_targets[track_tag == "val"],
            _train_config(cfg))
        track_feats = zoo.extract_features(cnn, patches, batch_size=cfg.batch_size)
        grouped = {}
        for feat, a in zip(track_feats, album_of_track):
            grouped.setdefault(int(a), []).append(feat)
        album_vecs = zoo.average_tracks(grouped)
        feature_matrix = np.asarray([album_vecs[i] for i in range(len(manifest.items))])
        main_model = cnn
        model, history, pred = _shallow_stage(feature_matrix, setup, factor_model, cfg)
        histories["album"] = history
        save_model(cnn, os.path.join(cfg.out_dir, "track_model.munn"))

    elif cfg.modality == "text":
        features, _vocab = text_features(manifest, cfg, tr + va)
        model = zoo.build_text_mlp(n_out, cfg.target, in_dim=features.shape[1],
                                   seed=cfg.seed)
        histories["main"] = zoo.train(
            model, features[tr], _targets(setup, factor_model, cfg, tr),
            features[va], _targets(setup, factor_model, cfg, va),
            _train_config(cfg))
        feature_matrix = zoo.extract_features(model, features)
        pred = _prediction_matrix(model, features[setup.idx["test"]],
                                  setup, factor_model, cfg)
        main_model = model

    elif cfg.modality == "timbre":
        features = _column_standardize(timbre_features(manifest), tr)
        model, history, pred = _shallow_stage(features, setup, factor_model, cfg,
                                              seed_offset=0)
        histories["main"] = history
        feature_matrix = features
        main_model = model

    elif cfg.modality == "image":
        features = _column_standardize(image_features(manifest), tr)
        model, history, pred = _shallow_stage(features, setup, factor_model, cfg,
                                              seed_offset=0)
        histories["main"] = history
        feature_matrix = features
        main_model = model

    else:  # fusion
        vectors = {}
        for mod in cfg.fusion_modalities:
            path = cfg.feature_files.get(mod)
            if path is None:
                raise ConfigError(f"fusion needs feature_files[{mod!r}]")
            mat, ids = zoo.load_feature_vectors(path)
            if ids != manifest.ids():
                raise DataError(f"feature file {path!r} ids do not match the manifest")
            vectors[mod] = mat
        fused = zoo.fuse(vectors, cfg.fusion_modalities)
        dropout = FUSION_COSINE_DROPOUT if cfg.target == "cosine" else 0.0
        model, history, pred = _shallow_stage(fused.matrix, setup, factor_model, cfg,
                                              in_dropout=dropout, seed_offset=0)
        histories["main"] = history
        feature_matrix = fused.matrix
        main_model = model

    report = metrics.evaluate(pred)
    main_history = histories["track"] if cfg.modality == "audio" else histories["main"]
    epoch_seconds = float(np.mean([h["seconds"] for h in main_history])) if main_history else 0.0
    row = {
        "modality": cfg.modality,
        "target": cfg.target,
        "settings": cfg.settings,
        "params": main_model.n_params(),
        "epoch_seconds": epoch_seconds,
        "auc": report.auc_mean,
        "c@1": report.coverage.get(1),
        "c@3": report.coverage.get(3),
        "c@5": report.coverage.get(5),
    }

    # persist artifacts
    paths = {}
    paths["model"] = os.path.join(cfg.out_dir, "model.munn")
    save_model(model, paths["model"])
    paths["features"] = os.path.join(cfg.out_dir, "features.mufv")
    zoo.save_feature_vectors(feature_matrix, manifest.ids(), paths["features"])
    paths["predictions"] = os.path.join(cfg.out_dir, "predictions.mufv")
    test_ids = [manifest.ids()[i] for i in setup.idx["test"]]
    zoo.save_feature_vectors(pred.scores, test_ids, paths["predictions"])
    paths["report"] = os.path.join(cfg.out_dir, "report.json")
    with open(paths["report"], "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    paths["row"] = os.path.join(cfg.out_dir, "row.json")
    with open(paths["row"], "w", encoding="utf-8") as fh:
        fh.write(json.dumps(row, sort_keys=True) + "\n")
    for name, history in histories.items():
        p = os.path.join(cfg.out_dir, f"history_{name}.jsonl")
        zoo.save_history(history, p)
        paths[f"history_{name}"] = p

    return {"report": report, "row": row, "features": feature_matrix,
            "prediction": pred, "paths": paths, "config": cfg}


# ------------------------------------------------------------------ the grid

def default_grid(seed=42, out_root="runs", fast=True):
    """Desk-scale mirror of the results grid on synthetic data."""
    audio_common = {"patch_width": 96, "batch_size": 16, "epochs": 10, "patience": 3,
                    "optimizer": {"kind": "adam", "lr": 1e-3}}
    if not fast:
        audio_common = {"batch_size": 32, "epochs": 30, "patience": 5}
    rows = [
        {"modality": "timbre", "target": "logistic", "settings": "timbre-mlp",
         "epochs": 300, "patience": 30, "optimizer": {"kind": "adam", "lr": 1e-2}},
        {"modality": "audio", "target": "logistic", "settings": "low-4x70", **audio_common},
        {"modality": "audio", "target": "cosine", "settings": "low-4x70", **audio_common},
        {"modality": "text", "target": "logistic", "settings": "vsm",
         "epochs": 40, "patience": 5},
        {"modality": "text", "target": "cosine", "settings": "vsm+sem",
         "epochs": 40, "patience": 5},
        {"modality": "image", "target": "logistic", "settings": "ingested",
         "epochs": 200, "patience": 20, "optimizer": {"kind": "adam", "lr": 1e-2}},
    ]
    for r in rows:
        r["seed"] = seed
        r["out_dir"] = os.path.join(
            out_root, f"{r['modality']}_{r['target']}_{r['settings'].replace('+', '')}")
    return rows


def run_grid(manifest, tax, out_root="runs", seed=42, grid=None, fusion_targets=("logistic", "cosine")):
    """Run single-modality rows, then late-fusion rows on the best
    (by AUC) feature vectors of each modality."""
    grid = grid if grid is not None else default_grid(seed, out_root)
    rows = []
    results = []
    best = {}  # modality letter -> (auc, features path)
    letter = {"audio": "A", "text": "T", "image": "I"}
    for spec in grid:
        cfg = ExperimentConfig.from_dict(spec)
        result = run_experiment(cfg, manifest, tax)
        rows.append(result["row"])
        results.append(result)
        mod = letter.get(cfg.modality)
        if mod and (mod not in best or result["row"]["auc"] > best[mod][0]):
            best[mod] = (result["row"]["auc"], result["paths"]["features"])
    if all(m in best for m in ("A", "T", "I")):
        for target in fusion_targets:
            cfg = ExperimentConfig(
                modality="fusion", target=target, settings="mlp",
                feature_files={m: best[m][1] for m in ("A", "T", "I")},
                seed=seed, epochs=200, patience=20,
                optimizer={"kind": "adam", "lr": 1e-2},
                out_dir=os.path.join(out_root, f"fusion_{target}_ATI"))
            result = run_experiment(cfg, manifest, tax)
            rows.append(result["row"])
            results.append(result)
    return rows, results


# -------------------------------------------------------------------- report

def format_params(count):
    value = count / 1e6
    text = f"{value:.2f}".rstrip("0").rstrip(".")
    return (text or "0") + "M"


def report_table(rows):
    """Aligned text table in grid order."""
    if not rows:
        raise ValueError("need at least one row")
    header = ["Modality", "Target", "Settings", "Params", "Time", "AUC", "C@1", "C@3", "C@5"]
    body = []
    for r in rows:
        body.append([
            r["modality"], r["target"], r["settings"],
            format_params(r["params"]),
            f"{r['epoch_seconds']:.1f}s",
            f"{r['auc']:.3f}",
            *(f"{r[k]:.2f}" if r.get(k) is not None else "-" for k in ("c@1", "c@3", "c@5")),
        ])
    widths = [max(len(header[i]), *(len(row[i]) for row in body)) for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
