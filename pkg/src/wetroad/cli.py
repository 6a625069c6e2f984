"""Command-line pipeline: synth, extract, select, train, eval, predict.

Every subcommand accepts --config pointing at a JSON file whose keys
mirror the flags (underscored); explicit flags override file values and
unknown keys are rejected. Each run writes the fully resolved
configuration next to its outputs. Exit codes: 0 success, 2 usage error,
3 data/validation error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
from scipy.special import expit

from . import evaluate, features, ingest, rnn, selection, svm, synth
from .errors import NumericError, ValidationError
from .util import atomic_write


class UsageError(Exception):
    pass


def _parse_layout(text: str) -> tuple[int, ...]:
    try:
        layout = tuple(int(part) for part in text.split("-"))
    except ValueError:
        raise UsageError(f"bad layout {text!r}, expected e.g. 216-216-216")
    if not layout or any(h < 1 for h in layout):
        raise UsageError(f"bad layout {text!r}, sizes must be >= 1")
    return layout


def _dump_json(path, doc) -> None:
    atomic_write(path, lambda tmp: json.dump(doc, open(tmp, "w"), indent=2, sort_keys=True))


def _write_sidecar_config(out_path: str, resolved: dict, is_dir: bool) -> None:
    import os

    target = (
        os.path.join(out_path, "run_config.json") if is_dir else f"{out_path}.config.json"
    )
    doc = {k: v for k, v in resolved.items() if k not in ("config", "command")}
    _dump_json(target, doc)


# ---------------------------------------------------------------- commands


def cmd_synth(args: dict) -> int:
    spec_doc = {}
    if args["spec"]:
        with open(args["spec"]) as fh:
            spec_doc = json.load(fh)
    spec = synth.spec_from_dict(spec_doc)
    if args["seed"] is not None:
        spec.seed = args["seed"]
    manifest_path = synth.generate_corpus(spec, args["out"])
    _write_sidecar_config(args["out"], {**args, "resolved_spec": _spec_as_dict(spec)}, is_dir=True)
    print(f"wrote corpus manifest {manifest_path}")
    return 0


def _spec_as_dict(spec: synth.SynthSpec) -> dict:
    from dataclasses import asdict

    doc = asdict(spec)
    doc["burst_gap_s"] = list(doc["burst_gap_s"])
    return doc


def _extract_trip(manifest: ingest.TripManifest, args: dict) -> ingest.LabeledSequence:
    clip = ingest.load_wav(manifest.audio_path)
    if args["set"] == "asf":
        frame_spec = features.FrameSpec(frame_ms=args["frame_ms"], step_ms=args["step_ms"])
        fft_size = features.next_pow2(frame_spec.frame_len(clip.sample_rate))
        bank = features.build_mel_filterbank(
            num_filters=args["mel_filters"],
            fft_size=fft_size,
            sample_rate=clip.sample_rate,
            f_min=args["fmin"],
            f_max=args["fmax"],
        )
        feats = features.asf_features(clip, frame_spec, bank)
    else:
        feats = features.third_octave_features(clip, bin_ms=args["bin_ms"])
    labeled = ingest.label_frames(manifest, feats.frame_times)
    labeled.features = feats
    return labeled


def cmd_extract(args: dict) -> int:
    manifests = ingest.parse_manifest(args["manifest"])
    if not manifests:
        raise ValidationError("manifest lists no trips")
    trips = [_extract_trip(m, args) for m in manifests]
    atomic_write(args["out"], lambda tmp: features.write_features(tmp, trips))
    _write_sidecar_config(args["out"], args, is_dir=False)
    total = sum(len(t.frame_times) for t in trips)
    print(f"wrote {total} frames x {trips[0].features.dims} features to {args['out']}")
    return 0


def _pooled_matrix(trips):
    X = np.vstack([t.features.values for t in trips])
    labels = np.concatenate([t.labels for t in trips])
    return X, labels


def cmd_select(args: dict) -> int:
    trips = features.read_features(args["features"])
    X, labels = _pooled_matrix(trips)
    names = trips[0].features.feature_names
    if args["method"] == "ig":
        ranked = selection.rank_by_ig(X, labels, method=args["discretization"])
        selected = ranked.top(args["top_k"])
        report = {
            "method": "ig",
            "parameters": {"top_k": args["top_k"], "discretization": args["discretization"]},
            "ranking": [[idx, val] for idx, val in ranked.ranking],
            "selected": selected,
            "selected_names": [names[j] for j in selected],
            "feature_names": names,
        }
    else:
        result = selection.best_first_cfs(
            X, labels, max_stale=args["max_stale"], method=args["discretization"]
        )
        report = {
            "method": "cfs",
            "parameters": {"max_stale": args["max_stale"], "discretization": args["discretization"]},
            "selected": result.selected,
            "selected_names": [names[j] for j in result.selected],
            "merit": result.merit,
            "evaluations": result.evaluations,
            "feature_names": names,
        }
    _dump_json(args["out"], report)
    _write_sidecar_config(args["out"], args, is_dir=False)
    print(f"selected {len(report['selected'])} features -> {args['out']}")
    return 0


def _match_manifests(trips, manifests):
    by_id = {m.trip_id: m for m in manifests}
    pairs = []
    for t in trips:
        if t.trip_id not in by_id:
            raise ValidationError(f"trip {t.trip_id} not present in the manifest")
        pairs.append((by_id[t.trip_id], t))
    return pairs


def _network_spec(args: dict, input_dim: int) -> rnn.NetworkSpec:
    return rnn.NetworkSpec(
        input_dim=input_dim,
        hidden_layout=_parse_layout(args["layout"]),
        bidirectional=args["arch"] == "blstm",
        learning_rate=args["lr"],
        seed=args["seed"],
        max_epochs=args["max_epochs"],
        patience=args["patience"],
        subsequence_len=args["subseq_len"],
        peepholes=not args["no_peepholes"],
    )


def _svm_kernel(args: dict) -> svm.KernelSpec:
    if args["kernel"] == "rbf":
        return svm.KernelSpec(name="rbf", gamma=args["gamma"])
    return svm.KernelSpec(name="linear")


def _history_doc(history: rnn.TrainHistory) -> dict:
    # wall times deliberately left out so outputs are byte-reproducible
    return {
        "train_sse": history.train_sse,
        "val_sse": history.val_sse,
        "val_uar": history.val_uar,
        "epochs": history.epochs,
    }


def cmd_train(args: dict) -> int:
    trips = features.read_features(args["features"])
    manifests = ingest.parse_manifest(args["manifest"])
    pairs = _match_manifests(trips, manifests)
    val_route = args["val_route"]
    if val_route is not None:
        train_trips = [t for m, t in pairs if m.route_id != val_route]
        val_trips = [t for m, t in pairs if m.route_id == val_route]
        if not val_trips:
            raise ValidationError(f"no trips on validation route {val_route}")
        if not train_trips:
            raise ValidationError("validation route covers every trip")
    else:
        train_trips = [t for _, t in pairs]
        val_trips = train_trips
    if args["arch"] == "svm":
        X, labels = _pooled_matrix(train_trips)
        model = svm.smo_train(
            X, 2.0 * labels - 1.0, C=args["svm_c"], kernel=_svm_kernel(args), tol=args["svm_tol"]
        )
        atomic_write(args["out"], lambda tmp: svm.save_svm(tmp, model))
    else:
        spec = _network_spec(args, input_dim=train_trips[0].features.dims)
        model = rnn.init_model(spec)
        model, history = rnn.train(model, train_trips, val_trips, spec)
        atomic_write(args["out"], lambda tmp: rnn.save_model(tmp, model))
        _dump_json(f"{args['out']}.history.json", _history_doc(history))
    _write_sidecar_config(args["out"], args, is_dir=False)
    print(f"wrote model {args['out']}")
    return 0


def _rnn_trainer_predictor(args: dict, input_dim: int):
    spec = _network_spec(args, input_dim)

    def trainer(train_trips):
        seqs = [seq for _, seq in train_trips]
        model = rnn.init_model(spec)
        model, _ = rnn.train(model, seqs, seqs, spec)
        return model

    def predictor(model, seq):
        classes, posteriors = rnn.predict_frames(model, seq.features)
        return classes, posteriors[:, 1]

    return trainer, predictor


def _svm_trainer_predictor(args: dict):
    kernel = _svm_kernel(args)

    def trainer(train_trips):
        X, labels = _pooled_matrix([seq for _, seq in train_trips])
        return svm.smo_train(X, 2.0 * labels - 1.0, C=args["svm_c"], kernel=kernel,
                             tol=args["svm_tol"])

    def predictor(model, seq):
        values = svm.decision_function(model, seq.features.values)
        classes = (values >= 0).astype(np.int64)  # zero decision -> +1 (wet)
        return classes, expit(values)

    return trainer, predictor


def cmd_eval(args: dict) -> int:
    if args["protocol"] != "cross-route":
        raise UsageError(f"unknown protocol {args['protocol']!r}")
    trips = features.read_features(args["features"])
    manifests = ingest.parse_manifest(args["manifest"])
    pairs = _match_manifests(trips, manifests)
    if args["arch"] in ("lstm", "blstm"):
        trainer, predictor = _rnn_trainer_predictor(args, pairs[0][1].features.dims)
    else:
        trainer, predictor = _svm_trainer_predictor(args)
    report = evaluate.cross_route_eval(
        pairs, trainer, predictor, speed_threshold=args["threshold_mph"]
    )
    _dump_json(args["out"], report.to_dict())
    timeline_path = args["timeline_out"] or _default_timeline_path(args["out"])
    atomic_write(timeline_path, lambda tmp: evaluate.write_timeline_csv(tmp, report))
    _write_sidecar_config(args["out"], args, is_dir=False)
    for e in report.experiments:
        print(f"train route {e.train_route} -> test route {e.test_route}: UAR {e.uar:.4f}")
    print(f"mean UAR over {len(report.experiments)} experiments: {report.mean_uar:.4f}")
    return 0


def _default_timeline_path(out: str) -> str:
    return (out[: -len(".json")] if out.endswith(".json") else out) + ".timeline.csv"


def cmd_predict(args: dict) -> int:
    with open(args["model"]) as fh:
        kind = json.load(fh).get("kind")
    trips = features.read_features(args["features"])
    rows = []
    if kind == "rnn":
        model = rnn.load_model(args["model"])
        for t in trips:
            classes, posteriors = rnn.predict_frames(model, t.features)
            rows.append((t, classes, posteriors[:, 1]))
    elif kind == "svm":
        model = svm.load_svm(args["model"])
        for t in trips:
            values = svm.decision_function(model, t.features.values)
            rows.append((t, (values >= 0).astype(np.int64), expit(values)))
    else:
        raise ValidationError(f"{args['model']}: unknown model kind {kind!r}")

    def write(tmp):
        import csv

        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trip_id", "time_s", "speed_mph", "label", "prediction",
                             "posterior_wet"])
            for t, classes, scores in rows:
                for i in range(len(t.frame_times)):
                    writer.writerow([
                        t.trip_id, f"{t.frame_times[i]:.9g}", f"{t.speeds[i]:.9g}",
                        int(t.labels[i]), int(classes[i]), f"{scores[i]:.9g}",
                    ])

    atomic_write(args["out"], write)
    _write_sidecar_config(args["out"], args, is_dir=False)
    print(f"wrote predictions for {len(rows)} trips to {args['out']}")
    return 0


# ------------------------------------------------------------- arg plumbing

# name, flags/kwargs, builtin default, required-after-merge
_COMMON_RNN_OPTS = [
    ("layout", {"type": str, "help": "hidden layer sizes A-B-C"}, "54-54-54", False),
    ("lr", {"type": float, "help": "learning rate"}, 1e-5, False),
    ("max_epochs", {"type": int, "help": "epoch budget"}, 100, False),
    ("patience", {"type": int, "help": "early-stop patience (epochs)"}, 10, False),
    ("subseq_len", {"type": int, "help": "training subsequence length (frames)"}, 100, False),
    ("no_peepholes", {"action": "store_true", "help": "disable peephole weights"}, False, False),
]

_COMMON_SVM_OPTS = [
    ("svm_c", {"type": float, "help": "SVM regularization C"}, 1e-3, False),
    ("svm_tol", {"type": float, "help": "KKT tolerance"}, 1e-3, False),
    ("kernel", {"choices": ["linear", "rbf"], "help": "kernel type"}, "linear", False),
    ("gamma", {"type": float, "help": "RBF gamma"}, None, False),
]

COMMANDS = {
    "synth": (
        cmd_synth,
        "generate a synthetic wet/dry corpus",
        [
            ("spec", {"type": str, "help": "corpus spec JSON"}, None, False),
            ("out", {"type": str, "help": "output directory"}, None, True),
            ("seed", {"type": int, "help": "override the spec seed"}, None, False),
        ],
    ),
    "extract": (
        cmd_extract,
        "extract features from a corpus manifest",
        [
            ("manifest", {"type": str, "help": "corpus manifest JSON"}, None, True),
            ("set", {"choices": ["asf", "octave"], "help": "feature set"}, "asf", False),
            ("out", {"type": str, "help": "output feature CSV"}, None, True),
            ("frame_ms", {"type": float, "help": "analysis window (ms)"}, 30.0, False),
            ("step_ms", {"type": float, "help": "window hop (ms)"}, 10.0, False),
            ("mel_filters", {"type": int, "help": "Mel filter count"}, 26, False),
            ("fmin", {"type": float, "help": "Mel range lower edge (Hz)"}, 0.0, False),
            ("fmax", {"type": float, "help": "Mel range upper edge (Hz, default Nyquist)"}, None, False),
            ("bin_ms", {"type": float, "help": "octave-set bin length (ms)"}, 125.0, False),
        ],
    ),
    "select": (
        cmd_select,
        "rank or select features on a feature CSV",
        [
            ("features", {"type": str, "help": "feature CSV"}, None, True),
            ("method", {"choices": ["ig", "cfs"], "help": "selection method"}, None, True),
            ("top_k", {"type": int, "help": "IG: number of top features"}, 20, False),
            ("max_stale", {"type": int, "help": "CFS: non-improving expansions before stop"}, 5, False),
            ("discretization", {"choices": ["mdl", "width10"], "help": "binning method"}, "mdl", False),
            ("out", {"type": str, "help": "output report JSON"}, None, True),
        ],
    ),
    "train": (
        cmd_train,
        "train a model on a feature CSV",
        [
            ("features", {"type": str, "help": "feature CSV"}, None, True),
            ("manifest", {"type": str, "help": "corpus manifest JSON"}, None, True),
            ("arch", {"choices": ["lstm", "blstm", "svm"], "help": "model family"}, None, True),
            ("seed", {"type": int, "help": "weight-init and shuffle seed"}, 0, False),
            ("val_route", {"type": int, "help": "route held out for validation"}, None, False),
            ("out", {"type": str, "help": "output model file"}, None, True),
        ]
        + _COMMON_RNN_OPTS
        + _COMMON_SVM_OPTS,
    ),
    "eval": (
        cmd_eval,
        "run the cross-route protocol end to end",
        [
            ("manifest", {"type": str, "help": "corpus manifest JSON"}, None, True),
            ("features", {"type": str, "help": "feature CSV"}, None, True),
            ("protocol", {"choices": ["cross-route"], "help": "evaluation protocol"}, "cross-route", False),
            ("arch", {"choices": ["lstm", "blstm", "svm"], "help": "model family"}, None, True),
            ("seed", {"type": int, "help": "weight-init and shuffle seed"}, 0, False),
            ("threshold_mph", {"type": float, "help": "speed stratification threshold"},
             evaluate.DEFAULT_SPEED_THRESHOLD_MPH, False),
            ("out", {"type": str, "help": "output report JSON"}, None, True),
            ("timeline_out", {"type": str, "help": "timeline CSV path"}, None, False),
        ]
        + _COMMON_RNN_OPTS
        + _COMMON_SVM_OPTS,
    ),
    "predict": (
        cmd_predict,
        "predict frames with a saved model",
        [
            ("model", {"type": str, "help": "model file (rnn or svm)"}, None, True),
            ("features", {"type": str, "help": "feature CSV"}, None, True),
            ("out", {"type": str, "help": "output timeline CSV"}, None, True),
        ],
    ),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wetroad",
        description="acoustic road-wetness classification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (func, help_text, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None,
                       help="JSON config; keys mirror the flags, flags win")
        for opt_name, kwargs, _default, _required in opts:
            flag = "--" + opt_name.replace("_", "-")
            if kwargs.get("action") == "store_true":
                p.add_argument(flag, action="store_const", const=True, default=None,
                               help=kwargs.get("help"))
            else:
                p.add_argument(flag, default=None, **kwargs)
        p.set_defaults(func=func)
    return parser


def _resolve_args(ns: argparse.Namespace) -> dict:
    _, _, opts = COMMANDS[ns.command]
    file_values = {}
    if ns.config:
        try:
            with open(ns.config) as fh:
                file_values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}")
        known = {name for name, _, _, _ in opts}
        unknown = set(file_values) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    resolved = {"command": ns.command, "config": ns.config}
    for name, _kwargs, default, required in opts:
        cli_value = getattr(ns, name)
        value = cli_value if cli_value is not None else file_values.get(name, default)
        if required and value is None:
            raise UsageError(f"missing required option --{name.replace('_', '-')}")
        resolved[name] = value
    return resolved


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        args = _resolve_args(ns)
        return ns.func(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
