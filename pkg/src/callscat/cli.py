"""Command-line entry point: ``callscat <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or configuration, 2 file I/O.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import TrainedModel
from .config import SCHEMES, PipelineConfig, describe_keys, load_config
from .detection import detect, save_envelope_csv, save_onsets_csv, save_segments_csv
from .errors import AudioFormatError, CallScatError
from .evaluation import EvalReport, SubjectResult, event_eval, frame_eval
from .features import FeatureKind
from .pipeline import Pipeline, load_dataset, run_protocol, scheme_kind, thresholds_from_meta
from .scattering import path_energy_csv
from .signal_io import (CALL_TYPES, ManifestEntry, load_annotations, load_audio, save_audio,
                        save_events_csv, save_manifest, synth_subject)

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def _cfg(args) -> PipelineConfig:
    cfg = load_config(args.config, args.set)
    if getattr(args, "scheme", None):
        cfg = cfg.with_overrides([f"run.scheme={args.scheme}"])
    return cfg


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg, file=sys.stderr)


# ----------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    cfg = _cfg(args)
    s = cfg.synth
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for k in range(s.n_subjects):
        name = args.name if s.n_subjects == 1 else f"{args.name}{k + 1}"
        seed = int(np.random.SeedSequence([cfg.seed, k]).generate_state(1)[0])
        clip, ann = synth_subject(name, s.n_calls, seed, s.noise_db, s.sample_rate,
                                  s.p_pleasure, s.gap)
        save_audio(out / f"{name}.wav", clip)
        save_events_csv(out / f"{name}.csv", ann.events)
        entries.append(ManifestEntry(out / f"{name}.wav", name, out / f"{name}.csv"))
        _say(args, f"{name}: {len(ann.events)} calls, {clip.duration:.1f} s")
    save_manifest(out / "manifest.csv", entries)
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _cfg(args)
    clip = load_audio(args.audio, cfg.scattering.sample_rate)
    onsets, segs, env = detect(clip, cfg.detection)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_onsets_csv(out / "onsets.csv", onsets)
    save_segments_csv(out / "segments.csv", segs)
    if args.emit_plots:
        save_envelope_csv(out / "envelope.csv", env)
    _say(args, f"{len(onsets)} onsets, {len(segs)} segments")
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = _cfg(args)
    clip = load_audio(args.audio, cfg.scattering.sample_rate)
    pipe = Pipeline(cfg)
    kind = FeatureKind(args.kind) if args.kind else scheme_kind(cfg.run.scheme)
    fm = pipe.features(clip, kind)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fm.save(out)
    if args.emit_plots and kind is FeatureKind.JTFS:
        scal = pipe.scattering.scalogram(clip)
        tensor = pipe.scattering.jtfs(scal)
        path_energy_csv(out.with_name(out.name + "-paths.csv"), tensor)
        s1m = pipe.scattering.s1(scal)
        with open(out.with_name(out.name + "-s1.csv"), "w") as fh:
            fh.write("band,frequency,mean\n")
            for b, (lam, v) in enumerate(zip(scal.lambdas, s1m.values.mean(axis=1))):
                fh.write(f"{b},{lam:.3f},{v:.9g}\n")
    _say(args, f"{fm.n_frames} frames x {fm.dim} dims, hop {fm.frame_hop * 1000:.2f} ms")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _cfg(args)
    recs = load_dataset(args.manifest)
    pipe = Pipeline(cfg)
    feats = {r.name: pipe.recording_features(r) for r in recs}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model, _ = pipe.train(recs, feats)
    model.meta["config_hash"] = cfg.digest()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    _say(args, f"model {model.fingerprint}: classes {', '.join(c.value for c in model.classes)}")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _cfg(args)
    model = TrainedModel.load(args.model)
    scheme = model.meta.get("scheme", cfg.run.scheme)
    cfg = cfg.with_overrides([f"run.scheme={scheme}"])
    if model.meta.get("config_hash") not in (None, cfg.digest()):
        warnings.warn("model was trained under a different configuration", stacklevel=1)
    clip = load_audio(args.audio, cfg.scattering.sample_rate)
    ann = load_annotations(args.annotations, duration=clip.duration) if args.annotations else None
    pipe = Pipeline(cfg)
    fm = pipe.features(clip)
    _, segs, _ = pipe.segments(clip, ann)
    events = pipe.predict_events(model, fm, segs, thresholds_from_meta(model.meta))
    save_events_csv(args.out, events)
    _say(args, f"{len(events)} events")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _cfg(args)
    recs = load_dataset(args.manifest)
    res = run_protocol(cfg, recs, args.run_dir, log=lambda m: _say(args, m))
    print(res.report.to_text())
    _say(args, f"report: {res.run_dir / 'report' / 'report.json'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _cfg(args)
    e = cfg.evaluation
    ref = load_annotations(args.reference)
    pred = load_annotations(args.prediction)
    classes = [t.value for t in CALL_TYPES]
    total = args.duration or max([x.offset for x in ref.events + pred.events], default=0.0)
    res = SubjectResult(ref.subject_id,
                        frame_eval(ref.events, pred.events, e.frame_grid, total, classes),
                        event_eval(ref.events, pred.events, e.onset_tol, e.dur_ratio, e.event_mode, classes))
    report = EvalReport([res], {"reference": Path(args.reference).name,
                                "prediction": Path(args.prediction).name})
    print(report.to_json() if args.json else report.to_text())
    return EXIT_OK


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    epilog = "configuration keys (defaults):\n" + describe_keys()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key, e.g. scattering.T=8192")
    common.add_argument("-q", "--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="callscat", description=__doc__.splitlines()[0],
                                epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, parents=[common], help=help_, description=help_, epilog=epilog,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=func)
        return sp

    sp = add("synth", cmd_synth, "write synthetic recordings, annotations and a manifest")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--name", default="subject")

    sp = add("detect", cmd_detect, "onset detection and call segmentation of one recording")
    sp.add_argument("audio")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--emit-plots", action="store_true", help="also write the onset envelope CSV")

    sp = add("features", cmd_features, "frame features of one recording")
    sp.add_argument("audio")
    sp.add_argument("--out", required=True, help="output stem (.bin + .json)")
    sp.add_argument("--kind", choices=[k.value for k in FeatureKind])
    sp.add_argument("--scheme", choices=SCHEMES)
    sp.add_argument("--emit-plots", action="store_true", help="also write path energy and S1 CSVs")

    sp = add("train", cmd_train, "train one-vs-rest models on every recording of a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", required=True)
    sp.add_argument("--scheme", choices=SCHEMES)

    sp = add("predict", cmd_predict, "label the calls of one recording with a trained model")
    sp.add_argument("model")
    sp.add_argument("audio")
    sp.add_argument("--out", required=True, help="events CSV")
    sp.add_argument("--annotations", help="use these annotated segments (with run.annotated_segments)")

    sp = add("run", cmd_run, "leave-one-subject-out evaluation of a scheme")
    sp.add_argument("manifest")
    sp.add_argument("--scheme", choices=SCHEMES)
    sp.add_argument("--run-dir", help="root of run directories (default: run.run_dir)")

    sp = add("evaluate", cmd_evaluate, "score predicted events against annotations")
    sp.add_argument("reference")
    sp.add_argument("prediction")
    sp.add_argument("--duration", type=float, help="recording length for frame scoring")
    sp.add_argument("--json", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError, AudioFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CallScatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
