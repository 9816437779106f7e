"""Detection -> features -> recognition, and the leave-one-subject-out harness.

Schemes:

* ``scat-only`` / ``mfcc-only``: every frame of a recording is classified,
  same-label neighbours are fused into events, then gap filling and
  duration pruning use thresholds from the training annotations.
* ``seg-scat`` / ``seg-mfcc``: segments (from the detector, or from the
  annotations when ``annotated_segments`` is set) are labelled by a
  majority vote over the frames they contain.

Artifacts of a run live in ``<run_dir>/<hash>/{features,models,predictions,report}``,
where the hash covers the configuration and the input files.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import (TrainedModel, grid_search, make_splits, predict, stratified_folds,
                         train_model)
from .config import PipelineConfig
from .detection import Segment, detect
from .errors import EmptyInputError, ProtocolError, ValidationError
from .evaluation import (CALL, EvalReport, PRF, SubjectResult, event_eval, frame_eval,
                         match_onsets, segmentation_eval)
from .events import (LabeledFrameSeq, Thresholds, fuse_frames, majority_vote, postprocess,
                     training_thresholds)
from .features import (FeatureKind, FeatureMatrix, context_stats, jtfs_feature_frames,
                       log_compress, mfcc)
from .scattering import Scattering
from .signal_io import (CALL_TYPES, AnnotationSet, AudioClip, CallEvent, Label,
                        load_annotations, load_audio, load_manifest, save_events_csv)


@dataclass
class Recording:
    name: str
    subject_id: str
    clip: AudioClip
    annotations: AnnotationSet
    digest: str = ""


def load_dataset(manifest) -> list[Recording]:
    recs = []
    seen: dict[str, int] = {}
    for entry in load_manifest(manifest):
        clip = load_audio(entry.path)
        ann = load_annotations(entry.annotations, entry.subject_id, clip.duration)
        name = entry.path.stem
        if name in seen:
            seen[name] += 1
            name = f"{name}-{seen[name]}"
        else:
            seen[name] = 0
        h = hashlib.sha256(entry.path.read_bytes())
        h.update(entry.annotations.read_bytes())
        recs.append(Recording(name, entry.subject_id, clip, ann, h.hexdigest()))
    return recs


def scheme_kind(scheme: str) -> FeatureKind:
    return FeatureKind.MFCC if scheme.startswith(("mfcc", "seg-mfcc")) else FeatureKind.JTFS


def is_segment_scheme(scheme: str) -> bool:
    return scheme.startswith("seg-")


def frame_labels(fm: FeatureMatrix, events) -> list[Label]:
    """Label of the event covering each frame centre (background elsewhere)."""
    out = [Label.BACKGROUND] * fm.n_frames
    t = fm.frame_times
    for e in events:
        for i in np.flatnonzero((t >= e.onset) & (t < e.offset)):
            out[i] = Label(e.label)
    return out


def segment_frames(fm: FeatureMatrix, seg) -> np.ndarray:
    """Frames whose centres fall inside the segment; the frame nearest the
    segment midpoint when none does."""
    t = fm.frame_times
    idx = np.flatnonzero((t >= seg.start) & (t < seg.end))
    if idx.size == 0:
        idx = np.array([int(np.argmin(np.abs(t - 0.5 * (seg.start + seg.end))))])
    return idx


class Pipeline:
    """Feature extraction, training and prediction under one configuration."""

    def __init__(self, cfg: PipelineConfig, cache_dir: Path | None = None):
        self.cfg = cfg
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self._scat: Scattering | None = None

    @property
    def scheme(self) -> str:
        return self.cfg.run.scheme

    @property
    def scattering(self) -> Scattering:
        if self._scat is None:
            self._scat = Scattering(self.cfg.scattering)
        return self._scat

    # -------------------------------------------------------------- features
    def raw_features(self, clip: AudioClip, kind: FeatureKind) -> FeatureMatrix:
        f = self.cfg.features
        if kind is FeatureKind.JTFS:
            s1m, tensor = self.scattering(clip)
            fm = jtfs_feature_frames(tensor, s1m, f.include_s1)
            if f.log_eps is not None:
                fm = log_compress(fm, f.log_eps)
            return fm
        return mfcc(clip, f.mfcc_frame, f.mfcc_hop, f.mfcc_coeffs, f.mfcc_mels)

    def features(self, clip: AudioClip, kind: FeatureKind | None = None) -> FeatureMatrix:
        kind = kind or scheme_kind(self.scheme)
        f = self.cfg.features
        fm = self.raw_features(clip, kind)
        if kind is FeatureKind.JTFS or f.mfcc_context:
            fm = context_stats(fm, f.context)
        return fm

    def recording_features(self, rec: Recording) -> FeatureMatrix:
        kind = scheme_kind(self.scheme)
        if self.cache_dir is None:
            return self.features(rec.clip, kind)
        stem = self.cache_dir / f"{rec.name}-{kind.value}"
        if stem.with_suffix(".json").exists():
            return FeatureMatrix.load(stem)
        fm = self.features(rec.clip, kind)
        stem.parent.mkdir(parents=True, exist_ok=True)
        fm.save(stem)
        return fm

    # -------------------------------------------------------------- segments
    def segments(self, clip: AudioClip, annotations: AnnotationSet | None = None):
        """(detector onsets, segments used for recognition, detector segments)."""
        onsets, segs, _ = detect(clip, self.cfg.detection)
        used = segs
        if self.cfg.run.annotated_segments:
            if annotations is None:
                raise ValidationError("annotated_segments needs annotations")
            used = [Segment(e.onset, e.offset) for e in annotations.events]
        return onsets, used, segs

    # -------------------------------------------------------------- training
    def training_rows(self, recs, feats):
        """Rows used for training: call frames only for segment schemes."""
        X, labels, keys, subjects = [], [], [], []
        seg = is_segment_scheme(self.scheme)
        for rec in recs:
            fm = feats[rec.name]
            lab = frame_labels(fm, rec.annotations.events)
            for i, v in enumerate(lab):
                if seg and v is Label.BACKGROUND:
                    continue
                X.append(fm.vectors[i])
                labels.append(v)
                keys.append((rec.subject_id, rec.name, i))
                subjects.append(rec.subject_id)
        if not X:
            raise EmptyInputError("no training frames")
        return np.vstack(X), labels, keys, subjects

    def fit(self, X, labels, folds, classes, meta=None) -> tuple[TrainedModel, dict]:
        c = self.cfg.classifier
        gs = grid_search(X, labels, folds, classes, c.C_grid, c.gamma_grid, c.tol, c.max_iter,
                         self.cfg.seed, c.cache_mb)
        model = train_model(X, labels, classes, gs.best, c.tol, c.max_iter, self.cfg.seed,
                            c.cache_mb, meta=meta)
        return model, gs.best

    def train(self, recs, feats) -> tuple[TrainedModel, Thresholds]:
        """Fit on every recording given (stratified folds for the grid search)."""
        X, labels, keys, _ = self.training_rows(recs, feats)
        folds = stratified_folds(keys, labels, self.cfg.classifier.n_folds, self.cfg.seed)
        classes = [t for t in CALL_TYPES if t in set(labels)]
        th = training_thresholds([r.annotations for r in recs])
        meta = {"scheme": self.scheme, "thresholds": _thresholds_dict(th)}
        model, _ = self.fit(X, labels, folds, classes, meta)
        return model, th

    # -------------------------------------------------------------- predict
    def predict_events(self, model: TrainedModel, fm: FeatureMatrix, segments,
                       thresholds: Thresholds | None = None) -> list[CallEvent]:
        labels, dec = predict(model, fm.vectors)
        if is_segment_scheme(self.scheme):
            out = []
            for seg in segments:
                idx = segment_frames(fm, seg)
                seq = LabeledFrameSeq([labels[i] for i in idx], fm.frame_hop,
                                      decisions=dec[idx], classes=tuple(model.classes))
                lab = majority_vote(seq)
                if lab is not Label.BACKGROUND:
                    out.append(CallEvent(seg.start, seg.end, lab))
            return out
        seq = LabeledFrameSeq(labels, fm.frame_hop, start_time=float(fm.frame_times[0]) - fm.frame_hop / 2)
        events = [CallEvent(max(0.0, e.onset), e.offset, e.label) for e in fuse_frames(seq)]
        if thresholds is not None:
            events = postprocess(events, thresholds.min_gap, thresholds.min_dur)
        return events


def _thresholds_dict(th: Thresholds) -> dict:
    return {"min_gap": {k.value: round(v, 6) for k, v in th.min_gap.items()},
            "min_dur": {k.value: round(v, 6) for k, v in th.min_dur.items()},
            "missing": sorted(t.value for t in th.missing)}


def thresholds_from_meta(meta: dict) -> Thresholds | None:
    d = meta.get("thresholds")
    if not d:
        return None
    return Thresholds({Label(k): v for k, v in d["min_gap"].items()},
                      {Label(k): v for k, v in d["min_dur"].items()},
                      frozenset(Label(v) for v in d["missing"]))


def run_hash(cfg: PipelineConfig, recs) -> str:
    h = hashlib.sha256(cfg.digest().encode())
    for r in sorted(recs, key=lambda r: r.name):
        h.update(f"{r.name}|{r.subject_id}|{r.digest}".encode())
    return h.hexdigest()[:12]


@dataclass
class RunResult:
    report: EvalReport
    run_dir: Path
    predictions: dict = field(default_factory=dict)


def evaluate_recording(cfg: PipelineConfig, rec: Recording, pred, onsets, det_segs) -> SubjectResult:
    e = cfg.evaluation
    classes = [t.value for t in CALL_TYPES]
    ref = rec.annotations.events
    res = SubjectResult(rec.subject_id)
    res.frame = frame_eval(ref, pred, e.frame_grid, rec.clip.duration, classes)
    res.event = event_eval(ref, pred, e.onset_tol, e.dur_ratio, e.event_mode, classes)
    res.onset = match_onsets([ev.onset for ev in ref], onsets, e.onset_window)
    res.seg_frame, res.seg_event = segmentation_eval(ref, det_segs, e.frame_grid, rec.clip.duration,
                                                     e.onset_tol, e.dur_ratio, e.event_mode)
    return res


def _merge_results(subject: str, parts: list[SubjectResult]) -> SubjectResult:
    out = SubjectResult(subject)
    for p in parts:
        for k, v in p.frame.items():
            out.frame[k] = out.frame.get(k, PRF()) + v
        for k, v in p.event.items():
            out.event[k] = out.event.get(k, PRF()) + v
        for name in ("onset", "seg_frame", "seg_event"):
            cur, add = getattr(out, name), getattr(p, name)
            setattr(out, name, add if cur is None else cur + add)
    return out


def run_protocol(cfg: PipelineConfig, recs: list[Recording], run_root=None,
                 log=None) -> RunResult:
    """Leave-one-subject-out evaluation of ``cfg.run.scheme`` on ``recs``."""
    log = log or (lambda msg: None)
    subjects = sorted({r.subject_id for r in recs})
    if len(subjects) < 2:
        raise ProtocolError("leave-one-subject-out needs at least two subjects")
    root = Path(run_root if run_root is not None else cfg.run.run_dir)
    rdir = root / run_hash(cfg, recs)
    for sub in ("features", "models", "predictions", "report"):
        (rdir / sub).mkdir(parents=True, exist_ok=True)
    cfg.dump(rdir / "config.yaml")
    pipe = Pipeline(cfg, rdir / "features")

    feats = {}
    for r in recs:
        log(f"features {r.name}")
        feats[r.name] = pipe.recording_features(r)
    X, labels, keys, subj = pipe.training_rows(recs, feats)
    row_of = {k: i for i, k in enumerate(keys)}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")     # skipped classes are recorded below
        plans = make_splits(keys, subj, labels, cfg.classifier.n_folds, cfg.seed)

    results, splits, preds = [], {}, {}
    for plan in plans:
        log(f"split {plan.held_out_subject}")
        idx = np.array([row_of[k] for k in plan.train_keys])
        lab = [labels[i] for i in idx]
        classes = [t for t in CALL_TYPES if t not in plan.skipped]
        train_recs = [r for r in recs if r.subject_id != plan.held_out_subject]
        th = training_thresholds([r.annotations for r in train_recs])
        meta = {"scheme": cfg.run.scheme, "held_out": plan.held_out_subject,
                "thresholds": _thresholds_dict(th)}
        model, best = pipe.fit(X[idx], lab, plan.folds, classes, meta)
        model.save(rdir / "models" / f"{plan.held_out_subject}.model")
        parts = []
        for r in recs:
            if r.subject_id != plan.held_out_subject:
                continue
            onsets, used, det = pipe.segments(r.clip, r.annotations)
            events = pipe.predict_events(model, feats[r.name], used, th)
            save_events_csv(rdir / "predictions" / f"{r.name}.csv", events)
            preds[r.name] = events
            parts.append(evaluate_recording(cfg, r, events, onsets, det))
        results.append(_merge_results(plan.held_out_subject, parts))
        splits[plan.held_out_subject] = {
            "train_subjects": plan.train_subjects,
            "n_train_frames": int(idx.size),
            "skipped": [t.value for t in plan.skipped],
            "params": {c.value: {"C": p[0], "gamma": p[1]} for c, p in best.items()},
            "converged": {c.value: m.converged for c, m in model.models.items()},
            "model": model.fingerprint,
            "thresholds": meta["thresholds"],
        }
    report = EvalReport(results, {
        "config_hash": cfg.digest(), "run_hash": rdir.name, "scheme": cfg.run.scheme,
        "annotated_segments": cfg.run.annotated_segments, "seed": cfg.seed,
        "recordings": sorted(r.name for r in recs), "splits": splits,
    })
    (rdir / "report" / "report.json").write_text(report.to_json())
    (rdir / "report" / "report.txt").write_text(report.to_text())
    return RunResult(report, rdir, preds)
