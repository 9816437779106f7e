"""Synthesise a recording of chick-like calls and run onset detection and
segmentation on it.

    python demos/01_synth_and_detect.py [out_dir]
"""
# %%
import sys
from pathlib import Path

import numpy as np

from callscat.detection import DetectionParams, detect, save_envelope_csv
from callscat.evaluation import match_onsets, segmentation_eval
from callscat.signal_io import save_audio, save_events_csv, synth_subject

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out")
out.mkdir(parents=True, exist_ok=True)

# %% [markdown]
# Pleasure calls are short upward sweeps; contact calls are louder, longer
# and sweep downward. ``synth_subject`` draws one voice (gain and pitch) per
# subject and places calls with random gaps.

# %%
clip, ann = synth_subject("demo", n_calls=30, seed=7)
print(f"{clip.duration:.1f} s, {len(ann.events)} calls")
for e in ann.events[:5]:
    print(f"  {e.onset:7.3f} {e.offset:7.3f}  {e.label.value}")
save_audio(out / "demo.wav", clip)
save_events_csv(out / "demo.csv", ann.events)

# %% [markdown]
# SuperFlux onsets, then one segment per inter-onset interval that stops
# where the energy falls 30 dB below the interval's peak.

# %%
onsets, segments, env = detect(clip, DetectionParams())
save_envelope_csv(out / "envelope.csv", env)
print(f"{len(onsets)} onsets, {len(segments)} segments, envelope hop {1000 * env.frame_hop:.1f} ms")

onset_prf = match_onsets([e.onset for e in ann.events], onsets, window=0.15)
seg_frame, seg_event = segmentation_eval(ann.events, segments, total_dur=clip.duration)
print(f"onset     P {onset_prf.precision:.3f} R {onset_prf.recall:.3f} F {onset_prf.f_measure:.3f}")
print(f"seg frame P {seg_frame.precision:.3f} R {seg_frame.recall:.3f} F {seg_frame.f_measure:.3f}")

# %%
# how far do detected segment ends land from the annotated offsets?
ends = np.array([s.end for s in segments])
errs = [ends[np.argmin(np.abs(ends - e.offset))] - e.offset for e in ann.events]
print(f"offset error: median {1000 * np.median(errs):.1f} ms, max |.| {1000 * np.max(np.abs(errs)):.1f} ms")
