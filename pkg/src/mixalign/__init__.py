"""Mix-to-track subsequence alignment, cue points and DJ-mix statistics."""

from .audio import AudioBuffer, decode_audio, resample, write_wav
from .align import (AlignmentResult, CostMatrix, WarpingPath, align_key_invariant,
                    align_single, cost_matrix, filter_matched, match_rate,
                    subsequence_dtw)
from .cue import (CuePoints, SegmentationReport, TransitionRecord,
                  build_transitions, evaluate_segmentation, extract_cues)
from .features import (BeatGrid, BeatSyncFeatures, Spectrogram, beat_sync,
                       chroma_cens, estimate_tempo, extract_beatsync, mfcc,
                       onset_envelope, stft, track_beats)
from .manifest import MixManifest, TrackEntry, parse_manifest
from .pipeline import RunConfig, align_mix, collect_stats, segmentation_report
from .stats import (StatsReport, cue_agreement, signed_semitones,
                    tempo_adjustment, transition_length_histogram,
                    transposition_histogram)
from .synthmix import (GroundTruth, SynthMixSpec, SynthTrackSpec, make_corpus,
                       render_mix, synth_track, write_corpus)

__version__ = "0.1.0"
