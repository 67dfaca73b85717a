"""Heart sound segmentation: preprocessing, model, training, and scoring."""

from .autodiff import Tape, Tensor, backward, recording
from .config import RunConfig, load_run_config
from .dataset import (
    LEVEL_I,
    LEVEL_II,
    LEVEL_III,
    LEVELS,
    Characteristics,
    Indicators,
    SynthConfig,
    assign_level,
    build_level_corpus,
    characterize,
    compute_indicators,
    read_manifest,
    synth_pcg,
    write_corpus,
)
from .errors import ConfigError, DataError, FormatError
from .evaluation import (
    AggregateReport,
    CountingState,
    Counts,
    MetricsReport,
    aggregate,
    compute_metrics,
    count_matches,
    paired_t_test,
)
from .inference import (
    TRANSITION_MATRIX,
    segment_recording,
    sliding_logits,
    states_to_onsets,
    viterbi_decode,
)
from .model import MAX_PARAMETERS, ModelConfig, forward, init_params, parameter_count
from .preprocess import (
    WienerConfig,
    adaptive_wiener,
    bandpass_30_60,
    make_channels,
    wavelet_denoise,
)
from .signal_io import (
    FRAME_MS,
    NATIVE_RATE,
    SEGMENT_SECONDS,
    STATES,
    Annotation,
    Recording,
    Segment,
    StateSequence,
    annotation_to_frames,
    load_wav,
    read_annotation,
    resample,
    slice_segments,
    write_annotation,
    write_wav,
)
from .training import (
    EarlyStopper,
    LossConfig,
    TrainConfig,
    cross_validate,
    fold_partition,
    frame_accuracy,
    train_fold,
    transition_loss,
)
from .wavelet import denoise, dwt, idwt, wavedec, waverec
from .weights_io import load_weights, save_weights

__version__ = "0.1.0"

__all__ = [
    "AggregateReport",
    "Annotation",
    "Characteristics",
    "ConfigError",
    "CountingState",
    "Counts",
    "DataError",
    "EarlyStopper",
    "FormatError",
    "FRAME_MS",
    "Indicators",
    "LEVEL_I",
    "LEVEL_II",
    "LEVEL_III",
    "LEVELS",
    "LossConfig",
    "MAX_PARAMETERS",
    "MetricsReport",
    "ModelConfig",
    "NATIVE_RATE",
    "Recording",
    "RunConfig",
    "SEGMENT_SECONDS",
    "STATES",
    "Segment",
    "StateSequence",
    "SynthConfig",
    "TRANSITION_MATRIX",
    "Tape",
    "Tensor",
    "TrainConfig",
    "WienerConfig",
    "adaptive_wiener",
    "aggregate",
    "annotation_to_frames",
    "assign_level",
    "backward",
    "bandpass_30_60",
    "build_level_corpus",
    "characterize",
    "compute_indicators",
    "compute_metrics",
    "count_matches",
    "cross_validate",
    "denoise",
    "dwt",
    "fold_partition",
    "forward",
    "frame_accuracy",
    "idwt",
    "init_params",
    "load_run_config",
    "load_wav",
    "load_weights",
    "make_channels",
    "paired_t_test",
    "parameter_count",
    "read_annotation",
    "read_manifest",
    "recording",
    "resample",
    "save_weights",
    "segment_recording",
    "slice_segments",
    "sliding_logits",
    "states_to_onsets",
    "synth_pcg",
    "train_fold",
    "transition_loss",
    "viterbi_decode",
    "wavedec",
    "wavelet_denoise",
    "waverec",
    "write_annotation",
    "write_corpus",
    "write_wav",
]
