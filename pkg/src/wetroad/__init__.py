"""Acoustic road-wetness classification toolkit."""

from .errors import NumericError, ValidationError
from .ingest import (
    DRY,
    WET,
    AudioClip,
    LabeledSequence,
    TripManifest,
    label_frames,
    load_wav,
    parse_manifest,
    speed_at,
    write_manifest,
    write_wav,
)
from .features import (
    FeatureMatrix,
    FrameSpec,
    MelFilterbank,
    asf_features,
    build_mel_filterbank,
    frame_signal,
    power_spectrum,
    read_features,
    third_octave_features,
    write_features,
)
from .selection import (
    Discretizer,
    RankedFeatures,
    SubsetResult,
    best_first_cfs,
    cfs_merit,
    entropy,
    info_gain,
    mdl_discretize,
    rank_by_ig,
    select_top,
    symmetric_uncertainty,
)
from .rnn import (
    LstmLayerParams,
    NetworkSpec,
    RnnModel,
    TrainHistory,
    bptt_gradients,
    blstm_forward,
    init_model,
    load_model,
    lstm_forward,
    model_forward,
    predict_frames,
    save_model,
    sse_loss,
    train,
)
from .svm import KernelSpec, SvmModel, decision_function, load_svm, save_svm, smo_train, svm_predict
from .evaluate import (
    ConfusionMatrix,
    EvalReport,
    Timeline,
    UndefinedRecallError,
    cross_route_eval,
    false_prediction_timeline,
    pca_project,
    speed_stratified_uar,
    uar,
)
from .synth import SurfaceProfile, SynthSpec, generate_corpus

__version__ = "0.1.0"
