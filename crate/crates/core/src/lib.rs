//! Proportional kNN intent detection for 8-channel myoelectric armbands.
//!
//! The pipeline splits every rectified frame into a normalized direction and a
//! scalar magnitude. The direction is classified by a distance-weighted kNN
//! over non-rest training frames; the magnitude decides rest (via a gained
//! threshold on the mean rest magnitude) and is mapped linearly onto a
//! proportional command between an offset `m0 = t / d` and the class mean.
//!
//! Alongside the predictor the crate carries the ridge-regression-on-random-
//! Fourier-features baseline, a seeded synthetic EMG generator, a trial-based
//! success-rate harness and one-way ANOVA, so both algorithms can be compared
//! end to end on replayable data.
//!
//! ```text
//! Frame ─► magnitude ─► rest? ──yes──► (rest, 0)
//!            │            │no
//!            ▼            ▼
//!        normalize ─► kNN vote ─► label ─► proportional map ─► Prediction
//! ```

pub mod error;
pub mod harness;
pub mod io;
pub mod knn;
pub mod proportional;
pub mod rng;
pub mod rrrff;
pub mod selection;
pub mod signal;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use harness::{
    compare, compare_predictors, dwell_frames, evaluate, presentation_order, run_trial,
    success_rate, Comparison, LevelStats, Predictor, ProtocolParams, SrReport, StudyOutcome,
    Trial, TrialOutcome, TrialRecord,
};
pub use io::{ModelBody, ModelFile, RECORDING_HEADER};
pub use knn::{
    classify, distance, neighbors, vote, weight, DistanceMetric, KnnConfig, Mahalanobis,
    MetricKind, Neighbor, TrainingSet, WeightScheme,
};
pub use proportional::{
    fit_class_means, fit_rest_threshold, is_rest, predict, proportional_value, train,
    KSelection, KnnModel, KnnParams, Prediction, ProportionalMap, RestThreshold,
};
pub use rng::SeededRng;
pub use rrrff::{
    fit_rrrff, predict_rrrff, rff_features, sample_rff, Bandwidth, RffMap, RrRffModel,
    RrRffParams,
};
pub use selection::{
    cv_accuracy, cv_grid, default_k_grid, make_blocks, select_k, CvReport, CvRow,
};
pub use signal::{
    magnitude, normalize, rectify, smooth, Frame, GestureLabel, LabeledDataset,
    NormalizedFrame, CHANNELS,
};
pub use stats::{anova_oneway, f_cdf, AnovaResult};
pub use synth::{
    generate_frame, generate_session, generate_trials, GesturePrototype, ScriptAction,
    SessionScript, SynthConfig, TrialPlan, STUDY_GESTURES, STUDY_LEVELS,
};
