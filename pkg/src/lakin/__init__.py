"""Leg-agility kinematics: inertial sensor fusion, feature extraction, and
automatic UPDRS scoring with leave-one-out evaluation."""

from .data import (DEFAULT_SAMPLE_RATE, STANDARD_REPS, ImuSample, ManifestEntry,
                   SegmentationLabels, TrialMeta, TrialRecording, as_updrs,
                   load_labels, load_manifest, load_trial, write_labels,
                   write_manifest, write_trial)
from .errors import (FeatureError, LakinError, ParseError, SegmentationError,
                     ValidationError)
from .features import (FEATURE_NAMES, LRFeatures, RepetitionFeatures,
                       TrialTimeFeatures, all_repetition_features,
                       lr_differences, pause_and_regularity,
                       repetition_features, trial_time_features)
from .ml import (ERROR_GRID, ClassifierConfig, EvalReport, FeatureMatrix,
                 PcaModel, SearchResult, Standardizer, auc_of_cdf,
                 centroid_trajectory, error_cdf, exhaustive_search,
                 knn_classify, loocv, ncc_classify, pca_fit, pca_project,
                 search_config_count, standardize_fit_apply, svm_classify,
                 svm_train)
from .orientation import (MountingConfig, angular_velocity_series,
                          best_fit_rotation, estimate_time_shift,
                          fuse_orientation, inclination_series, resolve_sign)
from .segmentation import LabelDiagnostics, auto_segment, validate_labels
from .spectrum import (AmplitudeSpectrum, amplitude_spectrum, extract_segment,
                       spectrum_power)
from .synth import SynthParams, constant_rotation_trial, generate_trial, make_dataset

__version__ = "0.1.0"
