"""Audio event detectors learned from weak (recording-level) labels via multiple-instance learning."""

from .bags import Bag, Manifest, build_bags, instance_truth, load_manifest, segment_spans
from .bpmil import BPMIL, MilNet, TrainSchedule, bag_divergence, init_net, train_bpmil
from .dsp import AudioClip, MfccConfig, MfccMatrix, frame_signal, mfcc, read_wav
from .evaluate import EvalReport, kfold_evaluate, localization_auc, localize
from .gmm import Gmm, UniversalBackgroundModel, f_features, map_adapt_means, posterior, train_ubm
from .metrics import RocCurve, roc_auc
from .misvm import MISVM, mi_svm_train, select_c
from .pipeline import PipelineConfig
from .svm import LinearModel, LinearSVM, decision, train_linear_svm
from .synth import SynthConfig, gen_audio_corpus, gen_feature_bags

__version__ = "0.1.0"
