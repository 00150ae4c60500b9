"""Semi-supervised seismic-to-acoustic-impedance inversion.

A small float64 autodiff engine drives two learned models: an
inversion network (seismic trace to impedance trace) and a synthesis
network (impedance back to seismic). Training combines an impedance
misfit on a few labeled traces with a seismic reconstruction misfit on
every trace.
"""

from .autodiff import Tape, Tensor, backward, set_debug_checks
from .data import (
    NormStats,
    Split,
    SurveyPair,
    TraceSet,
    load_survey,
    make_layered_model,
    normalize,
    pick_labeled_traces,
    reflectivity,
    ricker,
    save_survey,
    synthesize_survey,
)
from .forward_model import ForwardModelConfig, extract_wavelet, synthesize
from .gradcheck import grad_check, run_default_suite
from .inverse_model import InverseModelConfig, invert, invert_survey
from .metrics import MetricsReport, evaluate, export_scatter, pcc, r2
from .params import ParamStore, adam_step, load_checkpoint, save_checkpoint
from .training import (
    LossBreakdown,
    TrainConfig,
    TrainResult,
    init_models,
    semi_supervised_loss,
    train_loop,
    train_step,
)

__version__ = "0.1.0"
