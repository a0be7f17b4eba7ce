"""Niching importance sampling for rare-event probabilities."""

from .harness import ExperimentConfig, RunRecord, SummaryTable, load_config, mc_reference, run_experiment
from .models import MODEL_FACTORIES, REFERENCE_PROBABILITIES, PerformanceModel, get_model, lift_dimension
from .ninits import NinitsConfig, NinitsResult, NoFailureFound, ninits
from .nis import NisConfig, NisResult, nis_run
from .vmfnm import VmfnmParams, em_fit, sample_mixture

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "SummaryTable",
    "load_config",
    "mc_reference",
    "run_experiment",
    "MODEL_FACTORIES",
    "REFERENCE_PROBABILITIES",
    "PerformanceModel",
    "get_model",
    "lift_dimension",
    "NinitsConfig",
    "NinitsResult",
    "NoFailureFound",
    "ninits",
    "NisConfig",
    "NisResult",
    "nis_run",
    "VmfnmParams",
    "em_fit",
    "sample_mixture",
]

__version__ = "0.1.0"
