"""Synthetic benchmark data with ground-truth equations."""

from .bundle import DATASETS, Bundle, DatasetConfig, dataset_config, gen_noisy_benchmark, generate_raw
from .chafee import gen_chafee_infante
from .kle import ConductivityField, gen_kle_field
from .seepage import gen_seepage
from .spectral import gen_burgers2d, gen_kdv
from .truth import GroundTruth

__all__ = [
    "DATASETS", "Bundle", "ConductivityField", "DatasetConfig", "GroundTruth", "dataset_config",
    "gen_burgers2d", "gen_chafee_infante", "gen_kdv", "gen_kle_field", "gen_noisy_benchmark", "gen_seepage",
    "generate_raw",
]
