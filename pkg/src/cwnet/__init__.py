"""Neural networks on CW-complexes: cell complexes, Hodge Laplacians, CW-CNN and CW-AT."""

from .complex import CWComplex, ComplexError, build_complex, from_graph, total_cells, validate
from .hodge import WeightStack, hodge_laplacian, spectrum
from .layers import ComplexBatch, CwAtConfig, CwCnnConfig, cwat_forward, cwcnn_forward, init_cwat, init_cwcnn
from .synth import Dataset, GeneratorConfig, generate_dataset, load_dataset, save_dataset, split
from .train import OptimizerConfig, count_parameters, rmse, train_model

__version__ = "0.1.0"

__all__ = [
    "CWComplex",
    "ComplexBatch",
    "ComplexError",
    "CwAtConfig",
    "CwCnnConfig",
    "Dataset",
    "GeneratorConfig",
    "OptimizerConfig",
    "WeightStack",
    "build_complex",
    "count_parameters",
    "cwat_forward",
    "cwcnn_forward",
    "from_graph",
    "generate_dataset",
    "hodge_laplacian",
    "init_cwat",
    "init_cwcnn",
    "load_dataset",
    "rmse",
    "save_dataset",
    "spectrum",
    "split",
    "total_cells",
    "train_model",
    "validate",
]
