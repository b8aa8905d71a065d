"""Neural implicit shape storage: overfit a small MLP to a mesh's signed
distance field, store its weights in a fixed-size ``.ni`` file and render it
by sphere marching."""

from .distance_field import MeshSdf, SdfGrid, signed_distance, winding_number_exact, winding_number_fast
from .errors import InputError, NeuralImplicitError
from .evaluation import EvalReport, compare_representations, error_driven_escalation, surface_error
from .fileformat import NeuralImplicit, file_size, load, save
from .mesh import Mesh, NormalizationTransform, load_mesh, normalize_to_unit_sphere, sample_surface
from .network import BASE_ARCHITECTURE, MlpArchitecture, MlpModel, TrainConfig, forward, init_model, train
from .sampling import SamplingConfig, TrainingSet, build_training_set

__version__ = "0.1.0"

__all__ = [
    "BASE_ARCHITECTURE", "EvalReport", "InputError", "Mesh", "MeshSdf", "MlpArchitecture", "MlpModel",
    "NeuralImplicit", "NeuralImplicitError", "NormalizationTransform", "SamplingConfig", "SdfGrid",
    "TrainConfig", "TrainingSet", "build_training_set", "compare_representations", "error_driven_escalation",
    "file_size", "forward", "init_model", "load", "load_mesh", "normalize_to_unit_sphere", "sample_surface",
    "save", "signed_distance", "surface_error", "train", "winding_number_exact", "winding_number_fast",
]
