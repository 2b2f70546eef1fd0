from .config import MICRO_CONFIG, TINY_CONFIG, ConfigError, ModelConfig
from .network import (NetworkOutput, count_parameters,
                      empirical_receptive_field, ov_forward, probe_weights,
                      receptive_field)
from .ops import (CorruptWeightsError, ShapeError, batchnorm_infer, conv2d,
                  leaky_relu, sigmoid, subspectral_bn)
from .weights import (CorruptFileError, ModelWeights, ParamSpec,
                      WeightSchemaError, load_weights, save_weights, schema)

__all__ = [
    "MICRO_CONFIG", "TINY_CONFIG", "ConfigError", "ModelConfig",
    "NetworkOutput", "count_parameters", "empirical_receptive_field",
    "ov_forward", "probe_weights", "receptive_field",
    "CorruptWeightsError", "ShapeError", "batchnorm_infer", "conv2d",
    "leaky_relu", "sigmoid", "subspectral_bn",
    "CorruptFileError", "ModelWeights", "ParamSpec", "WeightSchemaError",
    "load_weights", "save_weights", "schema",
]
