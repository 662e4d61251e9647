import json

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "fast", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("fast")


# reference hyper-dict fixture: a 9-parameter image-classifier tuning setup
# mixing power-of-two ints, floats, and a 13-level optimizer factor
REFERENCE_HYPER_DICT = {
    "Net_CIFAR10": {
        "l1": {"type": "int", "default": 5,
               "transform": "transform_power_2_int", "lower": 2, "upper": 9},
        "l2": {"type": "int", "default": 5,
               "transform": "transform_power_2_int", "lower": 2, "upper": 9},
        "lr_mult": {"type": "float", "default": 1.0,
                    "transform": "None", "lower": 0.1, "upper": 10},
        "batch_size": {"type": "int", "default": 4,
                       "transform": "transform_power_2_int", "lower": 1, "upper": 4},
        "epochs": {"type": "int", "default": 3,
                   "transform": "transform_power_2_int", "lower": 1, "upper": 4},
        "k_folds": {"type": "int", "default": 2,
                    "transform": "None", "lower": 2, "upper": 3},
        "patience": {"type": "int", "default": 5,
                     "transform": "None", "lower": 2, "upper": 10},
        "optimizer": {
            "levels": ["Adadelta", "Adagrad", "Adam", "AdamW", "SparseAdam",
                       "Adamax", "ASGD", "LBFGS", "NAdam", "RAdam", "RMSprop",
                       "Rprop", "SGD"],
            "type": "factor", "default": "SGD", "transform": "None",
            "class_name": "torch.optim", "core_model_parameter_type": "str",
            "lower": 0, "upper": 12},
        "sgd_momentum": {"type": "float", "default": 0.0,
                         "transform": "None", "lower": 0.0, "upper": 1.0},
    }
}

TEN_OPTIMIZERS = ["Adadelta", "Adagrad", "Adam", "AdamW", "Adamax",
                  "ASGD", "NAdam", "RAdam", "RMSprop", "SGD"]


@pytest.fixture
def reference_hyper_dict_text() -> str:
    return json.dumps(REFERENCE_HYPER_DICT)


@pytest.fixture
def reference_space(reference_hyper_dict_text):
    from spotkit.searchspace import parse_hyper_dict

    return parse_hyper_dict(reference_hyper_dict_text, "Net_CIFAR10")


@pytest.fixture
def screening_space(reference_space):
    """The reference space with the screening-phase modifications applied."""
    space = reference_space
    space = space.modify_bounds("lr_mult", [1.0, 1.0])
    space = space.modify_bounds("batch_size", [1, 5])
    space = space.modify_bounds("epochs", [3, 4])
    space = space.modify_bounds("k_folds", [0, 0])
    space = space.modify_bounds("patience", [3, 3])
    space = space.modify_bounds("sgd_momentum", [0.9, 0.9])
    space = space.modify_levels("optimizer", TEN_OPTIMIZERS)
    return space
