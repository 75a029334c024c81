"""JSON experiment configuration.

A configuration file holds one object::

    {
      "dataset": {"modes": 5, "square_half_width": 10.0, "seed": 0,
                  "train_size": 8000, "test_size": 4000},
      "learner": {"kind": "gaussian", "components": 1, "restarts": 1,
                  "resample": false},
      "discriminator": "oracle",
      "algorithms": [
        {"name": "Boosted", "variant": "adagan", "T": 10,
         "schedule": {"kind": "one_over_t"}},
        {"name": "Vanilla", "variant": "vanilla"}
      ],
      "repeats": 15, "seed": 0, "metrics": ["coverage", "likelihood"],
      "coverage_density": "analytic", "model_samples": 5000, "workers": 1,
      "format": "csv", "kde_max_cv_points": 2000
    }

Only ``algorithms`` is required. Unknown keys, wrong types and out-of-range
values raise ConfigError.
"""

import json

from mixboost.bench import AlgorithmSpec, ExperimentConfig, ToyDatasetSpec
from mixboost.boosting import BetaSchedule, LearnerConfig
from mixboost.exceptions import ConfigError, InterfaceError


_INT = (int,)
_REAL = (int, float)

_DATASET_KEYS = {
    "modes": _INT,
    "square_half_width": _REAL,
    "seed": _INT,
    "train_size": _INT,
    "test_size": _INT,
}
_LEARNER_KEYS = {
    "kind": (str,),
    "components": _INT,
    "restarts": _INT,
    "resample": (bool,),
}
_SCHEDULE_KEYS = {
    "kind": (str,),
    "beta": _REAL,
    "ratio": _REAL,
    "c1": _REAL,
    "c2": _REAL,
    "threshold": _REAL,
}
_ALGORITHM_KEYS = {
    "name": (str,),
    "variant": (str,),
    "T": _INT,
    "schedule": (dict,),
    "ratio": _REAL,
}
_TOP_KEYS = {
    "dataset": (dict,),
    "learner": (dict,),
    "discriminator": (str,),
    "algorithms": (list,),
    "repeats": _INT,
    "seed": _INT,
    "metrics": (list,),
    "coverage_density": (str,),
    "model_samples": _INT,
    "workers": _INT,
    "format": (str,),
    "kde_max_cv_points": _INT + (type(None),),
}


def _checked(doc, keys, where, required=()):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object.")
    unknown = set(doc) - set(keys)
    if unknown:
        raise ConfigError(f"Unknown keys in {where}: {sorted(unknown)}.")
    for key in required:
        if key not in doc:
            raise ConfigError(f"{where} needs a {key!r} key.")
    for key, value in doc.items():
        types = keys[key]
        # bool is an int subclass, but isn't accepted as a number
        if isinstance(value, bool) and bool not in types:
            raise ConfigError(f"{where}.{key} has the wrong type.")
        if not isinstance(value, types):
            raise ConfigError(f"{where}.{key} has the wrong type.")
    return dict(doc)


def _algorithm(doc, index):
    where = f"algorithms[{index}]"
    doc = _checked(doc, _ALGORITHM_KEYS, where, required=("name", "variant"))
    if "schedule" in doc:
        schedule = _checked(
            doc["schedule"], _SCHEDULE_KEYS, f"{where}.schedule", required=("kind",)
        )
        doc["schedule"] = BetaSchedule(**schedule)
    return AlgorithmSpec(**doc)


def parse_config(doc):
    """Builds an ExperimentConfig from a decoded JSON document."""
    doc = _checked(doc, _TOP_KEYS, "config", required=("algorithms",))
    try:
        doc["dataset"] = ToyDatasetSpec(
            **_checked(doc.get("dataset", {}), _DATASET_KEYS, "dataset")
        )
        if "learner" in doc:
            doc["learner"] = LearnerConfig(
                **_checked(doc["learner"], _LEARNER_KEYS, "learner")
            )
        doc["algorithms"] = tuple(
            _algorithm(a, i) for i, a in enumerate(doc["algorithms"])
        )
        if "metrics" in doc:
            doc["metrics"] = tuple(doc["metrics"])
        return ExperimentConfig(**doc)
    except ConfigError:
        raise
    except (InterfaceError, ValueError, TypeError) as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


def load_config(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"Can't read the configuration file {path}: {e}") from e
    except ValueError as e:
        raise ConfigError(f"{path} isn't valid JSON: {e}") from e
    return parse_config(doc)
