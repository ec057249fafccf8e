# File: ekfadmm/factories/learner_engine.py
"""
Online Learner Factory

Creates the learner for a configured filter kind using a declarative,
strategy-based registry. Adding a filter means adding one entry here.
"""
from typing import Dict, Type

import numpy as np
import structlog

from ekfadmm.core_models import ExperimentConfig
from ekfadmm.learners import (
    EkfAdmm,
    EkfAdmmTv,
    EkfClip,
    EkfL1,
    FrozenAdmm,
    OnlineAdmmBaseline,
    OnlineLearner,
    PlainEkf,
)

log = structlog.get_logger(__name__)


class LearnerInitializationError(Exception):
    """Raised when a learner cannot be built from the configuration."""
    pass


LEARNER_STRATEGIES: Dict[str, Type[OnlineLearner]] = {
    cls.name: cls for cls in (EkfAdmm, EkfAdmmTv, FrozenAdmm, OnlineAdmmBaseline, EkfClip, EkfL1, PlainEkf)
}


def create_learner(config: ExperimentConfig, x0: np.ndarray, n_y: int) -> OnlineLearner:
    """
    Builds the learner named by config.filter.

    Raises:
        ValueError: if the filter kind is not registered.
        LearnerInitializationError: if the learner rejects the configuration.
    """
    strategy = LEARNER_STRATEGIES.get(config.filter)
    if strategy is None:
        log.error("Unsupported filter in config", filter=config.filter)
        raise ValueError(f"Unsupported filter: {config.filter}")
    try:
        learner = strategy(config.model, config.reg, config.hyper, x0, config.N, n_y)
    except ValueError as e:
        raise LearnerInitializationError(f"filter: cannot build '{config.filter}': {e}") from e
    log.debug("Created learner", filter=config.filter, n_x=x0.shape[0])
    return learner
