"""Sequential Monte Carlo samplers for Bayesian evidence estimation and model comparison."""

from .estimators import QuadratureRule, bayes_factor, model_posteriors
from .kernels import BlockSpec, KernelConfig
from .particles import DegenerateWeightsError, ParticleSystem, TransformDomainError
from .samplers import (MicroStepCapError, RunConfig, RunResult, run_ais, run_replicates,
                       run_smc1, run_smc2, run_smc3)
from .tempering import BisectionConfig, GeometricPath, ModelMixturePath, Schedule

__all__ = [
    "BisectionConfig", "BlockSpec", "DegenerateWeightsError", "GeometricPath", "KernelConfig",
    "MicroStepCapError", "ModelMixturePath", "ParticleSystem", "QuadratureRule", "RunConfig",
    "RunResult", "Schedule", "TransformDomainError", "bayes_factor", "model_posteriors",
    "run_ais", "run_replicates", "run_smc1", "run_smc2", "run_smc3",
]
