"""Simulation and verification laboratory for noise-reinforced Bessel processes.

The model: a Bessel process of dimension d in (0, 2) whose increments are
reinforced by a parameter p < 1/2, realized as the space-time transform
R-hat_t = t^p R_{t^(1-2p)} / sqrt(1-2p).  The package provides

* exact closed forms for every explicit formula of the model (:mod:`specfun`),
* bias-free path sampling of the base process and the reinforcement
  transform (:mod:`pathsim`),
* local-time estimation along three independent routes plus the
  two-parameter occupation densities (:mod:`localtime`),
* the inverse local time as a self-similar Markov process: stable
  subordinator, Lamperti subordinator, exponential functional and the
  size-bias identity (:mod:`ssmp`),
* Monte Carlo experiment orchestration with pass/fail statistics
  (:mod:`harness`) and a CLI (``rbessel``).
"""

from .harness import ExperimentConfig
from .localtime import LocalTimeSurface, MonotonePath
from .pathsim import SampledPath, SeedSpec, TimeGrid, build_grid
from .reporting import QuantityRecord, StatReport
from .specfun import Params, TestFunction
from .ssmp import ExponentialFunctionalResult, InverseLocalTimePath, JumpPath

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "ExponentialFunctionalResult",
    "InverseLocalTimePath",
    "JumpPath",
    "LocalTimeSurface",
    "MonotonePath",
    "Params",
    "QuantityRecord",
    "SampledPath",
    "SeedSpec",
    "StatReport",
    "TestFunction",
    "TimeGrid",
    "build_grid",
    "__version__",
]
