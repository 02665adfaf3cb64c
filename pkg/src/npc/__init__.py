"""Neural predictive control for irregularly sampled time series.

A small reverse-mode autodiff core drives fixed-step differentiable ODE
solvers, a GRU planner that emits multi-step action sequences, and two
continuous-time models (predictive ODE-RNN and predictive neural CDE).
Training follows the receding-horizon rule: optimize over M future
intervals, commit one.  npc.lintheory verifies the linear-quadratic
stability story the design rests on.
"""

__version__ = "0.1.0"

from . import checksuites as _checksuites  # noqa: F401  populates the grad-check registry
