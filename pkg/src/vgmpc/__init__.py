"""Value-guided MPC for unicycle trajectory tracking.

A critic network is trained online from tracking rewards and consumed by an
SQP-based MPC actor either as terminal cost or as Lie-derivative stage plus
terminal cost, alongside hand-tuned MPC baselines.
"""

__version__ = "0.1.0"
