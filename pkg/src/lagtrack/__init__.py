"""lagtrack: learn a robot's energy function from interaction data and
synthesize a stability-certified trajectory-tracking controller.

Subpackages/modules:
  diffcore      dense networks, exact derivatives, Adam
  delan         structured energy model and its training loss
  plants        analytic 2-DOF arm and quadrotor attitude simulators
  trajectories  reference trajectory generators
  controller    sliding-variable tracking controller, compensator, PID
  trainer       episode collection, replay buffer, outer training loop
  tuner         differential-evolution PID tuning
  harness       metrics, experiment orchestration, CLI
"""

__version__ = "0.1.0"
