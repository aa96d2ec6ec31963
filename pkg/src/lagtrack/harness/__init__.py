"""Metrics, experiment orchestration, persistence, and the CLI.

Only the leaf submodules (metrics, telemetry) are imported eagerly; import
``lagtrack.harness.experiment`` / ``.cli`` explicitly for orchestration.
"""

from . import metrics, telemetry

__all__ = ["metrics", "telemetry"]
