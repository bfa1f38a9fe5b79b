"""Cross-domain anomaly detection for industrial control systems.

Fuses physical-sensor and network-traffic time series into one multi-graph,
learns shared and domain-specific node representations with attention-based
graph convolutions trained by two-task multi-gradient descent, and flags
anomalous timesteps via per-domain prediction-error thresholds.
"""

__version__ = "0.1.0"
