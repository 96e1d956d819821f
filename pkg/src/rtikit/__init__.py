"""RSS-based device-free localization toolkit.

Multi-scale fade-level-aware radio tomographic imaging plus the classic
single/multi-channel baselines, with calibration, tracking, simulation,
file I/O, and an end-to-end benchmarking harness.
"""

__version__ = "0.1.0"
