"""Desk-scale pipeline: knowledge-conditioned diffusion data generation,
gated expert-ensemble diagnosis, resampling statistics, and a two-stage
reader-study service, all grounded in a procedural phantom-lesion world."""

__version__ = "0.1.0"
