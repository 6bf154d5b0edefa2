"""mapu-lab - source-free time-series adaptation with temporal imputation and evidential uncertainty."""

__version__ = "0.1.0"
