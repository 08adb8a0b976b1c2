"""Multi-cycle JPEG noise simulation, analytic noise models and forensic estimators."""

__version__ = "0.1.0"
