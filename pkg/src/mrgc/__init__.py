"""Graph-level clustering with multi-relation views, aware pooling and kernel-guided losses."""

__version__ = "0.1.0"
