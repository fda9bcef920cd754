"""Audio anti-spoofing: conformer encoder with hierarchical pooling and
multi-depth aggregation, trained with a one-class margin objective."""

__version__ = "0.1.0"
