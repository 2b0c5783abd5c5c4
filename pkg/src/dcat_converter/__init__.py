"""DCAT-AP converter: harvest, align, convert, and serve research metadata."""

__version__ = "0.1.0"
