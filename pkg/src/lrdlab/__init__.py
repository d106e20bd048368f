"""Long-range dependency laboratory for SSM, attention and interaction recurrences."""

__version__ = "0.1.0"
