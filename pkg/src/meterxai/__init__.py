"""Smart-meter household classification with explainable feedback."""

__version__ = "0.1.0"
