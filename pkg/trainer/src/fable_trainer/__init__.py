"""fable-trainer: triplet-margin fine-tuning and embedding export."""

__version__ = "0.1.0"
