"""Referring-expression segmentation toolkit: triplet synthesis from semantic
label rasters, evaluation metrics, language-guided cross-scale feature fusion
on a minimal autodiff core, and a human curation loop."""

__version__ = "0.1.0"
