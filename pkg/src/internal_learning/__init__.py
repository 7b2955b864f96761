"""Single-image internal learning toolkit.

Networks are described by four-tuples (depth, skips, cascades, residuals)
and fitted to one image at a time against a composite contextual,
adversarial, reconstruction and total-variation objective.
"""
__version__ = "0.1.0"
