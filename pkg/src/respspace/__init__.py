"""Noncontact multi-person respiration measurement with an array radar.

Pipeline stages: synthetic scene simulation -> beamformed radar imaging ->
per-cell respiratory interval estimation -> respiratory-space clustering
(X-means + merging) -> people count / location / interval evaluation.
"""

__version__ = "0.1.0"
