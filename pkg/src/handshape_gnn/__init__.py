"""Dual graph-network pipeline for handshape recognition from 21-keypoint
hand-landmark sequences: graph construction, contrastive GCN training,
representative-frame selection, classification heads, biomechanical metrics
and clustering-stability analysis."""

__version__ = "0.1.0"
