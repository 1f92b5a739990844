"""Multi-wavelength quantitative phase imaging pipeline for red blood cell
stage classification.

Submodules:

- ``coherence``: axial coherence length and lateral resolution formulas
- ``forward_model``: cell phantoms and off-axis interferogram synthesis
- ``phase_retrieval``: FFT fringe analysis and Goldstein unwrapping
- ``patch_extraction``: entropy segmentation and single-cell patch cropping
- ``dataset``: balanced, augmented, subject-disjoint manifests and batches
- ``cnn``: from-scratch network engine, the fixed classifier, SGD training
- ``metrics``: confusion rates, MCC, ROC/AUC, inference timing
- ``pipeline`` / ``config`` / ``cli``: end-to-end orchestration
"""

__version__ = "0.1.0"
