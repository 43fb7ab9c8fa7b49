"""Functional slices of the coarse surrogate toolkit.

This package contains self-contained modules organized by functionality:

- microstructure: Gaussian-field sampling and thresholding into binary media
- fem: bilinear finite elements for the stationary heat equation, coarse model, W
- feature_functions: effective-medium and morphology features, design matrices
- surrogate: encoder/decoder densities and predictive sampling
- training: Monte-Carlo EM with a Laplace sparsity prior
- evaluation: dataset generation, error/coverage metrics and sweeps
"""
