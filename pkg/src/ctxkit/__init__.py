"""ctxkit: spectral analysis of contexts (joint input/view distributions).

The package models a context as a finite joint distribution over inputs and
views, exposes its dual kernels and singular spectrum, evaluates encoders
against the spectrum, mixes contexts, runs semi-supervised kernel regression
driven by spectrally transformed kernels, estimates context complexity, and
trains reweighted/distributionally robust linear models. A config-driven CLI
(`ctxkit`) wraps the experiment harness.
"""

__version__ = "0.1.0"
