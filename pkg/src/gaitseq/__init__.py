"""Binary gait classification for walking cows from 2D keypoint trajectories.

The package covers the full experiment pipeline: dataset ingestion
(:mod:`gaitseq.data`), sequence augmentation (:mod:`gaitseq.augment`),
a from-scratch bidirectional LSTM classifier with analytic
backpropagation through time (:mod:`gaitseq.model`), the optimizer and
schedule (:mod:`gaitseq.optim`), grouped stratified cross-validation
training (:mod:`gaitseq.train`), metrics and significance testing
(:mod:`gaitseq.evaluate`), and a synthetic trajectory generator for
desk-scale experiments (:mod:`gaitseq.synthetic`).
"""

__version__ = "0.1.0"
