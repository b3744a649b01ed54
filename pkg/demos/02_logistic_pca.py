"""
Logistic PCA of a binary ensemble
=================================

The 100 x 900 binary ensemble is reduced to ten logistic principal components.
Each iteration of the fit minimizes a quadratic bound on the Bernoulli
deviance, so the deviance never goes up.
"""

import numpy as np

from binarycal import lpca
from binarycal import synthetic as syn

ens = syn.synth_ensemble(syn.SyntheticConfig())
model = lpca.fit(ens, j_y=10, max_iter=500)

trace = np.asarray(model.deviance_trace)
print("deviance, first and last:", round(trace[0], 2), round(trace[-1], 2))
print("largest step change along the trace:", np.diff(trace).max())

# the score matrix has orthonormal columns; the scale lives in the basis
W = model.scores
print("max |W'W - I|:", np.abs(W.T @ W - np.eye(10)).max())

# ensemble members are separable, so the fit keeps sharpening the logits;
# what matters is the dichotomized reconstruction
print(f"reconstruction misclassification: {lpca.misclassification(ens, model):.2e}")

# the quadratic bound touches -log g at the expansion point
x = np.linspace(-6, 6, 5)
print("bound - target at x = y:", lpca.majorizer(x, x) + np.log(lpca.sigmoid(x)))
