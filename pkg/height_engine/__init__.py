# Height engine: geometry, interlacing, covariance models and likelihoods
