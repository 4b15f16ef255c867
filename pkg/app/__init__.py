# GBM calibration toolkit
# Glioblastoma progression model with Bayesian calibration workflows
