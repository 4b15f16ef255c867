# Typed data structures for the GBM calibration toolkit
