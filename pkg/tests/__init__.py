# Test suite for the GBM calibration toolkit
