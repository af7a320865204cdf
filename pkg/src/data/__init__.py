# Synthetic data and dataset files
