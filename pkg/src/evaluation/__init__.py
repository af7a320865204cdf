# Evaluation metrics and benchmarks
