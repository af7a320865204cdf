# Parametric body model
