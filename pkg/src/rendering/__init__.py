# Viewing geometry and rasterization
