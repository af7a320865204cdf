# Training objectives and loop
