# Harness package: datasets, training loop, checkpoints and exports
