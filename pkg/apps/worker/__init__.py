# Worker package: background batch assembly
