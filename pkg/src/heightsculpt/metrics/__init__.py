"""Point-cloud metrics and experiment harnesses."""
