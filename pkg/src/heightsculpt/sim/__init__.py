"""Ground-truth material simulator and dataset generation."""
