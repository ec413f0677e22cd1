from .validation import as_rng, check_adjacency, check_channel_tensor, check_genome

__all__ = ["as_rng", "check_adjacency", "check_channel_tensor", "check_genome"]
