"""Task-routed speculative decoding at desk scale."""
