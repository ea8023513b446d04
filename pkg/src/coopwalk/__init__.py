"""Hierarchical control stack for leashed cooperative legged locomotion."""
