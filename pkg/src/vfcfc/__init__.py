"""Vector-field guided constraint-following control for uncertain mechanical systems."""
