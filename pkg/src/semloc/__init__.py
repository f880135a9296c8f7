"""Semantic Monte-Carlo localisation on human-readable floorplans."""
