"""Offline export tooling for the quickqual backbone and its golden fixtures."""
