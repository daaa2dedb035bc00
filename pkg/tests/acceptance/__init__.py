"""Long-running acceptance tests for motion-evolve."""
