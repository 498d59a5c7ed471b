"""Configuration, experiment orchestration, acceptance criteria and the command line."""
