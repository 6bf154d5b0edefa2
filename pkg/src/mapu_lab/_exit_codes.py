"""Semantic exit codes."""

SUCCESS = 0
ERROR = 1
SCHEMA_ERROR = 2
IO_ERROR = 3
NUMERICAL_ERROR = 4
