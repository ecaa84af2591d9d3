"""Rubric-based evaluation workflow with multi-LLM feedback generation
and teacher-in-the-loop curation."""

__version__ = "0.1.0"
