"""Forward and inverse source problems for the 3-D wave equation."""
