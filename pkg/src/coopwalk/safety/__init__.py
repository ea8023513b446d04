"""ECBF safety layer: barrier rows, dense QP solver, 1 kHz safety filter."""
