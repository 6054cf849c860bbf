"""Shuffled extragradient methods for finite-sum variational inequalities."""
