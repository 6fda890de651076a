"""Differentiable core: autodiff helpers and ADAM."""
