"""Equilibrium propagation and truncated backprop-through-time for
convergent RNNs with static input, plus the gradient-matching (GDU) checker
and an MNIST training harness.

Public surface:

    ops          dense-tensor math and the conv/pool operator set
    activations  tanh / rescaled sigmoid / hard sigmoid with derivatives
    models       the four architectures (toy, layered energy-based,
                 layered prototypical, convolutional prototypical)
    engine       relax_free / run_ep_phase / run_bptt
    gdu          paired update-vs-gradient records, RMSE, sign agreement
    training     SGD with EP or BPTT updates, checkpoints
    data         IDX-format MNIST loading and synthetic toy data
    cli          the `eqprop` command-line front end
"""

__version__ = "0.1.0"

from . import ops  # noqa: F401  (establishes the kernel backend at import)

__all__ = ["ops", "__version__"]
