"""Long-wave water waves over a random bottom.

Library layout (one module per subsystem):

- ``spectral``     periodic grids, Fourier multipliers, bottom operators
- ``bottom``       stationary mixing bottom processes and their statistics
- ``coeffs``       effective constants and realization-dependent fields
- ``scalesep``     Monte Carlo checks of the scale-separation estimates
- ``charflow``     regularized random characteristic flow
- ``waves``        KdV-b solver, scattered wave, Boussinesq diagnostic
- ``consistency``  neglected-term orders and the (a_kdv, b) fixed point
- ``ensemble``     seeded Monte Carlo sweeps, expectation decay
- ``cli``          command-line front end
"""

__version__ = "0.1.0"
