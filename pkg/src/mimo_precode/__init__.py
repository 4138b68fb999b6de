"""Low-complexity MU-MIMO downlink precoding: BD/RBD baselines and lattice-reduction-aided S-GMI."""
