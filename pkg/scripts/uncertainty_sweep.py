"""Robust against non-robust design as the channel and SAR error radii grow.
Beams are scored on the estimate plus one in-ball error per trial."""
from _common import parser, sweep

if __name__ == "__main__":
    args = parser(__doc__, trials=50).parse_args()
    sweep(args, "uncertainty_radius", (0.0, 2.5e-8, 5e-8, 7.5e-8, 1e-7), ("robust", "nonrobust"), "uncertainty")
