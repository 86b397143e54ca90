"""Max-min ratio and feasibility rate against the SAR limit for every scheme."""
import numpy as np

from _common import parser, sweep

if __name__ == "__main__":
    args = parser(__doc__, trials=100).parse_args()
    sweep(args, "sar_limit", np.round(np.arange(0.4, 2.01, 0.2), 2),
          ("optimal", "hybrid", "zf", "rzf", "backoff"), "sar_limit")
