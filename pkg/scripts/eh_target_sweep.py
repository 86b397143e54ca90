"""Max-min ratio against the per-user EH target (dBm)."""
from _common import parser, sweep

if __name__ == "__main__":
    args = parser(__doc__, trials=100).parse_args()
    sweep(args, "eh_target", (-25.0, -22.5, -20.0, -17.5, -15.0, -12.5, -10.0),
          ("optimal", "hybrid", "zf", "rzf", "backoff"), "eh_target")
