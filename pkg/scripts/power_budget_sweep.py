"""Max-min ratio against the total transmit power (dBm): the SAR-aware design
levels off once the SAR rows bind while SAR-unaware design plus backoff falls."""
from _common import parser, sweep

if __name__ == "__main__":
    args = parser(__doc__, trials=100).parse_args()
    sweep(args, "total_power", (22.0, 25.0, 28.0, 31.0, 34.0, 37.0, 40.0), ("optimal", "hybrid", "backoff"),
          "power_budget")
