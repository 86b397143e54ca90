"""Fast single-user solver against the SDP: objective agreement and run time."""
from _common import config_from, parser
from sarswipt.sim import bench_csv, bench_timing_csv, run_single_user_bench

if __name__ == "__main__":
    args = parser(__doc__, trials=50).parse_args()
    config = config_from(args)
    rows = run_single_user_bench(config, trials=args.trials, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "single_user.csv").write_text(bench_csv(rows))
    (args.out / "single_user_timing.csv").write_text(bench_timing_csv(rows))
    fast = sum(r.time_fast for r in rows)
    sdp = sum(r.time_sdp for r in rows)
    print(f"{len(rows)} feasible instances of {args.trials}")
    print(f"max relative difference {max(r.rel_diff for r in rows):.2e}")
    print(f"time fast {fast:.3f} s, SDP {sdp:.3f} s, speedup {sdp / fast:.1f}x")
