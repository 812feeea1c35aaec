#!/usr/bin/env python3
"""
Short-packet AoI - Full-Size Validation Run

Runs the long simulation experiments (10^6 frames x 20 replications) and
the figure replica checks without pytest, printing a report.
"""

import os
import sys
import time

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.aoi_analytic import (
    Scenario,
    Scheme,
    alpha_threshold,
    avg_aoi_distributed,
    avg_aoi_joint,
    fmax_pmf,
)
from src.aoi_sim import SimSettings, empirical_fmax_pmf, simulate_distributed, simulate_joint, total_variation
from src.fbl_channel import ChannelParams
from src.study import locate_crossover, replica_specs, run_sweep

FRAMES = 10 ** 6
REPLICATIONS = 20


def scenario(n=4, lh=120, rate=0.8):
    return Scenario(num_sensors=n, per_sensor_bits=lh, redundancy_bits=0, coding_rate=rate,
                    channel=ChannelParams(3.0))


def banner(title):
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)


def check(label, sim, analytic):
    tolerance = max(3 * sim.ci95_half_width, 0.01 * analytic)
    ok = abs(sim.avg_aoi_slots - analytic) <= tolerance
    status = "✅" if ok else "❌"
    print(f"{status} {label}: sim {sim.avg_aoi_slots:.4f} ± {sim.ci95_half_width:.4f}, "
          f"analytic {analytic:.4f}")
    if not ok:
        raise AssertionError(f"{label}: |sim - analytic| > {tolerance:.4f}")


def test_joint_against_closed_form(workers):
    banner("TEST 1: JOINT SCHEME, SIMULATION VS CLOSED FORM")
    start = time.perf_counter()
    st = SimSettings(frames=FRAMES, replications=REPLICATIONS, workers=workers)
    for rate in (0.6, 0.8, 1.0):
        sc = scenario(rate=rate)
        check(f"R={rate}", simulate_joint(sc, st), avg_aoi_joint(sc).avg_aoi_slots)
    print(f"  elapsed {time.perf_counter() - start:.1f} s")


def test_distributed_against_closed_form(workers):
    banner("TEST 2: DISTRIBUTED SCHEME, SIMULATION VS CLOSED FORM")
    start = time.perf_counter()
    st = SimSettings(frames=FRAMES, replications=REPLICATIONS, workers=workers)
    for rate in (0.6, 0.8, 1.0):
        sc = scenario(rate=rate)
        check(f"R={rate}", simulate_distributed(sc, st), avg_aoi_distributed(sc).avg_aoi_slots)
    for eps in (0.1, 0.5):
        forced = SimSettings(frames=FRAMES, replications=REPLICATIONS, workers=workers,
                             forced_error_rate=eps)
        sc = scenario()
        check(f"forced eps={eps}", simulate_distributed(sc, forced),
              avg_aoi_distributed(sc, forced_error_rate=eps).avg_aoi_slots)
    sc = scenario(n=2)
    half = SimSettings(frames=FRAMES, replications=REPLICATIONS, workers=workers, forced_error_rate=0.5)
    check("N=2, M_h=150, eps=0.5 (824.5)", simulate_distributed(sc, half), 824.5)
    print(f"  elapsed {time.perf_counter() - start:.1f} s")


def test_error_free_runs():
    banner("TEST 3: ERROR-FREE RUNS")
    st = SimSettings(frames=10 ** 4, replications=REPLICATIONS, forced_error_rate=0.0)
    joint = simulate_joint(scenario(n=4, lh=20), st)
    dist = simulate_distributed(scenario(n=3), st)
    print(f"joint M=100: {joint.avg_aoi_slots} (expected 149.5)")
    print(f"distributed N=3, M_h=150: {dist.avg_aoi_slots} (expected 524.5)")
    assert joint.avg_aoi_slots == 149.5 and joint.ci95_half_width == 0.0
    assert dist.avg_aoi_slots == 524.5 and dist.ci95_half_width == 0.0
    print("\n✅ Error-free runs are exact")


def test_fmax_law():
    banner("TEST 4: f_max DISTRIBUTION")
    pmf = empirical_fmax_pmf(2, 0.5, 10 ** 6)
    distance = total_variation(pmf, fmax_pmf(2, 0.5, 60))
    print(f"total variation (N=2, eps=0.5, 10^6 samples): {distance:.5f}")
    assert distance < 0.005
    print("\n✅ Empirical f_max matches the closed-form law")


def test_figure_replicas():
    banner("TEST 5: FIGURE REPLICAS")
    for figure in ("fig3", "fig4", "fig5"):
        for spec in replica_specs(figure):
            rows = run_sweep(spec)
            for scheme in (Scheme.JOINT, Scheme.DISTRIBUTED):
                values = [r.analytic_aoi_slots for r in rows if r.scheme is scheme]
                shown = ", ".join("inf" if v is None else f"{v:.1f}" for v in values)
                print(f"{figure}/{spec.label} {scheme.value}: {shown}")

    for n in (2, 4):
        sc = scenario(n=n)
        alpha_0 = alpha_threshold(sc).alpha_0
        crossover = locate_crossover(sc, (0, n * 120 - 1))
        print(f"N={n}: alpha_0={alpha_0:.2f}, exact crossover={crossover:.2f}")
        assert abs(crossover - alpha_0) <= 60
    print("\n✅ Figure replicas generated")


def main():
    """Run all validation experiments."""
    workers = int(os.getenv("VALIDATION_WORKERS", "1"))
    banner("SHORT-PACKET AoI - VALIDATION SUITE")

    try:
        test_error_free_runs()
        test_fmax_law()
        test_figure_replicas()
        test_joint_against_closed_form(workers)
        test_distributed_against_closed_form(workers)

        banner("✅ ALL CHECKS PASSED!")
        return 0

    except Exception as e:
        print(f"\n❌ CHECK FAILED: {e}")
        import traceback
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
