"""Multi-area load flow with measured boundary power exchanges.

A synthetic 12-bus radial feeder is split into three areas joined by single
lines. Each area re-solves its own load flow treating the upstream connection
voltage as its slack and subtracting the measured power flowing downstream.
The decomposed iteration runs over channels that may drop packets; staleness
and measurement noise are the only couplings to imperfection, and the
certified contraction keeps everything bounded.
"""
import numpy as np

import fptrack as fp
from fptrack.problems import (
    InjectionSeries,
    build_loadflow_map,
    build_multiarea_maps,
    default_injections,
    three_area_network,
    to_complex,
    to_real,
    two_bus_network,
)

LINF = fp.Norm(fp.LINF)


def main():
    print("=== the smallest instance has a closed-form answer ===")
    z, s = 0.05, -0.3
    net2 = two_bus_network(line_impedance=z, injection_limit=0.4)
    inj2 = InjectionSeries("constant", np.array([complex(s)]), net2.injection_limit)
    fam2 = build_loadflow_map(net2, inj2)
    v = to_complex(fp.solve_fixed_point(fam2, 1, to_real(net2.noload), tol=1e-13))[0]
    root = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * z * s))
    print(f"slack 1.0, line {z}, load {s}: solver {v.real:.12f}, "
          f"quadratic root {root:.12f}")

    print()
    print("=== three areas, one feeder ===")
    net = three_area_network()
    inj = default_injections(net, 0.7)
    system = build_multiarea_maps(net, inj, noise_bound=0.002, seed=1)
    print(f"areas of {[len(a.buses) for a in system.areas]} buses; "
          f"dependency edges {sorted(system.graph.edges)}")
    print(f"certified contraction factor of the stacked map: {system.declared:.4f}")
    print(f"measurement-noise error bound: {system.error_bound:.2e}")
    v_mono = to_complex(fp.solve_fixed_point(
        system.monolithic, 1, to_real(net.noload), tol=1e-13))
    stacked = fp.solve_fixed_point(system.family.base, 1,
                                   np.zeros(system.family.dim), tol=1e-12, norm=LINF)
    print(f"stacked vs monolithic fixed point: "
          f"{system.voltage_error(stacked, v_mono):.2e} per-unit")

    print()
    print("=== half of all packets lost, still converges ===")
    clean = build_multiarea_maps(net, inj, noise_bound=0.0, seed=1)
    for p in (0.0, 0.5):
        trace, stats = fp.run_async_tracker(
            clean.family, clean.graph, (fp.ZeroDelay() if p == 0 else fp.IidDrop(p)),
            np.zeros(clean.family.dim), 500, LINF, seed=0,
        )
        res = clean.voltage_error(trace.iterates[-1], v_mono)
        print(f"drop probability {p}: residual after 500 ticks "
              f"{res:.2e} per-unit (worst staleness {stats.max_delay})")
    trace, _ = fp.run_async_tracker(
        system.family, system.graph, fp.IidDrop(0.5),
        np.zeros(system.family.dim), 500, LINF, seed=0,
    )
    print(f"with noisy measurements (bound 0.002) the same run settles at the "
          f"noise floor: {system.voltage_error(trace.iterates[-1], v_mono):.2e}")

    print()
    print("=== trending loads: drops cost accuracy, never stability ===")
    base = -0.5 * net.injection_limit * (0.95 + 0.05j) / abs(0.95 + 0.05j)
    rate = np.concatenate([np.zeros(4), np.full(8, 2.2e-3)])
    inj_tv = InjectionSeries("ramp", base, net.injection_limit, rate=rate)
    moving = build_multiarea_maps(net, inj_tv, 0.0, seed=1)
    horizon = 400
    reference = fp.compute_fixed_point_series(moving.family, horizon, LINF)
    ref_volt = np.stack([moving.to_voltages(pt) for pt in reference.points])
    start = int(np.floor(horizon * 0.75))

    def tail_mean(trace):
        errs = [np.max(np.abs(moving.to_voltages(trace.iterates[k]) - ref_volt[k]))
                for k in range(start, horizon)]
        return float(np.mean(errs))

    print(f"{'drop prob':>9} {'median tail voltage error':>27}")
    for p in (0.0, 0.01, 0.1):
        tails = []
        for seed in range(10):
            channel = fp.ZeroDelay() if p == 0 else fp.IidDrop(p)
            trace, _ = fp.run_async_tracker(
                moving.family, moving.graph, channel,
                np.zeros(moving.family.dim), horizon, LINF,
                seed=seed, reference=reference,
            )
            tails.append(tail_mean(trace))
        print(f"{p:>9} {np.median(tails):>27.3e}")


if __name__ == "__main__":
    main()
