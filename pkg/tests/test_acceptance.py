"""Acceptance suite: one test per criterion, one pass/fail line each.

The heavy end-to-end batches are computed once per session and shared. Run
with `pytest tests/test_acceptance.py -v -s` to see the per-criterion lines
as they complete; expect roughly 15-20 minutes on one core for the full
batch-backed criteria.
"""

import math
import time

import numpy as np
import pytest

from plumetrace.env import AnchorNode, CpslEnv, update_anchor
from plumetrace.flowfield import ColoredNoiseState, DiffusionSpec, init_flowfield
from plumetrace.harness import export_results, run_batch, run_episode
from plumetrace.plume import (ChemicalSensor, EmitterSpec, GasConstants,
                              PlumeState, advect_filaments, concentration_at)
from plumetrace.scenario import load_scenario

DT = 0.05
BIAS = 1.98
RHO_TH = 0.52


def _line(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


# -- shared batches -----------------------------------------------------------


@pytest.fixture(scope="session")
def batch_no80():
    cfg = load_scenario("no_meander_80_60")
    return run_batch(cfg, "seek+anchor_heuristic", 100, seed_base=0)


@pytest.fixture(scope="session")
def batch_no120():
    cfg = load_scenario("no_meander_60_120")
    return run_batch(cfg, "seek+anchor_heuristic", 100, seed_base=0)


@pytest.fixture(scope="session")
def batch_med120():
    cfg = load_scenario("medium_meander_60_120")
    return run_batch(cfg, "seek+anchor_heuristic", 100, seed_base=0)


@pytest.fixture(scope="session")
def flux_errors():
    out = {}
    for name in ("no_meander_80_60", "no_meander_60_120"):
        cfg = load_scenario(name)
        errs = [run_episode(cfg, "fluxotaxis", seed=s).declared_distance
                for s in range(25)]
        out[name] = np.array(errs)
    return out


# -- criteria -------------------------------------------------------------------


def test_plume_physics_oracle():
    """Single-filament concentration matches direct formula evaluation."""
    t0 = time.perf_counter()
    constants = GasConstants(P=101325.0, T=288.0)
    em = EmitterSpec()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(10):
        plume = PlumeState()
        pos = rng.uniform(0, 200, 2)
        R = rng.uniform(0.5, 25.0)          # cm
        plume.append(pos, R, 0)
        point = pos + rng.uniform(-1.0, 1.0, 2) * R / 100.0
        d_cm = float(np.hypot(*(point - pos))) * 100.0
        c = (em.Q_per_filament / (math.sqrt(8 * math.pi ** 3) * R ** 3)
             * math.exp(-d_cm ** 2 / R ** 2))
        n0 = constants.P * constants.k / (constants.T * constants.Rgas) * 1e-6
        want = c * 1e6 / n0
        got = concentration_at(plume, point, constants, em.Q_per_filament)
        worst = max(worst, abs(got - want) / want)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 1.0
    _line("plume physics oracle", ok,
          f"max rel err {worst:.2e}, {elapsed:.2f}s")
    assert worst < 1e-9
    assert elapsed < 1.0


def test_filament_kinematics():
    """Exact advection speed; diffusion MSD = sigma^2 * t within 5%."""
    t0 = time.perf_counter()
    grid = init_flowfield((1.0, 0.0), (200.0, 200.0), 20.0, 1000.0, 1000.0, DT)
    plume = PlumeState()
    plume.append((10.0, 100.0), 1.0, 0)
    rng = np.random.default_rng(0)
    n = 400
    for _ in range(n):
        advect_filaments(plume, grid, DiffusionSpec(0.0, 0.0), DT, rng)
    speed = (plume.positions[0, 0] - 10.0) / (n * DT)
    ok_speed = abs(speed - 1.0) < 1e-12

    plume2 = PlumeState(capacity=100000)
    plume2.append((100.0, 100.0), 1.0, 0, count=100000)
    grid0 = init_flowfield((0.0, 0.0), (200.0, 200.0), 20.0, 1000.0, 1000.0, DT)
    steps = 20
    for _ in range(steps):
        advect_filaments(plume2, grid0, DiffusionSpec(2.0, 2.0), DT, rng)
    t = steps * DT
    disp = plume2.positions - 100.0
    msd = [float(np.mean(disp[:, ax] ** 2)) for ax in range(2)]
    ok_msd = all(abs(m - 4.0 * t) / (4.0 * t) < 0.05 for m in msd)
    elapsed = time.perf_counter() - t0
    ok = ok_speed and ok_msd and elapsed < 10.0
    _line("filament kinematics", ok,
          f"speed {speed:.12f} m/s, msd/t {[m / t for m in msd]}, {elapsed:.1f}s")
    assert ok_speed and ok_msd
    assert elapsed < 10.0


def test_sensor_model():
    """Bias at zero input, first-order response, threshold boundary."""
    t0 = time.perf_counter()
    s = ChemicalSensor(B=0.1, ch=1e-4, bias=1.98, var=0.0)
    out = None
    for _ in range(200):
        out = s.measure(0.0, DT, noisy=False)
    ok_bias = out == 1.98

    s2 = ChemicalSensor(B=0.1, ch=1e-4, bias=0.0, var=0.0)
    c, err = 5.0, 5.0
    ok_response = True
    for _ in range(200):
        s2.measure(c, DT, noisy=False)
        err *= 1.0 - 0.1 * DT
        if abs((c - s2.state) - err) > 1e-9 * c:
            ok_response = False
            break

    s3 = ChemicalSensor(B=0.1, ch=1e-4, bias=1.98, var=0.0)
    s3.state = 0.999e-4
    below = s3.measure(s3.state, DT, noisy=False)
    s4 = ChemicalSensor(B=0.1, ch=1e-4, bias=1.98, var=0.0)
    s4.state = 1.2e-4
    above = s4.measure(s4.state, DT, noisy=False)
    ok_threshold = below == 1.98 and above > 1.98
    elapsed = time.perf_counter() - t0
    ok = ok_bias and ok_response and ok_threshold and elapsed < 1.0
    _line("sensor model", ok,
          f"bias {out}, response-exact {ok_response}, "
          f"threshold {ok_threshold}, {elapsed:.2f}s")
    assert ok_bias and ok_response and ok_threshold
    assert elapsed < 1.0


def test_flowfield_fixed_point_and_dc_gain():
    """Uniform field invariant under 1e4 steps; DC gain equals G."""
    t0 = time.perf_counter()
    grid = init_flowfield((1.0, 0.0), (200.0, 200.0), 20.0, 1000.0, 1000.0, DT)
    for _ in range(10000):
        grid.step(None, None)
    delta = max(float(np.max(np.abs(grid.v1 - 1.0))),
                float(np.max(np.abs(grid.v2))))
    ok_fixed = delta < 1e-9

    ok_gain = True
    gains = {}
    for G in (1.0, 3.0, 5.0):
        f = ColoredNoiseState(0.005, 0.02, G, DT)
        # analytic DC gain of the discretized filter
        dc = float(f.C @ np.linalg.solve(np.eye(2) - f.Ad, f.Bd))
        gains[G] = dc
        if abs(dc - G) > 1e-9:
            ok_gain = False
    elapsed = time.perf_counter() - t0
    ok = ok_fixed and ok_gain and elapsed < 10.0
    _line("flowfield fixed point + DC gain", ok,
          f"max delta {delta:.2e}, gains {gains}, {elapsed:.1f}s")
    assert ok_fixed and ok_gain
    assert elapsed < 10.0


def test_anchor_rule_conformance():
    """Synthetic episode exercising every update-rule branch, plus the upwind
    monotonicity of the logged update stream over 20 seeded episodes."""
    positions = np.array([[120.0, 100.0], [130.0, 110.0], [140.0, 90.0]])
    altitudes = np.full(3, 2.0)
    wind = np.tile([1.0, 0.0], (3, 1))
    beta_max = 90.0

    def step(anchor, rho, q=None, pos=positions):
        rho = np.asarray(rho, dtype=float)
        q = (rho - BIAS) >= RHO_TH if q is None else np.asarray(q)
        return update_anchor(anchor, pos, altitudes, rho, wind, q,
                             BIAS, RHO_TH, beta_max)

    checks = []
    anchor = AnchorNode()
    # branch 1: nobody detects -> unchanged
    anchor, ev = step(anchor, [BIAS, BIAS, BIAS])
    checks.append(("no-detection", not anchor.established and ev is None))
    # branch 2: establishment by agent 1 with the bias-corrected reading
    anchor, ev = step(anchor, [BIAS, BIAS + 2.0, BIAS])
    checks.append(("establish", anchor.established
                   and ev["kind"] == "establish"
                   and np.array_equal(anchor.p_a, positions[1])
                   and abs(anchor.rho_a - 2.0) < 1e-12))
    # branch 3: accepted upwind update by agent 0 (west of the anchor)
    anchor, ev = step(anchor, [BIAS + 3.0, BIAS + 1.0, BIAS])
    checks.append(("accepted-update", ev is not None
                   and ev["kind"] == "update"
                   and np.array_equal(anchor.p_a, positions[0])))
    # branch 4: downwind candidate rejected (agent 2 east of the anchor)
    anchor, ev = step(anchor, [BIAS, BIAS, BIAS + 4.0])
    checks.append(("beta-rejected", ev is None
                   and np.array_equal(anchor.p_a, positions[0])))
    # branch 5: below-threshold rejection (q forced, raw mean below rho_th)
    anchor5, ev5 = step(AnchorNode(), [0.2, 0.0, 0.0], q=[True, False, False])
    checks.append(("below-threshold", ev5 is None and not anchor5.established))
    # branch 6: argmax tie resolves to the lowest index
    anchor6, ev6 = step(AnchorNode(), [BIAS + 2.0, BIAS + 2.0, BIAS])
    checks.append(("argmax-tie", ev6 is not None and ev6["agent"] == 0))

    ok_branches = all(ok for _, ok in checks)

    cfg = load_scenario("no_meander_80_60")
    ok_monotone = True
    n_updates = 0
    for seed in range(20):
        ep = run_episode(cfg, "seek+anchor_heuristic", seed=seed)
        for ev in ep.anchor_events:
            if ev["kind"] == "update":
                n_updates += 1
                if not 0.0 <= ev["beta"] <= cfg.detection.beta_max:
                    ok_monotone = False
    ok = ok_branches and ok_monotone and n_updates > 0
    _line("anchor rule conformance", ok,
          f"branches {[(n, o) for n, o in checks]}, {n_updates} updates all "
          f"within beta_max {ok_monotone}")
    assert ok_branches, checks
    assert ok_monotone and n_updates > 0


def test_reward_conformance():
    """Hand-constructed states reproduce every component and the weighted sum."""
    from plumetrace.env import WorldView, compute_reward
    from plumetrace.scenario import RewardConfig

    cfg = RewardConfig()
    cfg.d_max = math.hypot(200.0, 200.0)
    ok_dmax = abs(cfg.d_max - 282.842712474619) < 1e-9

    center = np.array([100.0, 100.0])
    pos = np.array([center + 5.0 * np.array([math.cos(a), math.sin(a)])
                    for a in (0.0, 2 * math.pi / 3, 4 * math.pi / 3)])

    def view(anchor=None, collisions=None):
        rho = np.full(3, BIAS)
        return WorldView(step=0, time=0.0, positions=pos,
                         headings=np.zeros(3), speeds=np.zeros(3),
                         omegas=np.zeros(3), altitudes=np.full(3, 2.0),
                         rho_avg=rho, wind_avg=np.tile([1.0, 0.0], (3, 1)),
                         q=np.zeros(3, dtype=bool), anchor=anchor or AnchorNode(),
                         obstacle_positions=np.zeros((0, 2)),
                         centroid=pos.mean(axis=0), phase="trace",
                         collisions=collisions or [], area=(200.0, 200.0))

    _, comps = compute_reward(0, view(), cfg, 90.0)
    ok_theta = abs(comps["r_theta"]) < 1e-12
    ok_d = comps["r_d"] == cfg.r_in
    ok_plume_nomax = comps["r_plume"] == pytest.approx(-cfg.eta * cfg.d_max)

    anchor = AnchorNode(1.0, pos[0].copy(), 2.0, True)
    _, comps_a = compute_reward(0, view(anchor=anchor), cfg, 90.0)
    ok_at_anchor = comps_a["r_plume"] == 0.0 and comps_a["r_upwind"] == 0.0

    anchor2 = AnchorNode(1.0, center + np.array([30.0, 0.0]), 2.0, True)
    ok_upwind_set = True
    ok_sum = True
    rng = np.random.default_rng(5)
    for i in range(3):
        v = view(anchor=anchor2, collisions=[("uav", 0, 1)])
        total, c = compute_reward(i, v, cfg, 90.0)
        rp = c["r_plume"]
        if not any(abs(c["r_upwind"] - x) < 1e-12 for x in (rp, rp / 2, rp / 4)):
            ok_upwind_set = False
        want = (cfg.alpha_d * c["r_d"] + cfg.alpha_theta * c["r_theta"]
                + cfg.alpha_col * c["r_col"] + cfg.alpha_plume * c["r_plume"]
                + cfg.alpha_upwind * c["r_upwind"])
        if abs(total - want) > 1e-12:
            ok_sum = False
    ok = all((ok_dmax, ok_theta, ok_d, ok_plume_nomax, ok_at_anchor,
              ok_upwind_set, ok_sum))
    _line("reward conformance", ok,
          f"theta0 {ok_theta}, in-band {ok_d}, d_max {ok_dmax}, "
          f"upwind-set {ok_upwind_set}, sum-1e-12 {ok_sum}")
    assert ok


def test_safety_zero_collisions(batch_no80):
    """Override active: zero collisions across 100 seeded episodes, M=5."""
    uav = sum(e.collisions_uav for e in batch_no80.episodes)
    obs = sum(e.collisions_obs for e in batch_no80.episodes)
    wall = batch_no80.wall_seconds
    ok = uav == 0 and obs == 0
    _line("safety zero collisions", ok,
          f"uav-uav {uav}, uav-obstacle {obs} over 100 episodes "
          f"({wall:.0f}s batch)")
    assert uav == 0 and obs == 0


def test_end_to_end_localization(batch_no80, batch_no120, flux_errors):
    """Heuristic: error <= 5 m in >= 90% of episodes on both no-meander
    scenarios; median error strictly below fluxotaxis on identical seeds."""
    results = {}
    for name, batch in (("no_meander_80_60", batch_no80),
                        ("no_meander_60_120", batch_no120)):
        errs = np.array([e.declared_distance for e in batch.episodes])
        frac = float((errs <= 5.0).mean())
        paired = errs[:25]
        flux_med = float(np.median(flux_errors[name]))
        heur_med = float(np.median(paired))
        results[name] = (frac, heur_med, flux_med)
    ok_frac = all(r[0] >= 0.90 for r in results.values())
    ok_median = all(r[1] < r[2] for r in results.values())
    detail = "; ".join(
        f"{n}: <=5m {r[0]:.0%}, median {r[1]:.2f} m vs fluxotaxis {r[2]:.2f} m"
        for n, r in results.items())
    _line("end-to-end localization", ok_frac and ok_median, detail)
    assert ok_median, detail
    assert ok_frac, detail


def test_meander_degradation(batch_no120, batch_med120):
    """Success under medium meander strictly below no meander, same emitter."""
    no = batch_no120.success_rate
    med = batch_med120.success_rate
    ok = med < no
    _line("meander degradation ordering", ok,
          f"no-meander {no:.2f} vs medium {med:.2f} at emitter (60,120)")
    assert ok, f"expected medium < no, got {med} vs {no}"


def test_determinism_byte_identical(tmp_path):
    """Same (scenario, controller, seed): byte-identical exports."""
    cfg = load_scenario("no_meander_80_60")
    blobs = []
    for sub in ("a", "b"):
        batch = run_batch(cfg, "seek+anchor_heuristic", 2, seed_base=123,
                          record_traces=True)
        out = tmp_path / sub
        export_results(batch, out, export_trajectories=True)
        blobs.append({name: (out / name).read_bytes()
                      for name in ("metrics.json", "cdf.csv")}
                     | {f"traj{seed}": (out / "trajectories" /
                                        f"episode_{seed}.csv").read_bytes()
                        for seed in (123, 124)})
    ok = blobs[0] == blobs[1]
    _line("determinism byte-identical", ok,
          f"{sorted(blobs[0])} compared equal: {ok}")
    assert ok


def test_bindings_equivalence_secondary():
    """[SECONDARY] scripted actions through the bindings match the native
    environment to 1e-12 for three seeds."""
    gym = pytest.importorskip("plumetrace_gym")
    from plumetrace.env import CpslEnv, flatten_observation

    cfg = load_scenario("no_meander_80_60")
    cfg.episode.T = 25.0
    worst = 0.0
    for seed in (1, 2, 3):
        env = gym.make_env(cfg, raw_actions=True)
        wobs = env.reset(seed=seed)
        native = CpslEnv(cfg, seed=seed)
        rng = np.random.default_rng(seed)
        for _ in range(500):
            joint = [(float(rng.uniform(0, 3)), float(rng.uniform(-1.5, 1.5)))
                     for _ in range(3)]
            wobs, wrew, wdone, _ = env.step(
                {gym.agent_id(i): joint[i] for i in range(3)})
            nobs, nrew, ndone, _ = native.step(joint)
            for i in range(3):
                diff = np.max(np.abs(wobs[gym.agent_id(i)]
                                     - flatten_observation(nobs[i])))
                worst = max(worst, float(diff),
                            abs(wrew[gym.agent_id(i)] - float(nrew[i])))
            if wdone:
                break
    ok = worst <= 1e-12
    _line("bindings equivalence (secondary)", ok, f"max deviation {worst:.2e}")
    assert ok
