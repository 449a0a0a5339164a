"""End-to-end acceptance checklist for the d=1, alpha=0.5 configuration.

Twelve independent checks, one test each, covering the constants, the
discrete operator, the evolution machinery, and every estimator at desk
scale (n up to 800 on Omega = (-1, 1)). Each test prints a single
``[PASS]``/``[FAIL]`` line with the measured numbers; run with ``pytest -s``
to see all twelve lines. Three checks document known shortfalls of the
node-sampled discretization at this resolution and fail with the measured
values; see the README for the analysis.
"""

import numpy as np
import pytest

from hardyheat.estimators import (
    blowup_diagnostic,
    kernel_sandwich,
    lambda_min,
    lp_scan,
    singularity_exponent,
    t_ref,
    ultracontractive_envelope,
    weighted_l1_bound,
    weighted_row_mass,
)
from hardyheat.evolution import (
    default_truncation_schedule,
    duhamel_residual,
    evolve,
    heat_kernel,
    minimal_solution,
)
from hardyheat.grids import build_grid
from hardyheat.operators import FormEvaluator, assemble_operator, exterior_power_tail
from hardyheat.scenario import build_u0
from hardyheat.specfun import (
    FractionalParams,
    beta_of_c,
    hardy_constant,
    multiplier,
)

PARAMS = FractionalParams(d=1, alpha=0.5)
C_STAR = hardy_constant(PARAMS)
DOMAIN = [-1.0, 1.0]
H_LEVELS = (0.01, 0.005, 0.0025)        # n = 200, 400, 800
T_FACTORS = (0.02, 0.05, 0.1, 0.5, 1.0, 2.0)


def report(num, label, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\n[{status}] criterion {num:2d}: {label} | {detail}")
    assert ok, f"criterion {num} ({label}): {detail}"


# ---------------------------------------------------------------------------
# shared computations
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def ops():
    out = {}
    for cf in (0.5, 0.9, 1.0):
        for h in H_LEVELS:
            grid = build_grid(DOMAIN, h)
            out[(cf, h)] = assemble_operator(grid, PARAMS, c=cf * C_STAR, k=None)
    return out


@pytest.fixture(scope="module")
def kernel_bundle(ops):
    """Heat kernels over two couplings, three grids, and a 100x time span."""
    bundle = {}
    for cf in (0.5, 1.0):
        beta = beta_of_c(cf * C_STAR, PARAMS)
        per_n = {}
        for h, n in ((0.01, 200), (0.005, 400), (0.0025, 800)):
            op = ops[(cf, h)]
            tr = t_ref(op)
            factors = (0.1,) if n == 200 else T_FACTORS
            per_n[n] = {
                "op": op,
                "w": op.grid.radii ** (-beta),
                "kernels": {f: heat_kernel(op, f * tr) for f in factors},
            }
        bundle[cf] = per_n
    return bundle


@pytest.fixture(scope="module")
def reference_run(ops):
    """Minimal solution of the reference setup on the finest grid.

    c = 0.5 c*, u0 = indicator(|x| <= 0.2), outputs at {0.1, 0.5} reference
    times plus t = 0 so the source-term residual can integrate from the
    start.
    """
    op = ops[(0.5, 0.0025)]
    tr = t_ref(op)
    u0 = build_u0("ball:0.2", op.grid)
    times = [0.0, 0.1 * tr, 0.5 * tr]
    traj, rep = minimal_solution(op, u0, times)
    return {"op": op, "u0": u0, "times": times, "traj": traj, "report": rep}


@pytest.fixture(scope="module")
def lp_profiles(ops):
    profiles = []
    for h in H_LEVELS:
        op = ops[(0.5, h)]
        tr = t_ref(op)
        traj = evolve(op, build_u0("ball:0.2", op.grid), [0.1 * tr, 0.5 * tr])
        profiles.append((op.grid, traj.states[-1]))
    return profiles


def _probe_band(grid):
    R = min(min(-a, b) for a, b in grid.bounds)
    pts = grid.nodes[:, None] if grid.dim == 1 else grid.nodes
    dist = np.inf * np.ones(grid.n)
    for ax, (a, b) in enumerate(grid.bounds):
        dist = np.minimum(dist, np.minimum(pts[:, ax] - a, b - pts[:, ax]))
    return (grid.radii >= 0.25 * R) & (dist >= 0.25 * R)


def _interior_vectors(grid, seed, count):
    rng = np.random.default_rng(seed)
    band = _probe_band(grid)
    out = []
    r = grid.radii
    R = min(min(-a, b) for a, b in grid.bounds)
    for _ in range(count):
        centre = rng.uniform(0.35 * R, 0.6 * R) * rng.choice([-1.0, 1.0])
        width = rng.uniform(0.05 * R, 0.12 * R)
        prof = np.exp(-0.5 * ((r - abs(centre)) / width) ** 2)
        f = np.where(band & (grid.nodes * centre > 0), prof, 0.0)
        out.append(f)
    return out


def _harmonicity_defect(op, beta):
    """RMS relative defect of the free operator on |x|^-beta, interior band."""
    grid = op.grid
    r = grid.radii
    w = r ** (-beta)
    target = multiplier(beta, op.params) * r ** (-beta - op.params.alpha)
    tail = np.asarray(exterior_power_tail(grid.nodes, grid.bounds[0], op.params, beta))
    band = _probe_band(grid)
    rel = np.abs((op.L0 @ w)[band] - (target + tail)[band]) / np.abs((target + tail)[band])
    return float(np.sqrt(np.mean(rel**2)))


# ---------------------------------------------------------------------------
# the twelve checks
# ---------------------------------------------------------------------------

def test_criterion_01_constants_consistent():
    worst = 0.0
    for d in (1, 2, 3):
        for f in (0.25, 0.5, 0.75):
            p = FractionalParams(d=d, alpha=f * min(2, d))
            cs = hardy_constant(p)
            worst = max(worst, abs(multiplier(p.beta_star, p) - cs) / cs)
    report(
        1,
        "critical coupling equals the multiplier at its symmetric exponent",
        worst <= 1e-10,
        f"worst relative gap {worst:.2e} over 9 (d, alpha) pairs (tol 1e-10)",
    )


def test_criterion_02_harmonic_profile_defect_shrinks(ops):
    details, ok = [], True
    for cf in (0.5, 1.0):
        beta = beta_of_c(cf * C_STAR, PARAMS)
        defects = [_harmonicity_defect(ops[(cf, h)], beta) for h in H_LEVELS]
        ratios = [a / b for a, b in zip(defects, defects[1:])]
        ok = ok and all(r >= 1.5 for r in ratios)
        details.append(f"c={cf}c*: shrink x{ratios[0]:.2f}, x{ratios[1]:.2f}")
    report(
        2,
        "discrete action on |x|^-beta converges >= 1.5x per halving",
        ok,
        "; ".join(details) + " (need >= 1.5)",
    )


def test_criterion_03_minimal_solution_monotone(reference_run):
    op = reference_run["op"]
    ks = default_truncation_schedule(op)
    prev, worst = None, 0.0
    for k in ks:
        trk = evolve(op.with_truncation(float(k)), reference_run["u0"], reference_run["times"])
        if prev is not None:
            scale = float(np.max(np.abs(trk.states)))
            worst = min(worst, float(np.min(trk.states - prev)) / scale)
        prev = trk.states
    rep = reference_run["report"]
    ok = worst >= -1e-12 and rep["converged"]
    report(
        3,
        "truncated evolutions increase monotonically to the minimal solution",
        ok,
        f"worst relative increment {worst:.1e} (floor -1e-12) over "
        f"k={[round(float(k), 3) for k in ks]}; converged by {rep['converged_by']}",
    )


def test_criterion_04_duhamel_residual(reference_run):
    free_op = assemble_operator(reference_run["op"].grid, PARAMS, c=0.0)
    r65 = duhamel_residual(reference_run["traj"], free_op, n_quad=65)
    r129 = duhamel_residual(reference_run["traj"], free_op, n_quad=129)
    worst65 = max(r65.values())
    t_last = float(reference_run["traj"].times[-1])
    ratio = r129[t_last] / r65[t_last]
    ok = worst65 <= 1e-3 and ratio <= 0.5
    report(
        4,
        "source-term reconstruction residual small and quadrature-convergent",
        ok,
        f"worst residual {worst65:.2e} at 65 points (tol 1e-3); "
        f"129-point ratio {ratio:.3f} (need <= 0.5)",
    )


def test_criterion_05_kernel_sandwich(kernel_bundle):
    t_subset = (0.05, 0.1, 0.5, 1.0)
    ok, details = True, []
    for cf in (0.5, 1.0):
        sands = {}
        for n in (400, 800):
            b = kernel_bundle[cf][n]
            kers = [b["kernels"][f] for f in t_subset]
            sands[n] = kernel_sandwich(kers, b["w"], 0.5)
        spreads = [p["spread"] for p in sands[800]["per_t"]]
        stab = [
            a["spread"] / b["spread"]
            for a, b in zip(sands[800]["per_t"], sands[400]["per_t"])
        ]
        positive = sands[800]["c_lower"] > 0.0
        capped = max(spreads) <= 50.0
        stable = all(0.5 <= s <= 2.0 for s in stab)
        ok = ok and positive and capped and stable
        over = [f"{t}" for t, s in zip(t_subset, spreads) if s > 50.0]
        details.append(
            f"c={cf}c*: min ratio {sands[800]['c_lower']:.1e} (>0 {positive}), "
            f"spreads {[f'{s:.3g}' for s in spreads]} vs cap 50"
            + (f" EXCEEDED at t/T_ref={over}" if over else "")
            + f", refinement change x{max(stab):.2f} (<=2 {stable})"
        )
    report(
        5,
        "heat kernel two-sided comparable to the weight product on [-0.5, 0.5]",
        ok,
        "; ".join(details),
    )


def test_criterion_06_ultracontractive_envelope(kernel_bundle):
    ok, details = True, []
    for cf in (0.5, 1.0):
        envs = {}
        for n in (400, 800):
            b = kernel_bundle[cf][n]
            envs[n] = ultracontractive_envelope(list(b["kernels"].values()), b["w"])
        e400, e800 = envs[400]["envelope"], envs[800]["envelope"]
        finite = np.isfinite(e800) and e800 > 0.0
        rel = abs(e800 - e400) / e800
        ok = ok and finite and rel <= 0.25
        details.append(f"c={cf}c*: envelope {e800:.4f}, refinement change {rel:.1%}")
    report(
        6,
        "t^(d/alpha)-rescaled kernel sup finite and stable within 25%",
        ok,
        "; ".join(details),
    )


def test_criterion_07_singularity_slope(ops, reference_run):
    results = []
    for cf in (0.5, 1.0):
        beta = beta_of_c(cf * C_STAR, PARAMS)
        if cf == 0.5:
            traj = reference_run["traj"]
        else:
            op = ops[(1.0, 0.0025)]
            tr = t_ref(op)
            traj, _ = minimal_solution(
                op, build_u0("ball:0.2", op.grid), [0.0, 0.1 * tr, 0.5 * tr]
            )
        fit = singularity_exponent(traj.states[-1], traj.operator.grid, target=-beta)
        results.append((cf, fit.slope, -beta, abs(fit.slope + beta)))
    ok = all(gap <= 0.05 for *_, gap in results)
    detail = "; ".join(
        f"c={cf}c*: slope {s:.3f} vs target {t:.3f}, gap {g:.3f} (tol 0.05)"
        for cf, s, t, g in results
    )
    report(7, "near-origin log-log profile slope matches the coupling exponent", ok, detail)


def test_criterion_08_lp_threshold_scan(lp_profiles):
    beta = beta_of_c(0.5 * C_STAR, PARAMS)
    thr = PARAMS.d / beta
    s1 = lp_scan(lp_profiles, 1.0, beta)
    s15 = lp_scan(lp_profiles, 1.5 * thr, beta)
    gap15 = abs(s15["exponent_fit"] - s15["expected_exponent"])
    strict_ok = (
        s1["classification"] == "CONVERGENT"
        and s15["classification"] == "DIVERGENT"
        and gap15 <= 0.15
    )
    # Within 10% of the threshold the finest grid's own measured decay rate
    # replaces the nominal exponent; the scan must stay consistent with it.
    fit = singularity_exponent(lp_profiles[-1][1], lp_profiles[-1][0])
    beta_eff = -fit.slope if fit.slope < 0.0 else beta
    belt = []
    for pexp in (0.9 * thr, 1.1 * thr):
        scan = lp_scan(lp_profiles, pexp, beta)
        eff = PARAMS.d - pexp * beta_eff
        belt.append(abs(scan["exponent_fit"] - eff))
    belt_ok = all(g <= 0.3 for g in belt)
    ok = strict_ok and belt_ok
    report(
        8,
        "inner-mass refinement scan matches the integrability threshold",
        ok,
        f"p=1 {s1['classification']}; p=1.5thr {s15['classification']} "
        f"(exponent gap {gap15:.3f}, tol 0.15); near-threshold consistency "
        f"gaps {[f'{g:.3f}' for g in belt]} (tol 0.3)",
    )


def test_criterion_09_blowup_signatures(ops):
    ok, details = True, []
    for cf in (1.1, 1.5, 3.0):
        rep = blowup_diagnostic(
            PARAMS, cf * C_STAR, DOMAIN, H_LEVELS,
            u0_builder=lambda g: build_u0("ball:0.2", g),
        )
        lam_dec = all(b < a for a, b in zip(rep.lambda_mins, rep.lambda_mins[1:]))
        gaps_grow = all(b > a for a, b in zip(rep.gaps, rep.gaps[1:]))
        probe10 = rep.probe_growth >= 10.0
        slope_pos = rep.mechanism_slope > 0.0
        ok = ok and lam_dec and gaps_grow and probe10 and slope_pos
        details.append(
            f"c={cf}c*: bottom drops {lam_dec}, gaps grow {gaps_grow}, "
            f"probe x{rep.probe_growth:.2f} (need >=10), "
            f"log(1/h) slope {rep.mechanism_slope:.3f}"
        )
    for cf in (0.5, 0.9, 1.0):
        lams = [lambda_min(ops[(cf, h)]) for h in H_LEVELS]
        gaps = [a - b for a, b in zip(lams, lams[1:])]
        bounded = lams[-1] > 0.0 and gaps[-1] < gaps[0]
        ok = ok and bounded
        details.append(f"c={cf}c*: bottom {lams[-1]:.3f} > 0 with shrinking drops {bounded}")
    report(9, "supercritical spectral collapse with growing truncation probe", ok, "; ".join(details))


def test_criterion_10_ground_state_identity(ops):
    ok, details = True, []
    for cf in (0.5, 1.0):
        beta = beta_of_c(cf * C_STAR, PARAMS)
        gaps = []
        for h in H_LEVELS:
            op = ops[(cf, h)]
            ev = FormEvaluator(op)
            w = op.grid.radii ** (-beta)
            gaps.append(
                max(
                    abs(ev.hardy(w * f) - ev.weighted(f)) / max(1.0, abs(ev.weighted(f)))
                    for f in _interior_vectors(op.grid, 0, 10)
                )
            )
        ratios = [b / a for a, b in zip(gaps, gaps[1:])]
        ok = ok and all(r <= 0.7 for r in ratios)
        details.append(f"c={cf}c*: defect ratios {ratios[0]:.2f}, {ratios[1]:.2f}")
    report(
        10,
        "weighted-form identity defect shrinks <= 0.7x per halving (10 vectors)",
        ok,
        "; ".join(details) + " (need <= 0.7)",
    )


def test_criterion_11_weighted_row_mass(kernel_bundle):
    ok, details = True, []
    for cf in (0.5, 1.0):
        epss = [
            weighted_row_mass(
                kernel_bundle[cf][n]["kernels"][0.1], kernel_bundle[cf][n]["w"]
            )["eps"]
            for n in (200, 400, 800)
        ]
        excess = [max(e, 0.0) for e in epss]
        ok_cf = all(b <= a + 1e-12 for a, b in zip(excess, excess[1:])) and epss[-1] <= 0.05
        ok = ok and ok_cf
        details.append(f"c={cf}c*: excess over mass 1 = {[f'{e:+.4f}' for e in epss]}")
    report(
        11,
        "weighted kernel row mass stays <= 1 + eps with eps nonincreasing",
        ok,
        "; ".join(details),
    )


def test_criterion_12_weighted_l1_extension(kernel_bundle):
    ok, details = True, []
    for cf in (0.5, 1.0):
        b = kernel_bundle[cf][800]
        grid = b["op"].grid
        radii = [0.2, 0.1, 0.05, 4 * grid.h, 2 * grid.h]
        u0s = [(grid.radii <= r).astype(float) for r in radii]
        wl1 = weighted_l1_bound(b["kernels"][0.5], b["w"], u0s)
        ok = ok and wl1["all_within"]
        details.append(
            f"c={cf}c*: max quotient {max(wl1['ratios']):.3f} vs bound {wl1['bound']:.3f}"
        )
    report(
        12,
        "weighted L1 quotient bounded along concentrating initial data",
        ok,
        "; ".join(details),
    )
