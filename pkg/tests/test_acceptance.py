"""Acceptance criteria, one test (or a few tests sharing an id) per criterion.

Each test records its outcome through ``record_criterion`` before asserting,
so the terminal summary lists a PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest

from purify_lab import cli
from purify_lab.convexity import (
    Ensemble,
    caratheodory_reduce,
    definetti_check,
    iid_span_dim,
    quasiconc_check,
    sym_coordinates,
    sym_projector_rank,
)
from purify_lab.divergence import (
    classical_renyi,
    measured_bracket,
    sandwiched,
    spectrum_card,
    umegaki,
)
from purify_lab.io import write_matrix
from purify_lab.haar import (
    build_Rn,
    interleave_perm,
    random_symmetric_state,
    sample_haar,
    sample_haar_batch,
    symmetrize,
    twirl_basis,
    twirl_exact,
    twirl_mc,
)
from purify_lab.purifier import (
    apply_channel,
    check_cptp,
    purification_channel,
    rhs_random_purification,
    rhs_symmetric,
)
from purify_lab.tensor import (
    LabeledOperator,
    identity,
    mat_sqrt,
    partial_trace,
    random_hermitian,
    random_state,
    reorder_subsystems,
    tensor_power,
    tensor_product,
    trace_norm,
)
from purify_lab.uhlmann import (
    gap_scan,
    measured_corollary_check,
    optimizer_membership_residual,
    random_instance,
)

INF = math.inf
SEED = 2026
C6 = "divergences: oracle, continuity at 1 +- 1e-4, additivity, data processing"
C9 = "optimiser sequence: floor, membership, universality, gap(3) < gap(1) trend"


def streams(tag: int, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence([SEED, tag]).spawn(count)]


def conj(u, m):
    return LabeledOperator(u @ m @ u.conj().T, (u.shape[0],))


def report(failures, limit=5):
    """Print the first few failing cases so a red criterion explains itself."""
    for line in failures[:limit]:
        print(line)


def test_c01_channel_identity(record_criterion):
    start = time.perf_counter()
    worst = 0.0
    for d, n in [(2, 1), (2, 2), (3, 1), (3, 2), (2, 3)]:
        ch = purification_channel(d, n)
        for rng in streams(d * 10 + n, 20):
            rho = random_state(d, rng)
            lhs = apply_channel(ch, tensor_power(rho, n))
            worst = max(worst, trace_norm(lhs.entries - rhs_random_purification(rho, n).entries))
    elapsed = time.perf_counter() - start
    print(f"max trace-norm gap {worst:.3e}, runtime {elapsed:.2f}s")
    ok = worst <= 1e-9 and elapsed <= 60
    record_criterion(1, "channel identity on i.i.d. inputs (<= 1e-9, <= 60 s)", ok)
    assert ok


def test_c02_symmetric_inputs(record_criterion):
    worst = 0.0
    for n in (2, 3):
        ch = purification_channel(2, n)
        for rng in streams(100 + n, 10):
            rho = random_symmetric_state(2, n, rng)
            gap = trace_norm(apply_channel(ch, rho).entries - rhs_symmetric(rho, 2, n).entries)
            worst = max(worst, gap)
    print(f"max trace-norm gap {worst:.3e}")
    ok = worst <= 1e-9
    record_criterion(2, "channel identity on permutation-symmetric inputs", ok)
    assert ok


def test_c03_commutation(record_criterion):
    worst_comm = worst_sandwich = 0.0
    for n in (1, 2, 3):
        R = build_Rn(2, n)
        sR = mat_sqrt(R).entries
        perm = interleave_perm(n)
        for rng in streams(200 + n, 50):
            x = symmetrize(random_hermitian((2,) * n, rng), 2, n)
            y = symmetrize(random_hermitian((2,) * n, rng), 2, n)
            M = reorder_subsystems(tensor_product([x, y]), perm).entries
            worst_comm = max(worst_comm, np.linalg.norm(R.entries @ M - M @ R.entries, 2))
            rho = random_symmetric_state(2, n, rng)
            big = reorder_subsystems(tensor_product([rho, identity((2,) * n)]), perm)
            sr = mat_sqrt(big).entries
            diff = sr @ R.entries @ sr - sR @ big.entries @ sR
            worst_sandwich = max(worst_sandwich, np.linalg.norm(diff, 2))
    print(f"commutator {worst_comm:.3e}, sandwich {worst_sandwich:.3e}")
    ok = worst_comm <= 1e-9 and worst_sandwich <= 1e-9
    record_criterion(3, "R_n commutes with symmetric products; sqrt sandwich identity", ok)
    assert ok


def test_c04_cptp(record_criterion):
    reps = [check_cptp(purification_channel(2, n)) for n in (1, 2, 3)]
    for n, r in enumerate(reps, start=1):
        print(f"n={n}: min eig {r.cp_min_eig:.3e}, TP residual {r.tp_residual:.3e}")
    ok = all(r.cp_min_eig >= -1e-9 and r.tp_residual <= 1e-9 for r in reps)
    record_criterion(4, "purification channel is CPTP for d=2, n<=3", ok)
    assert ok


def test_c05_twirl_engine(record_criterion):
    rng = np.random.default_rng([SEED, 5])
    y = random_hermitian((2, 2), rng)
    exact = twirl_exact(y, twirl_basis(2, 2)).entries
    est, se = twirl_mc(y, 2, 2, 100_000, rng)
    z = np.abs(est.entries - exact) / np.maximum(se, 1e-300)
    mc_ok = bool(np.all(np.abs(est.entries - exact) <= 5 * se + 1e-12))

    us = sample_haar_batch(2, 100_000, rng)
    u00 = us[:, 0, 0]
    x = np.abs(u00) ** 2
    moments = [
        abs(x.mean() - 0.5) / (x.std(ddof=1) / math.sqrt(x.size)),
        abs(u00.mean()) / (math.sqrt(np.var(u00.real, ddof=1) + np.var(u00.imag, ddof=1)) / math.sqrt(u00.size)),
        abs((x**2).mean() - 1 / 3) / ((x**2).std(ddof=1) / math.sqrt(x.size)),
    ]
    print(f"max |z| twirl {z.max():.2f}, moment z-scores {[round(m, 2) for m in moments]}")
    ok = mc_ok and all(m <= 5 for m in moments)
    record_criterion(5, "exact twirl matches Monte Carlo; Haar moments within 5 stderr", ok)
    assert ok


def random_diag_pair(rng, d=3):
    return rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d))


def test_c06_classical_oracle(record_criterion):
    worst = 0.0
    for alpha in (0.3, 0.5, 2, 3, INF, 1):
        for rng in streams(600 + (99 if alpha == INF else int(10 * alpha)), 20):
            p, q = random_diag_pair(rng)
            u = sample_haar(3, rng).entries
            rho, sigma = conj(u, np.diag(p)), conj(u, np.diag(q))
            got = umegaki(rho, sigma).value if alpha == 1 else sandwiched(rho, sigma, alpha).value
            worst = max(worst, abs(got - classical_renyi(p, q, alpha).value))
    print(f"max oracle deviation {worst:.3e}")
    ok = worst <= 1e-9
    record_criterion(6, C6, ok)
    assert ok


def test_c06_alpha_continuity(record_criterion):
    failures, worst = [], 0.0
    pairs = streams(610, 100)
    for i, rng in enumerate(pairs):
        rho, sigma = random_state(2, rng), random_state(2, rng)
        u = umegaki(rho, sigma).value
        for a in (1 - 1e-4, 1 + 1e-4):
            dev = abs(sandwiched(rho, sigma, a).value - u)
            worst = max(worst, dev)
            if dev > 1e-4:
                failures.append(f"pair {i}: alpha={a}: |D_alpha - D| = {dev:.3e} (slope {dev / 1e-4:.2f})")
    print(f"{len(failures)} of {2 * len(pairs)} evaluations exceed 1e-4; max deviation {worst:.3e}")
    report(failures)
    ok = not failures
    record_criterion(6, C6, ok)
    assert ok, f"{len(failures)} evaluations exceed 1e-4"


def test_c06_additivity_and_data_processing(record_criterion):
    worst_add = worst_dpi = -INF
    for rng in streams(620, 50):
        r1, s1, r2, s2 = (random_state(2, rng) for _ in range(4))
        rab, sab = random_state((2, 2), rng), random_state((2, 2), rng)
        ra, sa = partial_trace(rab, [0]), partial_trace(sab, [0])
        worst_dpi = max(worst_dpi, umegaki(ra, sa).value - umegaki(rab, sab).value)
        for a in (0.5, 0.75, 1, 2, 3, INF):
            joint = sandwiched(tensor_product([r1, r2]), tensor_product([s1, s2]), a).value
            worst_add = max(worst_add, abs(joint - sandwiched(r1, s1, a).value - sandwiched(r2, s2, a).value))
            worst_dpi = max(worst_dpi, sandwiched(ra, sa, a).value - sandwiched(rab, sab, a).value)
    print(f"additivity {worst_add:.3e}, data-processing excess {worst_dpi:.3e}")
    ok = worst_add <= 1e-9 and worst_dpi <= 1e-8
    record_criterion(6, C6, ok)
    assert ok


QUASI_CELLS = [("umegaki", None)] + [("sandwiched", a) for a in (0.3, 0.5, 2, 3, 5)] + [
    ("measured-lower", a) for a in (0.5, 2)
]


def test_c07_quasiconcavity(record_criterion):
    failures = []
    for c, (kind, alpha) in enumerate(QUASI_CELLS):
        worst = INF
        for rng in streams(700 + c, 200):
            N = int(rng.integers(2, 7))
            ens = Ensemble.from_lists(rng.dirichlet(np.ones(N)), [random_state(2, rng) for _ in range(N)])
            r = quasiconc_check(kind, alpha, ens, random_state(2, rng))
            worst = min(worst, r.margin)
        print(f"{kind} alpha={alpha}: min margin {worst:.4f}")
        if worst < -1e-8:
            failures.append((kind, alpha, worst))
    worst_bracket = -INF
    for rng in streams(720, 100):
        rho, sigma = random_state(2, rng), random_state(2, rng)
        for a in (0.5, 2, 3, 5):
            b = measured_bracket(rho, sigma, a)
            excess = b.upper - b.pinching_value - b.eta_alpha * math.log2(spectrum_card(sigma))
            worst_bracket = max(worst_bracket, excess)
    print(f"bracket invariant max excess {worst_bracket:.3e}")
    ok = not failures and worst_bracket <= 1e-9
    record_criterion(7, "weak quasi-concavity margins; measured-bracket width bound", ok)
    assert ok, failures


def test_c08_caratheodory_and_span(record_criterion):
    worst_res, most = 0.0, 0
    for rng in streams(800, 50):
        N = int(rng.integers(12, 41))
        states = [tensor_power(random_state(2, rng), 2) for _ in range(N)]
        w = rng.dirichlet(np.ones(N))
        coords = np.array([sym_coordinates(s, 2, 2) for s in states])
        idx, nw = caratheodory_reduce(coords, w)
        target = sum(wi * s.entries for wi, s in zip(w, states))
        got = sum(wi * states[i].entries for wi, i in zip(nw, idx))
        worst_res = max(worst_res, float(np.abs(got - target).max()))
        most = max(most, len(idx))
    spans = {n: (iid_span_dim(2, n, 2 * sym_projector_rank(2, n) + 5, np.random.default_rng(n)),
                 sym_projector_rank(2, n)) for n in (1, 2, 3)}
    margins = []
    for kind, alpha in (("umegaki", None), ("sandwiched", 2), ("sandwiched", 0.5)):
        for rng in streams(810 + len(margins), 10):
            nu = Ensemble.from_lists(rng.dirichlet(np.ones(50)), [random_state(2, rng) for _ in range(50)])
            rep = definetti_check(nu, 2, tensor_power(random_state(2, rng), 2), kind, alpha)
            margins.append(rep.slack.margin)
    print(f"max survivors {most}, max residual {worst_res:.3e}, spans {spans}, min margin {min(margins):.4f}")
    ok = (most <= 11 and worst_res <= 1e-9 and all(a == b for a, b in spans.values())
          and min(margins) >= -1e-8)
    record_criterion(8, "Caratheodory reduction, i.i.d. span dimension, de Finetti margins", ok)
    assert ok


UHLMANN_CELLS = [("umegaki", None), ("sandwiched", 0.5), ("sandwiched", 2), ("sandwiched", INF)]


@pytest.fixture(scope="module")
def uhlmann_scans():
    out = []
    # the per-trial streams of `purify-lab uhlmann-scan --trials 50`
    for rng in cli.trial_rngs(SEED, 50):
        inst = random_instance(2, rng)
        out.append((inst, {cell: gap_scan(None, None, 3, *cell, instance=inst) for cell in UHLMANN_CELLS}))
    return out


def test_c09_floor_membership_universality(uhlmann_scans, record_criterion):
    floor = min(r.gap for _, scans in uhlmann_scans for recs in scans.values() for r in recs)
    membership = max(optimizer_membership_residual(inst.state(n), inst.sigma_a, n)
                     for inst, _ in uhlmann_scans for n in (1, 2, 3))
    universal = all(len({scans[c][k].state_digest for c in UHLMANN_CELLS}) == 1
                    for _, scans in uhlmann_scans for k in range(3))
    print(f"min gap {floor:.3e}, membership residual {membership:.3e}, universal digests {universal}")
    ok = floor >= -1e-8 and membership <= 1e-9 and universal
    record_criterion(9, C9, ok)
    assert ok


@pytest.mark.parametrize("cell", UHLMANN_CELLS, ids=lambda c: f"{c[0]}-{c[1]}")
def test_c09_gap_trend(cell, uhlmann_scans, record_criterion):
    shrinking, exceptions = 0, []
    for i, (_, scans) in enumerate(uhlmann_scans):
        recs = scans[cell]
        if recs[2].gap < recs[0].gap:
            shrinking += 1
        else:
            exceptions.append(f"instance {i}: gap(1)={recs[0].gap:.6f} gap(3)={recs[2].gap:.6f}")
    total = len(uhlmann_scans)
    print(f"{cell}: gap(3) < gap(1) on {shrinking}/{total}")
    report(exceptions)
    ok = shrinking >= 0.9 * total
    record_criterion(9, C9, ok)
    assert ok, f"trend holds on {shrinking}/{total} instances"


def test_c10_measured_chain(record_criterion):
    failures = []
    for alpha in (0.5, 2):
        for i, rng in enumerate(streams(1000 + int(10 * alpha), 50)):
            inst = random_instance(2, rng)
            rep = measured_corollary_check(None, None, alpha, 2, 1e-8, instance=inst)
            if not rep.passed:
                failures.append((alpha, i, rep.to_dict()))
    print(f"{len(failures)} failing instances")
    ok = not failures
    record_criterion(10, "measured-divergence chain holds on random instances", ok)
    assert ok, failures[:3]


def test_c11_cli_determinism(tmp_path, capsys, record_criterion):
    rng = np.random.default_rng(11)
    write_matrix(random_state(2, rng), tmp_path / "r.json")
    write_matrix(random_state(2, rng), tmp_path / "s.json")
    runs = [
        ["verify-channel", "--d", "2", "--n", "3", "--seed", "5"],
        ["divergence", "--kind", "measured", "--alpha", "2",
         "--rho", str(tmp_path / "r.json"), "--sigma", str(tmp_path / "s.json")],
        ["quasiconcavity", "--kind", "measured-lower", "--alpha", "2", "--seed", "5"],
        ["caratheodory", "--kind", "sandwiched", "--alpha", "2", "--seed", "5"],
        ["uhlmann-scan", "--divergence", "sandwiched", "--alpha", "2", "--trials", "2", "--seed", "5"],
        ["measured-chain", "--trials", "2", "--seed", "5"],
    ]
    mismatched = []
    for k, argv in enumerate(runs):
        outputs = []
        for rep in range(2):
            path = tmp_path / f"{k}-{rep}.json"
            extra = ["--csv", str(tmp_path / f"{k}-{rep}.csv")] if argv[0] == "uhlmann-scan" else []
            capsys.readouterr()
            code = cli.run(argv + ["--json", str(path)] + extra)
            stdout = capsys.readouterr().out
            files = path.read_bytes() + (b"".join(p.read_bytes() for p in tmp_path.glob(f"{k}-{rep}.csv")))
            outputs.append((code, stdout, files))
        if outputs[0] != outputs[1]:
            mismatched.append(argv[0])
    print(f"non-deterministic subcommands: {mismatched}")
    ok = not mismatched
    record_criterion(11, "CLI reports are byte-identical across repeated seeded runs", ok)
    assert ok
