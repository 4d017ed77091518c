"""Acceptance criteria 1-10, one PASS/FAIL line each (shown in the terminal summary).

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are also
printed inline with ``-s``.
"""
import time

import numpy as np
import pytest

from conftest import record
from wavemaslov.bundle_tracker import pairing_series
from wavemaslov.evans_function import evans, real_roots, winding_count
from wavemaslov.fd_oracle import assemble, oracle_eigs, richardson, translation_mode_error
from wavemaslov.linearization import asymptotic_system, closed_form_mu, rest_modes
from wavemaslov.maslov_index import SAFETY, maslov_of_wave, z_crossings

POSITIVE = 1e-4
LOCATION_TOL = 5e-3
ORACLE_SPACING = 0.1


@pytest.fixture(scope="module")
def fixtures(scalar, fhn):
    return {"scalar": scalar, "fhn": fhn}


@pytest.fixture(scope="module")
def roots(fixtures):
    return {k: real_roots(f.cache, (0.0, f.lambda_max))[0] for k, f in fixtures.items()}


@pytest.fixture(scope="module")
def oracle(fixtures):
    out = {}
    for k, f in fixtures.items():
        if k == "scalar":
            op = assemble(f.system, f.profile, "L", M=1600)
        else:
            M = int(np.ceil(2 * f.profile.L / ORACLE_SPACING))
            op = assemble(f.system, f.profile, "Lc", M=M)
        w, v = oracle_eigs(op, vectors=True)
        out[k] = (op, w, v)
    return out


def test_criterion_01_weighted_pairing_is_conserved(fixtures):
    t0 = time.time()
    rng = np.random.default_rng(7)
    worst = {}
    for name, f in fixtures.items():
        n = f.system.n
        drift = 0.0
        for lam in np.linspace(0.0, f.lambda_max, 5):
            U, S = f.cache.unstable(lam), f.cache.stable(lam)
            for _ in range(20):
                lg, sg = pairing_series(U, S, rng.standard_normal(n), rng.standard_normal(n),
                                        f.profile.c)
                ref = lg.size // 2
                drift = max(drift, float(np.max(np.abs(sg * np.exp(lg - lg[ref]) - sg[ref]))))
            f.cache.forget()
        worst[name] = drift
    ok = all(d < 1e-6 for d in worst.values())
    record(1, ok, f"max relative drift fhn={worst['fhn']:.2e} scalar={worst['scalar']:.2e} "
                  f"(< 1e-6), {time.time() - t0:.0f}s")
    assert ok


def test_criterion_02_bundles_are_lagrangian(fhn):
    t0 = time.time()
    worst = 0.0
    for lam in np.linspace(0.0, fhn.lambda_max, 50):
        for traj in (fhn.cache.unstable(lam), fhn.cache.stable(lam)):
            worst = max(worst, float(traj.defects().max()))
        fhn.cache.forget()
    ok = worst < 1e-8
    record(2, ok, f"max Lagrangian defect over 50 lambdas = {worst:.2e} (< 1e-8), "
                  f"{time.time() - t0:.0f}s")
    assert ok


def test_criterion_03_asymptotic_exponents(fhn):
    c = fhn.profile.c
    n = fhn.system.n
    nu = rest_modes(fhn.system)[0]
    ordered, literal, per_mode = True, 0.0, 0.0
    for lam in np.linspace(0.0, fhn.lambda_max, 100):
        mu = asymptotic_system(fhn.system, c, lam).mu
        ordered &= bool(mu[0] < mu[1] < 0 < -c < mu[2] < mu[3])
        literal = max(literal, float(np.max(np.abs(mu[:n] + mu[n:] + c))))
        ms, mu_u = closed_form_mu(c, lam, nu)
        per_mode = max(per_mode, float(np.max(np.abs(ms + mu_u + c))))
    ok = ordered and literal < 1e-12
    record(3, ok, f"ordering {'holds' if ordered else 'fails'}; sorted-label pairing "
                  f"max|mu_i+mu_(i+n)+c| = {literal:.2e}; same-mode pairing {per_mode:.1e}")
    assert ordered and per_mode < 1e-12
    # the sorted labels pair exponents from different rest modes
    assert literal < 1e-12


def test_criterion_04_translation_eigenvalue(fhn, roots):
    s = evans(fhn.cache, 0.0)
    endpoint = [c for c in fhn.box.crossings if c.kind == "z" and c.position == "right"][0]
    align = endpoint.info["alignment"]
    zero = [r for r in roots["fhn"] if abs(r.lambda_star) < POSITIVE]
    r0 = zero[0] if zero else None
    ok = (abs(s.normalized) < 1e-6 and abs(1 - align) < 1e-6 and r0 is not None
          and r0.order == 1 and abs(r0.dprime) > r0.info["floor_dprime"])
    record(4, ok, f"|D(0)|/g = {abs(s.normalized):.1e}, 1-alignment = {abs(1 - align):.1e}, "
                  f"order {r0.order if r0 else None}, |D'(0)| = {abs(r0.dprime) if r0 else 0:.3g} "
                  f"vs floor {r0.info['floor_dprime'] if r0 else 0:.1e}")
    assert ok


def test_criterion_05_box_identity(fixtures):
    t0 = time.time()
    lines, ok = [], True
    for name, f in fixtures.items():
        box = f.box
        m3, m4 = box.certificates["side3_margin"], box.certificates["side4_margin"]
        good = sum(box.mu) == 0 and box.mu[2:] == [0, 0] and min(m3, m4) >= SAFETY
        ok &= good
        lines.append(f"{name} mu={box.mu} margins {m3:.1e}/{m4:.1e}")
    record(5, ok, "; ".join(lines) + f", {time.time() - t0:.0f}s")
    assert ok


def test_criterion_06_monotone_lambda_crossings(fhn):
    c, eps = fhn.profile.c, fhn.system.params["eps"]
    regime = eps < c ** 4 / 16
    forms = [c_ for c_ in fhn.box.crossings if c_.kind == "lambda"]
    smallest = min(float(np.linalg.eigvalsh(np.atleast_2d(c_.form)).min()) for c_ in forms)
    ok = regime and smallest > 0
    record(6, ok, f"eps={eps} < c^4/16={c ** 4 / 16:.3e}: {regime}; {len(forms)} lambda-crossings, "
                  f"smallest form eigenvalue {smallest:.3e}")
    assert ok


def test_criterion_07_maslov_equals_morse(fixtures, roots, oracle):
    lines, ok = [], True
    for name, f in fixtures.items():
        box = f.box
        pos = [r for r in roots[name] if r.lambda_star > POSITIVE]
        n_evans = sum(r.order for r in pos)
        w = oracle[name][1]
        n_oracle = int(np.sum(w.real > POSITIVE))
        good = abs(box.mu[0]) == box.mu[1] == n_evans == n_oracle
        in_range = w[(w.real >= -LOCATION_TOL) & (w.real <= f.lambda_max)]
        for r in roots[name]:
            good &= bool(in_range.size and np.min(np.abs(in_range - r.lambda_star)) < LOCATION_TOL)
        for e in in_range:
            good &= any(abs(e - r.lambda_star) < LOCATION_TOL for r in roots[name])
        ok &= good
        lines.append(f"{name}: |mu1|={abs(box.mu[0])} mu2={box.mu[1]} evans={n_evans} "
                     f"oracle={n_oracle}")
    ok &= len([r for r in roots["scalar"] if r.lambda_star > POSITIVE]) == 1
    record(7, ok, "; ".join(lines))
    assert ok


def test_criterion_08_realness(fixtures, roots, oracle):
    t0 = time.time()
    lines, ok = [], True
    for name, f in fixtures.items():
        count = winding_count(f.cache, (-1e-3, f.lambda_max, -1.0, 1.0))
        total = sum(r.order for r in roots[name])
        w = oracle[name][1]
        rhp = w[w.real > 0]
        imag = float(np.max(np.abs(rhp.imag))) if rhp.size else 0.0
        good = count == total and imag < 1e-8
        ok &= good
        lines.append(f"{name}: winding={count} real-root order={total} max|Im|={imag:.0e}")
    record(8, ok, "; ".join(lines) + f", {time.time() - t0:.0f}s")
    assert ok


def test_criterion_09_tau_independence(fixtures):
    lines, ok = [], True
    for name, f in fixtures.items():
        box = f.box
        k = int(np.argmin(np.abs(f.cache.grid - box.tau)))
        again = maslov_of_wave(z_crossings(f.cache, k + 1))
        good = again == box.maslov
        ok &= good
        lines.append(f"{name}: tau={box.tau:.4g} -> {f.cache.grid[k + 1]:.4g}, "
                     f"Maslov {box.maslov} -> {again}")
    record(9, ok, "; ".join(lines))
    assert ok


def test_criterion_10_oracle_convergence(scalar):
    values = []
    for M in (400, 800, 1600):
        w = oracle_eigs(assemble(scalar.system, scalar.profile, "L", M=M))
        values.append(float(w[0].real))
    ext, order = richardson(values)
    spread = float(abs(ext[1] - ext[0]))
    ok = abs(order - 2) < 0.1 and spread < 1e-5
    record(10, ok, f"eigenvalues {values[0]:.9f}/{values[1]:.9f}/{values[2]:.9f}, observed order "
                   f"{order:.3f}, extrapolants {ext[0]:.9f}/{ext[1]:.9f} differ by {spread:.1e}")
    assert ok


def test_translation_mode_of_oracle(oracle, fixtures):
    for name, (op, w, v) in oracle.items():
        k = int(np.argmin(np.abs(w)))
        assert abs(w[k]) < POSITIVE
        assert translation_mode_error(op, fixtures[name].profile, v[:, k]) < 5e-3
