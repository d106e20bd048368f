"""Acceptance criteria at full size and stated tolerances.

Each test prints one ``PASS``/``FAIL`` line and adds it to the terminal summary.
Run just this module with ``pytest tests/test_acceptance.py -v -s``.
"""

import time

import numpy as np
import pytest

from lrdlab.cli import main
from lrdlab.config import EXPERIMENTS, ExperimentConfig
from lrdlab.experiments import (
    CDF_GRID,
    _mean_check,
    attention_sweep,
    cdf_check,
    decay_sweep,
    interaction_lrd_sweep,
    run_lrd_profile,
    scan_unroll_sweep,
    ssm_lrd_sweep,
    stability_reports,
    tail_check,
)
from lrdlab.numerics import DEFAULT_QUADRATURE_ORDER
from lrdlab.stability import estimate_subexponential_params, mgf_slack

pytestmark = pytest.mark.slow


def record(request, number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}"
    request.config._acceptance_lines.append(line)
    print(line)
    return passed


def timed(fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - start


def run_sweep(request, number, title, sweep, limit, **overrides):
    config = ExperimentConfig(**overrides)
    (table, check), elapsed = timed(sweep, config)
    ok = check.passed and elapsed < limit
    detail = (f"{check.instances} instances, worst {check.worst:.3e} < {check.tolerance:g}, "
              f"{elapsed:.1f}s < {limit}s")
    assert record(request, number, title, ok, detail)
    return table


def test_01_ssm_lrd_matches_finite_differences(request):
    table = run_sweep(request, 1, "SSM LRD closed form vs FD", ssm_lrd_sweep, 30)
    assert len(table) == 100
    assert max(table.column("dim")) <= 8 and max(table.column("T")) <= 32 and max(table.column("k")) <= 16


def test_02_interaction_lrd_matches_finite_differences(request):
    run_sweep(request, 2, "interaction LRD closed form vs FD", interaction_lrd_sweep, 60)


def test_03_attention_jacobian_matches_finite_differences(request):
    table = run_sweep(request, 3, "attention Jacobian vs FD", attention_sweep, 30)
    assert max(table.column("T")) <= 8 and max(table.column("dim")) <= 4


def test_04_one_step_decay_bound(request):
    config = ExperimentConfig()
    (table, check), _ = timed(decay_sweep, config)
    ks = set(table.column("k"))
    ok = check.passed and max(ks) + 1 == 64 and len(set(table.column("instance"))) == 100
    detail = f"{len(table)} (instance, k) pairs for k+1 <= 64, worst relative excess {check.worst:.3e} (tol 1e-9)"
    assert record(request, 4, "one-step decay bound", ok, detail)


def test_05_scan_equals_unroll(request):
    table = run_sweep(request, 5, "scan vs unrolled expansion", scan_unroll_sweep, 600)
    assert len(table) == 200
    assert max(table.column("H")) <= 8 and max(table.column("T")) <= 64


def test_06_lrd_profile_shapes(request):
    config = ExperimentConfig(experiment="lrd-profile", plots=False)
    bundle, elapsed = timed(run_lrd_profile, config)
    s = bundle.summary
    witness = s["first_non_monotone_seed"]
    ok = s["ssm_envelope_holds"] and witness is not None and elapsed < 120
    detail = (f"SSM envelope holds={s['ssm_envelope_holds']}, interior peak (k>10) in "
              f"{s['non_monotone_seeds']}/{config.sweep_seeds} seeds, first seed {witness} "
              f"peaks at k={s['witness_peak_k']}, {elapsed:.1f}s < 120s")
    assert record(request, 6, "LRD profile envelope and non-monotone witness", ok, detail)


@pytest.fixture(scope="module")
def full_reports():
    config = ExperimentConfig(experiment="stability-histogram")
    reports, elapsed = timed(stability_reports, config)
    return config, reports, elapsed


def test_07_log_product_histograms(request, full_reports):
    config, reports, elapsed = full_reports
    assert DEFAULT_QUADRATURE_ORDER == 96
    assert [(r.channel.lambda_h, r.channel.gamma, r.t, r.n_samples) for r in reports] == [
        (0.9, 0.099, 10_000, 10_000), (0.5, 0.499, 10_000, 10_000)]
    check = _mean_check(reports)
    fractions = [float(np.mean(r.samples < 0)) for r in reports]
    ok = check.passed and elapsed < 120
    detail = (f"negative fraction {fractions}, worst |mean - t mu| = {check.worst:.2f} SE (< 4), "
              f"{elapsed:.1f}s < 120s")
    assert record(request, 7, "log-product histograms", ok, detail)


def test_08_tail_bound(request, full_reports):
    config, reports, _ = full_reports
    tails, params, check = tail_check(config, reports)
    slacks = []
    for r in reports:
        p = estimate_subexponential_params(r.channel.lambda_h, r.channel.gamma)
        slacks.append(float(mgf_slack(r.channel.lambda_h, r.channel.gamma, p).min()))
    held = all(tails.column("holds"))
    ok = check.passed and held and min(slacks) >= -1e-9
    nu_b = list(zip(params.column("nu"), params.column("b")))
    detail = (f"(nu, b) = {nu_b}, min MGF slack {min(slacks):.2e} >= -1e-9, "
              f"tail bound holds at all {len(tails)} (channel, z) points: {held}")
    assert record(request, 8, "sub-exponential tail bound", ok, detail)


def test_09_chi_square_cdf_below_sqrt(request):
    table, check = cdf_check()
    v = np.array(table.column("v"))
    ok = check.passed and check.worst > 0 and v.min() == pytest.approx(1e-8) and v.max() == pytest.approx(1e3)
    detail = f"{len(CDF_GRID)} log-spaced points in [1e-8, 1e3], smallest margin {check.worst:.3e} > 0"
    assert record(request, 9, "chi-square CDF < sqrt(v)", ok, detail)


DETERMINISM_SIZES = {
    "H": 8, "T": 80, "t": 20, "k_max": 50, "sweep_seeds": 6,
    "instances": 12, "equivalence_instances": 12, "decay_k_max": 20,
    "horizon": 3000, "n_samples": 64, "seed": 987654321,
}


def test_10_byte_identical_across_workers(request, tmp_path):
    mismatched, compared = [], 0
    for experiment in EXPERIMENTS:
        outputs = {}
        for workers in (1, 4):
            cfg = ExperimentConfig(experiment=experiment, workers=workers, **DETERMINISM_SIZES)
            path = tmp_path / f"{experiment}-{workers}.json"
            path.write_text(cfg.to_json())
            out = tmp_path / f"{experiment}-w{workers}"
            assert main([experiment, "--config", str(path), "--out", str(out), "--no-plots"]) == 0
            outputs[workers] = {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}
        assert outputs[1].keys() == outputs[4].keys() and outputs[1]
        for name in outputs[1]:
            compared += 1
            if outputs[1][name] != outputs[4][name]:
                mismatched.append(f"{experiment}/{name}")
    ok = not mismatched
    detail = f"{compared} CSV files across {len(EXPERIMENTS)} experiments, 1 vs 4 workers, mismatches: {mismatched or 'none'}"
    assert record(request, 10, "byte-identical CSVs across worker counts", ok, detail)
