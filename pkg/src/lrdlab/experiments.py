"""Experiment runners: LRD profiles, stability histograms and the verification suite.

Every runner takes an :class:`ExperimentConfig` and returns a
:class:`ResultBundle`; nothing here touches the filesystem. All randomness is
addressed through ``RandomStream(config.seed)`` children, one fixed child index
per experiment family, so reruns (with any worker count) are bit-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from lrdlab import __version__
from lrdlab.attention import attention_lrd
from lrdlab.config import ExperimentConfig
from lrdlab.errors import InvalidArgumentError
from lrdlab.instances import draw_ssm, random_attention_instance, random_scalar_instance, _normal, _randint
from lrdlab.interaction import InteractionParams, interaction_scan, interaction_unroll
from lrdlab.lrd import (
    AttentionModel,
    InteractionModel,
    LrdQuery,
    SsmModel,
    check_decay_bound,
    has_interior_peak,
    lrd_finite_difference,
    lrd_interaction_closed_form,
    lrd_profile,
    lrd_ssm_closed_form,
)
from lrdlab.numerics import GENERATOR_NAME, NORMAL_TRANSFORM_NAME, RandomStream, sample_uniform
from lrdlab.output import Table, histogram_svg, line_plot_svg
from lrdlab.ssm import ContinuousSsm, SelectiveStep, discretize_sequence
from lrdlab.stability import (
    ChannelParams,
    chi_square_cdf_check,
    empirical_tail_check,
    estimate_subexponential_params,
    mc_histogram,
    mgf_slack,
)

# child stream index per experiment family
_STREAM = {
    "ssm-lrd-fd": 1,
    "interaction-lrd-fd": 2,
    "attention-fd": 3,
    "decay-check": 4,
    "theorem1-equivalence": 5,
    "stability": 6,
}

TOLERANCES = {
    "ssm-lrd-fd": 1e-5,
    "interaction-lrd-fd": 1e-5,
    "attention-fd": 1e-6,
    "decay-check": 1e-9,
    "theorem1-equivalence": 1e-10,
    "mgf-slack": -1e-9,
    "mean-se": 4.0,
}

CDF_GRID = np.logspace(-8, 3, 221)


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    instances: int
    detail: str = ""


@dataclass
class ResultBundle:
    config: ExperimentConfig
    tables: dict[str, Table] = field(default_factory=dict)
    plots: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    checks: list[CheckResult] = field(default_factory=list)
    status: str = "ok"  # ok | warning | failed

    def metadata(self) -> dict:
        return {
            "generator": GENERATOR_NAME,
            "normal_transform": NORMAL_TRANSFORM_NAME,
            "code_version": __version__,
            "format_version": self.config.format_version,
        }

    def meta_document(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "metadata": self.metadata(),
            "status": self.status,
            "summary": self.summary,
            "tables": {name: len(t) for name, t in self.tables.items()},
        }


def _root(config: ExperimentConfig) -> RandomStream:
    return RandomStream(config.seed)


def _map(fn: Callable, items, workers: int) -> list:
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b)) / scale


# -- LRD profiles ------------------------------------------------------------


@dataclass(frozen=True)
class ProfileInstance:
    ssm: ContinuousSsm
    lambda1: float
    params: InteractionParams
    inputs: np.ndarray


def profile_instance(config: ExperimentConfig, seed: int) -> ProfileInstance:
    """A: stable with eigenvalues in [eig_low, eig_high]; B, C, g, w ~ N(0, 1/H); x ~ N(0, 1)."""
    stream = RandomStream(seed % 2**64)
    H = config.H
    ssm, lambda1 = draw_ssm(stream, H, eig_range=(config.eig_low, config.eig_high), delta=config.delta)
    scale = 1.0 / math.sqrt(H)
    g = config.g_scale * _normal(stream.child(2), (H,), scale)
    w = _normal(stream.child(3), (H,), scale)
    x = _normal(stream.child(4), (config.T,))
    return ProfileInstance(ssm, lambda1, InteractionParams(ssm, g, w), x)


def profile_pair(config: ExperimentConfig, seed: int) -> tuple[np.ndarray, np.ndarray, float]:
    inst = profile_instance(config, seed)
    ssm = lrd_profile(SsmModel(inst.ssm, inst.inputs), config.t, config.k_max).norms
    inter = lrd_profile(InteractionModel(inst.params, inst.inputs), config.t, config.k_max).norms
    return ssm, inter, inst.lambda1


def run_lrd_profile(config: ExperimentConfig) -> ResultBundle:
    bundle = ResultBundle(config)
    ssm, inter, lambda1 = profile_pair(config, config.seed)
    ks = np.arange(config.k_max + 1)
    envelope = np.exp(lambda1 * config.delta * ks) * ssm[0]
    envelope_ok = bool(np.all(ssm <= envelope * (1 + 1e-9)))
    bundle.tables["profile.csv"] = Table(
        ["k", "norm_ssm", "norm_interaction"],
        [[int(k), float(ssm[k]), float(inter[k])] for k in range(1, config.k_max + 1)],
    )

    def sweep(i):
        s = (config.seed + i) % 2**64
        _, prof, _ = profile_pair(config, s)
        if len(prof) <= 11:
            return [s, False, False, -1, 0.0]
        peak_k = int(np.argmax(prof[11:])) + 11
        return [s, has_interior_peak(prof, 10), bool(prof[peak_k] > prof[10]), peak_k, float(prof[peak_k])]

    rows = _map(sweep, range(config.sweep_seeds), config.workers)
    bundle.tables["sweep.csv"] = Table(["seed", "interior_peak", "exceeds_k10", "argmax_k_gt10", "max_norm_k_gt10"], rows)
    witness = next((r for r in rows if r[1]), None)
    bundle.summary = {
        "lambda1": lambda1,
        "ssm_envelope_holds": envelope_ok,
        "first_non_monotone_seed": witness[0] if witness else None,
        "witness_peak_k": witness[3] if witness else None,
        "non_monotone_seeds": sum(1 for r in rows if r[1]),
    }
    if not envelope_ok:
        bundle.status = "failed"
    elif witness is None:
        bundle.status = "warning"
        bundle.summary["warning"] = f"no interior peak at k > 10 in {config.sweep_seeds} seeds"
    if config.plots:
        bundle.plots["profile.svg"] = line_plot_svg(
            list(range(1, config.k_max + 1)),
            {"SSM": ssm[1:].tolist(), "interaction": inter[1:].tolist()},
            title=f"LRD norm, t={config.t}, seed={config.seed}",
            xlabel="gap k",
            ylabel="||LRD(t+k, t)||",
            log_y=True,
        )
    return bundle


# -- oracle sweeps -----------------------------------------------------------


def _ssm_fault(steps, t, k):
    """Closed form with the sign of the first transition factor flipped."""
    v = steps[t - 1].b_bar.copy()
    for n, j in enumerate(range(t + 1, t + k + 1)):
        a = -steps[j - 1].a_bar if n == 0 else steps[j - 1].a_bar
        v = a @ v
    return v


def ssm_lrd_sweep(config: ExperimentConfig) -> tuple[Table, CheckResult]:
    closed = _ssm_fault if config.fault_injection == "ssm-lrd-sign" else lrd_ssm_closed_form
    root = _root(config).child(_STREAM["ssm-lrd-fd"])

    def one(i):
        inst = random_scalar_instance(root.child(i), max_H=8, max_T=32, max_k=16, interaction=False)
        steps = discretize_sequence(inst.ssm, inst.inputs)
        cf = closed(steps, inst.t, inst.k)
        fd = lrd_finite_difference(LrdQuery(SsmModel(inst.ssm, inst.inputs, inst.h0), inst.t, inst.k))
        return [i, inst.ssm.dim, len(inst.inputs), inst.t, inst.k, _rel_err(cf, fd)]

    return _sweep_table("ssm-lrd-fd", one, config)


def interaction_lrd_sweep(config: ExperimentConfig) -> tuple[Table, CheckResult]:
    root = _root(config).child(_STREAM["interaction-lrd-fd"])

    def one(i):
        inst = random_scalar_instance(root.child(i), max_H=8, max_T=32, max_k=16, interaction=True)
        cf = lrd_interaction_closed_form(inst.params, inst.inputs, inst.h0, inst.t, inst.k)
        fd = lrd_finite_difference(LrdQuery(InteractionModel(inst.params, inst.inputs, inst.h0), inst.t, inst.k))
        return [i, inst.params.dim, len(inst.inputs), inst.t, inst.k, _rel_err(cf, fd)]

    return _sweep_table("interaction-lrd-fd", one, config)


def attention_sweep(config: ExperimentConfig) -> tuple[Table, CheckResult]:
    root = _root(config).child(_STREAM["attention-fd"])

    def one(i):
        inst = random_attention_instance(root.child(i), max_T=8, max_d=config.d)
        cf = attention_lrd(inst.inputs, inst.params, inst.masking, inst.t, inst.k)
        fd = lrd_finite_difference(LrdQuery(AttentionModel(inst.params, inst.inputs, inst.masking), inst.t, inst.k))
        return [i, inst.params.dim, len(inst.inputs), inst.t, inst.k, _rel_err(cf, fd)]

    return _sweep_table("attention-fd", one, config)


def _sweep_table(name: str, one: Callable, config: ExperimentConfig) -> tuple[Table, CheckResult]:
    tol = TOLERANCES[name]
    rows = _map(one, range(config.instances), config.workers)
    rows = [r + [r[-1] < tol] for r in rows]
    table = Table(["instance", "dim", "T", "t", "k", "rel_err", "passed"], rows)
    worst = max(r[5] for r in rows)
    return table, CheckResult(name, all(r[-1] for r in rows), worst, tol, len(rows))


def scan_unroll_sweep(config: ExperimentConfig) -> tuple[Table, CheckResult]:
    root = _root(config).child(_STREAM["theorem1-equivalence"])
    tol = TOLERANCES["theorem1-equivalence"]

    def one(i):
        inst = random_scalar_instance(
            root.child(i), max_H=8, max_T=64, max_k=63, interaction=True, contractive=True
        )
        a = interaction_scan(inst.params, inst.inputs, inst.h0).states
        b = interaction_unroll(inst.params, inst.inputs, inst.h0).states
        dev = float(np.max(np.abs(a - b)))
        return [i, inst.params.dim, len(inst.inputs), dev, dev < tol]

    rows = _map(one, range(config.equivalence_instances), config.workers)
    table = Table(["instance", "H", "T", "max_abs_dev", "passed"], rows)
    worst = max(r[3] for r in rows)
    return table, CheckResult("theorem1-equivalence", all(r[4] for r in rows), worst, tol, len(rows))


def decay_sweep(config: ExperimentConfig) -> tuple[Table, CheckResult]:
    """Odd instances use input-dependent steps; the one-step bound holds for both policies."""
    root = _root(config).child(_STREAM["decay-check"])
    k_max = config.decay_k_max
    tol = TOLERANCES["decay-check"]

    def one(i):
        stream = root.child(i)
        H = _randint(stream.child(10), 1, 8)
        delta = 0.1 + 0.9 * float(sample_uniform(stream.child(14), 1)[0])
        ssm, lambda1 = draw_ssm(stream, H, delta=delta)
        if i % 2:
            a, c = (float(v) for v in _normal(stream.child(7), (2,)))
            ssm = ContinuousSsm(ssm.A, ssm.B, ssm.C, SelectiveStep(a, c))
        x = _normal(stream.child(4), (k_max + 1,))
        steps = discretize_sequence(ssm, x)
        report = check_decay_bound(steps, 1, k_max, lambda1, rel_tol=tol)
        return [[i, r.k, r.lhs, r.rhs, r.holds] for r in report]

    rows = [row for part in _map(one, range(config.instances), config.workers) for row in part]
    table = Table(["instance", "k", "lhs", "rhs", "holds"], rows)
    # worst relative excess of lhs over rhs (negative when the bound holds with room)
    worst = max((r[2] - r[3]) / r[3] if r[3] > 0 else 0.0 for r in rows)
    return table, CheckResult("decay-check", all(r[4] for r in rows), worst, tol, config.instances)


# -- stability histograms and tail bounds ------------------------------------


def _channels(config: ExperimentConfig) -> list[ChannelParams]:
    return [ChannelParams(float(l), float(g)) for l, g in config.channels]


def stability_reports(config: ExperimentConfig):
    root = _root(config).child(_STREAM["stability"])
    return [
        mc_histogram(ch, config.horizon, config.n_samples, root.child(i), workers=config.workers)
        for i, ch in enumerate(_channels(config))
    ]


def _mean_check(reports) -> CheckResult:
    # single-sample reports have no standard error; only the sign is checked there
    deviations = [r.mean_deviation_in_se for r in reports if r.n_samples > 1]
    worst = max(deviations, default=0.0)
    negative = all(bool(np.all(r.samples < 0)) for r in reports)
    ok = negative and worst <= TOLERANCES["mean-se"]
    detail = "all sums negative" if negative else "some sums non-negative"
    if len(deviations) < len(reports):
        detail += "; mean test skipped for single-sample channels"
    return CheckResult("log-product-mean", ok, worst, TOLERANCES["mean-se"], len(reports), detail)


def run_stability_histogram(config: ExperimentConfig) -> ResultBundle:
    bundle = ResultBundle(config)
    reports = stability_reports(config)
    hist_rows, summary_rows = [], []
    for n, rep in enumerate(reports):
        ch = rep.channel
        for lo, hi, c in zip(rep.bin_edges[:-1], rep.bin_edges[1:], rep.counts):
            hist_rows.append([ch.lambda_h, ch.gamma, float(lo), float(hi), int(c)])
        summary_rows.append([
            ch.lambda_h, ch.gamma, rep.t, rep.n_samples, rep.mean, rep.stdev, rep.min, rep.max,
            rep.mu_quadrature, rep.t * rep.mu_quadrature, rep.mean_deviation_in_se,
            float(np.mean(rep.samples < 0)),
        ])
        if config.plots:
            bundle.plots[f"histogram_{n}.svg"] = histogram_svg(
                rep.bin_edges.tolist(), rep.counts.tolist(),
                title=f"sum of log(lambda_H + gamma x^2): lambda_H={ch.lambda_h}, gamma={ch.gamma}, t={rep.t}",
                xlabel="log product",
            )
    bundle.tables["histogram.csv"] = Table(["lambda_h", "gamma", "bin_left", "bin_right", "count"], hist_rows)
    bundle.tables["summary.csv"] = Table(
        ["lambda_h", "gamma", "t", "n_samples", "mean", "stdev", "min", "max", "mu_quadrature", "t_mu",
         "deviation_se", "fraction_negative"],
        summary_rows,
    )
    check = _mean_check(reports)
    bundle.checks.append(check)
    bundle.summary = {"all_negative": check.detail.startswith("all sums negative"), "worst_deviation_se": check.worst}
    return bundle


def tail_check(config: ExperimentConfig, reports=None) -> tuple[Table, Table, CheckResult]:
    reports = reports if reports is not None else stability_reports(config)
    tail_rows, param_rows = [], []
    ok = True
    worst_slack = math.inf
    for rep in reports:
        ch = rep.channel
        params = estimate_subexponential_params(ch.lambda_h, ch.gamma)
        slack = float(np.min(mgf_slack(ch.lambda_h, ch.gamma, params)))
        worst_slack = min(worst_slack, slack)
        param_rows.append([ch.lambda_h, ch.gamma, params.nu, params.b, slack])
        ok &= slack >= TOLERANCES["mgf-slack"]
        for c in empirical_tail_check(rep, params, ch, config.z_grid):
            tail_rows.append([ch.lambda_h, ch.gamma, c.z, c.empirical, c.bound, c.holds])
            ok &= c.holds
    tails = Table(["lambda_h", "gamma", "z", "empirical", "bound", "holds"], tail_rows)
    params = Table(["lambda_h", "gamma", "nu", "b", "min_mgf_slack"], param_rows)
    return tails, params, CheckResult("tail-check", bool(ok), worst_slack, TOLERANCES["mgf-slack"], len(reports))


def run_tail_check(config: ExperimentConfig) -> ResultBundle:
    bundle = ResultBundle(config)
    tails, params, check = tail_check(config)
    bundle.tables["tailcheck.csv"] = tails
    bundle.tables["subexponential.csv"] = params
    bundle.checks.append(check)
    return bundle


def cdf_check() -> tuple[Table, CheckResult]:
    rows = [[c.v, c.cdf, c.sqrt_v, c.sqrt_v - c.cdf, c.holds] for c in chi_square_cdf_check(CDF_GRID)]
    worst = min(r[3] for r in rows)
    return Table(["v", "cdf", "sqrt_v", "margin", "holds"], rows), CheckResult(
        "chi-square-cdf", all(r[4] for r in rows), worst, 0.0, len(rows))


# -- verification suite ------------------------------------------------------

SUITE_CHECKS = (
    "ssm-lrd-fd",
    "interaction-lrd-fd",
    "attention-fd",
    "decay-check",
    "theorem1-equivalence",
    "log-product-mean",
    "tail-check",
    "chi-square-cdf",
)


def selected_checks(filter_spec: str | None) -> list[str]:
    if not filter_spec:
        return list(SUITE_CHECKS)
    names = [n.strip() for n in filter_spec.split(",") if n.strip()]
    unknown = [n for n in names if n not in SUITE_CHECKS]
    if unknown:
        raise InvalidArgumentError(f"unknown check(s) {unknown}; choose from {SUITE_CHECKS}")
    return [n for n in SUITE_CHECKS if n in names]


def run_verification_suite(config: ExperimentConfig) -> ResultBundle:
    bundle = ResultBundle(config)
    names = selected_checks(config.filter)
    sweeps = {
        "ssm-lrd-fd": ("ssm_lrd.csv", ssm_lrd_sweep),
        "interaction-lrd-fd": ("interaction_lrd.csv", interaction_lrd_sweep),
        "attention-fd": ("attention.csv", attention_sweep),
        "decay-check": ("decay.csv", decay_sweep),
        "theorem1-equivalence": ("scan_unroll.csv", scan_unroll_sweep),
    }
    reports = None
    for name in names:
        if name in sweeps:
            fname, fn = sweeps[name]
            table, check = fn(config)
            bundle.tables[fname] = table
        elif name == "chi-square-cdf":
            table, check = cdf_check()
            bundle.tables["chi_square_cdf.csv"] = table
        elif name == "log-product-mean":
            reports = reports or stability_reports(config)
            check = _mean_check(reports)
        else:  # tail-check
            reports = reports or stability_reports(config)
            tails, params, check = tail_check(config, reports)
            bundle.tables["tailcheck.csv"] = tails
            bundle.tables["subexponential.csv"] = params
        bundle.checks.append(check)
    bundle.tables["checks.csv"] = Table(
        ["check", "passed", "worst", "tolerance", "instances"],
        [[c.name, c.passed, float(c.worst), float(c.tolerance), c.instances] for c in bundle.checks],
    )
    return bundle


def _single_sweep(fname: str, fn):
    def run(config: ExperimentConfig) -> ResultBundle:
        bundle = ResultBundle(config)
        table, check = fn(config)
        bundle.tables[fname] = table
        bundle.checks.append(check)
        return bundle

    return run


RUNNERS = {
    "lrd-profile": run_lrd_profile,
    "decay-check": _single_sweep("decay.csv", decay_sweep),
    "attention-lrd": _single_sweep("attention.csv", attention_sweep),
    "theorem1-equivalence": _single_sweep("scan_unroll.csv", scan_unroll_sweep),
    "stability-histogram": run_stability_histogram,
    "tail-check": run_tail_check,
    "oracle-suite": run_verification_suite,
}


def run_experiment(config: ExperimentConfig) -> ResultBundle:
    config.validate()
    bundle = RUNNERS[config.experiment](config)
    if any(not c.passed for c in bundle.checks):
        bundle.status = "failed"
    bundle.summary.setdefault("checks", {c.name: c.passed for c in bundle.checks})
    return bundle
