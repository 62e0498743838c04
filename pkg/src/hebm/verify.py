"""Self-check suites: fixed-point property, gradients, kd-tree, sampler.

Each suite returns CheckResult rows for the `verify` CLI table. Seeds are
fixed so a passing tree keeps passing. `suite_gradcheck` takes a
fault-injection flag that flips the sign of one computed gradient, which
must make the suite fail (that is how the suite itself is tested).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff, metrics, neighbors, oracle, sampling, statistics
from .errors import ConfigError
from .model import new_model
from .training import dsm_loss, dsm_terms, make_batch, make_geometric_schedule


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool


def _check(name: str, value: float, tol: float) -> CheckResult:
    return CheckResult(name, float(value), float(tol), bool(value <= tol))


def format_table(results: list[CheckResult]) -> str:
    rows = [("check", "value", "tol", "status")]
    rows += [(r.name, f"{r.value:.3g}", f"{r.tol:.3g}", "ok" if r.passed else "FAIL")
             for r in results]
    widths = [max(len(r[c]) for r in rows) for c in range(4)]
    return "\n".join("  ".join(f.ljust(w) for f, w in zip(r, widths)) for r in rows)


# --- theorem1 ---


def suite_theorem1() -> list[CheckResult]:
    """Fit eta exactly on sampled data for every catalog pair and measure
    |E_p[T] - mean T(data)| componentwise."""
    out = []
    for idx, spec in enumerate(oracle.crossed_specs()):
        rng = np.random.default_rng([1234, idx])
        X = spec.draw(rng, 4000)
        prep = oracle.prepare(spec)
        target = spec.statistic.value_batch(X).mean(axis=0)
        fit = oracle.fit_eta_exact(prep, target)
        gap = np.abs(oracle.expected_statistic(prep, fit.eta) - target).max()
        out.append(_check(f"theorem1 {spec.name}", gap, 1e-4))
    return out


# --- gradcheck ---


def _rel_err(g_ad: np.ndarray, g_fd: np.ndarray) -> float:
    denom = max(float(np.abs(g_fd).max(initial=0.0)), 1e-10)
    return float(np.abs(g_ad - g_fd).max(initial=0.0) / denom)


def _random_mlp(rng: np.random.Generator) -> autodiff.MlpParams:
    dims = [int(rng.integers(1, 5))]
    for _ in range(int(rng.integers(1, 3))):
        dims.append(int(rng.integers(2, 7)))
    dims.append(int(rng.integers(1, 4)))
    act = "tanh" if rng.random() < 0.5 else "softplus"
    n = len(dims) - 1
    weights = [0.7 * rng.standard_normal((dims[i + 1], dims[i])) for i in range(n)]
    biases = [0.3 * rng.standard_normal(dims[i + 1]) for i in range(n)]
    acts = [act] * (n - 1) + ["identity"]
    return autodiff.MlpParams(weights, biases, acts)


def _fd_param_grads(loss_fn, params: dict[str, np.ndarray], h: float = 1e-5):
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            hi = loss_fn()
            flat[i] = keep - h
            lo = loss_fn()
            flat[i] = keep
            g.reshape(-1)[i] = (hi - lo) / (2.0 * h)
        grads[name] = g
    return grads


def _gradcheck_autodiff(i: int, flip_sign: bool) -> CheckResult:
    rng = np.random.default_rng([21, i])
    params = _random_mlp(rng)
    B = int(rng.integers(1, 5))
    X = rng.standard_normal((B, params.input_dim))
    C = rng.standard_normal((B, params.output_dim))
    scale = None
    if rng.random() < 0.5:
        scale = 1.0 / rng.uniform(0.2, 3.0, size=B)

    def loss_fn():
        out = autodiff.forward_batch(params, X)
        if scale is not None:
            out = out * scale[:, None]
        return float((C * out).sum())

    tape, out = autodiff.forward_on_tape(params, X, row_scale=scale)
    g_ad = autodiff.backward(tape, C)
    if flip_sign and i == 0:
        g_ad["w0"] = -g_ad["w0"]
    g_fd = _fd_param_grads(loss_fn, params.param_dict())
    err = max(_rel_err(g_ad[k], g_fd[k]) for k in g_fd)
    return _check(f"gradcheck autodiff[{i}]", err, 1e-4)


def _statistic_configs():
    """(kind, builder) pairs; 20 total configurations."""
    def margin(rng):
        h, w = int(rng.integers(5, 12)), int(rng.integers(5, 12))
        stat = statistics.MarginImageStatistic(h, w, int(rng.integers(1, h - 1)),
                                               int(rng.integers(1, w - 1)))
        return stat, rng.normal(0.0, 1.0, size=stat.d)

    def valency(rng):
        n, k = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        table = np.append(rng.integers(1, 5, size=k).astype(float), 0.0)
        stat = statistics.ValencyStatistic(n, table)
        return stat, rng.uniform(0.0, 2.0, size=stat.d)

    def laplacian(rng):
        n = int(rng.integers(6, 14))
        stat = statistics.SmoothnessStatistic(n, int(rng.integers(2, min(5, n))))
        return stat, rng.normal(0.0, 1.0, size=stat.d)

    def sine(rng):
        stat = statistics.SineStatistic(int(rng.integers(1, 7)))
        return stat, rng.normal(0.0, 1.0, size=stat.d)

    def raw(rng):
        stat = statistics.RawMomentStatistic(int(rng.integers(1, 5)),
                                             int(rng.integers(1, 4)))
        return stat, rng.normal(0.0, 1.0, size=stat.d)

    def gap(rng):
        stat = statistics.GapStatistic(int(rng.integers(1, 4)),
                                       float(rng.normal()), float(rng.uniform(0.5, 2.0)))
        return stat, rng.normal(0.0, 1.0, size=stat.d)

    return ([("margin", margin)] * 4 + [("valency", valency)] * 4
            + [("laplacian", laplacian)] * 3 + [("sine", sine)] * 3
            + [("raw_moment", raw)] * 3 + [("gap", gap)] * 3)


def _gradcheck_statistic(i: int) -> CheckResult:
    kind, builder = _statistic_configs()[i]
    rng = np.random.default_rng([22, i])
    stat, x = builder(rng)
    jac_fd = oracle.finite_diff_jac(stat.value, x)
    err = _rel_err(stat.jac(x), jac_fd)
    return _check(f"gradcheck statistic[{kind}-{i}]", err, 1e-4)


def _gradcheck_dsm(i: int) -> CheckResult:
    rng = np.random.default_rng([23, i])
    d = int(rng.integers(2, 5))
    stats = [statistics.SineStatistic(d), statistics.RawMomentStatistic(d, 2),
             statistics.GapStatistic(d, 0.0, 1.5)]
    stat = stats[i % 3]
    model = new_model(stat, hidden=[int(rng.integers(4, 9))], seed=int(rng.integers(1000)))
    for w in model.params.weights:
        w += 0.5 * rng.standard_normal(w.shape)
    model.eta = 0.3 * rng.standard_normal(stat.m)
    sched = make_geometric_schedule(2.0, 0.05, 3)
    X = rng.standard_normal((int(rng.integers(2, 6)), d))
    X_tilde, s, targets = make_batch(X, sched, rng)
    _, theta_grads, eta_grad = dsm_terms(model, X_tilde, s, targets)

    def loss_fn():
        return dsm_loss(model, X_tilde, s, targets)

    g_fd = _fd_param_grads(loss_fn, model.params.param_dict())
    err = max(_rel_err(theta_grads[k], g_fd[k]) for k in g_fd)
    eta_fd = np.zeros(stat.m)
    for j in range(stat.m):
        keep = model.eta[j]
        model.eta[j] = keep + 1e-5
        hi = loss_fn()
        model.eta[j] = keep - 1e-5
        lo = loss_fn()
        model.eta[j] = keep
        eta_fd[j] = (hi - lo) / 2e-5
    err = max(err, _rel_err(eta_grad, eta_fd))
    return _check(f"gradcheck dsm[{i}]", err, 1e-4)


def suite_gradcheck(flip_sign: bool = False) -> list[CheckResult]:
    out = [_gradcheck_autodiff(i, flip_sign) for i in range(20)]
    out += [_gradcheck_statistic(i) for i in range(20)]
    out += [_gradcheck_dsm(i) for i in range(20)]
    return out


# --- knn ---


def suite_knn() -> list[CheckResult]:
    rng = np.random.default_rng(2025)
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(2, 1001))
        pts = rng.normal(0.0, 2.0, size=(n, 3))
        k = int(rng.integers(1, min(9, n)))
        if rng.random() < 0.5:
            qi = int(rng.integers(0, n))
            got = neighbors.knn(neighbors.build(pts), pts[qi], k, exclude_index=qi)
            want = neighbors.brute_force_knn(pts, pts[qi], k, exclude_index=qi)
        else:
            q = rng.normal(0.0, 2.0, size=3)
            got = neighbors.knn(neighbors.build(pts), q, k)
            want = neighbors.brute_force_knn(pts, q, k)
        if not np.array_equal(got, want):
            mismatches += 1
    out = [_check("knn exact vs brute force (100 cases)", mismatches, 0.0)]

    cd = metrics.chamfer(np.zeros((1, 3)), np.ones((1, 3)))
    out.append(_check("chamfer single-point hand case", abs(cd - 6.0), 1e-12))

    a, b = rng.normal(size=(40, 3)), rng.normal(size=(60, 3))
    gap = abs(metrics.chamfer(a, b, method="tree") - metrics.chamfer(a, b, method="direct"))
    out.append(_check("chamfer tree vs direct", gap, 1e-9))

    pts2 = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 2.0]])
    L = neighbors.laplacian(pts2, 1)
    two_pt = abs(statistics.laplacian_statistic(pts2, L) - 9.0)
    out.append(_check("two-point cloud edge identity", two_pt, 1e-12))

    clouds = [rng.standard_normal((24, 3)) for _ in range(200)]
    _, _, nna = metrics.mmd_cov_1nna(clouds[:100], clouds[100:])
    out.append(CheckResult("1-NNA same-distribution null", nna, 0.10,
                           0.40 <= nna <= 0.60))
    return out


# --- sampler ---


def suite_sampler() -> list[CheckResult]:
    """Drive the sampler with the analytic score of N(0, I) data under
    Gaussian noise, s(x, sigma) = -x / (1 + sigma^2)."""
    def score_fn(x, sigma):
        return -x / (1.0 + sigma ** 2)

    sched = make_geometric_schedule(5.0, 0.01, 10)
    cfg = sampling.SamplerConfig(n_steps=80, eps=2e-5, seed=11)
    d = 2
    X = sampling.sample(score_fn, sched, cfg, 256, d=d)
    out = [_check("sampler mean vs N(0,1)", np.abs(X.mean(axis=0)).max(),
                  4.0 / np.sqrt(256)),
           _check("sampler variance vs N(0,1)", abs(X.var() - 1.0), 0.2)]

    few = sampling.sample(score_fn, sched, cfg, 4, d=d)
    more = sampling.sample(score_fn, sched, cfg, 8, d=d)
    drift = float(np.abs(few - more[:4]).max())
    out.append(_check("chain results independent of chain count", drift, 0.0))

    again = sampling.sample(score_fn, sched, cfg, 4, d=d)
    out.append(_check("sampler seed reproducibility", float(np.abs(few - again).max()), 0.0))
    return out


SUITES = {"theorem1": suite_theorem1, "gradcheck": suite_gradcheck,
          "knn": suite_knn, "sampler": suite_sampler}


def run_suite(name: str, **kwargs) -> list[CheckResult]:
    if name not in SUITES:
        raise ConfigError(f"unknown verify suite {name!r}; have {sorted(SUITES)}")
    return SUITES[name](**kwargs)
