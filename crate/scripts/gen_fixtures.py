#!/usr/bin/env python3
"""Offline generator for golden fixtures used by the ggtde-core test suite.

Everything here is evaluated with mpmath at 50 significant digits and is
independent of the Rust implementation. Re-run with:

    python3 scripts/gen_fixtures.py
"""
import json
import os

import mpmath as mp

mp.mp.dps = 50
OUT = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "fixtures")


def fmt(v, digits=15):
    return mp.nstr(mp.mpf(v), digits, strip_zeros=False, min_fixed=-3, max_fixed=3)


def reg_lower(a, s):
    return mp.gammainc(a, 0, s, regularized=True)


def reg_upper(a, s):
    return mp.gammainc(a, s, mp.inf, regularized=True)


def incgamma_points():
    shapes = ["0.05", "0.1", "0.25", "0.5", "0.75", "1", "1.5", "2.5", "3.3", "5", "10", "20", "50", "100"]
    pts = []
    for a in shapes:
        a = mp.mpf(a)
        for s in [mp.mpf(0), a * mp.mpf("0.1"), a * mp.mpf("0.5"), a * mp.mpf("0.9"), a, a + mp.mpf("1.5"), 2 * a + 3]:
            pts.append((a, s))
    pts.append((mp.mpf("2.5"), mp.mpf("3.7")))
    pts.append((mp.mpf("0.3"), mp.mpf("40")))
    pts.append((mp.mpf("100"), mp.mpf("140")))
    return pts


def write_incgamma():
    pts = incgamma_points()
    with open(os.path.join(OUT, "incgamma_golden.csv"), "w", newline="\n") as f:
        f.write("a,s,p\n")
        for a, s in pts:
            f.write(f"{fmt(a)},{fmt(s)},{fmt(reg_lower(a, s))}\n")
    with open(os.path.join(OUT, "incgamma_upper_golden.csv"), "w", newline="\n") as f:
        f.write("a,s,q\n")
        for a, s in pts:
            f.write(f"{fmt(a)},{fmt(s)},{fmt(reg_upper(a, s))}\n")


def write_special():
    xs = ["0.001", "0.01", "0.1", "0.25", "0.5", "0.9", "1", "1.4616321449683623", "2", "2.5", "3.7",
          "7.25", "10", "33.3", "100", "1000", "12345.6", "1000000"]
    with open(os.path.join(OUT, "special_golden.csv"), "w", newline="\n") as f:
        f.write("x,log_gamma,digamma\n")
        for x in xs:
            x = mp.mpf(x)
            f.write(f"{fmt(x, 17)},{fmt(mp.loggamma(x), 17)},{fmt(mp.digamma(x), 17)}\n")


def ggd_pdf(x, alpha, beta):
    return beta / (2 * alpha * mp.gamma(1 / beta)) * mp.e ** (-(abs(x) / alpha) ** beta)


def ggd_nll(d, alpha, beta):
    return (abs(d) / alpha) ** beta - mp.log(beta / alpha) + mp.loggamma(1 / beta)


def ggd_nll_modified(d, alpha, beta):
    return (abs(d) / alpha) * beta - mp.log(beta / alpha) + mp.loggamma(1 / beta)


def excess_kurtosis(beta):
    return mp.gamma(5 / beta) * mp.gamma(1 / beta) / mp.gamma(3 / beta) ** 2 - 3


def ggd_cdf(x, alpha, beta):
    if x == 0:
        return mp.mpf("0.5")
    return mp.mpf("0.5") + mp.sign(x) * reg_lower(1 / beta, (abs(x) / alpha) ** beta) / 2


def ssd_by_quadrature(b1, b2, alpha, x):
    f = lambda t: ggd_cdf(t, alpha, b1) - ggd_cdf(t, alpha, b2)
    return mp.quad(f, [-mp.inf, min(x, 0), x] if x > 0 else [-mp.inf, x])


def scalar_values():
    m = mp.mpf
    vals = {
        "pdf_3p2_a1p5_b0p8": ggd_pdf(m("3.2"), m("1.5"), m("0.8")),
        "pdf_0_a1_b2": ggd_pdf(0, m(1), m(2)),
        "cdf_1_a1_b2": ggd_cdf(m(1), m(1), m(2)),
        "excess_kurtosis_0p75": excess_kurtosis(m("0.75")),
        "excess_kurtosis_8": excess_kurtosis(m(8)),
        "nll_1_a1_b2": ggd_nll(m(1), m(1), m(2)),
        "nll_modified_2_a1_b3": ggd_nll_modified(m(2), m(1), m(3)),
        "nll_modified_0_a1_b2": ggd_nll_modified(m(0), m(1), m(2)),
        "reg_lower_2p5_3p7": reg_lower(m("2.5"), m("3.7")),
        "ssd_b1_b2_a1_x0": ssd_by_quadrature(m(1), m(2), m(1), m(0)),
        "ssd_b0p7_b3_a1p3_x1p1": ssd_by_quadrature(m("0.7"), m(3), m("1.3"), m("1.1")),
        "ssd_b2_b1_a1_x1": ssd_by_quadrature(m(2), m(1), m(1), m(1)),
    }
    return {k: fmt(v, 17) for k, v in vals.items()}


# Pinned 4-sample batch for the composite loss oracle.
BATCH = {
    "deltas": ["0.5", "-1.2", "2.0", "-0.3"],
    "betas": ["1.5", "0.8", "2.0", "1.1"],
    "alphas": ["1", "1", "1", "1"],
    "ensemble_value_variance": ["0.1", "0.3", "0.2", "0.4"],
    "ensemble_error_variance": ["0.2", "1.0", "0.5", "0.05"],
    "error_kurtosis": ["0", "0", "0", "0"],
    "ensemble_size": 5,
    "sigma_heads": ["0.8", "1.5", "1.0", "0.6"],
}


def composite(form, reg, ra, correction, lam, xi):
    m = mp.mpf
    d = [m(v) for v in BATCH["deltas"]]
    b = [m(v) for v in BATCH["betas"]]
    a = [m(v) for v in BATCH["alphas"]]
    ve = [m(v) for v in BATCH["ensemble_error_variance"]]
    k = [m(v) for v in BATCH["error_kurtosis"]]
    n = BATCH["ensemble_size"]
    if correction == "mbbe":
        ve = [v / (kk / n + m(n + 1) / (n - 1)) for v, kk in zip(ve, k)]
    w_ra = {"risk_averse": b, "risk_seeking": [1 / x for x in b], "none": [m(1)] * 4}[ra]
    w_reg = [1 / (v + xi) for v in ve]
    nll = ggd_nll if form == "exact" else ggd_nll_modified
    att = sum(w / sum(w_ra) * nll(dd, aa, bb) for w, dd, aa, bb in zip(w_ra, d, a, b))
    rho = (lambda x: x * x) if reg == "squared" else abs
    regv = sum(w / sum(w_reg) * rho(dd) for w, dd in zip(w_reg, d))
    return att, regv, att + lam * regv


def gaussian_baseline(lam, xi, gamma):
    m = mp.mpf
    d = [m(v) for v in BATCH["deltas"]]
    s = [m(v) for v in BATCH["sigma_heads"]]
    vq = [m(v) for v in BATCH["ensemble_value_variance"]]
    w = [1 / (gamma ** 2 * v + xi) for v in vq]
    nll = sum((dd / ss) ** 2 + mp.log(ss ** 2) for dd, ss in zip(d, s))
    reg = sum(ww / sum(w) * dd ** 2 for ww, dd in zip(w, d))
    return nll, reg, nll + lam * reg


def write_composite():
    m = mp.mpf
    cases = []
    for form, reg, ra, corr in [
        ("exact", "squared", "risk_averse", "mbbe"),
        ("modified", "squared", "risk_averse", "mbbe"),
        ("exact", "absolute", "risk_seeking", "raw"),
        ("modified", "absolute", "none", "raw"),
    ]:
        att, regv, tot = composite(form, reg, ra, corr, m("0.1"), m("0.5"))
        cases.append({
            "nll_form": form, "reg_loss": reg, "ra_mode": ra, "variance_correction": corr,
            "lambda": 0.1, "xi": 0.5,
            "attenuation": fmt(att, 17), "regularization": fmt(regv, 17), "total": fmt(tot, 17),
        })
    g_nll, g_reg, g_tot = gaussian_baseline(m("0.1"), m("0.5"), m("0.9"))
    doc = {
        "notes": [
            "Per-sample attenuation: (|d|/a)^b - ln(b/a) + lnGamma(1/b) (exact) or (|d|/a)*b - ln(b/a) + lnGamma(1/b) (modified).",
            "Attenuation weights: b (risk_averse), 1/b (risk_seeking), 1 (none); normalised to sum to one.",
            "Regularisation weights: 1/(v + xi) with v the ensemble error variance; with mbbe correction v is first",
            "multiplied by 1/(k/n + (n+1)/(n-1)) with n the ensemble size and k the per-sample excess kurtosis.",
            "rho(d) = d^2 (squared) or |d| (absolute); total = attenuation + lambda * regularisation.",
            "Gaussian baseline: sum (d/s)^2 + ln s^2 + lambda * sum w d^2 / sum w, w = 1/(gamma^2 V[Q] + xi).",
            "Values computed with mpmath at 50 digits by scripts/gen_fixtures.py.",
        ],
        "batch": BATCH,
        "cases": cases,
        "gaussian_baseline": {
            "lambda": 0.1, "xi": 0.5, "discount_gamma": 0.9,
            "nll_sum": fmt(g_nll, 17), "regularization": fmt(g_reg, 17), "total": fmt(g_tot, 17),
        },
    }
    with open(os.path.join(OUT, "composite_loss_oracle.json"), "w", newline="\n") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    write_incgamma()
    write_special()
    write_composite()
    with open(os.path.join(OUT, "scalar_golden.json"), "w", newline="\n") as f:
        json.dump(scalar_values(), f, indent=2)
        f.write("\n")
