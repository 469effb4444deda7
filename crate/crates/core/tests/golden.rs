//! Values pinned by the offline mpmath generator in `scripts/gen_fixtures.py`.

use std::fs;

use ggtde_core::ggd::{self, GgdParams, NllForm};
use ggtde_core::special;
use ggtde_core::weighting::{
    composite_loss, gaussian_baseline_loss, RaMode, RegLoss, VarianceCorrection, WeightingConfig,
    XiMode,
};
use ggtde_core::TdErrorBatch;
use serde_json::Value;

fn fixture(name: &str) -> Value {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn num(v: &Value) -> f64 {
    match v {
        Value::String(s) => s.parse().unwrap(),
        other => other.as_f64().unwrap(),
    }
}

fn nums(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(num).collect()
}

fn close(got: f64, want: f64, rel: f64) {
    assert!(
        (got - want).abs() <= rel * want.abs().max(1.0),
        "got {got:.17e}, want {want:.17e}"
    );
}

#[test]
fn scalar_oracles() {
    let g = fixture("scalar_golden.json");
    let at = |k: &str| num(&g[k]);
    let p = |a, b| GgdParams::zero_mean(a, b).unwrap();
    close(
        ggd::pdf(3.2, &p(1.5, 0.8)).unwrap(),
        at("pdf_3p2_a1p5_b0p8"),
        1e-12,
    );
    close(
        ggd::pdf(0.0, &p(1.0, 2.0)).unwrap(),
        at("pdf_0_a1_b2"),
        1e-13,
    );
    close(
        ggd::cdf(1.0, &p(1.0, 2.0)).unwrap(),
        at("cdf_1_a1_b2"),
        1e-12,
    );
    close(
        ggd::excess_kurtosis(0.75).unwrap(),
        at("excess_kurtosis_0p75"),
        1e-11,
    );
    close(
        ggd::excess_kurtosis(8.0).unwrap(),
        at("excess_kurtosis_8"),
        1e-11,
    );
    close(
        ggd::nll(1.0, &p(1.0, 2.0)).unwrap(),
        at("nll_1_a1_b2"),
        1e-13,
    );
    close(
        ggd::nll_modified(2.0, &p(1.0, 3.0)).unwrap(),
        at("nll_modified_2_a1_b3"),
        1e-13,
    );
    close(
        ggd::nll_modified(0.0, &p(1.0, 2.0)).unwrap(),
        at("nll_modified_0_a1_b2"),
        1e-13,
    );
    close(
        special::reg_lower_inc_gamma(2.5, 3.7).unwrap(),
        at("reg_lower_2p5_3p7"),
        1e-13,
    );
    close(
        ggd::ssd_integral(1.0, 2.0, 1.0, 0.0).unwrap(),
        at("ssd_b1_b2_a1_x0"),
        1e-8,
    );
    close(
        ggd::ssd_integral(0.7, 3.0, 1.3, 1.1).unwrap(),
        at("ssd_b0p7_b3_a1p3_x1p1"),
        1e-8,
    );
    close(
        ggd::ssd_integral(2.0, 1.0, 1.0, 1.0).unwrap(),
        at("ssd_b2_b1_a1_x1"),
        1e-8,
    );
}

fn fixture_batch(b: &Value) -> TdErrorBatch {
    let mut batch = TdErrorBatch::new(
        nums(&b["deltas"]),
        nums(&b["ensemble_value_variance"]),
        nums(&b["ensemble_error_variance"]),
        nums(&b["betas"]),
    )
    .unwrap();
    batch.alphas = nums(&b["alphas"]);
    batch.error_kurtosis = Some(nums(&b["error_kurtosis"]));
    batch.ensemble_size = b["ensemble_size"].as_u64().unwrap() as usize;
    batch
}

fn parse<T: serde::de::DeserializeOwned>(v: &Value) -> T {
    serde_json::from_value(v.clone()).unwrap()
}

#[test]
fn composite_loss_matches_hand_oracle() {
    let f = fixture("composite_loss_oracle.json");
    let batch = fixture_batch(&f["batch"]);
    for case in f["cases"].as_array().unwrap() {
        let cfg = WeightingConfig {
            lambda: num(&case["lambda"]),
            xi_mode: XiMode::Fixed {
                value: num(&case["xi"]),
            },
            ra_mode: parse::<RaMode>(&case["ra_mode"]),
            reg_loss: parse::<RegLoss>(&case["reg_loss"]),
            variance_correction: parse::<VarianceCorrection>(&case["variance_correction"]),
            ..WeightingConfig::default()
        };
        let form: NllForm = parse(&case["nll_form"]);
        let got = composite_loss(&batch, &cfg, form).unwrap();
        for (name, value) in [
            ("attenuation", got.attenuation),
            ("regularization", got.regularization),
            ("total", got.total),
        ] {
            let want = num(&case[name]);
            assert!(
                (value - want).abs() < 1e-10,
                "{case}: {name} {value} vs {want}"
            );
        }
    }
}

#[test]
fn gaussian_baseline_matches_hand_oracle() {
    let f = fixture("composite_loss_oracle.json");
    let batch = fixture_batch(&f["batch"]);
    let g = &f["gaussian_baseline"];
    let cfg = WeightingConfig {
        lambda: num(&g["lambda"]),
        xi_mode: XiMode::Fixed {
            value: num(&g["xi"]),
        },
        discount_gamma: num(&g["discount_gamma"]),
        ..WeightingConfig::default()
    };
    let got = gaussian_baseline_loss(&batch, &cfg, &nums(&f["batch"]["sigma_heads"])).unwrap();
    assert!((got.nll_sum - num(&g["nll_sum"])).abs() < 1e-10);
    assert!((got.regularization - num(&g["regularization"])).abs() < 1e-10);
    assert!((got.total - num(&g["total"])).abs() < 1e-10);
}
