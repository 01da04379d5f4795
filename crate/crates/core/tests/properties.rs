use std::path::Path;

use selfsim::dims::{estimate_dq, MomentTable};
use selfsim::discretize::{histogram_pushforward, HistogramOptions};
use selfsim::fourier::ft_eval_line;
use selfsim::ifs::{HomogeneousIfs, Sign, WeightVector};
use selfsim::spec::{load_measure_spec, Measure};
use selfsim::transforms::{product_ifs, DerivedMeasure};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn d2(m: &Measure<f64>, levels: &[u32]) -> f64 {
    let opts = HistogramOptions {
        extra_depth: 3,
        ..HistogramOptions::default()
    };
    let table = MomentTable::from_ifs(&m.ifs, &m.weights, levels, &[2.0], &opts).unwrap();
    estimate_dq(&table, 2.0).unwrap().point
}

#[test]
fn projections_of_rotating_system_have_full_dimension() {
    // r = 0.3 ≥ Σ p_i^2 = 1/4 and the pieces are separated
    let ifs = HomogeneousIfs::plane(0.3, 2f64.sqrt() - 1.0, &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], "rot").unwrap();
    let p = WeightVector::uniform(4);
    let levels: Vec<u32> = (2..=14).collect();
    for beta in [0.0, 0.5, 1.0, 1.5, 2.0, 2.5] {
        let hs = histogram_pushforward(&ifs, &p, beta, &levels, &HistogramOptions::default()).unwrap();
        let d = estimate_dq(&MomentTable::from_histograms(&hs, &[2.0]).unwrap(), 2.0).unwrap();
        assert!((d.point - 1.0).abs() <= 0.07, "β = {beta}: {d:?}");
    }
}

#[test]
fn product_dimension_is_additive() {
    let a = Measure::new(
        HomogeneousIfs::line(1.0 / 3.0, Sign::Plus, &[0.13, 0.79], "a").unwrap(),
        WeightVector::new(vec![0.25, 0.75]).unwrap(),
    )
    .unwrap();
    let b = Measure::new(
        HomogeneousIfs::line(1.0 / 3.0, Sign::Plus, &[-0.41, 0.1, 0.26], "b").unwrap(),
        WeightVector::new(vec![0.5, 0.3, 0.2]).unwrap(),
    )
    .unwrap();
    let levels: Vec<u32> = (2..=9).collect();
    let prod = product_ifs(&a, &b).unwrap();
    let (da, db, dp) = (d2(&a, &levels), d2(&b, &levels), d2(&prod, &levels));
    assert!((dp - da - db).abs() <= 0.05, "{dp} vs {da} + {db}");
}

#[test]
fn convolution_document_transform_factors() {
    let spec = load_measure_spec::<f64>(fixture("conv_cantor.json")).unwrap();
    let d = DerivedMeasure::resolve(&spec).unwrap();
    let DerivedMeasure::Convolved { first, second, u } = &d else {
        panic!("expected a convolution")
    };
    assert_eq!(second.ifs.label(), "cantor14");
    let tol = 1e-10;
    let fm = d.fourier();
    for xi in [0.3, 4.1, 17.0, 230.5] {
        let whole = fm.transform(xi, tol).unwrap();
        let a = ft_eval_line(&first.ifs, &first.weights, xi, tol / 2.0).unwrap();
        let b = ft_eval_line(&second.ifs, &second.weights, u * xi, tol / 2.0).unwrap();
        assert!((whole.value - a.value * b.value).norm() <= 2.0 * tol);
    }
}
