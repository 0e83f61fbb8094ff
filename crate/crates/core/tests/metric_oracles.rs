mod support;

use sitadda::metrics::{pearson, psnr};
use sitadda::{Domain, Image};

#[test]
fn library_metrics_match_brute_force() {
    for (name, dev) in support::metric_deviations(40, 64) {
        assert!(dev <= 1e-6, "{name} deviates by {dev}");
    }
}

#[test]
fn small_worked_values() {
    let y = Image::<f64>::new(1, 3, vec![1.0, 2.0, 3.0], Domain::Raw).unwrap();
    let p = Image::<f64>::new(1, 3, vec![1.0, 3.0, 2.0], Domain::Raw).unwrap();
    assert!((pearson(&y, &p).unwrap() - 0.5).abs() < 1e-12);
    assert!((support::oracles::pearson(y.data(), p.data()) - 0.5).abs() < 1e-12);
    // MSE 2/3 at peak 255
    let expected = 10.0 * (255.0f64 * 255.0 * 1.5).log10();
    assert!((psnr(&y, &p, 255.0).unwrap() - expected).abs() < 1e-9);
    assert_eq!(psnr(&y, &y, 255.0).unwrap(), f64::INFINITY);
}
