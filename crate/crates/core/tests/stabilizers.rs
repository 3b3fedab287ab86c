mod common;

use common::random_image;
use stabnet::imaging::{gaussian_psf, BlurOperator, Image};
use stabnet::stabilizers::{
    cgls_solve, estimate_stabilizer_gain, landweber_gain, landweber_solve, tikhonov_direct, FilterStabilizer,
    IterativeMethod, IterativeStabilizer, Stabilizer, TikhonovProblem,
};

#[test]
fn cgls_agrees_with_direct_solution_over_grid() {
    let mut case = 0;
    for sigma in [0.8, 1.3] {
        for lambda in [1e-3, 1e-2, 1e-1] {
            let op = BlurOperator::new(gaussian_psf(3, sigma).unwrap(), (16, 16)).unwrap();
            let p = TikhonovProblem::new(op, lambda).unwrap();
            let y = random_image(16, 16, 100 + case);
            let cg = cgls_solve(&p, &y, 200, &Image::zeros(16, 16)).unwrap();
            let direct = tikhonov_direct(&p, &y).unwrap();
            let err = cg.max_abs_diff(&direct).unwrap();
            assert!(err < 1e-8, "σ_G={sigma} λ={lambda}: {err}");
            case += 1;
        }
    }
}

#[test]
fn landweber_converges_to_direct_solution() {
    let op = BlurOperator::new(gaussian_psf(2, 1.0).unwrap(), (12, 12)).unwrap();
    let p = TikhonovProblem::new(op, 0.1).unwrap();
    let y = random_image(12, 12, 7);
    let step = p.default_landweber_step();
    let lw = landweber_solve(&p, &y, 2000, step, &Image::zeros(12, 12)).unwrap();
    assert!(lw.max_abs_diff(&tikhonov_direct(&p, &y).unwrap()).unwrap() < 1e-10);
}

#[test]
fn stabilizers_shrink_noise_relative_to_identity() {
    let op = BlurOperator::new(gaussian_psf(5, 1.3).unwrap(), (32, 32)).unwrap();
    let filter = Stabilizer::Filter(FilterStabilizer::gaussian(3, 1.0, (32, 32)).unwrap());
    let lw = IterativeStabilizer::new(TikhonovProblem::new(op.clone(), 0.2).unwrap(), IterativeMethod::Landweber, 50)
        .unwrap();
    let exact = landweber_gain(lw.problem(), 50, lw.landweber_step());
    let lw = Stabilizer::Iterative(lw);
    assert_eq!(estimate_stabilizer_gain(&Stabilizer::Identity, &op, 2, 0.01, 0).unwrap(), 1.0);
    let gf = estimate_stabilizer_gain(&filter, &op, 2, 0.01, 0).unwrap();
    assert!(gf <= 1.0 + 1e-9);
    let gl = estimate_stabilizer_gain(&lw, &op, 2, 0.01, 0).unwrap();
    assert!(gl <= exact + 1e-9 && gl < 1.0);
}
