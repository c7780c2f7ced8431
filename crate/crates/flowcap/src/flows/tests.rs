use super::*;
use crate::densities::{log_density, Gaussian1D, GaussianD, MixtureGaussianD};
use crate::linalg::norm;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal_vec(rng: &mut ChaCha8Rng, d: usize, s: f64) -> Vec<f64> {
    (0..d).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn smooth_h(rng: &mut ChaCha8Rng) -> Nonlinearity {
    match rng.random_range(0..3) {
        0 => Nonlinearity::Tanh,
        1 => Nonlinearity::Sigmoid,
        _ => Nonlinearity::Arctan,
    }
}

fn random_planar(rng: &mut ChaCha8Rng, d: usize, h: Nonlinearity) -> FlowLayer {
    let w = normal_vec(rng, d, 1.0);
    let mut u = normal_vec(rng, d, 1.0);
    let uw: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
    let ww: f64 = w.iter().map(|x| x * x).sum();
    if uw < -0.5 {
        let k = (-0.5 - uw) / ww;
        for (ui, wi) in u.iter_mut().zip(&w) {
            *ui += k * wi;
        }
    }
    Planar::new(u, w, rng.random_range(-1.0..1.0), h).unwrap().into()
}

fn random_sylvester(rng: &mut ChaCha8Rng, d: usize, h: Nonlinearity) -> FlowLayer {
    let m = rng.random_range(1..d.min(4));
    let s = 0.6 / (m as f64).sqrt();
    loop {
        let a = DMatrix::from_fn(d, m, |_, _| s * rng.sample::<f64, _>(StandardNormal));
        let bm = DMatrix::from_fn(d, m, |_, _| s * rng.sample::<f64, _>(StandardNormal));
        let b = normal_vec(rng, m, 0.5);
        if let Ok(l) = Sylvester::new(a, bm, b, h.clone()) {
            return l.into();
        }
    }
}

fn random_radial(rng: &mut ChaCha8Rng, d: usize) -> FlowLayer {
    let a = rng.random_range(0.5..2.0);
    let b = rng.random_range(-0.9 * a..2.0);
    Radial::new(a, b, normal_vec(rng, d, 1.0)).unwrap().into()
}

fn random_householder(rng: &mut ChaCha8Rng, d: usize) -> FlowLayer {
    Householder::from_direction(&normal_vec(rng, d, 1.0)).unwrap().into()
}

fn random_layer(rng: &mut ChaCha8Rng, d: usize, kind: u8) -> FlowLayer {
    match kind {
        0 => random_planar(rng, d, Nonlinearity::Relu),
        1 => {
            let h = smooth_h(rng);
            random_planar(rng, d, h)
        }
        2 if d > 1 => random_sylvester(rng, d, Nonlinearity::Relu),
        3 if d > 1 => {
            let h = smooth_h(rng);
            random_sylvester(rng, d, h)
        }
        4 => random_radial(rng, d),
        _ => random_householder(rng, d),
    }
}

#[test]
fn planar_zero_u_is_identity() {
    let l: FlowLayer = Planar::new(vec![0.0, 0.0], vec![1.0, 2.0], 0.3, Nonlinearity::Tanh).unwrap().into();
    let (y, ld) = l.forward(&[0.7, -1.1]).unwrap();
    assert_eq!(y, vec![0.7, -1.1]);
    assert_eq!(ld, 0.0);
}

#[test]
fn relu_planar_1d_example() {
    let l: FlowLayer = Planar::new(vec![1.0], vec![1.0], 0.0, Nonlinearity::Relu).unwrap().into();
    let (y, det) = l.forward_det(&[2.0]);
    assert_eq!(y, vec![4.0]);
    assert_eq!(det, 2.0);
    assert_eq!(l.inverse(&[4.0]).unwrap(), vec![2.0]);
}

#[test]
fn householder_det_and_self_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for d in [1, 2, 5, 16] {
        let l = random_householder(&mut rng, d);
        let z = normal_vec(&mut rng, d, 2.0);
        let (y, ld) = l.forward(&z).unwrap();
        assert_eq!(ld, 0.0);
        assert_eq!(l.forward_det(&z).1, -1.0);
        let back = l.forward(&y).unwrap().0;
        for (a, b) in back.iter().zip(&z) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((norm(&y) - norm(&z)).abs() <= 1e-14 * (1.0 + norm(&z)));
    }
}

#[test]
fn guards_reject_noninvertible_layers() {
    assert!(matches!(
        Planar::new(vec![-1.0], vec![1.0], 0.0, Nonlinearity::Relu),
        Err(Error::Invertibility { .. })
    ));
    // sigmoid has sup h' = 1/4, so uᵀw = −3 is fine
    assert!(Planar::new(vec![-3.0], vec![1.0], 0.0, Nonlinearity::Sigmoid).is_ok());
    assert!(Radial::new(1.0, -1.0, vec![0.0]).is_err());
    assert!(Householder::new(vec![0.9, 0.0]).is_err());
    let a = DMatrix::from_row_slice(2, 1, &[-2.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
    assert!(Sylvester::new(a, b, vec![0.0], Nonlinearity::Tanh).is_err());
}

#[test]
fn round_trip_clouds_all_variants() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for d in [1usize, 2, 4, 8, 16] {
        for kind in 0..6u8 {
            let l = random_layer(&mut rng, d, kind);
            for _ in 0..1000 {
                let z = normal_vec(&mut rng, d, 2.0);
                let (y, _) = l.forward(&z).unwrap();
                let back = l.inverse(&y).unwrap();
                let err = norm(&back.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>());
                assert!(err < 1e-9 * (1.0 + norm(&z)), "{} d={d}: err {err}", l.variant());
            }
        }
    }
}

#[test]
fn tanh_planar_inverse_of_random_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let l = random_planar(&mut rng, 3, Nonlinearity::Tanh);
    for _ in 0..100 {
        let y = normal_vec(&mut rng, 3, 3.0);
        let z = l.inverse(&y).unwrap();
        let y2 = l.forward(&z).unwrap().0;
        for (a, b) in y2.iter().zip(&y) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }
}

fn fd_jacobian(l: &FlowLayer, z: &[f64]) -> DMatrix<f64> {
    let d = z.len();
    let e = 1e-6;
    DMatrix::from_fn(d, d, |i, j| {
        let mut zp = z.to_vec();
        let mut zm = z.to_vec();
        zp[j] += e;
        zm[j] -= e;
        (l.forward_det(&zp).0[i] - l.forward_det(&zm).0[i]) / (2.0 * e)
    })
}

#[test]
fn closed_form_log_det_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for d in [1usize, 3, 6] {
        for kind in [1u8, 3, 4, 5] {
            let l = random_layer(&mut rng, d, kind);
            for _ in 0..100 {
                let z = normal_vec(&mut rng, d, 1.5);
                let (_, ld) = l.forward(&z).unwrap();
                let fd = fd_jacobian(&l, &z).determinant().abs().ln();
                assert!((ld - fd).abs() < 1e-4 * (1.0 + ld.abs()), "{} d={d}: {ld} vs {fd}", l.variant());
                let j = l.jacobian(&z);
                assert!((j - fd_jacobian(&l, &z)).amax() < 1e-6);
            }
        }
    }
}

#[test]
fn pushforward_of_1d_gaussian_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let base = Gaussian1D::standard();
    for trial in 0..5 {
        let layers = (0..3).map(|k| random_layer(&mut rng, 1, [0u8, 1, 4][(k + trial) % 3])).collect();
        let stack = FlowStack::new(layers).unwrap();
        // window: images of ±12σ
        let lo = stack.forward(&[-12.0]).unwrap().0[0];
        let hi = stack.forward(&[12.0]).unwrap().0[0];
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for k in 0..=n {
            let y = lo + k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            total += w * stack.pushforward_log_density(&base, &[y]).unwrap().exp();
        }
        total *= h;
        assert!((total - 1.0).abs() < 1e-4, "trial {trial}: {total}");
    }
}

#[test]
fn empty_stack_and_householder_preserve_standard_gaussian() {
    let base = GaussianD::standard(3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let hh = FlowStack::new(vec![random_householder(&mut rng, 3), random_householder(&mut rng, 3)]).unwrap();
    for stack in [FlowStack::identity(), hh] {
        for _ in 0..20 {
            let y = normal_vec(&mut rng, 3, 1.0);
            let lp = stack.pushforward_log_density(&base, &y).unwrap();
            assert!((lp - log_density(&base, &y).unwrap()).abs() < 1e-12);
            let g = stack.pushforward_grad_log_density(&base, &y).unwrap();
            for (gi, yi) in g.iter().zip(&y) {
                assert!((gi + yi).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn relu_planar_pushforward_is_piecewise_gaussian() {
    let stack = FlowStack::new(vec![Planar::new(vec![1.0], vec![1.0], 0.0, Nonlinearity::Relu).unwrap().into()]).unwrap();
    let base = Gaussian1D::standard();
    let right = Gaussian1D::new(0.0, 2.0).unwrap();
    for &y in &[-2.0, -0.3, 0.4, 1.7, 5.0] {
        let lp = stack.pushforward_log_density(&base, &[y]).unwrap();
        let want = if y < 0.0 { base.logpdf(y) } else { right.logpdf(y) };
        assert!((lp - want).abs() < 1e-13);
    }
}

#[test]
fn pushforward_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let c1 = GaussianD::from_slices(&[1.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])).unwrap();
    let c2 = GaussianD::from_slices(&[-1.0, 1.0], DMatrix::identity(2, 2)).unwrap();
    let base = MixtureGaussianD::new(vec![0.4, 0.6], vec![c1, c2]).unwrap();
    for kinds in [[1u8, 1, 1], [1, 4, 5], [3, 1, 4]] {
        let layers: Vec<FlowLayer> = kinds.iter().map(|&k| random_layer(&mut rng, 2, k)).collect();
        let stack = FlowStack::new(layers).unwrap();
        for _ in 0..20 {
            let y = normal_vec(&mut rng, 2, 1.5);
            let g = stack.pushforward_grad_log_density(&base, &y).unwrap();
            for i in 0..2 {
                let e = 1e-5;
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[i] += e;
                ym[i] -= e;
                let fd = (stack.pushforward_log_density(&base, &yp).unwrap()
                    - stack.pushforward_log_density(&base, &ym).unwrap())
                    / (2.0 * e);
                assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "{kinds:?}: {fd} vs {}", g[i]);
            }
        }
    }
}

#[test]
fn relu_hyperplane_is_nonsmooth() {
    let stack = FlowStack::new(vec![Planar::new(vec![1.0, 0.0], vec![1.0, 0.0], 0.0, Nonlinearity::Relu).unwrap().into()]).unwrap();
    let base = GaussianD::standard(2);
    assert!(matches!(stack.pushforward_grad_log_density(&base, &[0.0, 1.0]), Err(Error::NonSmooth(_))));
    assert!(stack.pushforward_grad_log_density(&base, &[0.1, 1.0]).is_ok());
}

#[test]
fn sylvester_complementary_subspace() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for h in [Nonlinearity::Tanh, Nonlinearity::Relu] {
        let l = random_sylvester(&mut rng, 5, h);
        let FlowLayer::Sylvester(s) = &l else { unreachable!() };
        // project a random vector off span{B}
        let bm = s.bmat();
        let r = nalgebra::DVector::from_vec(normal_vec(&mut rng, 5, 1.0));
        let coef = (bm.transpose() * bm).lu().solve(&(bm.transpose() * &r)).unwrap();
        let wp = &r - bm * coef;
        let z = normal_vec(&mut rng, 5, 1.0);
        let alpha = 1.7;
        let shifted: Vec<f64> = z.iter().zip(wp.iter()).map(|(a, b)| a + alpha * b).collect();
        let f1 = l.forward(&shifted).unwrap().0;
        let f0 = l.forward(&z).unwrap().0;
        for i in 0..5 {
            assert!((f1[i] - (f0[i] + alpha * wp[i])).abs() < 1e-13);
        }
    }
}

#[test]
fn json_round_trip_is_lossless() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let layers: Vec<FlowLayer> = (0..6).map(|k| random_layer(&mut rng, 4, k)).collect();
    let stack = FlowStack::new(layers).unwrap();
    let s = stack.to_json_string().unwrap();
    let back = FlowStack::from_json_str(&s).unwrap();
    assert_eq!(back, stack);
}

#[test]
fn json_reports_field_paths() {
    let bad = r#"{"schema":"flowcap-flow-1","layers":[
        {"variant":"planar","u":[1],"w":[1],"b":0,"h":"relu"},
        {"variant":"householder","v":[0.9]}]}"#;
    match FlowStack::from_json_str(bad) {
        Err(Error::Schema { path, .. }) => assert_eq!(path, "$.layers[1].v"),
        r => panic!("{r:?}"),
    }
    let wrong = r#"{"schema":"flowcap-flow-2","layers":[]}"#;
    assert!(matches!(FlowStack::from_json_str(wrong), Err(Error::Schema { path, .. }) if path == "$.schema"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_round_trip(seed in any::<u64>(), d in prop::sample::select(vec![1usize, 2, 4, 8, 16]), kind in 0u8..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = random_layer(&mut rng, d, kind);
        for _ in 0..50 {
            let z = normal_vec(&mut rng, d, 3.0);
            let back = l.inverse(&l.forward(&z).unwrap().0).unwrap();
            let err = norm(&back.iter().zip(&z).map(|(a, b)| a - b).collect::<Vec<_>>());
            prop_assert!(err < 1e-9 * (1.0 + norm(&z)));
        }
    }

    #[test]
    fn prop_householder_preserves_norm(seed in any::<u64>(), d in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = random_householder(&mut rng, d);
        let z = normal_vec(&mut rng, d, 5.0);
        let y = l.forward(&z).unwrap().0;
        prop_assert!((norm(&y) - norm(&z)).abs() <= 1e-14 * (1.0 + norm(&z)));
    }
}
