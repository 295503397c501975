use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volsr::acquisition::{blur_separable, cws_kernel, RigidMotion, SliceStack, StackGeometry};
use volsr::baselines::upsample_trilinear;
use volsr::metrics::psnr;
use volsr::svr::*;
use volsr::volume::{generate_phantom, PhantomKind, PhantomSpec};
use volsr::{Axis, Volume};

fn phantom(n: usize, seed: u64) -> Volume {
    generate_phantom(&PhantomSpec::new(PhantomKind::Mixed, [n, n, n], seed)).unwrap()
}

fn still(n_stacks: usize) -> AcquisitionConfig {
    AcquisitionConfig {
        n_stacks,
        sigma_translation: 0.0,
        sigma_rotation: 0.0,
        noise_sigma: 0.0,
        ..Default::default()
    }
}

fn norm2(r: &[Vec<f32>]) -> f64 {
    r.iter().flatten().map(|&x| (x as f64).powi(2)).sum()
}

fn psfs(stacks: &[SliceStack]) -> Vec<SlicePsf> {
    stacks
        .iter()
        .map(|s| SlicePsf::for_geometry(&s.geometry).unwrap())
        .collect()
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn slice_operator_passes_dot_product_test(
        dims in [8usize..=14, 8usize..=14, 8usize..=14],
        axis in 0usize..3,
        tf in 1usize..=2,
        inf in 1usize..=2,
        pose in prop::array::uniform6(-1.0f64..1.0),
        seed in any::<u64>(),
    ) {
        let axis = Axis::from_index(axis).unwrap();
        let mut dims = dims;
        for d in &mut dims {
            *d -= *d % 4;
        }
        let g = StackGeometry {
            axis,
            reference_dims: dims,
            reference_spacing: [1.0, 1.2, 0.9],
            thickness_factor: tf,
            inplane_factor: inf,
        };
        let psf = SlicePsf::for_geometry(&g).unwrap();
        let pose = RigidMotion([pose[0], pose[1], pose[2], 0.05 * pose[3], 0.05 * pose[4], 0.05 * pose[5]]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = dims.iter().product();
        let v = Volume::new(dims, g.reference_spacing, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let s_idx = rng.random_range(0..g.image_dims()[2]);
        let av = simulate_slice(&v, &pose, &psf, &g, s_idx).unwrap();
        let s = av.with_data((0..av.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let ats = slice_adjoint(&s, &pose, &psf, &g, s_idx, &ReconGrid::of_volume(&v)).unwrap();
        let lhs = dot(av.data(), s.data());
        let rhs = dot(v.data(), ats.data());
        prop_assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }
}

#[test]
fn forward_model_is_linear() {
    let v = phantom(16, 1);
    let sim = simulate_stacks(&v, &still(2)).unwrap();
    let g = &sim.stacks[0].geometry;
    let psf = SlicePsf::for_geometry(g).unwrap();
    let pose = RigidMotion([0.3, -0.2, 0.5, 0.01, 0.02, -0.01]);
    let a = simulate_slice(&v, &pose, &psf, g, 3).unwrap();
    let b = simulate_slice(&v.map(|x| 2.5 * x), &pose, &psf, g, 3).unwrap();
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((2.5 * x - y).abs() < 1e-5);
    }
}

#[test]
fn half_normal_translation_means() {
    let v = phantom(32, 0);
    let mut poses = Vec::new();
    for seed in 0..100 {
        let cfg = AcquisitionConfig {
            sigma_translation: 1.5,
            sigma_rotation: 0.02,
            seed,
            ..Default::default()
        };
        poses.extend(
            simulate_stacks(&v, &cfg)
                .unwrap()
                .true_poses
                .into_iter()
                .flatten(),
        );
    }
    let half_normal = (2.0 / std::f64::consts::PI).sqrt();
    for k in 0..6 {
        let expect = if k < 3 { 1.5 } else { 0.02 } * half_normal;
        let m = poses.iter().map(|p| p.0[k].abs()).sum::<f64>() / poses.len() as f64;
        assert!(
            (m / expect - 1.0).abs() < 0.05,
            "component {k}: {m} vs {expect}"
        );
    }
}

#[test]
fn registration_recovers_known_translation() {
    let v = phantom(48, 3);
    let sim = simulate_stacks(&v, &still(2)).unwrap();
    let mut stack = sim.stacks[0].clone();
    let psf = SlicePsf::for_geometry(&stack.geometry).unwrap();
    let s = 6;
    let moved = RigidMotion([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let img = simulate_slice(&v, &moved, &psf, &stack.geometry, s).unwrap();
    stack.slice_data_mut(s).copy_from_slice(img.data());
    let cfg = RegisterConfig::default();
    let r = register_slice(&stack, s, &psf, &RigidMotion::identity(), &v, &cfg).unwrap();
    assert!(!r.skipped);
    assert!((r.pose.0[0] - 1.0).abs() < 0.25, "{:?}", r.pose);
    assert!(r.ncc >= r.ncc_initial);

    let aligned =
        register_slice(&sim.stacks[0], s, &psf, &RigidMotion::identity(), &v, &cfg).unwrap();
    for k in 0..6 {
        let tol = if k < 3 { 0.1 } else { 0.005 };
        assert!(aligned.pose.0[k].abs() < tol, "{:?}", aligned.pose);
    }
}

#[test]
fn registration_never_lowers_ncc() {
    let v = phantom(32, 5);
    let cfg = AcquisitionConfig {
        sigma_translation: 1.0,
        sigma_rotation: 0.03,
        noise_sigma: 0.05,
        seed: 11,
        ..Default::default()
    };
    let sim = simulate_stacks(&v, &cfg).unwrap();
    let st = &sim.stacks[0];
    let psf = SlicePsf::for_geometry(&st.geometry).unwrap();
    let rc = RegisterConfig {
        sweeps: 1,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for s in [1, 4, 7] {
        let init = RigidMotion(std::array::from_fn(|k| {
            if k < 3 {
                rng.random_range(-1.0..1.0)
            } else {
                0.0
            }
        }));
        let r = register_slice(st, s, &psf, &init, &v, &rc).unwrap();
        assert!(
            r.ncc >= r.ncc_initial,
            "slice {s}: {} < {}",
            r.ncc,
            r.ncc_initial
        );
    }
}

#[test]
fn constant_slice_is_skipped() {
    let v = phantom(16, 0);
    let mut sim = simulate_stacks(&v, &still(2)).unwrap();
    sim.stacks[0].slice_data_mut(2).fill(0.25);
    let psf = SlicePsf::for_geometry(&sim.stacks[0].geometry).unwrap();
    let init = RigidMotion([0.2, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let r = register_slice(
        &sim.stacks[0],
        2,
        &psf,
        &init,
        &v,
        &RegisterConfig::default(),
    )
    .unwrap();
    assert!(r.skipped);
    assert_eq!(r.pose, init);
}

#[test]
fn ground_truth_is_an_sr_fixed_point() {
    let v = phantom(32, 2);
    let sim = simulate_stacks(&v, &still(3)).unwrap();
    let next = sr_update(&v, &sim.stacks, &sim.true_poses, None, 0.5).unwrap();
    let worst = v
        .data()
        .iter()
        .zip(next.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0f32, f32::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn one_sr_step_reduces_residual() {
    let v = phantom(32, 4);
    let sim = simulate_stacks(&v, &still(3)).unwrap();
    let p = psfs(&sim.stacks);
    let blurred = blur_separable(&v, &cws_kernel(4).unwrap(), &Axis::ALL).unwrap();
    let before = norm2(&slice_residuals(&blurred, &sim.stacks, &sim.true_poses, &p).unwrap());
    let next = sr_update(&blurred, &sim.stacks, &sim.true_poses, None, 0.5).unwrap();
    let after = norm2(&slice_residuals(&next, &sim.stacks, &sim.true_poses, &p).unwrap());
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn zero_weight_slice_has_no_influence() {
    let v = phantom(32, 6);
    let sim = simulate_stacks(&v, &still(2)).unwrap();
    let p = psfs(&sim.stacks);
    let est = blur_separable(&v, &cws_kernel(2).unwrap(), &Axis::ALL).unwrap();
    let res = slice_residuals(&est, &sim.stacks, &sim.true_poses, &p).unwrap();
    let mut em = EmState::initial(&res);
    let bad = 5;
    em.slice_probabilities[bad] = 0.0;
    let a = sr_update(&est, &sim.stacks, &sim.true_poses, Some(&em), 0.5).unwrap();

    let mut corrupted = sim.stacks.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    corrupted[0]
        .slice_data_mut(bad)
        .iter_mut()
        .for_each(|x| *x = rng.random_range(0.0..5.0));
    let b = sr_update(&est, &corrupted, &sim.true_poses, Some(&em), 0.5).unwrap();
    assert_eq!(a.data(), b.data());

    let mut em2 = em.clone();
    em2.slice_probabilities[bad] = 1.0;
    let c = sr_update(&est, &corrupted, &sim.true_poses, Some(&em2), 0.5).unwrap();
    assert_ne!(a.data(), c.data());
}

fn stack_as_volume(st: &SliceStack) -> Volume {
    let order = match st.axis() {
        Axis::Z => [0, 1, 2],
        Axis::Y => [0, 2, 1],
        Axis::X => [2, 0, 1],
    };
    let img = st.images.permute(order).unwrap();
    let mut f = [st.geometry.inplane_factor; 3];
    f[st.axis().index()] = st.geometry.thickness_factor;
    upsample_trilinear(&img, f).unwrap()
}

#[test]
fn reconstruction_beats_every_single_stack() {
    let v = phantom(32, 8);
    let sim = simulate_stacks(&v, &still(3)).unwrap();
    let cfg = ReconConfig {
        outer_iterations: 2,
        register: false,
        ..Default::default()
    };
    let r = reconstruct(&sim.stacks, &cfg, &Upsampler::None).unwrap();
    let recon = psnr(&r.volume, &v, 1.0).unwrap();
    for st in &sim.stacks {
        let single = stack_as_volume(st);
        assert_eq!(single.dims(), v.dims());
        let p = psnr(&single, &v, 1.0).unwrap();
        assert!(recon > p, "stack {}: {recon} <= {p}", st.axis());
    }
    let res: Vec<f64> = r.report.rounds.iter().map(|x| x.residual_norm).collect();
    assert!(res.windows(2).all(|w| w[1] < w[0]), "{res:?}");
}

#[test]
fn reconstruction_is_deterministic() {
    let v = phantom(24, 9);
    let cfg_acq = AcquisitionConfig {
        sigma_translation: 0.5,
        sigma_rotation: 0.01,
        noise_sigma: 0.02,
        seed: 4,
        ..Default::default()
    };
    let sim = simulate_stacks(&v, &cfg_acq).unwrap();
    let again = simulate_stacks(&v, &cfg_acq).unwrap();
    assert_eq!(sim.stacks[1].images.data(), again.stacks[1].images.data());
    let cfg = ReconConfig {
        outer_iterations: 1,
        sr_steps: 2,
        registration: RegisterConfig {
            sweeps: 1,
            ..Default::default()
        },
        ..Default::default()
    };
    let a = reconstruct(&sim.stacks, &cfg, &Upsampler::Linear).unwrap();
    let b = reconstruct(&sim.stacks, &cfg, &Upsampler::Linear).unwrap();
    assert_eq!(a.volume.data(), b.volume.data());
    assert_eq!(a.poses, b.poses);
}

#[test]
fn three_stacks_beat_two() {
    let v = phantom(32, 10);
    let acq = AcquisitionConfig {
        noise_sigma: 0.02,
        sigma_translation: 0.0,
        sigma_rotation: 0.0,
        seed: 5,
        ..Default::default()
    };
    let sim = simulate_stacks(&v, &acq).unwrap();
    let cfg = ReconConfig {
        outer_iterations: 2,
        register: false,
        ..Default::default()
    };
    let two = reconstruct(&sim.stacks[..2], &cfg, &Upsampler::Linear).unwrap();
    let three = reconstruct(&sim.stacks, &cfg, &Upsampler::Linear).unwrap();
    let p2 = psnr(&two.volume, &v, 1.0).unwrap();
    let p3 = psnr(&three.volume, &v, 1.0).unwrap();
    assert!(p3 >= p2, "{p3} < {p2}");
}

#[test]
fn stack_count_and_axes_are_checked() {
    let v = phantom(16, 0);
    let sim = simulate_stacks(&v, &still(3)).unwrap();
    let cfg = ReconConfig::default();
    let err = reconstruct(&sim.stacks[..1], &cfg, &Upsampler::None).unwrap_err();
    assert!(err.is_validation());
    let dup = vec![sim.stacks[0].clone(), sim.stacks[0].clone()];
    assert!(reconstruct(&dup, &cfg, &Upsampler::None)
        .unwrap_err()
        .is_validation());
}
