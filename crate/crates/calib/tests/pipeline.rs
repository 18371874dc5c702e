use hercules_calib::synth::{corner_pair, random_transform, CornerScene};
use hercules_calib::{calibrate_pair, IcpParams, RansacParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn noisy_corner_sweep_recovers_extrinsics() {
    let scene = CornerScene {
        noise_sigma: 0.01,
        points_per_plane: 800,
        ..CornerScene::default()
    };
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_transform(&mut rng, 0.35, 0.5);
        let (a, b) = corner_pair(&scene, &truth, &mut rng);
        let ransac = RansacParams {
            seed,
            ..RansacParams::default()
        };
        let cal = calibrate_pair(&a, &b, &ransac, &IcpParams::default()).unwrap();
        let t = cal.refined.transform;
        let rot = t.rotation_angle_to(&truth).to_degrees();
        let trans = t.translation_distance_to(&truth);
        assert!(rot < 0.5 && trans < 0.02, "seed {seed}: {rot:.3} deg, {trans:.4} m");
        assert!(t.orthonormality_error() < 1e-9 && t.rotation.determinant() > 0.0);
        for w in cal.refined.rms_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }
}

#[test]
fn occluded_noiseless_pair_is_near_exact() {
    let scene = CornerScene {
        occlusion_fraction: 0.3,
        ..CornerScene::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let truth = random_transform(&mut rng, 0.3, 0.5);
    let (a, b) = corner_pair(&scene, &truth, &mut rng);
    let cal = calibrate_pair(&a, &b, &RansacParams::default(), &IcpParams::default()).unwrap();
    assert!(cal.initial.rotation_angle_to(&truth) < 1e-9);
    assert!(cal.initial.translation_distance_to(&truth) < 1e-9);
    assert!(cal.refined.transform.rotation_angle_to(&truth) < 1e-6);
}
