use std::time::Instant;

use ctgca::gca::{parse_rating_csv, write_rating_csv, GcaScore, N_REGIONS};
use ctgca::phantom::{canonical_volume, generate_phantom, PhantomSpec};
use ctgca::predictor::{extract_features, predict_gca, train, TrainConfig};
use ctgca::preprocess::{extract_brain, register_affine, to_template_space, RegistrationConfig, Template};
use ctgca::volume::affine::rotation_angle;
use ctgca::volume::nifti::{read_nifti, write_nifti};
use ctgca::volume::AffineTransform;
use nalgebra::Vector3;

fn scores(v: [u8; N_REGIONS]) -> [GcaScore; N_REGIONS] {
    v.map(|s| GcaScore::new(s).unwrap())
}

fn spec(noise: f64, pose: AffineTransform) -> PhantomSpec {
    PhantomSpec {
        region_scores: scores([2, 1, 3, 0, 2, 2, 1, 3, 0, 1, 2, 3, 1]),
        noise_sigma: noise,
        pose,
        seed: 77,
    }
}

#[test]
fn nifti_round_trip_of_a_phantom_is_bit_exact() {
    let (v, _) = generate_phantom(&spec(15.0, AffineTransform::rigid([2.0, -1.0, 3.0], [0.02, 0.0, -0.04]))).unwrap();
    let back = read_nifti(&write_nifti(&v)).unwrap();
    assert_eq!(back.dims(), v.dims());
    assert!(back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    let (a, b) = (back.affine(), v.affine());
    for i in 0..16 {
        assert!((a[i] - b[i]).abs() <= 1e-6 * b[i].abs().max(1.0));
    }
}

#[test]
fn rating_sheet_round_trip() {
    let text = "scan_id,rater_id,frontal_l,frontal_r,temporal_l,temporal_r,parieto_occipital_l,parieto_occipital_r,frontal_horn_l,frontal_horn_r,temporal_horn_l,temporal_horn_r,occipital_horn_l,occipital_horn_r,third_ventricle\n\
a,r1,0,1,2,3,0,1,2,3,0,1,2,3,0\n\
b,r1,NA,1,1,1,1,1,1,1,1,1,1,1,1\n\
a,r2,3,3,3,3,3,3,3,3,3,3,3,3,3\n";
    let parsed = parse_rating_csv(text).unwrap();
    assert_eq!(parsed.len(), 3);
    assert_eq!(parsed[2].total().unwrap(), 39);
    assert_eq!(write_rating_csv(&parsed).unwrap(), text);
}

/// Residual translation (mm) and rotation (deg) of `recovered ∘ pose`.
fn residual(recovered: &AffineTransform, pose: &AffineTransform) -> (f64, f64) {
    let c = recovered.matrix() * pose.matrix();
    (Vector3::new(c[(0, 3)], c[(1, 3)], c[(2, 3)]).norm(), rotation_angle(&c).to_degrees())
}

#[test]
fn posed_noisy_phantom_is_registered_within_a_voxel() {
    let pose = AffineTransform::rigid([4.0, -3.0, 2.5], [0.06, -0.05, 0.08]);
    let (v, _) = generate_phantom(&spec(15.0, pose.clone())).unwrap();
    let tmpl = Template::canonical();
    let (_, brain) = extract_brain(&v).unwrap();
    let reg = register_affine(&brain, tmpl, &RegistrationConfig::default()).unwrap();
    let (t, r) = residual(&reg.transform, &pose);
    assert!(t <= 1.5 && r <= 1.0, "translation {t} mm, rotation {r} deg");

    let aligned = to_template_space(&brain, &reg.transform, tmpl).unwrap();
    let f = extract_features(&aligned, tmpl).unwrap();
    assert!(f.values().iter().all(|x| (0.0..=1.0).contains(x)));
}

#[test]
fn resampling_into_template_space_preserves_intensities() {
    let pose = AffineTransform::rigid([3.0, 2.0, -4.0], [0.0, 0.05, 0.0]);
    let s = spec(0.0, pose.clone());
    let (posed, _) = generate_phantom(&s).unwrap();
    let unposed = canonical_volume(&s.region_scores, s.seed);
    let (_, brain) = extract_brain(&posed).unwrap();
    let tmpl = Template::canonical();
    let reg = register_affine(&brain, tmpl, &RegistrationConfig::default()).unwrap();
    let aligned = to_template_space(&posed, &reg.transform, tmpl).unwrap();
    assert_eq!(aligned.dims(), tmpl.volume.dims());
    let mask = &tmpl.brain_mask;
    let err: f64 = mask
        .indices()
        .map(|i| (aligned.data()[i] - unposed.data()[i]).abs() as f64)
        .sum::<f64>()
        / mask.count() as f64;
    assert!(err <= 10.0, "mean absolute error {err} HU");
}

#[test]
fn inference_on_a_preprocessed_volume_is_fast() {
    // A small model trained on template-space phantoms without pose.
    let tmpl = Template::canonical();
    let dataset: Vec<_> = (0..10u8)
        .map(|i| {
            let v: [u8; N_REGIONS] = std::array::from_fn(|r| ((i as usize + r) % 4) as u8);
            let s = PhantomSpec {
                region_scores: scores(v),
                noise_sigma: 0.0,
                pose: AffineTransform::identity(),
                seed: i as u64,
            };
            let (vol, mut rating) = generate_phantom(&s).unwrap();
            rating.scan_id = format!("p{i}");
            let (_, brain) = extract_brain(&vol).unwrap();
            (extract_features(&brain, tmpl).unwrap(), rating)
        })
        .collect();
    let model = train(&dataset, &TrainConfig::default()).unwrap().model;

    let (v, _) = generate_phantom(&spec(15.0, AffineTransform::identity())).unwrap();
    let (_, brain) = extract_brain(&v).unwrap();
    let aligned = to_template_space(&brain, &AffineTransform::identity(), tmpl).unwrap();
    let start = Instant::now();
    let f = extract_features(&aligned, tmpl).unwrap();
    let p = predict_gca(&model, &f).unwrap();
    let secs = start.elapsed().as_secs_f64();
    assert!(p.total <= 39);
    assert!(secs <= 4.0, "{secs} s");
}
