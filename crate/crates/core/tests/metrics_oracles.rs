use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use vip_core::metrics::{gram_decompose, linear_cka, one_shot_probe, FeatureMatrix, LabeledFeatures};

fn random_matrix(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f32>> {
    (0..n).map(|_| (0..d).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()).collect()
}

fn fm(rows: &[Vec<f32>]) -> FeatureMatrix {
    FeatureMatrix::from_rows(rows, "m").unwrap()
}

/// CKA through explicitly centered n × n Gram matrices.
fn naive_cka(x: &[Vec<f32>], y: &[Vec<f32>]) -> f64 {
    let n = x.len();
    let gram = |m: &[Vec<f32>]| -> Vec<Vec<f64>> {
        let k: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| m[i].iter().zip(&m[j]).map(|(a, b)| *a as f64 * *b as f64).sum()).collect())
            .collect();
        // H K H with H = I - 11ᵀ/n.
        let row_mean: Vec<f64> = k.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
        let all = row_mean.iter().sum::<f64>() / n as f64;
        (0..n).map(|i| (0..n).map(|j| k[i][j] - row_mean[i] - row_mean[j] + all).collect()).collect()
    };
    let (kx, ky) = (gram(x), gram(y));
    let tr = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> f64 {
        (0..n).map(|i| (0..n).map(|j| a[i][j] * b[j][i]).sum::<f64>()).sum()
    };
    tr(&kx, &ky) / (tr(&kx, &kx) * tr(&ky, &ky)).sqrt()
}

fn random_orthogonal(d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for u in &q {
            let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-6 {
            q.push(v.into_iter().map(|a| a / n).collect());
        }
    }
    q
}

fn rotate(x: &[Vec<f32>], q: &[Vec<f64>]) -> Vec<Vec<f32>> {
    x.iter()
        .map(|r| (0..q.len()).map(|j| r.iter().zip(q).map(|(a, qr)| *a as f64 * qr[j]).sum::<f64>() as f32).collect())
        .collect()
}

#[test]
fn cka_matches_gram_form_on_50_by_6() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let x = random_matrix(50, 6, &mut rng);
    let y = random_matrix(50, 6, &mut rng);
    let v = linear_cka(&fm(&x), &fm(&y)).unwrap().value;
    assert!((v - naive_cka(&x, &y)).abs() < 1e-6);
}

#[test]
fn gram_terms_on_scalars_and_random_pairs() {
    let t = gram_decompose(&fm(&[vec![2.0]]), &fm(&[vec![3.0]])).unwrap();
    assert_eq!(
        (t.pp.data()[0], t.rr.data()[0], t.pr.data()[0], t.rp.data()[0], t.sum().data()[0]),
        (4.0, 9.0, 6.0, 6.0, 25.0)
    );
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let p = random_matrix(10, 4, &mut rng);
    let r = random_matrix(10, 4, &mut rng);
    let sum: Vec<Vec<f32>> = p.iter().zip(&r).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
    let t = gram_decompose(&fm(&p), &fm(&r)).unwrap();
    let s = t.sum();
    for i in 0..10 {
        for j in 0..10 {
            let direct: f64 = sum[i].iter().zip(&sum[j]).map(|(a, b)| *a as f64 * *b as f64).sum();
            assert!((s.data()[i * 10 + j] as f64 - direct).abs() < 1e-5);
        }
    }
    let zero = vec![vec![0.0f32; 4]; 10];
    let t = gram_decompose(&fm(&p), &fm(&zero)).unwrap();
    assert_eq!(t.sum(), t.pp);
}

#[test]
fn probe_chance_level_on_isotropic_features() {
    let (classes, k, seeds) = (1000usize, 5usize, 20u64);
    let mut total = 0.0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..classes).collect();
        let train = LabeledFeatures::new(fm(&random_matrix(classes, 16, &mut rng)), labels.clone()).unwrap();
        let test = LabeledFeatures::new(fm(&random_matrix(classes, 16, &mut rng)), labels).unwrap();
        total += one_shot_probe(&train, &test, k).unwrap();
    }
    let mean = total / seeds as f64;
    let p = k as f64 / classes as f64;
    let se = (p * (1.0 - p) / (classes as f64 * seeds as f64)).sqrt();
    assert!((mean - p).abs() < 3.0 * se, "mean {mean}, chance {p}, se {se}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cka_properties(n in 2usize..=64, dx in 1usize..=64, dy in 1usize..=64, seed in any::<u64>(), alpha in 0.01f32..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(n, dx, &mut rng);
        let y = random_matrix(n, dy, &mut rng);
        let xy = linear_cka(&fm(&x), &fm(&y)).unwrap().value;
        prop_assert!((0.0..=1.0 + 1e-9).contains(&xy));
        prop_assert!((xy - naive_cka(&x, &y)).abs() < 1e-6);
        prop_assert!((xy - linear_cka(&fm(&y), &fm(&x)).unwrap().value).abs() < 1e-6);
        let scaled: Vec<Vec<f32>> = x.iter().map(|r| r.iter().map(|v| v * alpha).collect()).collect();
        prop_assert!((xy - linear_cka(&fm(&scaled), &fm(&y)).unwrap().value).abs() < 1e-6);
        prop_assert!((linear_cka(&fm(&x), &fm(&x)).unwrap().value - 1.0).abs() < 1e-6);
        let q = random_orthogonal(dx, &mut rng);
        let rotated = rotate(&x, &q);
        prop_assert!((linear_cka(&fm(&x), &fm(&rotated)).unwrap().value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn probe_is_scale_invariant(seed in any::<u64>(), alpha in 0.001f32..1000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..12).collect();
        let train = random_matrix(12, 5, &mut rng);
        let test = random_matrix(12, 5, &mut rng);
        let scale = |m: &[Vec<f32>]| -> Vec<Vec<f32>> { m.iter().map(|r| r.iter().map(|v| v * alpha).collect()).collect() };
        for k in [1, 3] {
            let a = one_shot_probe(
                &LabeledFeatures::new(fm(&train), labels.clone()).unwrap(),
                &LabeledFeatures::new(fm(&test), labels.clone()).unwrap(), k).unwrap();
            let b = one_shot_probe(
                &LabeledFeatures::new(fm(&scale(&train)), labels.clone()).unwrap(),
                &LabeledFeatures::new(fm(&scale(&test)), labels.clone()).unwrap(), k).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn outlier_dimension_dominates_cosine_until_normed() {
    use vip_core::metrics::{activation_profile, pairwise_cosine_stats};
    use vip_core::tensor::LayerNormParams;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut rows = random_matrix(32, 48, &mut rng);
    rows.iter_mut().for_each(|r| r[3] += 100.0);
    let tokens = fm(&rows);
    let mut ln = LayerNormParams::identity(48, 1e-6);
    ln.gain[3] = 0.05;
    let pre = pairwise_cosine_stats(&tokens).unwrap();
    let post = pairwise_cosine_stats(&FeatureMatrix::new(ln.apply(tokens.tensor()).unwrap(), "n").unwrap()).unwrap();
    assert!(pre.mean >= 0.99, "{}", pre.mean);
    assert!(post.mean < pre.mean);
    let p = activation_profile(&tokens, 5, &ln).unwrap();
    assert_eq!(p.dims[0], 3);
    assert!(p.post_norm_mean[0] < p.pre_norm_mean[0]);
}
