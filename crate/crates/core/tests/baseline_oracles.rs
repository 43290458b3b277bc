use nalgebra::{DMatrix, DVector, SymmetricEigen};

use span_core::baselines::{lissa_direction, neumann_estimate, run_gd, run_svrg, GdConfig, NewSampInverse, SvrgConfig};
use span_core::datasets::{normalize_rows, synth_quadratic};
use span_core::linalg::{gaussian_matrix, norm, DenseMatrix};
use span_core::objectives::{Batch, Dataset, Objective, ObjectiveConfig};

fn random_spd(d: usize, seed: u64) -> DenseMatrix {
    let g = gaussian_matrix(d, d, seed);
    let mut a = g.tr_matmul(&g).unwrap().scale(1.0 / d as f64);
    for i in 0..d {
        a.set(i, i, a.get(i, i) + 0.1);
    }
    a.symmetrize()
}

#[test]
fn newsamp_inverse_inverts_its_regularized_matrix() {
    for (d, m, seed) in [(5, 2, 1), (12, 4, 2), (30, 10, 3), (50, 20, 4)] {
        let h = random_spd(d, seed);
        let inv = NewSampInverse::from_hessian(&h, m).unwrap();
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(d, d, h.data()));
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let next = eig.eigenvalues[order[m]];
        let mut reg = DMatrix::identity(d, d) * next;
        for &k in &order[..m] {
            let u = eig.eigenvectors.column(k);
            reg += (eig.eigenvalues[k] - next) * &u * u.transpose();
        }
        let explicit = DMatrix::from_row_slice(d, d, inv.dense(d).data());
        let residual = (explicit * reg - DMatrix::identity(d, d)).abs().max();
        assert!(residual <= 1e-8, "d = {d}: {residual}");
        assert!((inv.sigma_next() - next).abs() <= 1e-10 * next.abs().max(1.0));
    }
}

#[test]
fn neumann_on_scaled_identity_is_geometric() {
    let g = [1.0, -2.0, 0.5];
    for (c, steps) in [(0.5, 0), (0.5, 1), (0.5, 7), (0.3, 12), (0.9, 25)] {
        let u = neumann_estimate(&g, steps, |_, v| Ok(v.iter().map(|x| c * x).collect())).unwrap();
        // Σ_{k≤j} (1 − c)^k = (1 − (1 − c)^{j+1}) / c
        let factor = (1.0 - (1.0 - c).powi(steps as i32 + 1)) / c;
        for (ui, gi) in u.iter().zip(&g) {
            assert!((ui - factor * gi).abs() <= 1e-10, "c = {c}, steps = {steps}");
        }
    }
}

#[test]
fn lissa_direction_approximates_newton_direction() {
    let spectrum = [0.9, 0.7, 0.45, 0.25, 0.1];
    let (cfg, data, _) = synth_quadratic(&spectrum).unwrap();
    let obj = Objective::new(&cfg, &data).unwrap();
    let scale = 1.0 / (1.25 * 0.9);
    let mut errors: Vec<f64> = (0..50)
        .map(|seed| {
            let g = gaussian_matrix(5, 1, seed).into_data();
            let batches = vec![Batch::full(1); 8 * 200];
            let dir = lissa_direction(&obj, &[0.0; 5], &g, &batches, 200, 8, scale).unwrap();
            let newton: Vec<f64> = g.iter().zip(&spectrum).map(|(a, s)| a / s).collect();
            let diff: Vec<f64> = dir.iter().zip(&newton).map(|(a, b)| a - b).collect();
            norm(&diff) / norm(&newton)
        })
        .collect();
    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert!(errors[25] <= 0.05, "median relative error {}", errors[25]);
}

fn toy_classification() -> Dataset {
    let feats = gaussian_matrix(20, 2, 17).into_data();
    let labels = (0..20).map(|i| if (i * 5) % 7 < 3 { 1.0 } else { -1.0 }).collect();
    normalize_rows(&Dataset::new(2, feats, labels).unwrap()).0
}

#[test]
fn svrg_solves_logistic_toy_with_grid_tuned_step() {
    let data = toy_classification();
    let cfg = ObjectiveConfig::logistic(0.05);
    let obj = Objective::new(&cfg, &data).unwrap();
    let b = obj.full_batch();
    // dense Newton reference
    let mut x = DVector::zeros(2);
    for _ in 0..50 {
        let g = DVector::from_vec(obj.full_gradient(x.as_slice()).unwrap());
        let h = obj.dense_hessian(&b, x.as_slice()).unwrap();
        x -= DMatrix::from_row_slice(2, 2, h.data()).cholesky().unwrap().solve(&g);
    }
    let best = [0.1, 0.5, 1.0]
        .into_iter()
        .map(|eta| {
            let c = SvrgConfig { eta, epochs: 30, inner_steps: None, batch_size: 1, seed: 5, grad_tol: 1e-4 };
            run_svrg(&obj, &c, &[0.0, 0.0]).unwrap()
        })
        .min_by(|a, b| {
            let ga = a.trace.last().unwrap().grad_norm;
            let gb = b.trace.last().unwrap().grad_norm;
            ga.partial_cmp(&gb).unwrap()
        })
        .unwrap();
    assert!(best.trace.last().unwrap().grad_norm <= 1e-4);
    assert!(best.trace.len() <= 30);
    let gap = ((best.x[0] - x[0]).powi(2) + (best.x[1] - x[1]).powi(2)).sqrt();
    assert!(gap <= 1e-2, "distance to Newton solution {gap}");
}

#[test]
fn gd_loss_decreases_below_two_over_l() {
    let (cfg, data, _) = synth_quadratic(&[1.0, 10.0]).unwrap();
    let obj = Objective::new(&cfg, &data).unwrap();
    let run = run_gd(&obj, &GdConfig { eta: 0.19, max_iter: 40, grad_tol: 0.0 }, &[1.0, 1.0]).unwrap();
    let mut prev = obj.full_loss(&[1.0, 1.0]).unwrap();
    for (t, r) in run.trace.iter().enumerate() {
        assert!(r.loss < prev);
        // closed form: x_t = (1 − η σ)^t x_0
        let k = t as i32 + 1;
        let want = 0.5 * (0.81f64.powi(k).powi(2) + 10.0 * (-0.9f64).powi(k).powi(2));
        assert!((r.loss - want).abs() <= 1e-12);
        prev = r.loss;
    }
}
