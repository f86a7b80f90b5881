//! Property checks shared by the invariant tests and the acceptance report.
//! Each runs `CASES` generated cases and returns the first failure.

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;
use scrnn::attention::{joint_attention, skeleton_attention, JointAttentionParams, SkeletonAttentionParams};
use scrnn::cells::{
    confidence_gate, skeleton_gru_graph, spatial_gru_graph, GateParams, SkeletonGruParams, SpatialGruParams,
};
use scrnn::loss::{coefficient_matrix, gram_loss, mse_loss, weighted_gram};
use scrnn::numerics::{softmax_temperature, Tape};
use scrnn::Matrix;

use super::*;

pub const CASES: u32 = 1000;

#[derive(Debug, Clone)]
pub struct PropResult {
    pub name: &'static str,
    pub cases: u32,
    pub failure: Option<String>,
}

fn runner() -> TestRunner {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(
    name: &'static str,
    strategy: S,
    test: impl Fn(S::Value) -> std::result::Result<(), TestCaseError>,
) -> PropResult {
    let failure = runner().run(&strategy, test).err().map(|e| e.to_string());
    PropResult {
        name,
        cases: CASES,
        failure,
    }
}

fn frames(max_len: usize, max_dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max_len, 1..=max_dim).prop_flat_map(|(n, d)| vec(vec(-2.0f64..2.0, d), n))
}

pub fn softmax_normalization() -> PropResult {
    run(
        "softmax sums to one",
        (vec(-50.0f64..50.0, 1..20), 0.05f64..10.0),
        |(scores, tau)| {
            let p = softmax_temperature(&scores, tau).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12, "sum {total}");
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            Ok(())
        },
    )
}

pub fn softmax_shift_invariance() -> PropResult {
    run(
        "softmax shift invariance",
        (vec(-10.0f64..10.0, 1..20), 0.1f64..10.0, -100.0f64..100.0),
        |(scores, tau, c)| {
            let p = softmax_temperature(&scores, tau).unwrap();
            let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
            let q = softmax_temperature(&shifted, tau).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
            Ok(())
        },
    )
}

/// Skeleton and joint attention factors form distributions.
pub fn attention_normalization() -> PropResult {
    run("attention factors sum to one", any::<u64>(), |seed| {
        let mut r = rng(seed);
        let joints = r.gen_range(2..=5);
        let (d, t, a) = (3 * joints, r.gen_range(1..=6), r.gen_range(1..=6));
        let f = rand_mat(&mut r, d, t, 2.0);
        let sp = SkeletonAttentionParams {
            u_eh: to_matrix(&rand_mat(&mut r, a, d, 1.0)),
            u_ef: to_matrix(&rand_mat(&mut r, a, d, 1.0)),
            w_e: col_matrix(&rand_vec(&mut r, a, 3.0)),
            b_e: col_matrix(&rand_vec(&mut r, a, 1.0)),
        };
        let h = rand_vec(&mut r, d, 1.0);
        let tau = r.gen_range(0.1..5.0);
        let s = skeleton_attention(&observed_map(&f), &h, &sp, tau).unwrap();
        let total: f64 = s.alphas.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "skeleton sum {total}");

        let f_tp = rand_mat(&mut r, d, t + 1, 2.0);
        let jp = JointAttentionParams {
            u_cb: to_matrix(&rand_mat(&mut r, a, 3, 1.0)),
            u_cm: to_matrix(&rand_mat(&mut r, a, 3, 1.0)),
            w_c: col_matrix(&rand_vec(&mut r, a, 3.0)),
            b_c: col_matrix(&rand_vec(&mut r, a, 1.0)),
        };
        let k = r.gen_range(1..=joints);
        let alphas = joint_attention(&extended_map(&f_tp), k, &jp, tau).unwrap();
        prop_assert_eq!(alphas.len(), joints - 1);
        prop_assert!(!alphas.contains_key(&k));
        let total: f64 = alphas.values().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "joint sum {total}");
        Ok(())
    })
}

fn open_unit(m: &Matrix) -> bool {
    m.as_slice().iter().all(|&v| v > 0.0 && v < 1.0)
}

/// Update and reset gates of both recurrent cells lie strictly inside (0, 1).
pub fn gate_ranges() -> PropResult {
    run("GRU gates in (0, 1)", any::<u64>(), |seed| {
        let mut r = rng(seed);
        let d = 3 * r.gen_range(2..=5);
        let n = r.gen_range(1..=12);
        let mut tape = Tape::new();
        let m = |r: &mut ChaCha8Rng, rows, cols| to_matrix(&rand_mat(r, rows, cols, 1.0));
        let skel = SkeletonGruParams {
            w_zx: m(&mut r, n, d),
            w_zh: m(&mut r, n, n),
            w_za: m(&mut r, n, d),
            w_rx: m(&mut r, n, d),
            w_rh: m(&mut r, n, n),
            w_ra: m(&mut r, n, d),
            w_cx: m(&mut r, n, d),
            w_ch: m(&mut r, n, n),
            b_z: m(&mut r, n, 1),
            b_r: m(&mut r, n, 1),
            b_c: m(&mut r, n, 1),
        };
        let sv = skel.register(&mut tape);
        let x = tape.leaf(m(&mut r, d, 1));
        let h = tape.leaf(m(&mut r, n, 1));
        let ha = tape.leaf(m(&mut r, d, 1));
        let nodes = skeleton_gru_graph(&mut tape, x, h, ha, &sv).unwrap();
        prop_assert!(open_unit(tape.value(nodes.z)) && open_unit(tape.value(nodes.r)));

        let cols = r.gen_range(2..=7);
        let spatial = SpatialGruParams {
            w_zm: m(&mut r, 3, 3),
            w_zq: m(&mut r, 3, 3),
            w_zo: m(&mut r, 3, 3),
            w_rm: m(&mut r, 3, 3),
            w_rq: m(&mut r, 3, 3),
            w_ro: m(&mut r, 3, 3),
            w_cm: m(&mut r, 3, 3),
            w_cq: m(&mut r, 3, 3),
            b_z: m(&mut r, 3, cols),
            b_r: m(&mut r, 3, cols),
            b_c: m(&mut r, 3, cols),
        };
        let pv = spatial.register(&mut tape);
        let mm = tape.leaf(m(&mut r, 3, cols));
        let q = tape.leaf(m(&mut r, 3, cols));
        let o = tape.leaf(m(&mut r, 3, cols));
        let nodes = spatial_gru_graph(&mut tape, mm, q, o, &pv).unwrap();
        prop_assert!(open_unit(tape.value(nodes.z)) && open_unit(tape.value(nodes.r)));
        Ok(())
    })
}

/// The confidence gate lies in (0, 1] and is exactly 1 where both
/// transformed inputs agree.
pub fn confidence_gate_range() -> PropResult {
    run(
        "confidence gate in (0, 1], 1 at zero difference",
        any::<u64>(),
        |seed| {
            let mut r = rng(seed);
            let d = 3 * r.gen_range(2..=5);
            let w = rand_mat(&mut r, d, d, 1.0);
            let b = rand_vec(&mut r, d, 1.0);
            let rho = r.gen_range(0.05..5.0);
            let h = rand_vec(&mut r, d, 1.0);
            let m = rand_vec(&mut r, d, 1.0);
            let params = GateParams {
                w_fh: to_matrix(&w),
                w_fm: to_matrix(&rand_mat(&mut r, d, d, 1.0)),
                b_h: col_matrix(&b),
                b_m: col_matrix(&rand_vec(&mut r, d, 1.0)),
                rho,
            };
            let g = confidence_gate(&h, &m, &params).unwrap();
            prop_assert!(g.iter().all(|&v| v > 0.0 && v <= 1.0), "{g:?}");

            let same = GateParams {
                w_fm: params.w_fh.clone(),
                b_m: params.b_h.clone(),
                ..params
            };
            let g = confidence_gate(&h, &h, &same).unwrap();
            prop_assert!(g.iter().all(|&v| v == 1.0), "{g:?}");
            Ok(())
        },
    )
}

fn cholesky_psd(g: &Matrix) -> bool {
    let n = g.rows();
    let trace: f64 = (0..n).map(|i| g.get(i, i)).sum();
    let jitter = 1e-10 * trace.max(1e-300);
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = g.get(i, j) + if i == j { jitter } else { 0.0 };
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return false;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    true
}

pub fn gram_symmetric_psd() -> PropResult {
    run(
        "weighted gram symmetric and PSD",
        (frames(8, 9), 0.2f64..3.0),
        |(xs, tau)| {
            let coeffs = coefficient_matrix(&xs, tau).unwrap();
            let g = weighted_gram(&xs, &coeffs).unwrap();
            for i in 0..g.rows() {
                for j in 0..g.cols() {
                    prop_assert_eq!(g.get(i, j), g.get(j, i));
                }
            }
            prop_assert!(cholesky_psd(&g), "not PSD: {:?}", g);
            Ok(())
        },
    )
}

pub fn loss_of_identical_is_zero() -> PropResult {
    run("loss(p, p) = 0", (frames(8, 9), 0.2f64..3.0), |(xs, tau)| {
        prop_assert_eq!(gram_loss(&xs, &xs, tau).unwrap(), 0.0);
        prop_assert_eq!(mse_loss(&xs, &xs).unwrap(), 0.0);
        Ok(())
    })
}

pub fn coefficients_unit_diagonal_symmetric() -> PropResult {
    run(
        "I has unit diagonal and is symmetric",
        (frames(10, 9), 0.2f64..3.0),
        |(xs, tau)| {
            let c = coefficient_matrix(&xs, tau).unwrap();
            for i in 0..c.len() {
                prop_assert_eq!(c.get(i, i), 1.0);
                for j in 0..c.len() {
                    prop_assert_eq!(c.get(i, j), c.get(j, i));
                    prop_assert!(c.get(i, j) > 0.0 || c.get(i, j) == 0.0);
                    prop_assert!(c.get(i, j) <= 1.0);
                }
            }
            Ok(())
        },
    )
}

/// Permuting time indices permutes the rows and columns of I identically.
pub fn coefficients_follow_permutation() -> PropResult {
    let strategy = (frames(10, 9), 0.2f64..3.0).prop_flat_map(|(xs, tau)| {
        let n = xs.len();
        (Just(xs), Just(tau), Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
    });
    run("I permutes with time indices", strategy, |(xs, tau, perm)| {
        let c = coefficient_matrix(&xs, tau).unwrap();
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| xs[p].clone()).collect();
        let cp = coefficient_matrix(&permuted, tau).unwrap();
        for i in 0..perm.len() {
            for j in 0..perm.len() {
                prop_assert_eq!(cp.get(i, j), c.get(perm[i], perm[j]));
            }
        }
        Ok(())
    })
}

pub fn all() -> Vec<PropResult> {
    vec![
        softmax_normalization(),
        softmax_shift_invariance(),
        attention_normalization(),
        gate_ranges(),
        confidence_gate_range(),
        gram_symmetric_psd(),
        loss_of_identical_is_zero(),
        coefficients_unit_diagonal_symmetric(),
        coefficients_follow_permutation(),
    ]
}
