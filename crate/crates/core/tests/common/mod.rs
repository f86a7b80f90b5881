//! Test helpers: random instances and scalar-loop reference implementations.
//!
//! The reference functions below work on nested `Vec`s with explicit index
//! loops and share no code with the library beyond reading parameter values.

#![allow(dead_code, clippy::needless_range_loop)]

pub mod props;
pub mod semantics;
pub mod toy;

use rand::{Rng, SeedableRng};
pub use rand_chacha::ChaCha8Rng;
use scrnn::cells::{ModelConfig, ParamKey, ParameterSet};
use scrnn::datamodel::{ColumnTime, FeatureMap, SkeletonSequence};
use scrnn::Matrix;

pub type Mat = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    (0..rows).map(|_| rand_vec(rng, cols, scale)).collect()
}

pub fn to_matrix(m: &Mat) -> Matrix {
    Matrix::from_rows(m).unwrap()
}

pub fn col_matrix(v: &[f64]) -> Matrix {
    Matrix::column_vector(v).unwrap()
}

pub fn to_mat(m: &Matrix) -> Mat {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect())
        .collect()
}

pub fn col(m: &Matrix) -> Vec<f64> {
    assert_eq!(m.cols(), 1);
    (0..m.rows()).map(|i| m.get(i, 0)).collect()
}

/// Feature map whose columns are labelled as observed frames.
pub fn observed_map(m: &Mat) -> FeatureMap {
    let cols = m[0].len();
    FeatureMap::new(to_matrix(m), (1..=cols).map(ColumnTime::Observed).collect()).unwrap()
}

/// Feature map of `T` observed columns plus one future column.
pub fn extended_map(m: &Mat) -> FeatureMap {
    let cols = m[0].len();
    let mut times: Vec<ColumnTime> = (1..cols).map(ColumnTime::Observed).collect();
    times.push(ColumnTime::Future(1));
    FeatureMap::new(to_matrix(m), times).unwrap()
}

/// `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / 1f64.max(x.abs()).max(y.abs()))
        .fold(0.0, f64::max)
}

pub fn flat(m: &Mat) -> Vec<f64> {
    m.iter().flatten().copied().collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec(a: &Mat, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..a.len() {
        for j in 0..x.len() {
            out[i] += a[i][j] * x[j];
        }
    }
    out
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = b[0].len();
    let mut out = vec![vec![0.0; n]; a.len()];
    for i in 0..a.len() {
        for j in 0..n {
            for k in 0..b.len() {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn softmax(scores: &[f64], tau: f64) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &s in scores {
        if s > m {
            m = s;
        }
    }
    let mut e = vec![0.0; scores.len()];
    let mut total = 0.0;
    for i in 0..scores.len() {
        e[i] = ((scores[i] - m) / tau).exp();
        total += e[i];
    }
    for v in e.iter_mut() {
        *v /= total;
    }
    e
}

pub struct SkeletonAttentionRef {
    pub alphas: Vec<f64>,
    pub f_a: Mat,
    pub h_a: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn skeleton_attention(
    f: &Mat,
    h: &[f64],
    u_eh: &Mat,
    u_ef: &Mat,
    w_e: &[f64],
    b_e: &[f64],
    tau1: f64,
) -> SkeletonAttentionRef {
    let (d, t) = (f.len(), f[0].len());
    let a = w_e.len();
    let mut beta = vec![0.0; t];
    for j in 0..t {
        for i in 0..a {
            let mut pre = b_e[i];
            for c in 0..d {
                pre += u_eh[i][c] * h[c] + u_ef[i][c] * f[c][j];
            }
            beta[j] += w_e[i] * pre.tanh();
        }
    }
    let alphas = softmax(&beta, tau1);
    skeleton_context(f, &alphas)
}

/// `F_a` and `h_a` for given factors.
pub fn skeleton_context(f: &Mat, alphas: &[f64]) -> SkeletonAttentionRef {
    let (d, t) = (f.len(), f[0].len());
    let mut f_a = vec![vec![0.0; t]; d];
    let mut h_a = vec![0.0; d];
    for r in 0..d {
        for j in 0..t {
            f_a[r][j] = alphas[j] * f[r][j];
            h_a[r] += f_a[r][j];
        }
        h_a[r] /= t as f64;
    }
    SkeletonAttentionRef {
        alphas: alphas.to_vec(),
        f_a,
        h_a,
    }
}

/// `(l, alpha^k_l)` for `l != k`, 1-based joints.
pub fn joint_attention(
    f_tp: &Mat,
    k: usize,
    u_cb: &Mat,
    u_cm: &Mat,
    w_c: &[f64],
    b_l: &[f64],
    tau2: f64,
) -> Vec<(usize, f64)> {
    let joints = f_tp.len() / 3;
    let row_sums =
        |joint: usize| -> Vec<f64> { (0..3).map(|r| f_tp[3 * (joint - 1) + r].iter().sum::<f64>()).collect() };
    let sk = row_sums(k);
    let mut ls = Vec::new();
    let mut beta = Vec::new();
    for l in 1..=joints {
        if l == k {
            continue;
        }
        let sl = row_sums(l);
        let mut b = 0.0;
        for i in 0..w_c.len() {
            let mut pre = b_l[i];
            for c in 0..3 {
                pre += u_cb[i][c] * sk[c] + u_cm[i][c] * sl[c];
            }
            b += w_c[i] * pre.tanh();
        }
        ls.push(l);
        beta.push(b);
    }
    ls.into_iter().zip(softmax(&beta, tau2)).collect()
}

/// Rows of joint `l != k` are `alpha^k_l [F_a rows, last column of F^{t'}]`;
/// rows of joint `k` carry the same values unscaled.
pub fn coattention_map(f_a: &Mat, f_tp: &Mat, k: usize, alphas: &[(usize, f64)]) -> Mat {
    let (d, t) = (f_a.len(), f_a[0].len());
    let mut out = vec![vec![0.0; t + 1]; d];
    for r in 0..d {
        let joint = r / 3 + 1;
        let factor = if joint == k {
            1.0
        } else {
            alphas.iter().find(|(l, _)| *l == joint).unwrap().1
        };
        for j in 0..t {
            out[r][j] = factor * f_a[r][j];
        }
        out[r][t] = factor * f_tp[r][t];
    }
    out
}

pub fn coattention_context(f_co: &Mat, k: usize) -> Mat {
    let joints = f_co.len() / 3;
    let cols = f_co[0].len();
    let mut o = vec![vec![0.0; cols]; 3];
    for l in 1..=joints {
        if l == k {
            continue;
        }
        for r in 0..3 {
            for j in 0..cols {
                o[r][j] += f_co[3 * (l - 1) + r][j];
            }
        }
    }
    for row in o.iter_mut() {
        for v in row.iter_mut() {
            *v /= (joints - 1) as f64;
        }
    }
    o
}

pub struct SkeletonGruRef<'a> {
    pub w_zx: &'a Mat,
    pub w_zh: &'a Mat,
    pub w_za: &'a Mat,
    pub w_rx: &'a Mat,
    pub w_rh: &'a Mat,
    pub w_ra: &'a Mat,
    pub w_cx: &'a Mat,
    pub w_ch: &'a Mat,
    pub b_z: &'a [f64],
    pub b_r: &'a [f64],
    pub b_c: &'a [f64],
}

pub fn skeleton_gru(x: &[f64], h: &[f64], h_a: &[f64], p: &SkeletonGruRef) -> Vec<f64> {
    let n = h.len();
    let (zx, zh, za) = (matvec(p.w_zx, x), matvec(p.w_zh, h), matvec(p.w_za, h_a));
    let (rx, rh, ra) = (matvec(p.w_rx, x), matvec(p.w_rh, h), matvec(p.w_ra, h_a));
    let mut z = vec![0.0; n];
    let mut r = vec![0.0; n];
    for i in 0..n {
        z[i] = sigmoid(zx[i] + zh[i] + za[i] + p.b_z[i]);
        r[i] = sigmoid(rx[i] + rh[i] + ra[i] + p.b_r[i]);
    }
    let rh_prod: Vec<f64> = (0..n).map(|i| r[i] * h[i]).collect();
    let (cx, ch) = (matvec(p.w_cx, x), matvec(p.w_ch, &rh_prod));
    (0..n)
        .map(|i| {
            let c = (cx[i] + ch[i] + p.b_c[i]).tanh();
            (1.0 - z[i]) * h[i] + z[i] * c
        })
        .collect()
}

pub struct SpatialGruRef<'a> {
    pub w_zm: &'a Mat,
    pub w_zq: &'a Mat,
    pub w_zo: &'a Mat,
    pub w_rm: &'a Mat,
    pub w_rq: &'a Mat,
    pub w_ro: &'a Mat,
    pub w_cm: &'a Mat,
    pub w_cq: &'a Mat,
    pub b_z: &'a Mat,
    pub b_r: &'a Mat,
    pub b_c: &'a Mat,
}

pub fn spatial_gru(m: &Mat, q: &Mat, o: &Mat, p: &SpatialGruRef) -> Mat {
    let cols = m[0].len();
    let (zm, zq, zo) = (matmul(p.w_zm, m), matmul(p.w_zq, q), matmul(p.w_zo, o));
    let (rm, rq, ro) = (matmul(p.w_rm, m), matmul(p.w_rq, q), matmul(p.w_ro, o));
    let mut z = vec![vec![0.0; cols]; 3];
    let mut rq_prod = vec![vec![0.0; cols]; 3];
    for i in 0..3 {
        for j in 0..cols {
            z[i][j] = sigmoid(zm[i][j] + zq[i][j] + zo[i][j] + p.b_z[i][j]);
            let r = sigmoid(rm[i][j] + rq[i][j] + ro[i][j] + p.b_r[i][j]);
            rq_prod[i][j] = r * q[i][j];
        }
    }
    let (cm, cq) = (matmul(p.w_cm, m), matmul(p.w_cq, &rq_prod));
    let mut out = vec![vec![0.0; cols]; 3];
    for i in 0..3 {
        for j in 0..cols {
            let c = (cm[i][j] + cq[i][j] + p.b_c[i][j]).tanh();
            out[i][j] = (1.0 - z[i][j]) * q[i][j] + z[i][j] * c;
        }
    }
    out
}

pub fn confidence_gate(
    h_joint: &[f64],
    m_joint: &[f64],
    w_fh: &Mat,
    w_fm: &Mat,
    b_h: &[f64],
    b_m: &[f64],
    rho: f64,
) -> Vec<f64> {
    let (fh, fm) = (matvec(w_fh, h_joint), matvec(w_fm, m_joint));
    (0..fh.len())
        .map(|i| {
            let theta = (fh[i] + b_h[i]).tanh() - (fm[i] + b_m[i]).tanh();
            (-rho * theta * theta).exp()
        })
        .collect()
}

pub fn coefficient_matrix(gt: &[Vec<f64>], tau: f64) -> Mat {
    let n = gt.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for c in 0..gt[i].len() {
                s += (gt[i][c] - gt[j][c]).powi(2);
            }
            out[i][j] = (-s / (tau * tau)).exp();
        }
    }
    out
}

/// `G_ab = sum_c v_a[c] v_b[c]`, with `v_a = I_{a,t} x_a` for `a < t` and
/// `v_t = x_t` (1-based `t = xs.len()`).
pub fn weighted_gram(xs: &[Vec<f64>], coeffs: &Mat) -> Mat {
    let t = xs.len();
    let w = |a: usize| if a == t - 1 { 1.0 } else { coeffs[a][t - 1] };
    let mut g = vec![vec![0.0; t]; t];
    for a in 0..t {
        for b in 0..t {
            for c in 0..xs[a].len() {
                g[a][b] += w(a) * xs[a][c] * w(b) * xs[b][c];
            }
        }
    }
    g
}

pub fn gram_loss(pred: &[Vec<f64>], truth: &[Vec<f64>], tau: f64) -> f64 {
    let coeffs = coefficient_matrix(truth, tau);
    let mut total = 0.0;
    for t in 1..=truth.len() {
        let gp = weighted_gram(&pred[..t], &coeffs);
        let gt = weighted_gram(&truth[..t], &coeffs);
        for a in 0..t {
            for b in 0..t {
                total += (gp[a][b] - gt[a][b]).powi(2);
            }
        }
    }
    total / truth.len() as f64
}

pub fn mse(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    let mut n = 0;
    for (p, t) in pred.iter().zip(truth) {
        for (a, b) in p.iter().zip(t) {
            s += (a - b).powi(2);
            n += 1;
        }
    }
    s / n as f64
}

fn p(params: &ParameterSet, key: ParamKey) -> Mat {
    to_mat(params.get(key))
}

fn pv(params: &ParameterSet, key: ParamKey) -> Vec<f64> {
    col(params.get(key))
}

/// Values of one reference prediction step.
pub struct StepRef {
    pub x_next: Vec<f64>,
    pub h: Vec<f64>,
    pub skeleton_alphas: Vec<f64>,
    pub joint_alphas: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
}

/// One full prediction step. `forced_skeleton` / `forced_joint` replace the
/// computed attention factors.
pub fn sc_gru_step(
    config: &ModelConfig,
    params: &ParameterSet,
    f: &Mat,
    h_prev: &[f64],
    x_tilde: &[f64],
    forced_skeleton: Option<&[f64]>,
    forced_joint: Option<&[Vec<f64>]>,
) -> StepRef {
    let joints = config.joints;
    let t = f[0].len();
    let out = |h: &[f64]| -> Vec<f64> {
        match params.try_get(ParamKey::WOut) {
            Some(w) => matvec(&to_mat(w), h),
            None => h.to_vec(),
        }
    };

    let h_prev_out = out(h_prev);
    let skel = match forced_skeleton {
        Some(a) => skeleton_context(f, a),
        None => skeleton_attention(
            f,
            &h_prev_out,
            &p(params, ParamKey::UEh),
            &p(params, ParamKey::UEf),
            &pv(params, ParamKey::WE),
            &pv(params, ParamKey::BE),
            config.tau1,
        ),
    };
    let (wzx, wzh, wza) = (
        p(params, ParamKey::WZx),
        p(params, ParamKey::WZh),
        p(params, ParamKey::WZa),
    );
    let (wrx, wrh, wra) = (
        p(params, ParamKey::WRx),
        p(params, ParamKey::WRh),
        p(params, ParamKey::WRa),
    );
    let (wcx, wch) = (p(params, ParamKey::WCx), p(params, ParamKey::WCh));
    let (bz, br, bc) = (
        pv(params, ParamKey::BZ),
        pv(params, ParamKey::BR),
        pv(params, ParamKey::BC),
    );
    let gru = SkeletonGruRef {
        w_zx: &wzx,
        w_zh: &wzh,
        w_za: &wza,
        w_rx: &wrx,
        w_rh: &wrh,
        w_ra: &wra,
        w_cx: &wcx,
        w_ch: &wch,
        b_z: &bz,
        b_r: &br,
        b_c: &bc,
    };
    let h = skeleton_gru(x_tilde, h_prev, &skel.h_a, &gru);
    let h_out = out(&h);

    let mut f_tp = f.clone();
    for (r, row) in f_tp.iter_mut().enumerate() {
        row.push(h_out[r]);
    }

    let joint_alphas: Vec<Vec<(usize, f64)>> = (1..=joints)
        .map(|k| match forced_joint {
            Some(all) => (1..=joints)
                .filter(|&l| l != k)
                .zip(all[k - 1].iter().copied())
                .collect(),
            None => joint_attention(
                &f_tp,
                k,
                &p(params, ParamKey::UCb),
                &p(params, ParamKey::UCm),
                &pv(params, ParamKey::WC),
                &pv(params, ParamKey::BL),
                config.tau2,
            ),
        })
        .collect();

    let (wzm, wzq, wzo) = (
        p(params, ParamKey::WZm),
        p(params, ParamKey::WZq),
        p(params, ParamKey::WZo),
    );
    let (wrm, wrq, wro) = (
        p(params, ParamKey::WRm),
        p(params, ParamKey::WRq),
        p(params, ParamKey::WRo),
    );
    let (wcm, wcq) = (p(params, ParamKey::WCm), p(params, ParamKey::WCq));
    let (bbz, bbr, bbc) = (
        p(params, ParamKey::BigBZ),
        p(params, ParamKey::BigBR),
        p(params, ParamKey::BigBC),
    );
    let spatial = SpatialGruRef {
        w_zm: &wzm,
        w_zq: &wzq,
        w_zo: &wzo,
        w_rm: &wrm,
        w_rq: &wrq,
        w_ro: &wro,
        w_cm: &wcm,
        w_cq: &wcq,
        b_z: &bbz,
        b_r: &bbr,
        b_c: &bbc,
    };
    let mut q = vec![vec![0.0; t + 1]; 3];
    let mut final_q: Vec<Option<Mat>> = vec![None; joints];
    for &k in config.traversal.order() {
        let m: Mat = (0..3).map(|r| f_tp[3 * (k - 1) + r].clone()).collect();
        let co = coattention_map(&skel.f_a, &f_tp, k, &joint_alphas[k - 1]);
        let o = coattention_context(&co, k);
        q = spatial_gru(&m, &q, &o, &spatial);
        final_q[k - 1] = Some(q.clone());
    }
    let mut h_joint = Vec::new();
    let mut m_joint = Vec::new();
    for k in 1..=joints {
        let qk = final_q[k - 1].as_ref().unwrap();
        for r in 0..3 {
            h_joint.push(qk[r][t]);
            m_joint.push(f_tp[3 * (k - 1) + r][t]);
        }
    }
    let gamma = confidence_gate(
        &h_joint,
        &m_joint,
        &p(params, ParamKey::WFh),
        &p(params, ParamKey::WFm),
        &pv(params, ParamKey::BH),
        &pv(params, ParamKey::BM),
        config.rho,
    );
    let x_next = (0..h_out.len())
        .map(|i| 0.5 * (h_out[i] + gamma[i] * h_joint[i]))
        .collect();
    StepRef {
        x_next,
        h,
        skeleton_alphas: skel.alphas,
        joint_alphas: joint_alphas
            .into_iter()
            .map(|v| v.into_iter().map(|(_, a)| a).collect())
            .collect(),
        gamma,
    }
}

/// Parameters with every entry (biases included) drawn uniformly from
/// `[-scale, scale)`.
pub fn random_params(config: &ModelConfig, seed: u64, scale: f64) -> ParameterSet {
    let mut params = ParameterSet::init(config, seed);
    let mut r = rng(seed ^ 0x5eed);
    for (_, m) in params.iter_mut() {
        for v in m.as_mut_slice() {
            *v = r.gen_range(-scale..scale);
        }
    }
    params
}
