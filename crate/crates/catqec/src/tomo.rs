//! Single-qubit state and process tomography: Bloch-vector estimation,
//! χ-matrix reconstruction in the cat-code convention, software frame
//! optimisation, reference channel models, and lifetime fitting.
//!
//! The χ matrix lives in the operator basis `{I, σx, −iσy, σz}`, in which the
//! ideal corrected-error processes (z rotations by multiples of π/2) are
//! real-diagonal-plus-imaginary-corner and the (0,0) entry is the
//! entanglement fidelity.

use nalgebra::{DMatrix, Matrix2, Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::fock::C64;

#[derive(Debug, thiserror::Error)]
pub enum TomoError {
    #[error("no outcomes recorded on the {axis} axis")]
    EmptyAxis { axis: char },
    #[error("χ reconstruction is not positive semidefinite: min eigenvalue {min_eig:.3e}")]
    NonPhysical { min_eig: f64 },
    #[error("decay fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("decay fit did not converge within {0} iterations")]
    NoConvergence(u32),
    #[error("{0}")]
    InvalidParam(String),
}

/// Expectation values of the three Pauli operators: ρ = (I + r·σ)/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl BlochVector {
    pub fn new(rx: f64, ry: f64, rz: f64) -> Self {
        BlochVector { rx, ry, rz }
    }

    pub fn length(&self) -> f64 {
        (self.rx * self.rx + self.ry * self.ry + self.rz * self.rz).sqrt()
    }

    pub fn rotated(&self, rot: &Matrix3<f64>) -> BlochVector {
        let v = rot * Vector3::new(self.rx, self.ry, self.rz);
        BlochVector { rx: v.x, ry: v.y, rz: v.z }
    }

    /// Shrink the transverse components, as pure dephasing over a time `t`
    /// with constant `t_phi` does (`factor = e^{-t/t_phi}`).
    pub fn with_transverse_scale(&self, factor: f64) -> BlochVector {
        BlochVector { rx: self.rx * factor, ry: self.ry * factor, rz: self.rz }
    }
}

/// Standard estimator from projective outcome counts along the three axes:
/// `r̂_i = (n₊ − n₋)/(n₊ + n₋)`.
pub fn bloch_from_outcomes(
    x: (u64, u64),
    y: (u64, u64),
    z: (u64, u64),
) -> Result<BlochVector, TomoError> {
    let est = |(plus, minus): (u64, u64), axis: char| -> Result<f64, TomoError> {
        let total = plus + minus;
        if total == 0 {
            return Err(TomoError::EmptyAxis { axis });
        }
        Ok((plus as f64 - minus as f64) / total as f64)
    };
    Ok(BlochVector { rx: est(x, 'x')?, ry: est(y, 'y')?, rz: est(z, 'z')? })
}

/// Measured Bloch vectors of the channel's images of the cardinal input
/// states. The four-input set (+x, +y, ±z) determines the channel; the ±x
/// and ±y partners, when measured, are averaged in for the symmetry check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardinalOutcomes {
    pub plus_x: BlochVector,
    pub plus_y: BlochVector,
    pub plus_z: BlochVector,
    pub minus_z: BlochVector,
    pub minus_x: Option<BlochVector>,
    pub minus_y: Option<BlochVector>,
}

impl CardinalOutcomes {
    pub fn four(
        plus_x: BlochVector,
        plus_y: BlochVector,
        plus_z: BlochVector,
        minus_z: BlochVector,
    ) -> Self {
        CardinalOutcomes { plus_x, plus_y, plus_z, minus_z, minus_x: None, minus_y: None }
    }

    pub fn six(
        plus_x: BlochVector,
        minus_x: BlochVector,
        plus_y: BlochVector,
        minus_y: BlochVector,
        plus_z: BlochVector,
        minus_z: BlochVector,
    ) -> Self {
        CardinalOutcomes {
            plus_x,
            plus_y,
            plus_z,
            minus_z,
            minus_x: Some(minus_x),
            minus_y: Some(minus_y),
        }
    }

    /// Affine Bloch map (M, c) of the channel: `r_out = M r_in + c`. The
    /// offset comes from the midpoints of the available antipodal pairs; a
    /// column comes from the half-difference of its pair when both ends were
    /// measured, otherwise from the + end against the offset.
    pub fn affine_map(&self) -> (Matrix3<f64>, Vector3<f64>) {
        let v = |b: &BlochVector| Vector3::new(b.rx, b.ry, b.rz);
        let mut c = (v(&self.plus_z) + v(&self.minus_z)) / 2.0;
        let mut pairs = 1.0;
        if let Some(mx) = &self.minus_x {
            c += (v(&self.plus_x) + v(mx)) / 2.0;
            pairs += 1.0;
        }
        if let Some(my) = &self.minus_y {
            c += (v(&self.plus_y) + v(my)) / 2.0;
            pairs += 1.0;
        }
        c /= pairs;
        let col_x = match &self.minus_x {
            Some(mx) => (v(&self.plus_x) - v(mx)) / 2.0,
            None => v(&self.plus_x) - c,
        };
        let col_y = match &self.minus_y {
            Some(my) => (v(&self.plus_y) - v(my)) / 2.0,
            None => v(&self.plus_y) - c,
        };
        let col_z = (v(&self.plus_z) - v(&self.minus_z)) / 2.0;
        (Matrix3::from_columns(&[col_x, col_y, col_z]), c)
    }

    /// Rotate every measured vector by the same software rotation.
    pub fn rotated(&self, rot: &Matrix3<f64>) -> CardinalOutcomes {
        CardinalOutcomes {
            plus_x: self.plus_x.rotated(rot),
            plus_y: self.plus_y.rotated(rot),
            plus_z: self.plus_z.rotated(rot),
            minus_z: self.minus_z.rotated(rot),
            minus_x: self.minus_x.map(|b| b.rotated(rot)),
            minus_y: self.minus_y.map(|b| b.rotated(rot)),
        }
    }
}

/// Process matrix in the basis `{I, σx, −iσy, σz}`:
/// `E(ρ) = Σ_mn χ_mn B_m ρ B_n†`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiMatrix {
    entries: [[C64; 4]; 4],
}

fn pauli_basis() -> [Matrix2<C64>; 4] {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    [
        Matrix2::new(l, o, o, l),  // I
        Matrix2::new(o, l, l, o),  // σx
        Matrix2::new(o, -l, l, o), // −iσy
        Matrix2::new(l, o, o, -l), // σz
    ]
}

fn hermitian_paulis() -> [Matrix2<C64>; 4] {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [
        Matrix2::new(l, o, o, l),                // I
        Matrix2::new(o, l, l, o),                // σx
        Matrix2::new(o, -i, i, o),               // σy
        Matrix2::new(l, o, o, -l),               // σz
    ]
}

fn vec2(m: &Matrix2<C64>) -> Vector4<C64> {
    // Column-stacking convention.
    Vector4::new(m[(0, 0)], m[(1, 0)], m[(0, 1)], m[(1, 1)])
}

fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    let mut out = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Superoperator (column-stacking convention) of the affine Bloch map.
fn superoperator(m: &Matrix3<f64>, c: &Vector3<f64>) -> Matrix4<C64> {
    let paulis = hermitian_paulis();
    // Images of the Hermitian basis: E(I) = I + c·σ, E(σ_k) = Σ_i M_ik σ_i.
    let mut images: [Matrix2<C64>; 4] = [Matrix2::zeros(); 4];
    images[0] = paulis[0]
        + paulis[1] * C64::from(c.x)
        + paulis[2] * C64::from(c.y)
        + paulis[3] * C64::from(c.z);
    for k in 0..3 {
        let mut img = Matrix2::zeros();
        for i in 0..3 {
            img += paulis[i + 1] * C64::from(m[(i, k)]);
        }
        images[k + 1] = img;
    }
    // ρ = (1/2) Σ_p Tr(P_p ρ) P_p, so S = (1/2) Σ_p vec(E(P_p)) vec(P_p)†.
    let mut s = Matrix4::zeros();
    for p in 0..4 {
        let col = vec2(&images[p]);
        let row = vec2(&paulis[p]);
        for i in 0..4 {
            for j in 0..4 {
                s[(i, j)] += col[i] * row[j].conj() * C64::from(0.5);
            }
        }
    }
    s
}

fn chi_from_superoperator(s: &Matrix4<C64>) -> ChiMatrix {
    // S = Σ_mn χ_mn (conj(B_n) ⊗ B_m); {conj(B_n) ⊗ B_m} is orthogonal with
    // norm² = 4, so χ_mn = (1/4) Tr[(conj(B_n) ⊗ B_m)† S].
    let basis = pauli_basis();
    let mut entries = [[C64::new(0.0, 0.0); 4]; 4];
    for (m, bm) in basis.iter().enumerate() {
        for (n, bn) in basis.iter().enumerate() {
            let probe = kron2(&bn.map(|z| z.conj()), bm);
            let mut tr = C64::new(0.0, 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    tr += probe[(j, i)].conj() * s[(j, i)];
                }
            }
            entries[m][n] = tr / C64::from(4.0);
        }
    }
    ChiMatrix { entries }
}

impl ChiMatrix {
    pub fn from_entries(entries: [[C64; 4]; 4]) -> Self {
        ChiMatrix { entries }
    }

    pub fn entries(&self) -> &[[C64; 4]; 4] {
        &self.entries
    }

    pub fn get(&self, m: usize, n: usize) -> C64 {
        self.entries[m][n]
    }

    pub fn trace(&self) -> C64 {
        (0..4).map(|i| self.entries[i][i]).sum()
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for m in 0..4 {
            for n in 0..4 {
                worst = worst.max((self.entries[m][n] - self.entries[n][m].conj()).norm());
            }
        }
        worst
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = DMatrix::from_fn(4, 4, |i, j| self.entries[i][j]);
        let mut eigs = crate::fock::hermitian_eigenvalues(&m);
        eigs.sort_by(f64::total_cmp);
        eigs
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Report (not repair) physicality: errors when the smallest eigenvalue
    /// is below `-tolerance`.
    pub fn physical(&self, tolerance: f64) -> Result<(), TomoError> {
        let min_eig = self.min_eigenvalue();
        if min_eig < -tolerance {
            return Err(TomoError::NonPhysical { min_eig });
        }
        Ok(())
    }

    /// Nearest positive-semidefinite process: clip negative eigenvalues and
    /// renormalise the trace. Opt-in; reconstruction never clips silently.
    pub fn clipped(&self) -> ChiMatrix {
        let m = DMatrix::from_fn(4, 4, |i, j| self.entries[i][j]);
        let herm = (&m + m.adjoint()) * C64::from(0.5);
        let eig = nalgebra::linalg::SymmetricEigen::new(herm);
        let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
        let mut out = DMatrix::<C64>::zeros(4, 4);
        for (k, lam) in eig.eigenvalues.iter().enumerate() {
            let lam = lam.max(0.0) / total;
            let v = eig.eigenvectors.column(k);
            for i in 0..4 {
                for j in 0..4 {
                    out[(i, j)] += v[i] * v[j].conj() * C64::from(lam);
                }
            }
        }
        let mut entries = [[C64::new(0.0, 0.0); 4]; 4];
        for (i, row) in entries.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = out[(i, j)];
            }
        }
        ChiMatrix { entries }
    }

    /// Process fidelity against the identity target: Re χ₀₀.
    pub fn process_fidelity(&self) -> f64 {
        self.entries[0][0].re
    }
}

/// Reconstruct the process matrix from cardinal-state tomography.
pub fn chi_from_cardinals(data: &CardinalOutcomes) -> ChiMatrix {
    let (m, c) = data.affine_map();
    chi_from_superoperator(&superoperator(&m, &c))
}

/// Closed formula for the entanglement fidelity, `X₀₀ = (1 + ΣM_kk)/4` with
/// the diagonal of the reconstructed Bloch map.
pub fn entanglement_fidelity_formula(data: &CardinalOutcomes) -> f64 {
    let (m, _) = data.affine_map();
    0.25 * (1.0 + m[(0, 0)] + m[(1, 1)] + m[(2, 2)])
}

/// Process fidelity `F = Tr(χᴹ χ₀)` against the identity process.
pub fn process_fidelity(chi: &ChiMatrix) -> f64 {
    chi.process_fidelity()
}

/// Rescale so a fully depolarised process reads 0: `(F − 1/4)/(3/4)`.
pub fn scaled_fidelity(f_process: f64) -> f64 {
    (f_process - 0.25) / 0.75
}

/// Intrinsic z-y-x Euler rotation.
pub fn rotation_zyx(alpha: f64, beta: f64, gamma: f64) -> Matrix3<f64> {
    let rz = Matrix3::new(
        alpha.cos(),
        -alpha.sin(),
        0.0,
        alpha.sin(),
        alpha.cos(),
        0.0,
        0.0,
        0.0,
        1.0,
    );
    let ry = Matrix3::new(
        beta.cos(),
        0.0,
        beta.sin(),
        0.0,
        1.0,
        0.0,
        -beta.sin(),
        0.0,
        beta.cos(),
    );
    let rx = Matrix3::new(
        1.0,
        0.0,
        0.0,
        0.0,
        gamma.cos(),
        -gamma.sin(),
        0.0,
        gamma.sin(),
        gamma.cos(),
    );
    rz * ry * rx
}

/// A software frame correction: the single rotation applied to all measured
/// Bloch vectors that maximises the process fidelity, with the corrected χ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCorrection {
    /// Euler angles (z, y, x), radians, each within ±15°.
    pub angles: [f64; 3],
    pub chi: ChiMatrix,
    pub fidelity: f64,
}

const FRAME_LIMIT: f64 = 15.0 * std::f64::consts::PI / 180.0;

fn clamp_angles(x: &mut [f64; 3]) {
    for a in x {
        *a = a.clamp(-FRAME_LIMIT, FRAME_LIMIT);
    }
}

/// Minimise `f` over three bounded angles with Nelder-Mead.
fn nelder_mead(f: impl Fn(&[f64; 3]) -> f64, start: [f64; 3], step: f64) -> [f64; 3] {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;
    let mut simplex: Vec<[f64; 3]> = vec![start];
    for i in 0..3 {
        let mut v = start;
        v[i] += step;
        clamp_angles(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(&f).collect();
    for _ in 0..400 {
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let (best, worst, second_worst) = (order[0], order[3], order[2]);
        if (values[worst] - values[best]).abs() < 1e-14 {
            break;
        }
        let mut centroid = [0.0; 3];
        for &i in &order[..3] {
            for k in 0..3 {
                centroid[k] += simplex[i][k] / 3.0;
            }
        }
        let blend = |a: &[f64; 3], b: &[f64; 3], t: f64| -> [f64; 3] {
            let mut out = [0.0; 3];
            for k in 0..3 {
                out[k] = a[k] + t * (b[k] - a[k]);
            }
            clamp_angles(&mut out);
            out
        };
        let reflected = blend(&centroid, &simplex[worst], -ALPHA);
        let f_r = f(&reflected);
        if f_r < values[best] {
            let expanded = blend(&centroid, &simplex[worst], -GAMMA);
            let f_e = f(&expanded);
            if f_e < f_r {
                simplex[worst] = expanded;
                values[worst] = f_e;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_r;
            }
        } else if f_r < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_r;
        } else {
            let contracted = blend(&centroid, &simplex[worst], RHO);
            let f_c = f(&contracted);
            if f_c < values[worst] {
                simplex[worst] = contracted;
                values[worst] = f_c;
            } else {
                let best_point = simplex[best];
                for i in 0..4 {
                    if i == best {
                        continue;
                    }
                    simplex[i] = blend(&best_point, &simplex[i], SIGMA);
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    simplex[order[0]]
}

/// Find the global software rotation (three Euler angles, bounded ±15°) that
/// maximises the process fidelity of the measured six-cardinal data set.
pub fn frame_optimize(data: &CardinalOutcomes) -> Result<FrameCorrection, TomoError> {
    if data.minus_x.is_none() || data.minus_y.is_none() {
        return Err(TomoError::InvalidParam(
            "frame optimisation needs all six cardinal points".into(),
        ));
    }
    let objective = |angles: &[f64; 3]| -> f64 {
        let rot = rotation_zyx(angles[0], angles[1], angles[2]);
        -entanglement_fidelity_formula(&data.rotated(&rot))
    };
    // Multi-start: the surface is smooth but the bounded box is wide.
    let deg = std::f64::consts::PI / 180.0;
    let mut best = [0.0; 3];
    let mut best_val = objective(&best);
    for start in [
        [0.0, 0.0, 0.0],
        [8.0 * deg, 0.0, 0.0],
        [-8.0 * deg, 0.0, 0.0],
        [0.0, 8.0 * deg, -8.0 * deg],
    ] {
        let candidate = nelder_mead(objective, start, 2.0 * deg);
        let val = objective(&candidate);
        if val < best_val {
            best = candidate;
            best_val = val;
        }
    }
    let rot = rotation_zyx(best[0], best[1], best[2]);
    let corrected = data.rotated(&rot);
    Ok(FrameCorrection {
        angles: best,
        chi: chi_from_cardinals(&corrected),
        fidelity: -best_val,
    })
}

/// Generalised amplitude damping toward a stationary excited-state
/// population `n_th` (Bloch +z is the ground state), with damping fraction
/// `f(t) = 1 − e^{−t/t0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GadChannel {
    /// Damping fraction γ = 1 − e^{−t/t0}.
    pub gamma: f64,
    /// Stationary excited-state population.
    pub n_th: f64,
    kraus: [Matrix2<C64>; 4],
}

pub fn amplitude_damping_channel(t: f64, t0: f64, n_th: f64) -> Result<GadChannel, TomoError> {
    if !(t >= 0.0) || !(t0 > 0.0) || !(0.0..=1.0).contains(&n_th) {
        return Err(TomoError::InvalidParam(format!(
            "amplitude damping needs t >= 0, t0 > 0, n_th in [0,1]; got {t}, {t0}, {n_th}"
        )));
    }
    let gamma = 1.0 - (-t / t0).exp();
    let p = 1.0 - n_th; // weight of the decay branch (toward the ground state)
    let o = C64::new(0.0, 0.0);
    let sp = C64::from(p.sqrt());
    let sq = C64::from((1.0 - p).sqrt());
    let sg = C64::from(gamma.sqrt());
    let sk = C64::from((1.0 - gamma).sqrt());
    let l = C64::from(1.0);
    let kraus = [
        Matrix2::new(sp * l, o, o, sp * sk),
        Matrix2::new(o, sp * sg, o, o),
        Matrix2::new(sq * sk, o, o, sq * l),
        Matrix2::new(o, o, sq * sg, o),
    ];
    Ok(GadChannel { gamma, n_th, kraus })
}

impl GadChannel {
    pub fn kraus(&self) -> &[Matrix2<C64>; 4] {
        &self.kraus
    }

    /// Largest entry of `Σ E†E − I`.
    pub fn completeness_residual(&self) -> f64 {
        let mut sum = Matrix2::<C64>::zeros();
        for k in &self.kraus {
            sum += k.adjoint() * k;
        }
        let mut worst = 0.0_f64;
        for i in 0..2 {
            for j in 0..2 {
                let id = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((sum[(i, j)] - C64::from(id)).norm());
            }
        }
        worst
    }

    /// Exact action on a Bloch vector:
    /// `r∥ → √(1−γ) r∥`, `rz → (1−γ) rz + γ(1−2 n_th)`.
    pub fn apply_bloch(&self, r: &BlochVector) -> BlochVector {
        let shrink = (1.0 - self.gamma).sqrt();
        BlochVector {
            rx: r.rx * shrink,
            ry: r.ry * shrink,
            rz: r.rz * (1.0 - self.gamma) + self.gamma * (1.0 - 2.0 * self.n_th),
        }
    }

    /// Process matrix of the channel.
    pub fn chi(&self) -> ChiMatrix {
        let mut s = Matrix4::zeros();
        for k in &self.kraus {
            s += kron2(&k.map(|z| z.conj()), k);
        }
        chi_from_superoperator(&s)
    }
}

/// Fidelity decay laws fitted by [`fit_decay`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DecayModel {
    /// `F(t) = 1/4 + A e^{−t/τ}`.
    SingleExponential,
    /// `F(t) = 1/4 + A e^{−n̄₀(1 − e^{−t/τ})}`: the uncorrected cat, whose
    /// short-time constant is `τ/n̄₀`.
    UncorrectedCat { nbar0: f64 },
}

/// Least-squares decay fit with standard errors from the Jacobian at the
/// optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub amplitude: f64,
    pub tau: f64,
    pub amplitude_err: f64,
    pub tau_err: f64,
    /// Residual sum of squares at the optimum.
    pub ssr: f64,
    pub iterations: u32,
}

fn model_value(model: DecayModel, a: f64, tau: f64, t: f64) -> f64 {
    match model {
        DecayModel::SingleExponential => 0.25 + a * (-t / tau).exp(),
        DecayModel::UncorrectedCat { nbar0 } => {
            0.25 + a * (-nbar0 * (1.0 - (-t / tau).exp())).exp()
        }
    }
}

fn model_jacobian(model: DecayModel, a: f64, tau: f64, t: f64) -> (f64, f64) {
    match model {
        DecayModel::SingleExponential => {
            let e = (-t / tau).exp();
            (e, a * e * t / (tau * tau))
        }
        DecayModel::UncorrectedCat { nbar0 } => {
            let inner = (-t / tau).exp();
            let e = (-nbar0 * (1.0 - inner)).exp();
            (e, a * e * nbar0 * inner * t / (tau * tau))
        }
    }
}

/// Fit `F(t)` by Levenberg-Marquardt over (A, τ).
pub fn fit_decay(
    times: &[f64],
    fidelities: &[f64],
    model: DecayModel,
) -> Result<DecayFit, TomoError> {
    if times.len() != fidelities.len() {
        return Err(TomoError::InvalidParam(format!(
            "{} times but {} fidelities",
            times.len(),
            fidelities.len()
        )));
    }
    if times.len() < 4 {
        return Err(TomoError::TooFewPoints(times.len()));
    }

    // Log-linear seed on the offset-subtracted data.
    let mut a = fidelities
        .iter()
        .fold(f64::MIN, |acc, &f| acc.max(f - 0.25))
        .max(1e-6);
    let mut tau = {
        let pts: Vec<(f64, f64)> = times
            .iter()
            .zip(fidelities)
            .filter(|(_, &f)| f - 0.25 > 1e-9)
            .map(|(&t, &f)| (t, (f - 0.25).ln()))
            .collect();
        let n = pts.len() as f64;
        let span = times.iter().fold(f64::MIN, |m, &t| m.max(t)).max(1.0);
        if pts.len() < 2 {
            span
        } else {
            let sx: f64 = pts.iter().map(|p| p.0).sum();
            let sy: f64 = pts.iter().map(|p| p.1).sum();
            let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
            let denom = n * sxx - sx * sx;
            let slope = if denom.abs() > 1e-30 { (n * sxy - sx * sy) / denom } else { 0.0 };
            let tau_eff = if slope < -1e-12 { -1.0 / slope } else { span };
            match model {
                DecayModel::SingleExponential => tau_eff,
                DecayModel::UncorrectedCat { nbar0 } => tau_eff * nbar0,
            }
        }
    }
    .clamp(1e-6, 1e9);

    let ssr_of = |a: f64, tau: f64| -> f64 {
        times
            .iter()
            .zip(fidelities)
            .map(|(&t, &f)| {
                let r = f - model_value(model, a, tau, t);
                r * r
            })
            .sum()
    };
    let mut ssr = ssr_of(a, tau);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    const MAX_ITER: u32 = 200;
    while iterations < MAX_ITER {
        iterations += 1;
        // Normal equations JᵀJ δ = Jᵀr with LM damping.
        let (mut jtj_aa, mut jtj_at, mut jtj_tt) = (0.0, 0.0, 0.0);
        let (mut jtr_a, mut jtr_t) = (0.0, 0.0);
        for (&t, &f) in times.iter().zip(fidelities) {
            let r = f - model_value(model, a, tau, t);
            let (ja, jt) = model_jacobian(model, a, tau, t);
            jtj_aa += ja * ja;
            jtj_at += ja * jt;
            jtj_tt += jt * jt;
            jtr_a += ja * r;
            jtr_t += jt * r;
        }
        let mut stepped = false;
        for _ in 0..30 {
            let d_aa = jtj_aa * (1.0 + lambda);
            let d_tt = jtj_tt * (1.0 + lambda);
            let det = d_aa * d_tt - jtj_at * jtj_at;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let da = (jtr_a * d_tt - jtj_at * jtr_t) / det;
            let dt = (jtr_t * d_aa - jtj_at * jtr_a) / det;
            let (a_new, tau_new) = (a + da, tau + dt);
            if tau_new <= 0.0 {
                lambda *= 10.0;
                continue;
            }
            let ssr_new = ssr_of(a_new, tau_new);
            if ssr_new <= ssr {
                let rel_step = (da / a.abs().max(1e-12)).abs()
                    .max((dt / tau.abs().max(1e-12)).abs());
                let rel_impr = (ssr - ssr_new) / ssr.max(1e-300);
                a = a_new;
                tau = tau_new;
                ssr = ssr_new;
                lambda = (lambda * 0.3).max(1e-12);
                stepped = true;
                if rel_step < 1e-10 || rel_impr < 1e-14 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            // No downhill step at any damping: we are at the optimum.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(TomoError::NoConvergence(MAX_ITER));
    }

    // Standard errors from the unweighted covariance s²(JᵀJ)⁻¹.
    let (mut jtj_aa, mut jtj_at, mut jtj_tt) = (0.0, 0.0, 0.0);
    for &t in times {
        let (ja, jt) = model_jacobian(model, a, tau, t);
        jtj_aa += ja * ja;
        jtj_at += ja * jt;
        jtj_tt += jt * jt;
    }
    let dof = (times.len() - 2).max(1) as f64;
    let s2 = ssr / dof;
    let det = jtj_aa * jtj_tt - jtj_at * jtj_at;
    let (amplitude_err, tau_err) = if det.abs() > 1e-300 {
        ((s2 * jtj_tt / det).max(0.0).sqrt(), (s2 * jtj_aa / det).max(0.0).sqrt())
    } else {
        (f64::INFINITY, f64::INFINITY)
    };

    Ok(DecayFit { model, amplitude: a, tau, amplitude_err, tau_err, ssr, iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn ideal_cardinals() -> CardinalOutcomes {
        CardinalOutcomes::six(
            BlochVector::new(1.0, 0.0, 0.0),
            BlochVector::new(-1.0, 0.0, 0.0),
            BlochVector::new(0.0, 1.0, 0.0),
            BlochVector::new(0.0, -1.0, 0.0),
            BlochVector::new(0.0, 0.0, 1.0),
            BlochVector::new(0.0, 0.0, -1.0),
        )
    }

    fn map_cardinals(f: impl Fn(&BlochVector) -> BlochVector) -> CardinalOutcomes {
        let id = ideal_cardinals();
        CardinalOutcomes {
            plus_x: f(&id.plus_x),
            plus_y: f(&id.plus_y),
            plus_z: f(&id.plus_z),
            minus_z: f(&id.minus_z),
            minus_x: id.minus_x.map(|b| f(&b)),
            minus_y: id.minus_y.map(|b| f(&b)),
        }
    }

    #[test]
    fn bloch_estimator_handles_the_trivial_cases() {
        let all_up = bloch_from_outcomes((0, 10), (0, 10), (10, 0)).unwrap();
        assert_abs_diff_eq!(all_up.rz, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(all_up.rx, -1.0, epsilon = 1e-15);
        let balanced = bloch_from_outcomes((5, 5), (7, 7), (9, 9)).unwrap();
        assert_abs_diff_eq!(balanced.length(), 0.0, epsilon = 1e-15);
        assert!(bloch_from_outcomes((0, 0), (1, 1), (1, 1)).is_err());
    }

    #[test]
    fn bloch_estimator_matches_the_state_at_sampling_accuracy() {
        let exact = BlochVector::new(0.6, -0.48, 0.64);
        let shots = 100_000u64;
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let mut draw = |r: f64| -> (u64, u64) {
            let p_plus = 0.5 * (1.0 + r);
            let plus = (0..shots).filter(|_| rng.random::<f64>() < p_plus).count() as u64;
            (plus, shots - plus)
        };
        let x = draw(exact.rx);
        let y = draw(exact.ry);
        let z = draw(exact.rz);
        let est = bloch_from_outcomes(x, y, z).unwrap();
        let sigma = (1.0 / shots as f64).sqrt();
        assert!((est.rx - exact.rx).abs() < 3.0 * sigma);
        assert!((est.ry - exact.ry).abs() < 3.0 * sigma);
        assert!((est.rz - exact.rz).abs() < 3.0 * sigma);
    }

    #[test]
    fn identity_data_reconstructs_the_identity_process() {
        let chi = chi_from_cardinals(&ideal_cardinals());
        assert_eq!(chi.process_fidelity(), 1.0);
        for m in 0..4 {
            for n in 0..4 {
                let want = if m == 0 && n == 0 { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(chi.get(m, n).norm(), want, epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(chi.trace().re, 1.0, epsilon = 1e-12);
        assert!(chi.physical(1e-9).is_ok());
    }

    #[test]
    fn closed_formula_matches_the_damping_reference() {
        // Amplitude damping with transverse T2: the frozen reference point.
        let (t, t1, t2): (f64, f64, f64) = (50.0, 250.0, 330.0);
        let damp = |r: &BlochVector| BlochVector {
            rx: r.rx * (-t / t2).exp(),
            ry: r.ry * (-t / t2).exp(),
            rz: r.rz * (-t / t1).exp() + (1.0 - (-t / t1).exp()),
        };
        let data = CardinalOutcomes::four(
            damp(&BlochVector::new(1.0, 0.0, 0.0)),
            damp(&BlochVector::new(0.0, 1.0, 0.0)),
            damp(&BlochVector::new(0.0, 0.0, 1.0)),
            damp(&BlochVector::new(0.0, 0.0, -1.0)),
        );
        let x00 = entanglement_fidelity_formula(&data);
        assert_abs_diff_eq!(x00, 0.8843851187137501, epsilon = 1e-12);
        let chi = chi_from_cardinals(&data);
        assert_abs_diff_eq!(chi.process_fidelity(), x00, epsilon = 1e-10);
        assert_abs_diff_eq!(chi.trace().re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(scaled_fidelity(x00), (x00 - 0.25) / 0.75, epsilon = 1e-15);
    }

    #[test]
    fn z_rotations_match_their_analytic_processes() {
        // Rz(π/2): +x → +y, +y → −x. In {I, σx, −iσy, σz} the unitary has
        // coefficients (cos π/4, 0, 0, −i sin π/4).
        let quarter = map_cardinals(|r| BlochVector::new(-r.ry, r.rx, r.rz));
        let chi = chi_from_cardinals(&quarter);
        assert_abs_diff_eq!(chi.get(0, 0).re, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(chi.get(3, 3).re, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(chi.get(0, 3).im, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(chi.get(3, 0).im, -0.5, epsilon = 1e-10);
        for (m, n) in [(1, 1), (2, 2), (0, 1), (0, 2), (1, 2), (1, 3), (2, 3)] {
            assert_abs_diff_eq!(chi.get(m, n).norm(), 0.0, epsilon = 1e-10);
        }
        // Rz(π) is the σz process: fidelity 0 against the identity.
        let half = map_cardinals(|r| BlochVector::new(-r.rx, -r.ry, r.rz));
        let chi2 = chi_from_cardinals(&half);
        assert_abs_diff_eq!(chi2.get(3, 3).re, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(chi2.process_fidelity(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn depolarizing_channel_is_diagonal() {
        let p = 0.3;
        let data = map_cardinals(|r| {
            BlochVector::new((1.0 - p) * r.rx, (1.0 - p) * r.ry, (1.0 - p) * r.rz)
        });
        let chi = chi_from_cardinals(&data);
        let want = [1.0 - 3.0 * p / 4.0, p / 4.0, p / 4.0, p / 4.0];
        for (m, w) in want.iter().enumerate() {
            assert_abs_diff_eq!(chi.get(m, m).re, *w, epsilon = 1e-10);
            assert_abs_diff_eq!(chi.get(m, m).im, 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(chi.process_fidelity(), 1.0 - 3.0 * p / 4.0, epsilon = 1e-10);
        assert!(chi.physical(1e-9).is_ok());
        assert!(chi.hermiticity_residual() < 1e-12);
    }

    #[test]
    fn unphysical_data_is_reported_not_clipped() {
        // Inconsistent over-long outputs produce a non-PSD reconstruction.
        let data = map_cardinals(|r| BlochVector::new(1.3 * r.rx, -1.2 * r.ry, 1.1 * r.rz));
        let chi = chi_from_cardinals(&data);
        let err = chi.physical(1e-6).unwrap_err();
        assert!(matches!(err, TomoError::NonPhysical { min_eig } if min_eig < -1e-6));
        let clipped = chi.clipped();
        assert!(clipped.min_eigenvalue() > -1e-12);
        assert_abs_diff_eq!(clipped.trace().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gad_channel_is_complete_and_has_the_right_fixed_points() {
        for &(t, n_th) in
            &[(0.0, 0.0), (10.0, 0.0), (35.0, 0.04), (200.0, 0.5), (1e7, 0.0), (1e7, 0.5)]
        {
            let ch = amplitude_damping_channel(t, 35.0, n_th).unwrap();
            assert!(ch.completeness_residual() < 1e-12, "t={t} n_th={n_th}");
        }
        // t = 0 is the identity.
        let id = amplitude_damping_channel(0.0, 35.0, 0.1).unwrap();
        let r = BlochVector::new(0.3, -0.5, 0.2);
        let out = id.apply_bloch(&r);
        assert_abs_diff_eq!(out.rx, r.rx, epsilon = 1e-15);
        assert_abs_diff_eq!(out.rz, r.rz, epsilon = 1e-15);
        assert_abs_diff_eq!(id.chi().process_fidelity(), 1.0, epsilon = 1e-12);
        // Zero temperature: everything relaxes to +z.
        let frozen = amplitude_damping_channel(1e7, 35.0, 0.0).unwrap();
        for r in [
            BlochVector::new(1.0, 0.0, 0.0),
            BlochVector::new(0.0, -1.0, 0.0),
            BlochVector::new(0.0, 0.0, -1.0),
        ] {
            let out = frozen.apply_bloch(&r);
            assert_abs_diff_eq!(out.rx, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(out.ry, 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(out.rz, 1.0, epsilon = 1e-9);
        }
        // Half-occupied bath: the fully mixed state is the fixed point.
        let hot = amplitude_damping_channel(1e7, 35.0, 0.5).unwrap();
        let out = hot.apply_bloch(&BlochVector::new(0.8, 0.1, -0.5));
        assert_abs_diff_eq!(out.length(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn gad_chi_is_physical_and_consistent_with_its_bloch_map() {
        let ch = amplitude_damping_channel(30.0, 35.0, 0.04).unwrap();
        let chi = ch.chi();
        assert_abs_diff_eq!(chi.trace().re, 1.0, epsilon = 1e-9);
        assert!(chi.hermiticity_residual() < 1e-12);
        assert!(chi.min_eigenvalue() > -1e-12);
        // χ from the Kraus set equals χ reconstructed from cardinal images.
        let data = map_cardinals(|r| ch.apply_bloch(r));
        let rebuilt = chi_from_cardinals(&data);
        for m in 0..4 {
            for n in 0..4 {
                assert_abs_diff_eq!(
                    (chi.get(m, n) - rebuilt.get(m, n)).norm(),
                    0.0,
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn sampled_gad_tomography_stays_physical() {
        // The module-level invariant, at 10⁵ shots per axis on a channel
        // whose spectrum sits well inside the PSD cone.
        let ch = amplitude_damping_channel(30.0, 35.0, 0.04).unwrap();
        let shots = 100_000u64;
        let mut rng = ChaCha12Rng::seed_from_u64(4242);
        let mut sample = |r: &BlochVector| -> BlochVector {
            let exact = ch.apply_bloch(r);
            let mut draw = |mean: f64| -> f64 {
                let p = 0.5 * (1.0 + mean);
                let plus = (0..shots).filter(|_| rng.random::<f64>() < p).count();
                (2.0 * plus as f64 - shots as f64) / shots as f64
            };
            BlochVector::new(draw(exact.rx), draw(exact.ry), draw(exact.rz))
        };
        let id = ideal_cardinals();
        let data = CardinalOutcomes::six(
            sample(&id.plus_x),
            sample(&id.minus_x.unwrap()),
            sample(&id.plus_y),
            sample(&id.minus_y.unwrap()),
            sample(&id.plus_z),
            sample(&id.minus_z),
        );
        let chi = chi_from_cardinals(&data);
        assert_abs_diff_eq!(chi.trace().re, 1.0, epsilon = 1e-9);
        assert!(chi.min_eigenvalue() > -1e-6);
        let exact = ch.chi().process_fidelity();
        assert!((chi.process_fidelity() - exact).abs() < 5e-3);
    }

    #[test]
    fn frame_optimize_recovers_a_known_rotation() {
        let deg = std::f64::consts::PI / 180.0;
        // Identity data: nothing to correct.
        let id = frame_optimize(&ideal_cardinals()).unwrap();
        for a in id.angles {
            assert!(a.abs() < 0.01 * deg, "angle {a}");
        }
        assert!(id.fidelity <= 1.0 + 1e-9);
        assert_abs_diff_eq!(id.fidelity, 1.0, epsilon = 1e-9);
        // Data corrupted by a 5° z rotation: the optimizer undoes it.
        let (s, c) = (5.0 * deg).sin_cos();
        let corrupted = map_cardinals(|r| {
            BlochVector::new(c * r.rx - s * r.ry, s * r.rx + c * r.ry, r.rz)
        });
        let fixed = frame_optimize(&corrupted).unwrap();
        assert!(
            (fixed.angles[0] + 5.0 * deg).abs() < 0.1 * deg,
            "z angle {}",
            fixed.angles[0] / deg
        );
        assert!(fixed.angles[1].abs() < 0.1 * deg);
        assert!(fixed.angles[2].abs() < 0.1 * deg);
        assert!(fixed.fidelity > 1.0 - 1e-6 && fixed.fidelity <= 1.0 + 1e-9);
        // A four-point set cannot be frame-optimized.
        let four = CardinalOutcomes::four(
            BlochVector::new(1.0, 0.0, 0.0),
            BlochVector::new(0.0, 1.0, 0.0),
            BlochVector::new(0.0, 0.0, 1.0),
            BlochVector::new(0.0, 0.0, -1.0),
        );
        assert!(frame_optimize(&four).is_err());
    }

    #[test]
    fn frame_optimize_never_exceeds_unit_fidelity_on_physical_data() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..5 {
            let p: f64 = rng.random_range(0.05..0.5);
            let angle: f64 = rng.random_range(-0.2..0.2);
            let (s, c) = angle.sin_cos();
            let data = map_cardinals(|r| {
                let (rx, ry) = (c * r.rx - s * r.ry, s * r.rx + c * r.ry);
                BlochVector::new((1.0 - p) * rx, (1.0 - p) * ry, (1.0 - p) * r.rz)
            });
            let before = entanglement_fidelity_formula(&data);
            let opt = frame_optimize(&data).unwrap();
            assert!(opt.fidelity >= before - 1e-12);
            assert!(opt.fidelity <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn exact_single_exponential_is_inverted() {
        let (a0, tau0) = (0.74, 320.0);
        let times: Vec<f64> = (0..12).map(|k| 10.0 + 40.0 * k as f64).collect();
        let fids: Vec<f64> = times.iter().map(|&t| 0.25 + a0 * (-t / tau0).exp()).collect();
        let fit = fit_decay(&times, &fids, DecayModel::SingleExponential).unwrap();
        assert!((fit.tau - tau0).abs() / tau0 < 1e-6, "tau {}", fit.tau);
        assert!((fit.amplitude - a0).abs() / a0 < 1e-6);
        assert!(fit.ssr < 1e-18);
        assert!(fit.tau > 0.0);
    }

    #[test]
    fn exact_uncorrected_cat_model_is_inverted() {
        let (a0, tau0, nbar0) = (0.75, 250.0, 2.0);
        let times: Vec<f64> = (0..15).map(|k| 5.0 + 12.0 * k as f64).collect();
        let fids: Vec<f64> = times
            .iter()
            .map(|&t| 0.25 + a0 * (-nbar0 * (1.0 - (-t / tau0).exp())).exp())
            .collect();
        let fit = fit_decay(&times, &fids, DecayModel::UncorrectedCat { nbar0 }).unwrap();
        assert!((fit.tau - tau0).abs() / tau0 < 1e-6, "tau {}", fit.tau);
        assert!((fit.amplitude - a0).abs() / a0 < 1e-6);
    }

    #[test]
    fn uncorrected_cat_short_time_constant_is_tau_over_nbar() {
        let (tau_c, nbar0) = (250.0, 2.0);
        let times: Vec<f64> = (1..=20).map(|k| 2.0 * k as f64).collect();
        let fids: Vec<f64> = times
            .iter()
            .map(|&t| 0.25 + 0.75 * (-nbar0 * (1.0 - (-t / tau_c).exp())).exp())
            .collect();
        let fit = fit_decay(&times, &fids, DecayModel::SingleExponential).unwrap();
        let short_time = tau_c / nbar0;
        assert!(
            (fit.tau - short_time).abs() / short_time < 0.15,
            "short-time constant {} vs {}",
            fit.tau,
            short_time
        );
    }

    #[test]
    fn noisy_fits_cover_the_truth_within_two_standard_errors() {
        let (a0, tau0) = (0.7, 300.0);
        let times: Vec<f64> = (0..20).map(|k| 15.0 * k as f64).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(2025);
        let mut covered = 0;
        for _ in 0..100 {
            let fids: Vec<f64> = times
                .iter()
                .map(|&t| {
                    // Box-Muller Gaussian noise, σ = 0.01.
                    let u1: f64 = rng.random::<f64>().max(1e-12);
                    let u2: f64 = rng.random();
                    let g = (-2.0 * u1.ln()).sqrt()
                        * (2.0 * std::f64::consts::PI * u2).cos();
                    0.25 + a0 * (-t / tau0).exp() + 0.01 * g
                })
                .collect();
            let fit = fit_decay(&times, &fids, DecayModel::SingleExponential).unwrap();
            if (fit.tau - tau0).abs() <= 2.0 * fit.tau_err {
                covered += 1;
            }
        }
        assert!(covered >= 88, "only {covered}/100 fits covered the truth at 2σ");
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(matches!(
            fit_decay(&[1.0, 2.0, 3.0], &[0.9, 0.8, 0.7], DecayModel::SingleExponential),
            Err(TomoError::TooFewPoints(3))
        ));
        assert!(fit_decay(&[1.0, 2.0], &[0.9], DecayModel::SingleExponential).is_err());
    }

    #[test]
    fn chi_serialization_round_trips() {
        let data = map_cardinals(|r| BlochVector::new(0.9 * r.rx, 0.9 * r.ry, 0.9 * r.rz));
        let chi = chi_from_cardinals(&data);
        let json = serde_json::to_string(&chi).unwrap();
        let back: ChiMatrix = serde_json::from_str(&json).unwrap();
        for m in 0..4 {
            for n in 0..4 {
                assert_abs_diff_eq!((chi.get(m, n) - back.get(m, n)).norm(), 0.0, epsilon = 0.0);
            }
        }
        let fit = DecayFit {
            model: DecayModel::UncorrectedCat { nbar0: 2.0 },
            amplitude: 0.75,
            tau: 250.0,
            amplitude_err: 0.01,
            tau_err: 4.0,
            ssr: 1e-4,
            iterations: 12,
        };
        let json = serde_json::to_string(&fit).unwrap();
        assert!(json.contains("UncorrectedCat"));
    }
}
