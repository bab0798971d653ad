//! Random instance generators for property tests and benchmarks.
//!
//! All spaces are Euclidean and all operators dense and time-varying.

use nalgebra::DMatrix;
use rand::Rng;

use crate::game::TwoInputSystemSpec;
use crate::hilbert::{OperatorExpr, Space};
use crate::hinf::DisturbedSystemSpec;
use crate::riccati::{ControlledSystemSpec, CostSpec};
use crate::system::OpSeq;

fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn dense(dom: &Space, cod: &Space, m: DMatrix<f64>) -> OperatorExpr {
    OperatorExpr::dense(dom.clone(), cod.clone(), m).expect("generated shapes match")
}

fn family<R: Rng>(rng: &mut R, horizon: usize, dom: &Space, cod: &Space, scale: f64) -> OpSeq {
    OpSeq::Varying(
        (0..=horizon)
            .map(|_| dense(dom, cod, uniform(rng, cod.dim(), dom.dim(), scale)))
            .collect(),
    )
}

fn zeros(dom: &Space, cod: &Space) -> OpSeq {
    OperatorExpr::zero(dom.clone(), cod.clone()).into()
}

fn gram<R: Rng>(rng: &mut R, n: usize, scale: f64) -> DMatrix<f64> {
    let g = uniform(rng, n, n, scale);
    &g * g.transpose()
}

/// Noisy controlled system with state dimension `n`, input dimension `m`.
pub fn controlled_system<R: Rng>(rng: &mut R, n: usize, m: usize, horizon: usize) -> ControlledSystemSpec {
    let h = Space::euclidean(n);
    let u = Space::euclidean(m);
    let s = 1.0 / (n as f64).sqrt();
    ControlledSystemSpec {
        horizon,
        state_space: h.clone(),
        input_space: u.clone(),
        a: family(rng, horizon, &h, &h, s),
        b: family(rng, horizon, &u, &h, s),
        c: family(rng, horizon, &h, &h, 0.5 * s),
        d: family(rng, horizon, &u, &h, 0.5 * s),
    }
}

/// Cost with `S >= 0`, `R > 0` and `[[M, L*], [L, R]] >= 0` at every step.
pub fn nonnegative_cost<R: Rng>(rng: &mut R, sys: &ControlledSystemSpec) -> CostSpec {
    let h = &sys.state_space;
    let u = &sys.input_space;
    let (n, m) = (h.dim(), u.dim());
    let mut ms = Vec::new();
    let mut ls = Vec::new();
    let mut rs = Vec::new();
    for _ in 0..=sys.horizon {
        // Rank-deficient factor so that Psi is often singular, exercising the ">= 0" edge.
        let q = uniform(rng, n + m, n + m - 1, 1.0);
        let psi = &q * q.transpose();
        ms.push(dense(h, h, psi.view((0, 0), (n, n)).into_owned()));
        ls.push(dense(h, u, psi.view((n, 0), (m, n)).into_owned()));
        let r = psi.view((n, n), (m, m)).into_owned() + DMatrix::identity(m, m) * 0.05;
        rs.push(dense(u, u, r));
    }
    CostSpec {
        m: OpSeq::Varying(ms),
        l: OpSeq::Varying(ls),
        r: OpSeq::Varying(rs),
        s: dense(h, h, gram(rng, n, 1.0)),
    }
}

/// Cost with indefinite `M` and `S`; `R` stays positive so the recursion
/// usually completes.
pub fn indefinite_cost<R: Rng>(rng: &mut R, sys: &ControlledSystemSpec) -> CostSpec {
    let h = &sys.state_space;
    let u = &sys.input_space;
    let (n, m) = (h.dim(), u.dim());
    let sym = |rng: &mut R, k: usize| {
        let a = uniform(rng, k, k, 1.0);
        (&a + a.transpose()) * 0.5
    };
    let mut ms = Vec::new();
    let mut ls = Vec::new();
    let mut rs = Vec::new();
    for _ in 0..=sys.horizon {
        ms.push(dense(h, h, sym(rng, n)));
        ls.push(dense(h, u, uniform(rng, m, n, 0.5)));
        rs.push(dense(u, u, gram(rng, m, 1.0) + DMatrix::identity(m, m)));
    }
    CostSpec {
        m: OpSeq::Varying(ms),
        l: OpSeq::Varying(ls),
        r: OpSeq::Varying(rs),
        s: dense(h, h, sym(rng, n)),
    }
}

/// Disturbed system whose output map is split as `z = (C x, D v)` so the two
/// output operators are orthogonal. With `noisy = false` the noise channels vanish.
pub fn disturbed_system<R: Rng>(
    rng: &mut R,
    n: usize,
    mv: usize,
    p: usize,
    horizon: usize,
    noisy: bool,
) -> DisturbedSystemSpec {
    let h = Space::euclidean(n);
    let v = Space::euclidean(mv);
    let z = Space::euclidean(p + mv);
    let s = 1.0 / (n as f64).sqrt();
    let mut cbar = Vec::new();
    let mut dbar = Vec::new();
    for _ in 0..=horizon {
        let mut cm = DMatrix::zeros(p + mv, n);
        cm.view_mut((0, 0), (p, n)).copy_from(&uniform(rng, p, n, 1.0));
        cbar.push(dense(&h, &z, cm));
        let mut dm = DMatrix::zeros(p + mv, mv);
        dm.view_mut((p, 0), (mv, mv)).copy_from(&uniform(rng, mv, mv, 0.7));
        dbar.push(dense(&v, &z, dm));
    }
    DisturbedSystemSpec {
        horizon,
        state_space: h.clone(),
        disturbance_space: v.clone(),
        output_space: z,
        a: family(rng, horizon, &h, &h, s),
        c: if noisy {
            family(rng, horizon, &h, &h, 0.5 * s)
        } else {
            zeros(&h, &h)
        },
        b1: family(rng, horizon, &v, &h, s),
        d1: if noisy {
            family(rng, horizon, &v, &h, 0.5 * s)
        } else {
            zeros(&v, &h)
        },
        c_bar: OpSeq::Varying(cbar),
        d_bar: OpSeq::Varying(dbar),
    }
}

/// Two-input system with `z = (C x, u)`, so the output operators satisfy
/// `G* C = 0` and `G* G = I`.
pub fn two_input_system<R: Rng>(
    rng: &mut R,
    n: usize,
    mv: usize,
    mu: usize,
    p: usize,
    horizon: usize,
    noisy: bool,
) -> TwoInputSystemSpec {
    let h = Space::euclidean(n);
    let v = Space::euclidean(mv);
    let u = Space::euclidean(mu);
    let z = Space::euclidean(p + mu);
    let s = 1.0 / (n as f64).sqrt();
    let mut cbar = Vec::new();
    for _ in 0..=horizon {
        let mut cm = DMatrix::zeros(p + mu, n);
        cm.view_mut((0, 0), (p, n)).copy_from(&uniform(rng, p, n, 1.0));
        cbar.push(dense(&h, &z, cm));
    }
    let mut gm = DMatrix::zeros(p + mu, mu);
    gm.view_mut((p, 0), (mu, mu)).fill_with_identity();
    TwoInputSystemSpec {
        horizon,
        state_space: h.clone(),
        control_space: u.clone(),
        disturbance_space: v.clone(),
        output_space: z.clone(),
        a: family(rng, horizon, &h, &h, s),
        c: if noisy {
            family(rng, horizon, &h, &h, 0.5 * s)
        } else {
            zeros(&h, &h)
        },
        b1: family(rng, horizon, &v, &h, s),
        d1: if noisy {
            family(rng, horizon, &v, &h, 0.5 * s)
        } else {
            zeros(&v, &h)
        },
        b2: family(rng, horizon, &u, &h, s),
        d2: if noisy {
            family(rng, horizon, &u, &h, 0.5 * s)
        } else {
            zeros(&u, &h)
        },
        c_bar: OpSeq::Varying(cbar),
        g_bar: dense(&u, &z, gm).into(),
    }
}
