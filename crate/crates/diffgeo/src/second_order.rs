//! Second-order calculus: Lie brackets, the Hessian, the Levi-Civita
//! covariant derivative via the Koszul formula, second covariant
//! derivatives, and Riemann curvature.

use ndarray::{Array1, Array2};

use crate::algebra::carre_apply;
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::exterior::{
    flat, form_field_pairing, metric_pointwise, sharp, vf_apply, VectorFieldMatrix,
};
use crate::frames::FormCoeffs;

/// A vector field carried both as its action matrix and its dual 1-form
/// coefficients.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub field: VectorFieldMatrix,
    pub flat: FormCoeffs,
}

impl FieldPair {
    /// Builds the pair from 1-form coefficients; the stored flat is the
    /// projection onto the positive-definite subspace, consistent with the
    /// matrix under `flat()`.
    pub fn from_form(engine: &Engine, v: &FormCoeffs) -> Result<FieldPair> {
        if v.degree != 1 {
            return Err(Error::invalid("FieldPair expects a 1-form"));
        }
        let field = sharp(engine, v)?;
        let fl = flat(engine, &field)?;
        Ok(FieldPair { field, flat: fl })
    }

    pub fn from_matrix(engine: &Engine, field: VectorFieldMatrix) -> Result<FieldPair> {
        let fl = flat(engine, &field)?;
        Ok(FieldPair { field, flat: fl })
    }

    /// Gradient field of a function. Since the zeroth basis function is
    /// constant, `df = sum_l f_l dphi_l` is an exact frame combination (base
    /// index 0), so the coefficients are written down directly instead of
    /// recovered through the Gram pseudo-inverse; content at wedge indices
    /// beyond the frame is truncated.
    pub fn gradient(engine: &Engine, f: &Array1<f64>) -> Result<FieldPair> {
        let space = engine.space(1)?;
        let mut v = Array1::zeros(space.dim());
        for (pos, fr) in space.indices.iter().enumerate() {
            if fr.base == 0 && fr.wedge[0] < f.len() {
                v[pos] = f[fr.wedge[0]];
            }
        }
        let coeffs = FormCoeffs::new(1, v);
        let field = sharp(engine, &coeffs)?;
        Ok(FieldPair { field, flat: coeffs })
    }

    pub fn scale(&self, engine: &Engine) -> Result<f64> {
        Ok(engine.space(1)?.norm(&self.flat.v))
    }
}

fn commutator(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    a.dot(b) - b.dot(a)
}

/// Lie bracket of two 1-forms: compose the sharp matrices, antisymmetrize,
/// and flatten through the Gram pseudo-inverse.
pub fn lie_bracket(engine: &Engine, v: &FormCoeffs, w: &FormCoeffs) -> Result<FormCoeffs> {
    if v.degree != 1 || w.degree != 1 {
        return Err(Error::invalid("lie_bracket expects 1-forms"));
    }
    let xv = sharp(engine, v)?;
    let xw = sharp(engine, w)?;
    let c = commutator(&xv.x, &xw.x);
    flat(engine, &VectorFieldMatrix { x: c })
}

/// Bracket of two fields given as matrices, returned as a full pair.
pub fn lie_bracket_fields(engine: &Engine, x: &FieldPair, y: &FieldPair) -> Result<FieldPair> {
    let c = commutator(&x.field.x, &y.field.x);
    FieldPair::from_matrix(engine, VectorFieldMatrix { x: c })
}

/// Hessian of f evaluated on a pair of fields:
/// `H(f)(X,Y) = (g(X,[Y,grad f]) + g(Y,[X,grad f]) + Gamma(f, g(X,Y))) / 2`,
/// returned as function coefficients.
pub fn hessian_eval(
    engine: &Engine,
    f: &Array1<f64>,
    x: &FieldPair,
    y: &FieldPair,
) -> Result<Array1<f64>> {
    let grad = FieldPair::gradient(engine, f)?;
    let byf = commutator(&y.field.x, &grad.field.x);
    let bxf = commutator(&x.field.x, &grad.field.x);
    // g(X, [Y, grad f]) evaluated as the direct pairing of X's flat with the
    // bracket's action matrix: the bracket never has to be flattened back
    // through the pseudo-inverse.
    let t1 = form_field_pairing(engine, &x.flat, &VectorFieldMatrix { x: byf })?;
    let t2 = form_field_pairing(engine, &y.flat, &VectorFieldMatrix { x: bxf })?;
    let gxy = metric_pointwise(engine, &x.flat, &y.flat)?;
    let t3 = carre_apply(f, &gxy, &engine.carre);
    Ok((t1 + t2 + t3).mapv(|v| 0.5 * v))
}

/// Levi-Civita covariant derivative by the six-term Koszul formula, with
/// every derivative-of-metric term read as a weighted integral against the
/// frame 1-forms.
pub fn covariant_derivative(engine: &Engine, x: &FieldPair, y: &FieldPair) -> Result<FieldPair> {
    let space = engine.space(1)?;
    let n = space.dim();
    let n0 = engine.limit();

    // Weak vector of the bracket: the commutator matrix entry at frame slot
    // (b, w) is already the pairing of [X,Y] against that frame element.
    let bxy = commutator(&x.field.x, &y.field.x);
    let gxy = metric_pointwise(engine, &x.flat, &y.flat)?;

    let mut w = Array1::zeros(n);
    for j in 0..n {
        // Z ranges over the frame: its flat is the j-th unit coefficient
        // vector, its matrix the reshaped j-th Gram column.
        let mut ej = Array1::zeros(n);
        ej[j] = 1.0;
        let zj = FormCoeffs::new(1, ej);
        let mut zmat = Array2::zeros((n0, n0));
        for (pos, fr) in space.indices.iter().enumerate() {
            zmat[[fr.base, fr.wedge[0]]] = space.gram[[pos, j]];
        }

        let gyz = metric_pointwise(engine, &y.flat, &zj)?;
        let gxz = metric_pointwise(engine, &x.flat, &zj)?;

        let t1 = vf_apply(&x.field, &gyz)[0];
        let t2 = vf_apply(&y.field, &gxz)[0];
        let t3 = -zmat.dot(&gxy)[0];

        let fr_j = &space.indices[j];
        let t4 = bxy[[fr_j.base, fr_j.wedge[0]]];

        // <[X,Z], Y> = sum_I weak([X,Z])_I * (Y coefficients)_I: the
        // commutator's weak vector pairs with the other field's coefficients
        // directly, again bypassing the pseudo-inverse.
        let cxz = commutator(&x.field.x, &zmat);
        let cyz = commutator(&y.field.x, &zmat);
        let mut t5 = 0.0;
        let mut t6 = 0.0;
        for (pos, fr) in space.indices.iter().enumerate() {
            t5 -= cxz[[fr.base, fr.wedge[0]]] * y.flat.v[pos];
            t6 -= cyz[[fr.base, fr.wedge[0]]] * x.flat.v[pos];
        }

        w[j] = 0.5 * (t1 + t2 + t3 + t4 + t5 + t6);
    }
    // The weak vector reshaped into frame slots is the action matrix; the
    // coefficient vector is its pseudo-inverse image, so the pair is exactly
    // consistent under flat().
    let mut xmat = Array2::zeros((n0, n0));
    for (pos, fr) in space.indices.iter().enumerate() {
        xmat[[fr.base, fr.wedge[0]]] = w[pos];
    }
    let coeffs = FormCoeffs::new(1, space.pinv_apply(&w));
    Ok(FieldPair { field: VectorFieldMatrix { x: xmat }, flat: coeffs })
}

fn pair_sub(a: &FieldPair, b: &FieldPair) -> FieldPair {
    FieldPair {
        field: VectorFieldMatrix { x: &a.field.x - &b.field.x },
        flat: FormCoeffs::new(1, &a.flat.v - &b.flat.v),
    }
}

/// Second covariant derivative on fields: `nabla_X nabla_Y Z - nabla_{nabla_X Y} Z`.
pub fn second_cov(engine: &Engine, x: &FieldPair, y: &FieldPair, z: &FieldPair) -> Result<FieldPair> {
    let inner = covariant_derivative(engine, y, z)?;
    let a = covariant_derivative(engine, x, &inner)?;
    let xy = covariant_derivative(engine, x, y)?;
    let b = covariant_derivative(engine, &xy, z)?;
    Ok(pair_sub(&a, &b))
}

/// Second covariant derivative applied to a function:
/// `X(Y(f)) - (nabla_X Y)(f)`, which should reproduce the Hessian.
pub fn second_cov_function(
    engine: &Engine,
    f: &Array1<f64>,
    x: &FieldPair,
    y: &FieldPair,
) -> Result<Array1<f64>> {
    let yf = vf_apply(&y.field, f);
    let xyf = vf_apply(&x.field, &yf);
    let xy = covariant_derivative(engine, x, y)?;
    Ok(xyf - vf_apply(&xy.field, f))
}

/// Riemann curvature:
/// `R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_{[X,Y]} Z`,
/// antisymmetric in (X, Y) by construction.
pub fn riemann(engine: &Engine, x: &FieldPair, y: &FieldPair, z: &FieldPair) -> Result<FieldPair> {
    let yz = covariant_derivative(engine, y, z)?;
    let t1 = covariant_derivative(engine, x, &yz)?;
    let xz = covariant_derivative(engine, x, z)?;
    let t2 = covariant_derivative(engine, y, &xz)?;
    let br = lie_bracket_fields(engine, x, y)?;
    let t3 = covariant_derivative(engine, &br, z)?;
    Ok(pair_sub(&pair_sub(&t1, &t2), &t3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{eval, expand};
    use crate::frames::TruncationConfig;
    use crate::kernel::{build_markov, spectral_basis, KernelConfig};

    struct Flat {
        engine: Engine,
        xc: Array1<f64>,
        yc: Array1<f64>,
        interior: Vec<usize>,
    }

    /// Evenly sampled planar square: a low-noise quadrature for the flat
    /// metric, so Euclidean oracles can be checked pointwise in the interior.
    fn flat_square() -> Flat {
        let m = 40;
        let n = m * m;
        let mut pts = ndarray::Array2::zeros((n, 2));
        for i in 0..m {
            for j in 0..m {
                pts[[i * m + j, 0]] = (i as f64 + 0.5) / m as f64 * 2.0;
                pts[[i * m + j, 1]] = (j as f64 + 0.5) / m as f64 * 2.0;
            }
        }
        let pc = crate::cloud::PointCloud::new(pts).unwrap();
        let op = build_markov(&pc, &KernelConfig::new(24)).unwrap();
        let basis = spectral_basis(&op, 24).unwrap();
        let mut engine =
            Engine::new(basis, TruncationConfig::new(24, 12, 12), Engine::default_tau()).unwrap();
        engine.ensure_degree(1).unwrap();
        let mean_x = pc.points.column(0).mean().unwrap();
        let mean_y = pc.points.column(1).mean().unwrap();
        let xv: Array1<f64> = pc.points.column(0).mapv(|v| v - mean_x);
        let yv: Array1<f64> = pc.points.column(1).mapv(|v| v - mean_y);
        let xc = expand(&engine.basis, &xv);
        let yc = expand(&engine.basis, &yv);
        let interior: Vec<usize> = (0..n)
            .filter(|&s| xv[s].abs() < 0.6 && yv[s].abs() < 0.6)
            .collect();
        Flat { engine, xc, yc, interior }
    }

    /// Interior root-mean-square of a function given by coefficients.
    fn irms(f: &Flat, v: &Array1<f64>) -> f64 {
        let vals = eval(&f.engine.basis, v);
        (f.interior.iter().map(|&s| vals[s] * vals[s]).sum::<f64>() / f.interior.len() as f64)
            .sqrt()
    }

    struct FlatTorus {
        engine: Engine,
        /// Expansions of the four embedding coordinates cos u, sin u, cos v,
        /// sin v.
        coords: [Array1<f64>; 4],
    }

    /// Flat 2-torus embedded in R^4: a closed flat manifold, so connection
    /// and curvature oracles are free of the boundary artifacts a bounded
    /// domain introduces into spectral derivatives. The coordinate fields
    /// d/du, d/dv are exact frame combinations:
    /// `du = cos u d(sin u) - sin u d(cos u)`.
    fn flat_torus() -> FlatTorus {
        let m = 40;
        let n = m * m;
        let mut pts = ndarray::Array2::zeros((n, 4));
        let tau = 2.0 * std::f64::consts::PI;
        for i in 0..m {
            for j in 0..m {
                let u = (i as f64 + 0.5) / m as f64 * tau;
                let v = (j as f64 + 0.5) / m as f64 * tau;
                pts[[i * m + j, 0]] = u.cos();
                pts[[i * m + j, 1]] = u.sin();
                pts[[i * m + j, 2]] = v.cos();
                pts[[i * m + j, 3]] = v.sin();
            }
        }
        let pc = crate::cloud::PointCloud::new(pts).unwrap();
        let op = build_markov(&pc, &KernelConfig::new(24)).unwrap();
        let basis = spectral_basis(&op, 24).unwrap();
        let mut engine =
            Engine::new(basis, TruncationConfig::new(24, 10, 10), Engine::default_tau()).unwrap();
        engine.ensure_degree(1).unwrap();
        let coords = [
            expand(&engine.basis, &pc.points.column(0).to_owned()),
            expand(&engine.basis, &pc.points.column(1).to_owned()),
            expand(&engine.basis, &pc.points.column(2).to_owned()),
            expand(&engine.basis, &pc.points.column(3).to_owned()),
        ];
        FlatTorus { engine, coords }
    }

    impl FlatTorus {
        /// The coordinate field d/du (angle = 0) or d/dv (angle = 1).
        fn coordinate_field(&self, angle: usize) -> FieldPair {
            let e = &self.engine;
            let space = e.space(1).unwrap();
            let (c, s) = (&self.coords[2 * angle], &self.coords[2 * angle + 1]);
            let mut v = Array1::zeros(space.dim());
            for (pos, fr) in space.indices.iter().enumerate() {
                v[pos] = c[fr.base] * s[fr.wedge[0]] - s[fr.base] * c[fr.wedge[0]];
            }
            FieldPair::from_form(e, &FormCoeffs::new(1, v)).unwrap()
        }

        /// Root-mean-square over all points of a field's action on the four
        /// embedding coordinates; the coordinate fields have scale 1.
        fn action_rms(&self, field: &VectorFieldMatrix) -> f64 {
            let mut acc = 0.0;
            for c in &self.coords {
                let vals = eval(&self.engine.basis, &vf_apply(field, c));
                acc += vals.iter().map(|a| a * a).sum::<f64>() / vals.len() as f64;
            }
            acc.sqrt()
        }
    }

    #[test]
    fn bracket_antisymmetry_exact() {
        let f = flat_square();
        let e = &f.engine;
        let gx = FieldPair::gradient(e, &f.xc).unwrap();
        let gy = FieldPair::gradient(e, &f.yc).unwrap();
        let vv = lie_bracket(e, &gx.flat, &gx.flat).unwrap();
        assert!(vv.v.iter().all(|&x| x == 0.0), "[v,v] != 0");
        let ab = lie_bracket(e, &gx.flat, &gy.flat).unwrap();
        let ba = lie_bracket(e, &gy.flat, &gx.flat).unwrap();
        for i in 0..ab.v.len() {
            assert_eq!(ab.v[i], -ba.v[i]);
        }
    }

    #[test]
    fn coordinate_gradients_commute() {
        let f = flat_square();
        let e = &f.engine;
        let gx = FieldPair::gradient(e, &f.xc).unwrap();
        let gy = FieldPair::gradient(e, &f.yc).unwrap();
        let br = lie_bracket_fields(e, &gx, &gy).unwrap();
        // the coordinate fields commute: the bracket's action on both
        // coordinates vanishes in the interior, relative to grad x acting on
        // x (which is 1 there)
        let scale = irms(&f, &vf_apply(&gx.field, &f.xc));
        let bx = irms(&f, &vf_apply(&br.field, &f.xc));
        let by = irms(&f, &vf_apply(&br.field, &f.yc));
        assert!(
            bx <= 0.05 * scale && by <= 0.05 * scale,
            "[grad x, grad y] action {bx} / {by} vs scale {scale}"
        );
    }

    #[test]
    fn hessian_symmetric_and_kills_constants() {
        let f = flat_square();
        let e = &f.engine;
        let gx = FieldPair::gradient(e, &f.xc).unwrap();
        let gy = FieldPair::gradient(e, &f.yc).unwrap();
        let hxy = hessian_eval(e, &f.xc, &gx, &gy).unwrap();
        let hyx = hessian_eval(e, &f.xc, &gy, &gx).unwrap();
        let scale = hxy.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1e-30);
        for i in 0..hxy.len() {
            assert!((hxy[i] - hyx[i]).abs() <= 1e-8 * scale, "Hessian asymmetric at {i}");
        }
        let mut c0 = Array1::zeros(e.limit());
        c0[0] = 1.0;
        let hc = hessian_eval(e, &c0, &gx, &gx).unwrap();
        let gscale = {
            let gxx = metric_pointwise(e, &gx.flat, &gx.flat).unwrap();
            gxx.iter().map(|v| v.abs()).fold(0.0f64, f64::max)
        };
        assert!(hc.iter().all(|&v| v.abs() <= 1e-8 * gscale.max(1e-30)), "H(const) != 0");
    }

    #[test]
    fn hessian_of_x_squared_is_two() {
        let f = flat_square();
        let e = &f.engine;
        let gx = FieldPair::gradient(e, &f.xc).unwrap();
        let x2 = crate::algebra::multiply(&f.xc, &f.xc, &e.structure);
        let h = hessian_eval(e, &x2, &gx, &gx).unwrap();
        let vals = eval(&e.basis, &h);
        let mean: f64 =
            f.interior.iter().map(|&s| vals[s]).sum::<f64>() / f.interior.len() as f64;
        assert!(
            (mean - 2.0).abs() <= 0.2 * 2.0,
            "H(x^2)(grad x, grad x) interior mean {mean}, want 2"
        );
    }

    #[test]
    fn torsion_free() {
        let f = flat_square();
        let e = &f.engine;
        let gx = FieldPair::gradient(e, &f.xc).unwrap();
        let gy = FieldPair::gradient(e, &f.yc).unwrap();
        let dxy = covariant_derivative(e, &gx, &gy).unwrap();
        let dyx = covariant_derivative(e, &gy, &gx).unwrap();
        let br = lie_bracket(e, &gx.flat, &gy.flat).unwrap();
        let s1 = e.space(1).unwrap();
        let resid = &dxy.flat.v - &dyx.flat.v - &br.v;
        let scale = s1.norm(&dxy.flat.v) + s1.norm(&dyx.flat.v) + s1.norm(&br.v);
        let norm = s1.norm(&resid);
        assert!(
            norm <= 1e-3 * scale.max(1e-30),
            "torsion residual {norm} vs scale {scale}"
        );
    }

    #[test]
    fn metric_compatibility() {
        let t = flat_torus();
        let e = &t.engine;
        let x = t.coordinate_field(0);
        let y = t.coordinate_field(1);
        // Z = cos(u) d/dv, so g(Y, Z) = cos(u) is nonconstant and
        // X(g(Y,Z)) = -sin(u); the base products cos(u)cos(v), cos(u)sin(v)
        // stay inside the retained frame
        let z = {
            let space = e.space(1).unwrap();
            let cu = &t.coords[0];
            // multiply the 1-form du by the function cos(u): push each frame
            // coefficient's base factor through the structure constants
            let mut w = Array1::zeros(space.dim());
            let lookup: std::collections::HashMap<(usize, usize), usize> = space
                .indices
                .iter()
                .enumerate()
                .map(|(p, fr)| ((fr.base, fr.wedge[0]), p))
                .collect();
            for (pos, fr) in space.indices.iter().enumerate() {
                let coeff = y.flat.v[pos];
                if coeff == 0.0 {
                    continue;
                }
                let mut eb = Array1::zeros(e.limit());
                eb[fr.base] = 1.0;
                let prod = crate::algebra::multiply(&cu, &eb, &e.structure);
                for (b, &p) in prod.iter().enumerate() {
                    if p != 0.0 {
                        if let Some(&q) = lookup.get(&(b, fr.wedge[0])) {
                            w[q] += coeff * p;
                        }
                    }
                }
            }
            FieldPair::from_form(e, &FormCoeffs::new(1, w)).unwrap()
        };
        // the invariant is the integrated identity
        // int X(g(Y,Z)) = int g(nabla_X Y, Z) + g(Y, nabla_X Z)
        let gyz = metric_pointwise(e, &y.flat, &z.flat).unwrap();
        let lhs = vf_apply(&x.field, &gyz)[0];
        let dxy = covariant_derivative(e, &x, &y).unwrap();
        let dxz = covariant_derivative(e, &x, &z).unwrap();
        let t1 = form_field_pairing(e, &z.flat, &dxy.field).unwrap()[0];
        let t2 = form_field_pairing(e, &y.flat, &dxz.field).unwrap()[0];
        let resid = (lhs - t1 - t2).abs();
        // normalize by the sizes of the fields: X and Y have unit scale and
        // Z is bounded by 1
        let scale = lhs.abs().max(t1.abs()).max(t2.abs()).max(0.1);
        assert!(
            resid <= 0.05 * scale,
            "compatibility residual {resid} vs lhs {lhs}, t1 {t1}, t2 {t2}"
        );
    }

    #[test]
    fn flat_connection_vanishes_on_constant_field() {
        let t = flat_torus();
        let e = &t.engine;
        let x = t.coordinate_field(0);
        let dxx = covariant_derivative(e, &x, &x).unwrap();
        let scale = t.action_rms(&x.field);
        let a = t.action_rms(&dxx.field);
        assert!(a <= 0.1 * scale, "nabla_X X action {a} vs scale {scale}");
    }

    #[test]
    fn second_cov_matches_hessian_on_functions() {
        let f = flat_square();
        let e = &f.engine;
        let gx = FieldPair::gradient(e, &f.xc).unwrap();
        let gy = FieldPair::gradient(e, &f.yc).unwrap();
        let x2 = crate::algebra::multiply(&f.xc, &f.xc, &e.structure);
        let lhs = eval(&e.basis, &second_cov_function(e, &x2, &gx, &gy).unwrap());
        let rhs = eval(&e.basis, &hessian_eval(e, &x2, &gx, &gy).unwrap());
        let num: f64 = f.interior.iter().map(|&s| (lhs[s] - rhs[s]).powi(2)).sum::<f64>().sqrt();
        let h2 = eval(&e.basis, &hessian_eval(e, &x2, &gx, &gx).unwrap());
        let den: f64 = f.interior.iter().map(|&s| h2[s].powi(2)).sum::<f64>().sqrt();
        assert!(num <= 0.05 * den.max(1e-30), "second_cov vs Hessian: {num} vs {den}");
    }

    #[test]
    fn second_cov_flat_vanishes_on_fields() {
        let t = flat_torus();
        let e = &t.engine;
        let x = t.coordinate_field(0);
        let y = t.coordinate_field(1);
        let s = second_cov(e, &x, &y, &x).unwrap();
        let scale = t.action_rms(&x.field);
        let a = t.action_rms(&s.field);
        assert!(a <= 0.1 * scale, "second covariant derivative action {a} vs scale {scale}");
    }

    #[test]
    fn riemann_antisymmetric_and_flat() {
        let t = flat_torus();
        let e = &t.engine;
        let x = t.coordinate_field(0);
        let y = t.coordinate_field(1);
        let rxx = riemann(e, &x, &x, &y).unwrap();
        assert!(rxx.flat.v.iter().all(|&v| v == 0.0), "R(X,X)Z != 0");
        let r = riemann(e, &x, &y, &x).unwrap();
        let scale = t.action_rms(&x.field);
        let a = t.action_rms(&r.field);
        assert!(a <= 0.1 * scale, "flat curvature action {a} vs scale {scale}");
    }
}
