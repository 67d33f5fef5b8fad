//! Variational families: a diagonal Gaussian and a masked affine
//! autoregressive flow, both pushed through per-parameter bijectors.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::prior::Bijector;
use crate::ad::Scalar;
use crate::error::{invalid, Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Bound on each autoregressive log-scale, applied as `c·tanh(s/c)`.
const LOG_SCALE_BOUND: f64 = 5.0;
const CHECKPOINT_HEADER: &str = "diffabm-checkpoint 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Family {
    DiagonalGaussian,
    /// Each layer is an autoregressive affine map conditioned by a masked
    /// network with `blocks` tanh layers of `hidden` units, followed by a
    /// learned LU-factored linear map and a reversal of the coordinates.
    MaskedAffineFlow { layers: usize, hidden: usize, blocks: usize },
}

impl Default for Family {
    fn default() -> Self {
        Family::MaskedAffineFlow {
            layers: 4,
            hidden: 32,
            blocks: 2,
        }
    }
}

/// Offsets of one flow layer inside φ.
#[derive(Debug, Clone, PartialEq)]
struct LayerLayout {
    w_in: usize,
    b_in: usize,
    /// (weights, biases) of each hidden-to-hidden block
    w_hh: Vec<(usize, usize)>,
    w_out: usize,
    b_out: usize,
    lower: usize,
    upper: usize,
    log_diag: usize,
    end: usize,
}

/// Masked connectivity shared by every layer.
#[derive(Debug, Clone, PartialEq)]
struct Masks {
    /// inputs feeding hidden unit k
    input: Vec<Vec<usize>>,
    /// first-block units feeding each unit of the next block
    hidden: Vec<Vec<usize>>,
    /// last-block units feeding output coordinate d
    output: Vec<Vec<usize>>,
}

impl Masks {
    fn new(dim: usize, hidden: usize) -> Self {
        let deg_in: Vec<usize> = (1..=dim).collect();
        let deg_h: Vec<usize> = (0..hidden)
            .map(|k| if dim > 1 { k % (dim - 1) + 1 } else { 1 })
            .collect();
        let input = deg_h
            .iter()
            .map(|&dh| (0..dim).filter(|&d| deg_in[d] <= dh).collect())
            .collect();
        let hid = deg_h
            .iter()
            .map(|&dh| (0..hidden).filter(|&j| deg_h[j] <= dh).collect())
            .collect();
        let output = (0..dim)
            .map(|d| (0..hidden).filter(|&k| deg_h[k] < d + 1).collect())
            .collect();
        Self {
            input,
            hidden: hid,
            output,
        }
    }
}

/// A variational family over `dim` constrained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub family: Family,
    pub dim: usize,
    pub bijectors: Vec<Bijector>,
    layers: Vec<LayerLayout>,
    masks: Option<Masks>,
    n_params: usize,
}

impl Posterior {
    pub fn new(family: Family, bijectors: Vec<Bijector>) -> Result<Self> {
        let dim = bijectors.len();
        if dim == 0 {
            return Err(Error::EmptyInput("posterior"));
        }
        match family {
            Family::DiagonalGaussian => Ok(Self {
                family,
                dim,
                bijectors,
                layers: Vec::new(),
                masks: None,
                n_params: 2 * dim,
            }),
            Family::MaskedAffineFlow {
                layers,
                hidden,
                blocks,
            } => {
                if layers == 0 || hidden == 0 || blocks == 0 {
                    return Err(invalid("flow", "layers, hidden and blocks must be positive"));
                }
                let mut off = 0;
                let mut take = |n: usize| {
                    let o = off;
                    off += n;
                    o
                };
                let tri = dim * (dim - 1) / 2;
                let lay: Vec<LayerLayout> = (0..layers)
                    .map(|_| {
                        let w_in = take(hidden * dim);
                        let b_in = take(hidden);
                        let w_hh = (1..blocks)
                            .map(|_| (take(hidden * hidden), take(hidden)))
                            .collect();
                        let w_out = take(2 * dim * hidden);
                        let b_out = take(2 * dim);
                        let lower = take(tri);
                        let upper = take(tri);
                        let log_diag = take(dim);
                        let end = log_diag + dim;
                        LayerLayout {
                            w_in,
                            b_in,
                            w_hh,
                            w_out,
                            b_out,
                            lower,
                            upper,
                            log_diag,
                            end,
                        }
                    })
                    .collect();
                let n_params = lay.last().map(|l| l.end).unwrap_or(0);
                Ok(Self {
                    family,
                    dim,
                    bijectors,
                    layers: lay,
                    masks: Some(Masks::new(dim, hidden)),
                    n_params,
                })
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    fn hidden(&self) -> usize {
        match self.family {
            Family::MaskedAffineFlow { hidden, .. } => hidden,
            Family::DiagonalGaussian => 0,
        }
    }

    fn check_phi<S>(&self, phi: &[S]) -> Result<()> {
        if phi.len() != self.n_params {
            return Err(Error::DimensionMismatch {
                expected: self.n_params,
                got: phi.len(),
            });
        }
        Ok(())
    }

    /// Initial parameters: the flow starts as a coordinate reversal of the
    /// base, so samples are standard normal before the bijectors.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut phi = vec![0.0; self.n_params];
        let Some(masks) = &self.masks else {
            return phi;
        };
        let h = self.hidden();
        for l in &self.layers {
            for k in 0..h {
                let bound = 1.0 / (masks.input[k].len().max(1) as f64).sqrt();
                for &d in &masks.input[k] {
                    phi[l.w_in + k * self.dim + d] = rng.sample(Uniform::new(-bound, bound).unwrap());
                }
            }
            for &(w, _) in &l.w_hh {
                for k in 0..h {
                    let bound = 1.0 / (masks.hidden[k].len().max(1) as f64).sqrt();
                    for &j in &masks.hidden[k] {
                        phi[w + k * h + j] = rng.sample(Uniform::new(-bound, bound).unwrap());
                    }
                }
            }
        }
        phi
    }

    /// Gaussian parameters of scale `scale`; used to probe non-trivial
    /// members of the family.
    pub fn random_phi<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> Vec<f64> {
        (0..self.n_params)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Shift and bounded log-scale of every coordinate given `x`.
    fn conditioner<S: Scalar>(&self, p: &[S], l: &LayerLayout, x: &[S]) -> (Vec<S>, Vec<S>) {
        let masks = self.masks.as_ref().expect("flow family");
        let h = self.hidden();
        let d = self.dim;
        let mut act: Vec<S> = (0..h)
            .map(|k| {
                let mut a = p[l.b_in + k];
                for &i in &masks.input[k] {
                    a += p[l.w_in + k * d + i] * x[i];
                }
                a.tanh()
            })
            .collect();
        for &(w, b) in &l.w_hh {
            act = (0..h)
                .map(|k| {
                    let mut a = p[b + k];
                    for &j in &masks.hidden[k] {
                        a += p[w + k * h + j] * act[j];
                    }
                    a.tanh()
                })
                .collect();
        }
        let out = |row: usize, conn: &[usize]| {
            let mut a = p[l.b_out + row];
            for &k in conn {
                a += p[l.w_out + row * h + k] * act[k];
            }
            a
        };
        let shift = (0..d).map(|i| out(i, &masks.output[i])).collect();
        let log_scale = (0..d)
            .map(|i| (out(d + i, &masks.output[i]) / LOG_SCALE_BOUND).tanh() * LOG_SCALE_BOUND)
            .collect();
        (shift, log_scale)
    }

    fn tri_index(i: usize, j: usize) -> usize {
        // strictly lower (i > j), row-major
        i * (i - 1) / 2 + j
    }

    /// One flow layer in the sampling direction; returns its log-det.
    fn layer_forward<S: Scalar>(&self, p: &[S], l: &LayerLayout, x: &mut [S]) -> S {
        let d = self.dim;
        let (m, s) = self.conditioner(p, l, x);
        let mut logdet = S::zero();
        for i in 0..d {
            x[i] = x[i] * s[i].exp() + m[i];
            logdet += s[i];
        }
        // v = U x with diagonal exp(log_diag)
        let mut v = vec![S::zero(); d];
        for i in 0..d {
            let ld = p[l.log_diag + i];
            let mut a = x[i] * ld.exp();
            for j in (i + 1)..d {
                a += p[l.upper + Self::tri_index(j, i)] * x[j];
            }
            v[i] = a;
            logdet += ld;
        }
        // y = L v, L unit lower triangular
        for i in (0..d).rev() {
            let mut a = v[i];
            for j in 0..i {
                a += p[l.lower + Self::tri_index(i, j)] * v[j];
            }
            x[i] = a;
        }
        x.reverse();
        logdet
    }

    /// Inverse of [`Self::layer_forward`]; returns the forward log-det.
    fn layer_inverse<S: Scalar>(&self, p: &[S], l: &LayerLayout, y: &mut Vec<S>) -> S {
        let d = self.dim;
        y.reverse();
        let mut logdet = S::zero();
        let mut v = vec![S::zero(); d];
        for i in 0..d {
            let mut a = y[i];
            for j in 0..i {
                a -= p[l.lower + Self::tri_index(i, j)] * v[j];
            }
            v[i] = a;
        }
        let mut x = vec![S::zero(); d];
        for i in (0..d).rev() {
            let ld = p[l.log_diag + i];
            let mut a = v[i];
            for j in (i + 1)..d {
                a -= p[l.upper + Self::tri_index(j, i)] * x[j];
            }
            x[i] = a * (-ld).exp();
            logdet += ld;
        }
        // autoregressive inverse, one coordinate per pass
        let mut z = vec![S::zero(); d];
        for i in 0..d {
            let (m, s) = self.conditioner(p, l, &z);
            z[i] = (x[i] - m[i]) * (-s[i]).exp();
            logdet += s[i];
        }
        *y = z;
        logdet
    }

    fn unconstrained_forward<S: Scalar>(&self, p: &[S], z: &[S]) -> (Vec<S>, S) {
        match self.family {
            Family::DiagonalGaussian => {
                let d = self.dim;
                let mut logdet = S::zero();
                let u = (0..d)
                    .map(|i| {
                        logdet += p[d + i];
                        p[i] + p[d + i].exp() * z[i]
                    })
                    .collect();
                (u, logdet)
            }
            Family::MaskedAffineFlow { .. } => {
                let mut x = z.to_vec();
                let mut logdet = S::zero();
                for l in &self.layers {
                    logdet += self.layer_forward(p, l, &mut x);
                }
                (x, logdet)
            }
        }
    }

    fn unconstrained_inverse<S: Scalar>(&self, p: &[S], u: &[S]) -> (Vec<S>, S) {
        match self.family {
            Family::DiagonalGaussian => {
                let d = self.dim;
                let mut logdet = S::zero();
                let z = (0..d)
                    .map(|i| {
                        logdet += p[d + i];
                        (u[i] - p[i]) * (-p[d + i]).exp()
                    })
                    .collect();
                (z, logdet)
            }
            Family::MaskedAffineFlow { .. } => {
                let mut x = u.to_vec();
                let mut logdet = S::zero();
                for l in self.layers.iter().rev() {
                    logdet += self.layer_inverse(p, l, &mut x);
                }
                (x, logdet)
            }
        }
    }

    fn log_base<S: Scalar>(&self, z: &[S]) -> S {
        let sq = z.iter().fold(S::zero(), |a, &v| a + v * v);
        sq * -0.5 - self.dim as f64 * LN_SQRT_2PI
    }

    /// Reparameterised draw `θ = g(φ, z)` and `log q_φ(θ)` along the
    /// same path.
    pub fn sample_and_log_q<S: Scalar>(&self, phi: &[S], z: &[f64]) -> Result<(Vec<S>, S)> {
        self.check_phi(phi)?;
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        let zs: Vec<S> = z.iter().map(|&v| S::constant(v)).collect();
        let (u, mut logdet) = self.unconstrained_forward(phi, &zs);
        let theta = u
            .iter()
            .zip(&self.bijectors)
            .map(|(&ui, b)| {
                logdet += b.log_det(ui);
                b.forward(ui)
            })
            .collect();
        Ok((theta, self.log_base(&zs) - logdet))
    }

    /// `log q_φ(θ)` at a fixed point of the support.
    pub fn log_q<S: Scalar>(&self, phi: &[S], theta: &[f64]) -> Result<S> {
        self.check_phi(phi)?;
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: theta.len(),
            });
        }
        let mut bij_logdet = 0.0;
        let mut u = Vec::with_capacity(self.dim);
        for (b, &t) in self.bijectors.iter().zip(theta) {
            let ui = b.inverse(t)?;
            bij_logdet += b.log_det(ui);
            u.push(S::constant(ui));
        }
        let (z, logdet) = self.unconstrained_inverse(phi, &u);
        Ok(self.log_base(&z) - logdet - bij_logdet)
    }

    pub fn sample<R: Rng + ?Sized>(&self, phi: &[f64], rng: &mut R, n: usize) -> Result<Vec<Vec<f64>>> {
        (0..n)
            .map(|_| {
                let z = self.base_draw(rng);
                self.sample_and_log_q(phi, &z).map(|(t, _)| t)
            })
            .collect()
    }

    pub fn base_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Writes the family, bijectors and φ as text.
    pub fn save<W: Write>(&self, phi: &[f64], mut w: W) -> Result<()> {
        self.check_phi(phi)?;
        let io = |e: std::io::Error| Error::Checkpoint(e.to_string());
        writeln!(w, "{CHECKPOINT_HEADER}").map_err(io)?;
        match self.family {
            Family::DiagonalGaussian => writeln!(w, "family diagonal-gaussian"),
            Family::MaskedAffineFlow {
                layers,
                hidden,
                blocks,
            } => writeln!(w, "family masked-affine-flow {layers} {hidden} {blocks}"),
        }
        .map_err(io)?;
        writeln!(w, "dim {}", self.dim).map_err(io)?;
        for b in &self.bijectors {
            match *b {
                Bijector::Identity => writeln!(w, "bijector identity"),
                Bijector::Exp { lo } => writeln!(w, "bijector exp {lo:?}"),
                Bijector::Sigmoid { lo, hi } => writeln!(w, "bijector sigmoid {lo:?} {hi:?}"),
            }
            .map_err(io)?;
        }
        writeln!(w, "params {}", phi.len()).map_err(io)?;
        for v in phi {
            writeln!(w, "{v:?}").map_err(io)?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<(Self, Vec<f64>)> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let mut lines = r
            .lines()
            .map(|l| l.map_err(|e| Error::Checkpoint(e.to_string())))
            .filter(|l| !matches!(l, Ok(s) if s.starts_with('#')));
        let mut next = || -> Result<String> { lines.next().unwrap_or_else(|| Err(bad("truncated file"))) };
        if next()?.trim() != CHECKPOINT_HEADER {
            return Err(bad("unrecognised header"));
        }
        let num = |s: Option<&str>| -> Result<f64> {
            s.ok_or_else(|| bad("missing field"))?
                .parse::<f64>()
                .map_err(|e| Error::Checkpoint(e.to_string()))
        };
        let int = |s: Option<&str>| -> Result<usize> {
            s.ok_or_else(|| bad("missing field"))?
                .parse::<usize>()
                .map_err(|e| Error::Checkpoint(e.to_string()))
        };
        let fam_line = next()?;
        let mut f = fam_line.split_whitespace();
        if f.next() != Some("family") {
            return Err(bad("expected family line"));
        }
        let family = match f.next() {
            Some("diagonal-gaussian") => Family::DiagonalGaussian,
            Some("masked-affine-flow") => Family::MaskedAffineFlow {
                layers: int(f.next())?,
                hidden: int(f.next())?,
                blocks: int(f.next())?,
            },
            _ => return Err(bad("unknown family")),
        };
        let dim_line = next()?;
        let mut f = dim_line.split_whitespace();
        if f.next() != Some("dim") {
            return Err(bad("expected dim line"));
        }
        let dim = int(f.next())?;
        let mut bijectors = Vec::with_capacity(dim);
        for _ in 0..dim {
            let line = next()?;
            let mut f = line.split_whitespace();
            if f.next() != Some("bijector") {
                return Err(bad("expected bijector line"));
            }
            bijectors.push(match f.next() {
                Some("identity") => Bijector::Identity,
                Some("exp") => Bijector::Exp { lo: num(f.next())? },
                Some("sigmoid") => Bijector::Sigmoid {
                    lo: num(f.next())?,
                    hi: num(f.next())?,
                },
                _ => return Err(bad("unknown bijector")),
            });
        }
        let post = Posterior::new(family, bijectors)?;
        let p_line = next()?;
        let mut f = p_line.split_whitespace();
        if f.next() != Some("params") {
            return Err(bad("expected params line"));
        }
        let n = int(f.next())?;
        if n != post.n_params() {
            return Err(bad("parameter count does not match the family"));
        }
        let phi = (0..n)
            .map(|_| num(Some(next()?.trim())))
            .collect::<Result<Vec<f64>>>()?;
        Ok((post, phi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::{Dual, Tape};
    use crate::rng::seed_split;

    fn flow(dim: usize, bij: Bijector) -> Posterior {
        Posterior::new(
            Family::MaskedAffineFlow {
                layers: 3,
                hidden: 8,
                blocks: 2,
            },
            vec![bij; dim],
        )
        .unwrap()
    }

    #[test]
    fn default_flow_size() {
        let p = Posterior::new(Family::default(), vec![Bijector::Identity; 3]).unwrap();
        // per layer: 96 + 32 + 1024 + 32 + 192 + 6 + 3 + 3 + 3
        assert_eq!(p.n_params(), 4 * 1391);
    }

    #[test]
    fn init_is_standard_normal_up_to_reversal() {
        let p = flow(3, Bijector::Identity);
        let phi = p.init(&mut seed_split(1, 0));
        let z = [0.3, -1.2, 2.0];
        let (th, lq) = p.sample_and_log_q(&phi, &z).unwrap();
        // three reversals
        assert_eq!(th, vec![2.0, -1.2, 0.3]);
        let expect = -0.5 * (0.09 + 1.44 + 4.0) - 3.0 * LN_SQRT_2PI;
        assert!((lq - expect).abs() < 1e-12);
    }

    #[test]
    fn inverse_recovers_base_density() {
        for fam in [Family::DiagonalGaussian, Family::default()] {
            let bij = vec![
                Bijector::Sigmoid { lo: -3.0, hi: 1.0 },
                Bijector::Exp { lo: 0.0 },
                Bijector::Identity,
            ];
            let p = Posterior::new(fam, bij).unwrap();
            let mut rng = seed_split(9, 1);
            let phi = p.random_phi(&mut rng, 0.2);
            for _ in 0..20 {
                let z = p.base_draw(&mut rng);
                let (th, lq) = p.sample_and_log_q(&phi, &z).unwrap();
                let back = p.log_q(&phi, &th).unwrap();
                assert!((lq - back).abs() < 1e-7 * lq.abs().max(1.0), "{fam:?}: {lq} vs {back}");
            }
        }
    }

    fn integrate_1d(p: &Posterior, phi: &[f64], lo: f64, hi: f64) -> f64 {
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        (0..n)
            .map(|i| p.log_q(phi, &[lo + (i as f64 + 0.5) * h]).unwrap().exp() * h)
            .sum()
    }

    #[test]
    fn one_dimensional_density_integrates_to_one() {
        let mut rng = seed_split(4, 0);
        let p = flow(1, Bijector::Identity);
        let phi = p.random_phi(&mut rng, 0.5);
        let s = integrate_1d(&p, &phi, -60.0, 60.0);
        assert!((s - 1.0).abs() < 1e-3, "{s}");
        let p = flow(1, Bijector::Sigmoid { lo: -2.0, hi: 0.5 });
        let phi = p.random_phi(&mut rng, 0.5);
        let s = integrate_1d(&p, &phi, -2.0 + 1e-12, 0.5 - 1e-12);
        assert!((s - 1.0).abs() < 1e-3, "{s}");
    }

    #[test]
    fn two_dimensional_density_integrates_to_one() {
        let mut rng = seed_split(5, 0);
        let p = flow(2, Bijector::Identity);
        let phi = p.random_phi(&mut rng, 0.15);
        let (lo, hi, n) = (-12.0, 12.0, 600);
        let h = (hi - lo) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = [lo + (i as f64 + 0.5) * h, lo + (j as f64 + 0.5) * h];
                s += p.log_q(&phi, &x).unwrap().exp() * h * h;
            }
        }
        let outside = p
            .sample(&phi, &mut seed_split(5, 1), 20_000)
            .unwrap()
            .iter()
            .filter(|x| x.iter().any(|v| v.abs() > 12.0))
            .count();
        assert!((s - 1.0).abs() < 1e-2, "{s}, outside {outside}");
    }

    #[test]
    fn autoregressive_structure() {
        // the first coordinate after one layer's affine step ignores later ones
        let p = Posterior::new(
            Family::MaskedAffineFlow {
                layers: 1,
                hidden: 8,
                blocks: 2,
            },
            vec![Bijector::Identity; 3],
        )
        .unwrap();
        let phi = p.random_phi(&mut seed_split(2, 0), 0.5);
        let l = &p.layers[0];
        let x1 = [0.1, 0.2, 0.3];
        let x2 = [0.1, -5.0, 7.0];
        let (m1, s1) = p.conditioner(&phi, l, &x1);
        let (m2, s2) = p.conditioner(&phi, l, &x2);
        assert_eq!(m1[0], m2[0]);
        assert_eq!(s1[0], s2[0]);
        assert_ne!(m1[2], m2[2]);
    }

    #[test]
    fn tape_matches_forward_mode() {
        let p = Posterior::new(
            Family::MaskedAffineFlow {
                layers: 2,
                hidden: 4,
                blocks: 2,
            },
            vec![Bijector::Sigmoid { lo: -1.0, hi: 2.0 }, Bijector::Exp { lo: 0.0 }],
        )
        .unwrap();
        let mut rng = seed_split(6, 0);
        let phi = p.random_phi(&mut rng, 0.4);
        let z = p.base_draw(&mut rng);
        let tape = Tape::new();
        let vars: Vec<_> = phi.iter().map(|&v| tape.var(v)).collect();
        let (_, lq) = p.sample_and_log_q(&vars, &z).unwrap();
        let adj = tape.gradient(lq);
        for k in 0..phi.len() {
            let dp: Vec<Dual<1>> = phi
                .iter()
                .enumerate()
                .map(|(i, &v)| if i == k { Dual::variable(v, 0) } else { Dual::constant(v) })
                .collect();
            let (_, lqd) = p.sample_and_log_q(&dp, &z).unwrap();
            let a = adj[vars[k].index().unwrap()];
            assert!((a - lqd.d[0]).abs() <= 1e-9 * lqd.d[0].abs().max(1e-6), "param {k}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = Posterior::new(
            Family::default(),
            vec![Bijector::Sigmoid { lo: -3.0, hi: 0.0 }, Bijector::Exp { lo: 1.5 }],
        )
        .unwrap();
        let phi = p.random_phi(&mut seed_split(8, 0), 0.1);
        let mut buf = Vec::new();
        p.save(&phi, &mut buf).unwrap();
        let (q, back) = Posterior::load(&buf[..]).unwrap();
        assert_eq!(q, p);
        assert_eq!(back, phi);
        let g = Posterior::new(Family::DiagonalGaussian, vec![Bijector::Identity]).unwrap();
        let mut buf = Vec::new();
        g.save(&[0.5, -1.0], &mut buf).unwrap();
        assert_eq!(Posterior::load(&buf[..]).unwrap().1, vec![0.5, -1.0]);
        assert!(Posterior::load(&b"nonsense\n"[..]).is_err());
        let cut = buf[..buf.len() - 1].iter().rposition(|&c| c == b'\n').unwrap() + 1;
        let truncated = &buf[..cut];
        assert!(Posterior::load(truncated).is_err());
    }

    #[test]
    fn samples_stay_in_support() {
        let p = flow(2, Bijector::Sigmoid { lo: 0.0, hi: 1.0 });
        let phi = p.random_phi(&mut seed_split(3, 0), 1.0);
        for t in p.sample(&phi, &mut seed_split(3, 1), 500).unwrap() {
            assert!(t.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }
}
