//! Sugarscape on a toroidal grid with matrix-based vision.
//!
//! Each agent looks through a `(2V+1)²` window centred on itself. The score
//! `Z = S ⊙ O ⊙ M` picks the destination by hard argmax on the primal and by
//! softmax on the tangent. Sugar and occupancy are primal-only: gradients do
//! not flow through the window indexing.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::beta::beta_sample;
use super::{check_len, Model};
use crate::ad::{smooth_step, tempered_softmax, Scalar, SmootherConfig};
use crate::error::{invalid, Error, Result};
use crate::estimators::{st_categorical, EstimatorKind};
use crate::rng::{purpose, seed_split, stream_id, uniform};
use crate::trajectory::Trajectory;

pub const OUTPUT_NAMES: [&str; 2] = ["mean_holdings", "fraction_alive"];

const CONT_NAMES: [&str; 4] = ["m_alpha", "m_beta", "w_alpha", "w_beta"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SugarParams {
    pub m_alpha: f64,
    pub m_beta: f64,
    pub w_alpha: f64,
    pub w_beta: f64,
    /// Vision probabilities, one per entry of the configured vision set.
    pub p: Vec<f64>,
}

impl Default for SugarParams {
    fn default() -> Self {
        Self {
            m_alpha: 2.0,
            m_beta: 5.0,
            w_alpha: 5.0,
            w_beta: 2.0,
            p: vec![0.2, 0.8],
        }
    }
}

impl SugarParams {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.m_alpha, self.m_beta, self.w_alpha, self.w_beta];
        v.extend_from_slice(&self.p);
        v
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in CONT_NAMES.iter().zip(self.to_vec()) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(*name, "Beta shape must be positive"));
            }
        }
        if self.p.is_empty() {
            return Err(invalid("p", "empty vision distribution"));
        }
        if self.p.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
            return Err(invalid("p", "probabilities outside [0, 1]"));
        }
        if (self.p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("p", "probabilities must sum to one"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Landscape {
    /// Two peaks at seeded positions; capacity falls linearly from `height`
    /// to zero at toroidal distance `radius`.
    TwoPeaks { height: f64, radius: f64 },
    Uniform { capacity: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SugarConfig {
    pub n: usize,
    pub m: usize,
    pub steps: usize,
    pub regen: f64,
    pub visions: Vec<usize>,
    /// Use the strict `d < v` vision ball instead of `d ≤ v`.
    pub strict_vision: bool,
    pub move_tau: f64,
    pub landscape: Landscape,
    pub landscape_seed: u64,
    pub alive_smoother: SmootherConfig,
}

impl Default for SugarConfig {
    fn default() -> Self {
        Self {
            n: 100,
            m: 25,
            steps: 50,
            regen: 1.0,
            visions: vec![1, 6],
            strict_vision: false,
            move_tau: 1.0,
            landscape: Landscape::TwoPeaks { height: 8.0, radius: 10.0 },
            landscape_seed: 0,
            alive_smoother: SmootherConfig::Sigmoid { k: 1.0 },
        }
    }
}

/// `(2V+1)²` row-major 0/1 mask of offsets within Manhattan distance `v`.
pub fn vision_matrix(v: usize, big_v: usize, strict: bool) -> Result<Vec<f64>> {
    if v > big_v {
        return Err(invalid("vision", "radius exceeds the window"));
    }
    let w = 2 * big_v + 1;
    let mut out = vec![0.0; w * w];
    for r in 0..w {
        for c in 0..w {
            let d = r.abs_diff(big_v) + c.abs_diff(big_v);
            let inside = if strict { d < v } else { d <= v };
            out[r * w + c] = if inside { 1.0 } else { 0.0 };
        }
    }
    Ok(out)
}

/// `M̃ = Σ_v p_v M_v`.
pub fn mixed_vision<S: Scalar>(p: &[S], mats: &[Vec<f64>]) -> Vec<S> {
    let len = mats.first().map_or(0, Vec::len);
    (0..len)
        .map(|k| {
            let mut acc = S::zero();
            for (pv, m) in p.iter().zip(mats) {
                if m[k] != 0.0 {
                    acc += *pv * m[k];
                }
            }
            acc
        })
        .collect()
}

/// Capacity grid, row-major `m × m`.
pub fn build_landscape(kind: Landscape, m: usize, seed: u64) -> Vec<f64> {
    match kind {
        Landscape::Uniform { capacity } => vec![capacity; m * m],
        Landscape::TwoPeaks { height, radius } => {
            let mut rng = seed_split(seed, stream_id(0, purpose::LANDSCAPE));
            let peaks: Vec<(f64, f64)> = (0..2)
                .map(|_| ((uniform(&mut rng) * m as f64).floor(), (uniform(&mut rng) * m as f64).floor()))
                .collect();
            let mf = m as f64;
            let torus = |a: f64, b: f64| {
                let d = (a - b).abs();
                d.min(mf - d)
            };
            let mut c = vec![0.0; m * m];
            for x in 0..m {
                for y in 0..m {
                    let best = peaks
                        .iter()
                        .map(|&(px, py)| {
                            let d = (torus(x as f64, px).powi(2) + torus(y as f64, py).powi(2)).sqrt();
                            height * (1.0 - d / radius).max(0.0)
                        })
                        .fold(0.0, f64::max);
                    c[x * m + y] = best;
                }
            }
            c
        }
    }
}

/// `s ← min(s(1−o) + r, c)`; clears the harvest flags.
pub fn regenerate(sugar: &mut [f64], harvested: &mut [bool], capacity: &[f64], r: f64) {
    for k in 0..sugar.len() {
        let kept = if harvested[k] { 0.0 } else { sugar[k] };
        sugar[k] = (kept + r).min(capacity[k]);
        harvested[k] = false;
    }
}

/// Destination in window coordinates plus the one-hot selection whose
/// tangent is the softmax over the unmasked cells.
pub struct Move<S> {
    pub cell: usize,
    pub cells: Vec<usize>,
    pub select: Vec<S>,
}

/// Hard argmax of `Z = S ⊙ O ⊙ M` over cells open on the primal (ties to the
/// smallest row-major index) with softmax tangents. With no open cell the
/// agent keeps the centre.
pub fn score_and_move<S: Scalar>(sugar: &[f64], open: &[f64], hard: &[f64], soft: &[S], tau: f64) -> Result<Move<S>> {
    let cells: Vec<usize> = (0..sugar.len()).filter(|&k| open[k] * hard[k] > 0.0).collect();
    if cells.is_empty() {
        let centre = sugar.len() / 2;
        return Ok(Move {
            cell: centre,
            cells: vec![centre],
            select: vec![S::one()],
        });
    }
    let z: Vec<S> = cells
        .iter()
        .map(|&k| S::surrogate(sugar[k] * open[k] * hard[k], soft[k] * (sugar[k] * open[k])))
        .collect();
    let mut best = 0;
    for (j, zj) in z.iter().enumerate() {
        if zj.value() > z[best].value() {
            best = j;
        }
    }
    let w = tempered_softmax(&z, tau)?;
    let select = w
        .into_iter()
        .enumerate()
        .map(|(j, s)| S::surrogate(if j == best { 1.0 } else { 0.0 }, s))
        .collect();
    Ok(Move {
        cell: cells[best],
        cells,
        select,
    })
}

/// Holdings after harvest and metabolism with the smooth survival indicator.
pub fn harvest_and_metabolize<S: Scalar>(h: S, harvest: S, metabolism: S, alive: S, smoother: &SmootherConfig) -> (S, S) {
    let h_new = h + (harvest - metabolism) * alive;
    let hard = if alive.value() > 0.0 && h_new.value() > 0.0 { 1.0 } else { 0.0 };
    (h_new, S::surrogate(hard, smooth_step(h_new, smoother)))
}

/// Grid state after a step, for external plotting.
#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub t: usize,
    pub sugar: Vec<f64>,
    pub agents: Vec<(usize, usize, bool, f64)>,
}

#[derive(Debug, Clone)]
pub struct SugarModel {
    pub config: SugarConfig,
    pub params: SugarParams,
    pub capacity: Vec<f64>,
    mats: Vec<Vec<f64>>,
    big_v: usize,
}

impl SugarModel {
    pub fn new(config: SugarConfig, params: SugarParams) -> Result<Self> {
        params.validate()?;
        config.alive_smoother.validate()?;
        if config.visions.is_empty() || config.visions.len() != params.p.len() {
            return Err(invalid("visions", "one probability per vision radius required"));
        }
        if config.visions.len() + 4 > crate::gradcheck::MAX_PARAMS {
            return Err(invalid("visions", "too many vision classes"));
        }
        if config.m == 0 || config.steps == 0 {
            return Err(invalid("sugarscape", "need a grid and at least one step"));
        }
        if config.n > config.m * config.m {
            return Err(Error::Placement {
                agents: config.n,
                cells: config.m * config.m,
            });
        }
        if !(config.move_tau > 0.0) {
            return Err(invalid("move_tau", "temperature must be positive"));
        }
        let big_v = *config.visions.iter().max().expect("non-empty");
        if 2 * big_v + 1 > config.m {
            return Err(invalid("visions", "vision window wider than the grid"));
        }
        let mats = config
            .visions
            .iter()
            .map(|&v| vision_matrix(v, big_v, config.strict_vision))
            .collect::<Result<Vec<_>>>()?;
        let capacity = build_landscape(config.landscape, config.m, config.landscape_seed);
        Ok(Self {
            config,
            params,
            capacity,
            mats,
            big_v,
        })
    }

    pub fn run<S: Scalar>(&self, theta: &[S], seed: u64, replicate: u64) -> Result<Trajectory<S>> {
        self.run_inner(theta, seed, replicate, None)
    }

    pub fn run_with_snapshots(&self, theta: &[f64], seed: u64, replicate: u64) -> Result<(Trajectory<f64>, Vec<Snapshot>)> {
        let mut snaps = Vec::new();
        let tr = self.run_inner(theta, seed, replicate, Some(&mut snaps))?;
        Ok((tr, snaps))
    }

    fn run_inner<S: Scalar>(
        &self,
        theta: &[S],
        seed: u64,
        replicate: u64,
        mut snaps: Option<&mut Vec<Snapshot>>,
    ) -> Result<Trajectory<S>> {
        let k = self.config.visions.len();
        check_len(theta, 4 + k)?;
        for (i, t) in theta.iter().take(4).enumerate() {
            if !(t.value() > 0.0) {
                return Err(invalid(CONT_NAMES[i], "Beta shape must be positive"));
            }
        }
        let cfg = &self.config;
        let (m, n, bv) = (cfg.m, cfg.n, self.big_v);
        let w = 2 * bv + 1;
        let mut rng = seed_split(seed, stream_id(replicate, purpose::SIMULATION));

        let mut cells: Vec<usize> = (0..m * m).collect();
        cells.shuffle(&mut rng);
        let mut pos: Vec<(usize, usize)> = cells[..n].iter().map(|&c| (c / m, c % m)).collect();
        let mut occupied = vec![false; m * m];
        for &(x, y) in &pos {
            occupied[x * m + y] = true;
        }

        let pi = &theta[4..];
        let mut vision = Vec::with_capacity(n);
        let mut soft_m = Vec::with_capacity(n);
        let mut metab = Vec::with_capacity(n);
        let mut hold = Vec::with_capacity(n);
        for _ in 0..n {
            let (v, onehot) = st_categorical(pi, uniform(&mut rng))?;
            vision.push(v);
            soft_m.push(mixed_vision(&onehot, &self.mats));
            metab.push(beta_sample(theta[0], theta[1], uniform(&mut rng)) * 2.0 + 2.0);
            hold.push(beta_sample(theta[2], theta[3], uniform(&mut rng)) * 19.0 + 6.0);
        }
        let mut alive = vec![S::one(); n];

        let mut sugar = self.capacity.clone();
        let mut harvested = vec![false; m * m];
        let mut local_s = vec![0.0; w * w];
        let mut local_o = vec![0.0; w * w];
        let mut order: Vec<usize> = (0..n).collect();
        let mut traj = Trajectory::new(&OUTPUT_NAMES);

        for t in 0..cfg.steps {
            order.shuffle(&mut rng);
            for &i in &order {
                if alive[i].value() <= 0.0 {
                    continue;
                }
                let (x, y) = pos[i];
                for r in 0..w {
                    for c in 0..w {
                        let gx = (x + m + r - bv) % m;
                        let gy = (y + m + c - bv) % m;
                        local_s[r * w + c] = sugar[gx * m + gy];
                        local_o[r * w + c] = if occupied[gx * m + gy] { 0.0 } else { 1.0 };
                    }
                }
                local_o[bv * w + bv] = 1.0;
                let mv = score_and_move(&local_s, &local_o, &self.mats[vision[i]], &soft_m[i], cfg.move_tau)?;
                let mut gain = S::zero();
                for (j, &cell) in mv.cells.iter().enumerate() {
                    if local_s[cell] != 0.0 {
                        gain += mv.select[j] * local_s[cell];
                    }
                }
                let (r, c) = (mv.cell / w, mv.cell % w);
                let nx = (x + m + r - bv) % m;
                let ny = (y + m + c - bv) % m;
                occupied[x * m + y] = false;
                occupied[nx * m + ny] = true;
                pos[i] = (nx, ny);
                sugar[nx * m + ny] = 0.0;
                harvested[nx * m + ny] = true;

                let (h, a) = harvest_and_metabolize(hold[i], gain, metab[i], alive[i], &cfg.alive_smoother);
                hold[i] = h;
                alive[i] = a;
                if a.value() <= 0.0 {
                    occupied[nx * m + ny] = false;
                }
            }
            regenerate(&mut sugar, &mut harvested, &self.capacity, cfg.regen);

            let mut live = S::zero();
            let mut wealth = S::zero();
            for i in 0..n {
                live += alive[i];
                wealth += hold[i] * alive[i];
            }
            let mean = if live.value() > 0.0 { wealth / live } else { S::zero() };
            traj.rows.push(vec![mean, live / n as f64]);

            if let Some(s) = snaps.as_deref_mut() {
                s.push(Snapshot {
                    t,
                    sugar: sugar.clone(),
                    agents: (0..n).map(|i| (pos[i].0, pos[i].1, alive[i].value() > 0.0, hold[i].value())).collect(),
                });
            }
        }
        Ok(traj)
    }
}

impl Model for SugarModel {
    fn name(&self) -> &'static str {
        "sugarscape"
    }

    fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = CONT_NAMES.iter().map(|s| s.to_string()).collect();
        v.extend(self.config.visions.iter().map(|r| format!("p_{r}")));
        v
    }

    fn output_names(&self) -> Vec<&'static str> {
        OUTPUT_NAMES.to_vec()
    }

    fn theta(&self) -> Vec<f64> {
        self.params.to_vec()
    }

    fn fd_epsilon(&self, _i: usize) -> f64 {
        1e-2
    }

    fn support(&self, i: usize) -> (f64, f64) {
        if i < 4 {
            (0.0, f64::INFINITY)
        } else {
            (0.0, 1.0)
        }
    }

    /// Vision draws always use straight-through; the estimator argument is
    /// accepted for interface uniformity.
    fn simulate<S: Scalar>(&self, theta: &[S], _est: &EstimatorKind, seed: u64, replicate: u64) -> Result<Trajectory<S>> {
        self.run(theta, seed, replicate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::Dual;

    #[test]
    fn vision_cross_and_ball() {
        let m1 = vision_matrix(1, 3, false).unwrap();
        assert_eq!(m1.iter().sum::<f64>(), 5.0);
        for k in [3 * 7 + 3, 2 * 7 + 3, 4 * 7 + 3, 3 * 7 + 2, 3 * 7 + 4] {
            assert_eq!(m1[k], 1.0);
        }
        let m3 = vision_matrix(3, 3, false).unwrap();
        assert_eq!(m3.iter().sum::<f64>(), 25.0);
        assert!(vision_matrix(4, 3, false).is_err());
        assert_eq!(vision_matrix(1, 3, true).unwrap().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn vision_rotation_symmetry() {
        let w = 9;
        let m = vision_matrix(3, 4, false).unwrap();
        for r in 0..w {
            for c in 0..w {
                assert_eq!(m[r * w + c], m[c * w + (w - 1 - r)]);
            }
        }
    }

    #[test]
    fn mixed_vision_combination() {
        let mats = vec![vision_matrix(1, 3, false).unwrap(), vision_matrix(3, 3, false).unwrap()];
        let mix = mixed_vision(&[0.5, 0.5], &mats);
        assert_eq!(mix[3 * 7 + 3], 1.0);
        assert_eq!(mix[2 * 7 + 3], 1.0);
        assert_eq!(mix[7 + 3], 0.5);
        assert_eq!(mix[0], 0.0);
        let one = mixed_vision(&[1.0, 0.0], &mats);
        assert_eq!(one, mats[0]);
    }

    #[test]
    fn argmax_ties_and_centre() {
        let w = 3;
        let sugar = vec![0.0, 2.0, 0.0, 2.0, 1.0, 2.0, 0.0, 2.0, 0.0];
        let open = vec![1.0; w * w];
        let hard = vision_matrix(1, 1, false).unwrap();
        let mv = score_and_move::<f64>(&sugar, &open, &hard, &hard, 1.0).unwrap();
        assert_eq!(mv.cell, 1);

        let flat = vec![3.0; 9];
        let mv = score_and_move(&flat, &open, &hard, &hard.iter().map(|&h| Dual::<1>::constant(h)).collect::<Vec<_>>(), 1.0).unwrap();
        assert_eq!(mv.cell, 1);
        assert_eq!(mv.cells.len(), 5);

        let closed = vec![0.0; 9];
        let mv = score_and_move::<f64>(&sugar, &closed, &hard, &hard, 1.0).unwrap();
        assert_eq!(mv.cell, 4);
    }

    #[test]
    fn unique_max_moves_there() {
        let sugar = vec![0.0, 1.0, 0.0, 1.0, 0.5, 4.0, 0.0, 1.0, 0.0];
        let hard = vision_matrix(1, 1, false).unwrap();
        let mv = score_and_move::<f64>(&sugar, &[1.0; 9], &hard, &hard, 1.0).unwrap();
        assert_eq!(mv.cell, 5);
    }

    #[test]
    fn harvest_cases() {
        let s = SmootherConfig::Sigmoid { k: 1.0 };
        let (h, a) = harvest_and_metabolize(5.0, 3.0, 2.0, 1.0, &s);
        assert_eq!((h, a), (6.0, 1.0));
        let (h, a) = harvest_and_metabolize(1.0, 0.0, 2.0, 1.0, &s);
        assert_eq!((h, a), (-1.0, 0.0));
        let (h2, a2) = harvest_and_metabolize(h, 0.0, 2.0, a, &s);
        assert_eq!((h2, a2), (-1.0, 0.0));
    }

    #[test]
    fn regenerate_cases() {
        let cap = [4.0, 4.0, 4.0];
        let mut s = [4.0, 2.0, 3.0];
        let mut o = [false, true, false];
        regenerate(&mut s, &mut o, &cap, 1.0);
        assert_eq!(s, [4.0, 1.0, 4.0]);
        assert_eq!(o, [false; 3]);
        let mut s = [2.5, 1.0, 0.0];
        regenerate(&mut s, &mut [false; 3], &cap, 0.0);
        assert_eq!(s, [2.5, 1.0, 0.0]);
    }

    #[test]
    fn abundant_sugar_keeps_everyone_alive() {
        let cfg = SugarConfig {
            n: 30,
            m: 15,
            steps: 20,
            regen: 100.0,
            landscape: Landscape::Uniform { capacity: 100.0 },
            ..SugarConfig::default()
        };
        let mut cfg = cfg;
        cfg.visions = vec![1, 3];
        let model = SugarModel::new(cfg, SugarParams::default()).unwrap();
        let tr = model.run(&model.theta(), 1, 0).unwrap();
        for row in &tr.rows {
            assert_eq!(row[1], 1.0);
        }
    }

    #[test]
    fn placement_error() {
        let cfg = SugarConfig { n: 26, m: 5, visions: vec![1, 2], ..SugarConfig::default() };
        assert!(matches!(SugarModel::new(cfg, SugarParams::default()), Err(Error::Placement { .. })));
    }

    #[test]
    fn landscape_and_capacity_bound() {
        let model = SugarModel::new(SugarConfig::default(), SugarParams::default()).unwrap();
        let max = model.capacity.iter().cloned().fold(0.0, f64::max);
        assert!(max > 6.0 && max <= 8.0);
        let (_, snaps) = model.run_with_snapshots(&model.theta(), 3, 0).unwrap();
        for s in &snaps {
            for (k, &v) in s.sugar.iter().enumerate() {
                assert!(v <= model.capacity[k]);
            }
            let mut seen = std::collections::HashSet::new();
            for &(x, y, alive, _) in &s.agents {
                if alive {
                    assert!(seen.insert((x, y)));
                }
            }
        }
    }

    #[test]
    fn primal_invariance_and_determinism() {
        let model = SugarModel::new(SugarConfig { steps: 15, ..SugarConfig::default() }, SugarParams::default()).unwrap();
        let th = model.theta();
        let a = model.run(&th, 5, 1).unwrap();
        let b = model.run(&th, 5, 1).unwrap();
        assert_eq!(a.primal_bits(), b.primal_bits());
        let theta: Vec<Dual<6>> = th.iter().enumerate().map(|(i, &v)| Dual::variable(v, i)).collect();
        let d = model.run(&theta, 5, 1).unwrap();
        assert_eq!(a.primal_bits(), d.primal_bits());
    }
}
