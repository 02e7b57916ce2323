use std::f64::consts::PI;

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use super::{SystemConfig, REFERENCE_DISTANCE};
use crate::error::{Error, Result};
use crate::numerics::rng::{stream, unit_f64};

/// Axis-aligned rectangle, meters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Area {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Default for Area {
    fn default() -> Self {
        Area {
            min: [0.0, 0.0],
            max: [100.0, 100.0],
        }
    }
}

impl Area {
    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn is_empty(&self) -> bool {
        !(self.width() > 0.0 && self.height() > 0.0)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.min[0]..=self.max[0]).contains(&p[0]) && (self.min[1]..=self.max[1]).contains(&p[1])
    }

    /// Point at fractional coordinates `(u, v) ∈ [0, 1)²`.
    pub fn at(&self, u: f64, v: f64) -> [f64; 2] {
        [self.min[0] + u * self.width(), self.min[1] + v * self.height()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub position: [f64; 2],
    pub gain: Complex64,
}

/// Fixed propagation environment shared by all users.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub area: Area,
    pub scatterers: Vec<Scatterer>,
    pub seed: u64,
}

impl Scene {
    /// Scatterers uniform over `area` with unit-variance circular complex
    /// Gaussian gains.
    ///
    /// Draw order on stream `(seed, "scene", 0)`: for each scatterer an x then
    /// a y uniform, after all positions the gains as (re, im) standard normal
    /// pairs scaled by `1/√2`.
    pub fn generate(area: Area, n_scatterers: usize, seed: u64) -> Result<Scene> {
        if n_scatterers == 0 {
            return Err(Error::Config("a scene needs at least one scatterer".into()));
        }
        if area.is_empty() {
            return Err(Error::Config(format!("scene area is empty: {area:?}")));
        }
        let mut rng = stream(seed, "scene", 0);
        let positions: Vec<[f64; 2]> = (0..n_scatterers)
            .map(|_| {
                let u = unit_f64(&mut rng);
                let v = unit_f64(&mut rng);
                area.at(u, v)
            })
            .collect();
        let scale = std::f64::consts::FRAC_1_SQRT_2;
        let scatterers = positions
            .into_iter()
            .map(|position| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Scatterer {
                    position,
                    gain: Complex64::new(re * scale, im * scale),
                }
            })
            .collect();
        Ok(Scene {
            area,
            scatterers,
            seed,
        })
    }
}

/// Ground-truth channel at a user position.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub position: [f64; 2],
    /// `vec(H)` of the `N_r × (N_t·N_c)` channel matrix (column-major).
    pub h: Vec<Complex64>,
}

impl ChannelSample {
    pub fn norm(&self) -> f64 {
        self.h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Half-wavelength ULA response `a(θ)_n = exp(−jπ n sin θ)`.
pub fn steering_vector(n: usize, sin_theta: f64) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::from_polar(1.0, -PI * k as f64 * sin_theta))
        .collect()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Channel from the base station to a user at `p`.
pub fn channel_at(scene: &Scene, config: &SystemConfig, p: [f64; 2]) -> Result<ChannelSample> {
    if !scene.area.contains(p) || !p[0].is_finite() || !p[1].is_finite() {
        return Err(Error::Domain(format!(
            "position {p:?} lies outside the scene area {:?}",
            scene.area
        )));
    }
    let (nt, nr) = (config.n_tx, config.n_rx);
    let bs = config.bs_position;
    let mut h = vec![Complex64::new(0.0, 0.0); config.channel_len()];
    for sc in &scene.scatterers {
        let s = sc.position;
        let d_bs = dist(s, bs);
        let d_u = dist(s, p);
        let sin_dep = (s[1] - bs[1]) / d_bs.max(f64::MIN_POSITIVE);
        let sin_arr = if d_u > 0.0 { (s[1] - p[1]) / d_u } else { 0.0 };
        let tx = steering_vector(nt, sin_dep);
        let rx = steering_vector(nr, sin_arr);
        let path_loss = REFERENCE_DISTANCE / d_u.max(REFERENCE_DISTANCE);
        for n in 0..config.n_sc {
            let lambda = config.subcarrier_wavelength(n);
            let phase = -2.0 * PI * (d_bs + d_u) / lambda;
            let beta = sc.gain * Complex64::from_polar(path_loss, phase);
            for (t, a) in tx.iter().enumerate() {
                let col = n * nt + t;
                for (r, b) in rx.iter().enumerate() {
                    h[col * nr + r] += beta * a * b;
                }
            }
        }
    }
    Ok(ChannelSample { position: p, h })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let a = Scene::generate(Area::default(), 20, 5).unwrap();
        let b = Scene::generate(Area::default(), 20, 5).unwrap();
        assert_eq!(a, b);
        let c = Scene::generate(Area::default(), 20, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_empty_inputs() {
        assert!(matches!(Scene::generate(Area::default(), 0, 1), Err(Error::Config(_))));
        let flat = Area {
            min: [0.0, 0.0],
            max: [10.0, 0.0],
        };
        assert!(matches!(Scene::generate(flat, 3, 1), Err(Error::Config(_))));
    }

    #[test]
    fn scatterers_inside_area() {
        let s = Scene::generate(Area::default(), 200, 11).unwrap();
        assert!(s.scatterers.iter().all(|c| s.area.contains(c.position)));
    }

    #[test]
    fn unit_path_loss_gives_gain_modulus() {
        let mut scene = Scene::generate(Area::default(), 1, 3).unwrap();
        scene.scatterers[0].position = [40.0, 60.0];
        let cfg = SystemConfig::default();
        let ch = channel_at(&scene, &cfg, [41.0, 60.0]).unwrap();
        let g = scene.scatterers[0].gain.norm();
        for z in &ch.h {
            assert!((z.norm() - g).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_outside_rejected() {
        let scene = Scene::generate(Area::default(), 10, 3).unwrap();
        let cfg = SystemConfig::default();
        let a = channel_at(&scene, &cfg, [12.0, 80.0]).unwrap();
        let b = channel_at(&scene, &cfg, [12.0, 80.0]).unwrap();
        assert_eq!(a, b);
        assert!(a.norm() > 0.0);
        assert!(matches!(channel_at(&scene, &cfg, [-1.0, 5.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn steering_entries_unit_modulus() {
        for k in 0..50 {
            let s = -1.0 + k as f64 * 0.04;
            for z in steering_vector(56, s) {
                assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multi_antenna_shape() {
        let scene = Scene::generate(Area::default(), 4, 3).unwrap();
        let cfg = SystemConfig {
            n_rx: 2,
            n_sc: 3,
            ..SystemConfig::default()
        };
        let ch = channel_at(&scene, &cfg, [50.0, 50.0]).unwrap();
        assert_eq!(ch.h.len(), 2 * 56 * 3);
    }
}
