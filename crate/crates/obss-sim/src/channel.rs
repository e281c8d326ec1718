//! Large-scale pathloss, LOS state, shadowing, and per-link block fading.
//!
//! Indoor-hotspot (InH office) pathloss and LOS-probability formulas drive
//! the link budget; small-scale fading is a scalar per-link power ratio,
//! exponentially distributed with unit mean (Rayleigh power) and redrawn
//! once per TXOP. LOS state and shadowing are drawn once per link at setup
//! and frozen for the run (stationary nodes). Links are reciprocal: state
//! is keyed by the unordered node pair.

use crate::units::{Db, Scalar};
use crate::{GainDb, NodeId, PowerDbm};
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use thiserror::Error;

/// Shadowing standard deviation for LOS links, dB.
pub const SHADOW_STD_LOS_DB: f64 = 3.0;
/// Shadowing standard deviation for NLOS links, dB.
pub const SHADOW_STD_NLOS_DB: f64 = 8.03;
/// Ceiling-mounted AP antenna height, meters.
pub const AP_HEIGHT_M: f64 = 3.0;
/// STA antenna height, meters.
pub const STA_HEIGHT_M: f64 = 1.0;

/// Floor for the per-link fade so received powers stay finite.
const MIN_BLOCK_FADE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("negative 2D distance: {0} m")]
    NegativeDistance(f64),
}

/// A point in the deployment volume, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Position3D { x, y, z }
    }

    pub fn distance_2d(&self, other: &Position3D) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn distance_3d(&self, other: &Position3D) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Indoor-hotspot LOS probability as a function of 2D distance.
pub fn los_probability<F: Scalar>(d_2d: F) -> Result<F, ChannelError> {
    if d_2d < F::zero() {
        return Err(ChannelError::NegativeDistance(
            d_2d.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let p = if d_2d <= F::c(5.0) {
        F::one()
    } else if d_2d <= F::c(49.0) {
        (-(d_2d - F::c(5.0)) / F::c(70.8)).exp()
    } else {
        F::c(0.54) * (-(d_2d - F::c(49.0)) / F::c(211.7)).exp()
    };
    Ok(p)
}

/// Indoor-hotspot pathloss in dB at 3D distance `d_3d` meters and carrier
/// `fc_ghz` GHz. Distances below 1 m are clamped to 1 m (degenerate
/// geometry; the caller flags it on the link).
pub fn pathloss_inh<F: Scalar>(d_3d: F, fc_ghz: F, los: bool) -> Db<F> {
    let d = d_3d.max(F::one());
    let pl_los = F::c(32.4) + F::c(17.3) * d.log10() + F::c(20.0) * fc_ghz.log10();
    if los {
        Db::new(pl_los)
    } else {
        let pl_nlos = F::c(38.3) * d.log10() + F::c(17.30) + F::c(24.9) * fc_ghz.log10();
        Db::new(pl_los.max(pl_nlos))
    }
}

/// Zero-mean normal shadowing draw; sigma depends on the LOS state.
pub fn draw_shadowing<R: Rng>(los: bool, rng: &mut R) -> GainDb {
    let sigma = if los {
        SHADOW_STD_LOS_DB
    } else {
        SHADOW_STD_NLOS_DB
    };
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    Db::new(normal.sample(rng))
}

/// Frozen large-scale state plus the current block fade of one link.
#[derive(Debug, Clone)]
pub struct LinkState {
    pub tx_id: NodeId,
    pub rx_id: NodeId,
    pub los: bool,
    pub pathloss: GainDb,
    pub shadowing: GainDb,
    /// Linear power ratio, unit mean, redrawn per coherence block.
    pub block_fade: f64,
    /// Set when the 3D distance had to be clamped to 1 m.
    pub degenerate: bool,
}

/// Received power over a link: tx − pathloss − shadowing + 10·log10(fade).
pub fn received_power(tx_power: PowerDbm, link: &LinkState) -> PowerDbm {
    let fade_db = 10.0 * link.block_fade.max(MIN_BLOCK_FADE).log10();
    tx_power - link.pathloss - link.shadowing + Db::new(fade_db)
}

/// All pairwise links of a deployment, reciprocal by construction.
#[derive(Debug, Clone)]
pub struct LinkTable {
    n: usize,
    links: Vec<LinkState>,
}

impl LinkTable {
    /// Build the table: LOS Bernoulli per link, then a shadowing draw, both
    /// from `rng` in a fixed (a, b) pair order.
    pub fn build<R: Rng>(positions: &[Position3D], fc_ghz: f64, rng: &mut R) -> Self {
        let n = positions.len();
        let mut links = Vec::with_capacity(n * (n - 1) / 2);
        for a in 0..n {
            for b in (a + 1)..n {
                let d2 = positions[a].distance_2d(&positions[b]);
                let d3 = positions[a].distance_3d(&positions[b]);
                let p_los = los_probability(d2).expect("non-negative distance");
                let los = rng.gen::<f64>() < p_los;
                let pathloss = pathloss_inh(d3, fc_ghz, los);
                let shadowing = draw_shadowing(los, rng);
                links.push(LinkState {
                    tx_id: NodeId(a as u32),
                    rx_id: NodeId(b as u32),
                    los,
                    pathloss,
                    shadowing,
                    block_fade: 1.0,
                    degenerate: d3 < 1.0,
                });
            }
        }
        LinkTable { n, links }
    }

    fn index(&self, a: NodeId, b: NodeId) -> usize {
        let (lo, hi) = if a.index() < b.index() {
            (a.index(), b.index())
        } else {
            (b.index(), a.index())
        };
        debug_assert!(lo != hi, "no self link");
        debug_assert!(hi < self.n);
        // offset of row `lo` in the upper triangle, then column
        lo * self.n - lo * (lo + 1) / 2 + (hi - lo - 1)
    }

    /// The link between two nodes; direction-agnostic.
    pub fn link(&self, a: NodeId, b: NodeId) -> &LinkState {
        &self.links[self.index(a, b)]
    }

    /// Redraw every link's block fade from `rng` in fixed link order.
    pub fn redraw_fades<R: Rng>(&mut self, rng: &mut R) {
        let exp: Exp<f64> = Exp::new(1.0).expect("valid rate");
        for link in &mut self.links {
            link.block_fade = exp.sample(rng).max(MIN_BLOCK_FADE);
        }
    }

    /// Average received power over a link (pathloss + shadowing, unit fade).
    pub fn avg_received_power(&self, tx_power: PowerDbm, a: NodeId, b: NodeId) -> PowerDbm {
        let link = self.link(a, b);
        tx_power - link.pathloss - link.shadowing
    }

    pub fn node_count(&self) -> usize {
        self.n
    }
}
