//! Two-way-ranging distances with NLOS bias and the quality indicators
//! that reveal it.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::NoiseProfile;
use crate::domain::{AnchorLayout, Technology, UWB_ANCHORS};
use crate::error::{Error, Result};
use crate::geometry::{angular_distance_deg, Point2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UwbRadio {
    pub target_height: f64,
    /// CIR power at 1 m, dB.
    pub cir_at_1m: f64,
    /// Extra CIR loss on NLOS links, dB.
    pub cir_nlos_loss: f64,
    /// Preamble symbols accumulated on a clean link.
    pub psa_nominal: f64,
    /// Multiplicative PSA reduction on NLOS links, from most to least
    /// severe.
    pub psa_nlos_factor: (f64, f64),
    /// Anchors within this angle of the direction behind a walking carrier
    /// are shadowed by the body, degrees.
    pub body_shadow_half_angle: f64,
    /// NLOS probability of a body-shadowed link.
    pub body_nlos_prob: f64,
    /// Per-record rate at which a link's environmental NLOS state is redrawn
    /// from its stationary distribution. 1 makes consecutive records
    /// independent; smaller values make obstructions persist for about
    /// `1/rate` records.
    pub nlos_switch_rate: f64,
    /// The same for the body-shadowing state.
    pub body_switch_rate: f64,
}

impl Default for UwbRadio {
    fn default() -> Self {
        Self {
            target_height: 1.0,
            cir_at_1m: 17.0,
            cir_nlos_loss: 8.0,
            psa_nominal: 1024.0,
            psa_nlos_factor: (0.5, 0.9),
            body_shadow_half_angle: 120.0,
            body_nlos_prob: 0.9,
            nlos_switch_rate: 1.0,
            body_switch_rate: 0.1,
        }
    }
}

/// Per-anchor measurements of one ranging round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UwbSample {
    pub cir: [f64; UWB_ANCHORS],
    pub psa: [u32; UWB_ANCHORS],
    pub dist: [f64; UWB_ANCHORS],
    pub nlos: [bool; UWB_ANCHORS],
}

/// Obstruction state of every link, carried from one ranging round to the
/// next. Start each session from [`UwbLinks::default`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UwbLinks {
    started: bool,
    /// Obstructed by the environment.
    env: [bool; UWB_ANCHORS],
    /// Would be obstructed by the carrier's body if it stood in the way.
    body: [bool; UWB_ANCHORS],
    nlos: [bool; UWB_ANCHORS],
    /// Severity of the current NLOS episode in `[0, 1)`.
    severity: [f64; UWB_ANCHORS],
}

// Two-state chain with stationary probability `p`: with probability `rate`
// the state is redrawn from the stationary law, otherwise it is kept. Every
// record therefore sees the link obstructed with probability exactly `p`.
// Also reports whether a redraw happened.
fn step_state<R: Rng>(state: bool, p: f64, rate: f64, fresh: bool, rng: &mut R) -> (bool, bool) {
    if fresh || rng.random_bool(rate) {
        (rng.random_bool(p), true)
    } else {
        (state, false)
    }
}

/// One ranging round to every anchor.
///
/// `carrier_heading` is the walking direction (degrees) when a person
/// carries the tag; links to anchors behind them may then be blocked by the
/// body on top of the profile's own NLOS rate. `None` for a trolley.
///
/// The environment obstructs a link with probability `nlos_prob` in every
/// record; obstructions may persist across records (see
/// [`UwbRadio::nlos_switch_rate`] and [`UwbRadio::body_switch_rate`]). Each
/// NLOS episode draws a severity `u ~ U(0, 1)` that sets both the excess
/// delay `u · nlos_bias_max` and the PSA reduction, so the quality
/// indicators carry information about the size of the bias.
pub fn synth_uwb_record<R: Rng>(
    truth: Point2,
    carrier_heading: Option<f64>,
    layout: &AnchorLayout,
    radio: &UwbRadio,
    profile: &NoiseProfile,
    links: &mut UwbLinks,
    rng: &mut R,
) -> Result<UwbSample> {
    if layout.technology != Technology::Uwb || layout.anchors.len() != UWB_ANCHORS {
        return Err(Error::InvalidInput("UWB records need a UWB layout with 4 anchors".into()));
    }
    for (name, rate) in [("nlos_switch_rate", radio.nlos_switch_rate), ("body_switch_rate", radio.body_switch_rate)] {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::InvalidInput(format!("{name} must be in (0, 1]")));
        }
    }
    let fresh = !links.started;
    links.started = true;
    let mut s = UwbSample { cir: [0.0; 4], psa: [0; 4], dist: [0.0; 4], nlos: [false; 4] };
    let p = truth.at_height(radio.target_height);
    for (i, anchor) in layout.anchors.iter().enumerate() {
        let d = anchor.position.distance(&p);
        let shadowed = carrier_heading.is_some_and(|h| {
            let to_anchor = anchor.position.xy() - truth;
            let bearing = to_anchor.y.atan2(to_anchor.x).to_degrees();
            angular_distance_deg(bearing, h + 180.0) <= radio.body_shadow_half_angle
        });
        let (env, env_drawn) = step_state(links.env[i], profile.nlos_prob, radio.nlos_switch_rate, fresh, rng);
        let (body, body_drawn) = step_state(links.body[i], radio.body_nlos_prob, radio.body_switch_rate, fresh, rng);
        links.env[i] = env;
        links.body[i] = body;
        let nlos = env || (shadowed && body);
        // a new episode starts when the link becomes obstructed or the
        // state obstructing it was redrawn
        if nlos && (!links.nlos[i] || if env { env_drawn } else { body_drawn }) {
            links.severity[i] = rng.random_range(0.0..1.0);
        }
        links.nlos[i] = nlos;
        let severity = if nlos { links.severity[i] } else { 0.0 };

        s.nlos[i] = nlos;
        s.dist[i] = (d + gaussian(rng, profile.ranging_sigma) + severity * profile.nlos_bias_max).max(0.0);
        let loss = if nlos { radio.cir_nlos_loss } else { 0.0 };
        s.cir[i] = radio.cir_at_1m - 20.0 * d.max(1e-3).log10() - loss + gaussian(rng, profile.cir_sigma);
        let (lo, hi) = radio.psa_nlos_factor;
        let factor = if nlos { hi - severity * (hi - lo) } else { 1.0 };
        s.psa[i] = (radio.psa_nominal * factor + gaussian(rng, profile.psa_sigma)).round().max(0.0) as u32;
    }
    Ok(s)
}

fn gaussian<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).unwrap().sample(rng)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Area;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout() -> AnchorLayout {
        AnchorLayout::corners(Technology::Uwb, &Area::default())
    }

    #[test]
    fn noiseless_distances_are_geometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let truth = Point2::new(1.2, 3.4);
        let s = synth_uwb_record(truth, None, &layout(), &UwbRadio::default(), &NoiseProfile::noiseless(0), &mut UwbLinks::default(), &mut rng).unwrap();
        for (a, d) in layout().anchors.iter().zip(s.dist) {
            assert_eq!(d, a.position.distance(&truth.at_height(1.0)));
        }
        assert!(s.psa.iter().all(|p| *p == 1024));
    }

    #[test]
    fn forced_nlos_never_shortens() {
        let p = NoiseProfile { nlos_prob: 1.0, ranging_sigma: 0.0, ..NoiseProfile::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = Point2::new(2.0, 2.0);
        for _ in 0..1000 {
            let s = synth_uwb_record(truth, None, &layout(), &UwbRadio::default(), &p, &mut UwbLinks::default(), &mut rng).unwrap();
            for (a, d) in layout().anchors.iter().zip(s.dist) {
                assert!(d >= a.position.distance(&truth.at_height(1.0)));
            }
            assert!(s.nlos.iter().all(|n| *n));
        }
    }

    #[test]
    fn body_blocks_anchors_behind_the_walker() {
        let p = NoiseProfile { nlos_prob: 0.0, ..NoiseProfile::default() };
        let radio = UwbRadio { body_nlos_prob: 1.0, ..UwbRadio::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // walking towards +x from just left of center: anchors 1 (0,0) and 4 (0,5) are behind
        let s = synth_uwb_record(Point2::new(2.0, 2.5), Some(0.0), &layout(), &radio, &p, &mut UwbLinks::default(), &mut rng).unwrap();
        assert_eq!(s.nlos, [true, false, false, true]);
        let s = synth_uwb_record(Point2::new(2.0, 2.5), None, &layout(), &radio, &p, &mut UwbLinks::default(), &mut rng).unwrap();
        assert_eq!(s.nlos, [false; 4]);
    }

    #[test]
    fn quality_indicators_reveal_nlos() {
        let p = NoiseProfile { nlos_prob: 0.5, ..NoiseProfile::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut los, mut nlos) = (Vec::new(), Vec::new());
        for k in 0..2500 {
            let truth = Point2::new(0.5 + (k % 40) as f64 * 0.1, 0.5 + (k % 37) as f64 * 0.1);
            let s = synth_uwb_record(truth, None, &layout(), &UwbRadio::default(), &p, &mut UwbLinks::default(), &mut rng).unwrap();
            for i in 0..4 {
                if s.nlos[i] { &mut nlos } else { &mut los }.push((s.cir[i], s.psa[i] as f64));
            }
        }
        assert_eq!(los.len() + nlos.len(), 10_000);
        assert!(nlos.len() > 4000 && los.len() > 4000);
        let mean = |v: &[(f64, f64)], f: fn(&(f64, f64)) -> f64| v.iter().map(f).sum::<f64>() / v.len() as f64;
        assert!(mean(&nlos, |x| x.0) < mean(&los, |x| x.0));
        assert!(mean(&nlos, |x| x.1) < mean(&los, |x| x.1));
    }

    #[test]
    fn obstructions_persist_with_the_requested_marginal() {
        let p = NoiseProfile { nlos_prob: 0.35, ..NoiseProfile::default() };
        let radio = UwbRadio { nlos_switch_rate: 0.1, ..UwbRadio::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut links = UwbLinks::default();
        let truth = Point2::new(2.5, 2.5);
        let states: Vec<bool> = (0..20_000)
            .map(|_| synth_uwb_record(truth, None, &layout(), &radio, &p, &mut links, &mut rng).unwrap().nlos[0])
            .collect();
        let rate = states.iter().filter(|s| **s).count() as f64 / states.len() as f64;
        assert!((rate - 0.35).abs() < 0.03, "{rate}");
        let flips = states.windows(2).filter(|w| w[0] != w[1]).count() as f64 / states.len() as f64;
        // independent draws would flip with probability 2·0.35·0.65 ≈ 0.46
        assert!(flips < 0.1, "{flips}");
    }
}
