//! Spatial-audio beacon: when to play the cue and how to place it between the ears.
//!
//! The cue is rendered as a constant-power stereo pan plus an interaural time
//! difference. With the azimuth folded onto the frontal half plane (`f`, degrees,
//! `[-90, 90]`) and `x = f/2`:
//!
//! ```text
//! gain_left  = (cos x − sin x) / √2     (= cos(45° + x))
//! gain_right = (cos x + sin x) / √2     (= sin(45° + x))
//! itd_s      = 0.00066 · sin f
//! ```
//!
//! so `gain_left² + gain_right² = 1` and negating the azimuth swaps the channels
//! bit-for-bit. Sources behind the listener fold onto the same lateral position
//! and set `behind` so the client can muffle them.

use serde::{Deserialize, Serialize};

use crate::geo::AngleDelta;
use crate::scalar::Scalar;

/// Largest interaural delay of a 9.5 cm spherical head, seconds.
pub const MAX_ITD_S: f64 = 0.00066;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeaconConfig<T> {
    pub activate_deg: T,
    pub deactivate_deg: T,
    pub source_distance_m: T,
    pub loop_asset_id: String,
    pub mono_fallback: bool,
}

impl<T: Scalar> Default for BeaconConfig<T> {
    fn default() -> Self {
        Self {
            activate_deg: T::lit(25.0),
            deactivate_deg: T::lit(25.0),
            source_distance_m: T::one(),
            loop_asset_id: "waterfall".to_string(),
            mono_fallback: false,
        }
    }
}

impl<T: Scalar> BeaconConfig<T> {
    pub fn is_valid(&self) -> bool {
        self.deactivate_deg > T::zero()
            && self.deactivate_deg <= self.activate_deg
            && self.source_distance_m > T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CueKind {
    Stereo,
    MonoPulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseSide {
    Left,
    Right,
}

/// Auditory-icon fallback for single-channel output: the pulse slows as the
/// target moves away from straight ahead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonoPulse<T> {
    /// `200 + 8·|azimuth|` milliseconds.
    pub period_ms: T,
    pub pattern: PulseSide,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderParams<T> {
    pub gain_left: T,
    pub gain_right: T,
    /// Positive when the right ear leads.
    pub itd_s: T,
    pub cue_kind: CueKind,
    pub behind: bool,
    pub pulse: Option<MonoPulse<T>>,
}

impl<T: Scalar> RenderParams<T> {
    pub fn silent(cue_kind: CueKind) -> Self {
        Self { gain_left: T::zero(), gain_right: T::zero(), itd_s: T::zero(), cue_kind, behind: false, pulse: None }
    }

    pub fn power(&self) -> T {
        self.gain_left * self.gain_left + self.gain_right * self.gain_right
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeaconState<T> {
    pub active: bool,
    /// Head-relative direction of the current turn waypoint, positive to the right.
    pub azimuth_deg: AngleDelta<T>,
    pub render: RenderParams<T>,
}

impl<T: Scalar> Default for BeaconState<T> {
    fn default() -> Self {
        Self { active: false, azimuth_deg: AngleDelta::new(T::zero()), render: RenderParams::silent(CueKind::Stereo) }
    }
}

/// Folds an azimuth onto `[-90, 90]`; the flag is set for sources behind the head.
pub fn fold_front<T: Scalar>(azimuth: AngleDelta<T>) -> (T, bool) {
    let a = azimuth.value();
    let right = T::lit(90.0);
    let half = T::lit(180.0);
    if a > right {
        (half - a, true)
    } else if a < -right {
        (-half - a, true)
    } else {
        (a, false)
    }
}

/// Stereo (or mono-pulse) parameters for a cue at `azimuth`.
pub fn render_azimuth<T: Scalar>(azimuth: AngleDelta<T>, cfg: &BeaconConfig<T>) -> RenderParams<T> {
    let (folded, behind) = fold_front(azimuth);
    if cfg.mono_fallback {
        let g = T::FRAC_1_SQRT_2();
        return RenderParams {
            gain_left: g,
            gain_right: g,
            itd_s: T::zero(),
            cue_kind: CueKind::MonoPulse,
            behind,
            pulse: Some(MonoPulse {
                period_ms: T::lit(200.0) + T::lit(8.0) * azimuth.abs(),
                pattern: if azimuth.value() >= T::zero() { PulseSide::Right } else { PulseSide::Left },
            }),
        };
    }
    let x = (folded / T::lit(2.0)).to_radians();
    let (s, c) = x.sin_cos();
    let k = T::FRAC_1_SQRT_2();
    RenderParams {
        gain_left: (c - s) * k,
        gain_right: (c + s) * k,
        itd_s: T::lit(MAX_ITD_S) * folded.to_radians().sin(),
        cue_kind: CueKind::Stereo,
        behind,
        pulse: None,
    }
}

/// Advances the cue state for a new facing delta.
///
/// Turns on when `|delta| > activate_deg`, off when `|delta| ≤ deactivate_deg`;
/// in between the previous state holds.
pub fn step_beacon<T: Scalar>(state: &BeaconState<T>, delta: AngleDelta<T>, cfg: &BeaconConfig<T>) -> BeaconState<T> {
    let mag = delta.abs();
    let active = if state.active { mag > cfg.deactivate_deg } else { mag > cfg.activate_deg };
    let kind = if cfg.mono_fallback { CueKind::MonoPulse } else { CueKind::Stereo };
    BeaconState {
        active,
        azimuth_deg: delta,
        render: if active { render_azimuth(delta, cfg) } else { RenderParams::silent(kind) },
    }
}

/// Silences the cue, e.g. once the route is complete.
pub fn silence<T: Scalar>(state: &BeaconState<T>, cfg: &BeaconConfig<T>) -> BeaconState<T> {
    let kind = if cfg.mono_fallback { CueKind::MonoPulse } else { CueKind::Stereo };
    BeaconState { active: false, azimuth_deg: state.azimuth_deg, render: RenderParams::silent(kind) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn d(v: f64) -> AngleDelta<f64> {
        AngleDelta::new(v)
    }

    #[test]
    fn transitions_at_threshold() {
        let cfg = BeaconConfig::default();
        let off = BeaconState::default();
        let on = step_beacon(&off, d(30.0), &cfg);
        assert!(on.active);
        assert_eq!(on.azimuth_deg.value(), 30.0);
        assert!(!step_beacon(&on, d(25.0), &cfg).active);
        assert!(!step_beacon(&off, d(0.0), &cfg).active);
        assert!(!step_beacon(&off, d(25.0), &cfg).active);
        assert!(step_beacon(&off, d(-25.5), &cfg).active);
    }

    #[test]
    fn hysteresis_band_holds_state() {
        let cfg = BeaconConfig { activate_deg: 30.0, deactivate_deg: 15.0, ..Default::default() };
        let off = BeaconState::default();
        let on = step_beacon(&off, d(40.0), &cfg);
        assert!(on.active);
        assert!(step_beacon(&on, d(20.0), &cfg).active);
        assert!(!step_beacon(&off, d(20.0), &cfg).active);
        assert!(!step_beacon(&on, d(15.0), &cfg).active);
    }

    #[test]
    fn render_examples() {
        let cfg = BeaconConfig::default();
        let r0 = render_azimuth(d(0.0), &cfg);
        assert_eq!(r0.gain_left, std::f64::consts::FRAC_1_SQRT_2);
        assert_eq!(r0.gain_right, std::f64::consts::FRAC_1_SQRT_2);
        assert_eq!(r0.itd_s, 0.0);
        let r90 = render_azimuth(d(90.0), &cfg);
        assert_abs_diff_eq!(r90.gain_right, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r90.gain_left, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r90.itd_s, 0.00066, epsilon = 1e-15);
        // x = -7.5°: cos(37.5°), sin(37.5°) in (left, right) order
        let r = render_azimuth(d(-30.0), &cfg);
        assert_abs_diff_eq!(r.gain_left, 0.866, epsilon = 0.001);
        assert_abs_diff_eq!(r.gain_right, 0.5, epsilon = 0.001);
        assert_abs_diff_eq!(r.itd_s, -0.00033, epsilon = 1e-9);
    }

    #[test]
    fn behind_folds_and_flags() {
        let cfg = BeaconConfig::default();
        let front = render_azimuth(d(30.0), &cfg);
        let back = render_azimuth(d(150.0), &cfg);
        assert!(back.behind && !front.behind);
        assert_abs_diff_eq!(front.gain_right, back.gain_right, epsilon = 1e-12);
        assert_abs_diff_eq!(front.itd_s, back.itd_s, epsilon = 1e-15);
        let straight_back = render_azimuth(d(180.0), &cfg);
        assert!(straight_back.behind);
        assert_abs_diff_eq!(straight_back.gain_left, straight_back.gain_right, epsilon = 1e-12);
    }

    #[test]
    fn mono_pulse_contract() {
        let cfg = BeaconConfig { mono_fallback: true, ..Default::default() };
        let r = render_azimuth(d(-40.0), &cfg);
        assert_eq!(r.cue_kind, CueKind::MonoPulse);
        let p = r.pulse.unwrap();
        assert_eq!(p.period_ms, 520.0);
        assert_eq!(p.pattern, PulseSide::Left);
        assert_eq!(render_azimuth(d(10.0), &cfg).pulse.unwrap().pattern, PulseSide::Right);
        let st = step_beacon(&BeaconState::default(), d(5.0), &cfg);
        assert_eq!(st.render.cue_kind, CueKind::MonoPulse);
        assert_eq!(st.render.power(), 0.0);
    }

    #[test]
    fn single_precision_render() {
        let cfg = BeaconConfig::<f32>::default();
        let r = render_azimuth(AngleDelta::new(-30.0_f32), &cfg);
        assert!((r.power() - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn mirror_and_power(a in -180.0f64..=180.0) {
            let cfg = BeaconConfig::default();
            let pos = render_azimuth(d(a), &cfg);
            let neg = render_azimuth(d(-a), &cfg);
            prop_assert!((pos.power() - 1.0).abs() < 1e-9);
            prop_assert!(pos.itd_s.abs() <= MAX_ITD_S);
            if a.abs() < 180.0 {
                prop_assert_eq!(pos.gain_left, neg.gain_right);
                prop_assert_eq!(pos.gain_right, neg.gain_left);
                prop_assert_eq!(pos.itd_s, -neg.itd_s);
            }
        }

        #[test]
        fn constant_delta_never_chatters(v in -180.0f64..=180.0, n in 1usize..20) {
            let cfg = BeaconConfig::default();
            let mut st = step_beacon(&BeaconState::default(), d(v), &cfg);
            let first = st.active;
            for _ in 0..n {
                st = step_beacon(&st, d(v), &cfg);
                prop_assert_eq!(st.active, first);
            }
        }
    }
}
