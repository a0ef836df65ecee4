//! Physical tube modeling: resonance frequencies and quality factors for
//! single open-ended tubes and two-tube structures, plus inverse design
//! from a target (f0, Q0) back to buildable dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Air viscosity, kg/(m s).
pub const AIR_VISCOSITY: f64 = 1.81e-5;
/// Air density, kg/m^3.
pub const AIR_DENSITY: f64 = 1.18;

/// Default ambient temperature in kelvin. Back-solved so the single-tube
/// frequency formula reproduces the reference tube set within 0.5%.
pub const DEFAULT_TEMPERATURE_K: f64 = 303.0;

/// Ambient conditions. The speed of sound is always derived from the
/// temperature, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub temperature_k: f64,
}

impl Environment {
    pub fn new(temperature_k: f64) -> Result<Self> {
        if !(200.0..=350.0).contains(&temperature_k) {
            return Err(Error::TemperatureOutOfRange(temperature_k));
        }
        Ok(Self { temperature_k })
    }

    /// Speed of sound in dry air: `20.05 * sqrt(T)` m/s.
    pub fn speed_of_sound(&self) -> f64 {
        20.05 * self.temperature_k.sqrt()
    }
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            temperature_k: DEFAULT_TEMPERATURE_K,
        }
    }
}

/// Cylindrical open-ended tube dimensions in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub length_m: f64,
    pub diameter_m: f64,
}

impl TubeSpec {
    pub fn new(length_m: f64, diameter_m: f64) -> Result<Self> {
        let spec = Self {
            length_m,
            diameter_m,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.05..=3.0).contains(&self.length_m) {
            return Err(Error::TubeOutOfRange(format!(
                "length {} m not in [0.05, 3.0]",
                self.length_m
            )));
        }
        if !(0.005..=0.15).contains(&self.diameter_m) {
            return Err(Error::TubeOutOfRange(format!(
                "diameter {} m not in [0.005, 0.15]",
                self.diameter_m
            )));
        }
        if self.diameter_m >= self.length_m {
            return Err(Error::TubeOutOfRange(format!(
                "diameter {} m must be smaller than length {} m",
                self.diameter_m, self.length_m
            )));
        }
        Ok(())
    }

    /// Cross-sectional area in m^2.
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * (self.diameter_m / 2.0) * (self.diameter_m / 2.0)
    }

    /// End-corrected acoustic length `L + 0.8 d`.
    pub fn corrected_length(&self) -> f64 {
        self.length_m + 0.8 * self.diameter_m
    }
}

/// Two connected open-ended tubes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoTubeSpec {
    pub first: TubeSpec,
    pub second: TubeSpec,
}

impl TwoTubeSpec {
    pub fn new(first: TubeSpec, second: TubeSpec) -> Result<Self> {
        first.validate()?;
        second.validate()?;
        let spec = Self { first, second };
        if spec.is_degenerate() {
            return Err(Error::DegenerateTwoTube(
                first.length_m + second.length_m,
            ));
        }
        Ok(spec)
    }

    /// The symmetric case (equal lengths and diameters within 1e-6) has no
    /// impedance step; it must be modeled as one tube of the summed length.
    pub fn is_degenerate(&self) -> bool {
        (self.first.length_m - self.second.length_m).abs() <= 1e-6
            && (self.first.diameter_m - self.second.diameter_m).abs() <= 1e-6
    }
}

/// One resonance line: center frequency and quality factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub frequency_hz: f64,
    pub q: f64,
}

/// Ordered resonance lines below a Nyquist limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceProfile {
    pub harmonics: Vec<Resonance>,
    pub nyquist_hz: f64,
}

impl ResonanceProfile {
    pub fn is_empty(&self) -> bool {
        self.harmonics.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let mut prev = 0.0;
        for h in &self.harmonics {
            if h.frequency_hz <= prev {
                return Err(Error::InvalidArgument(format!(
                    "resonances not strictly increasing at {} Hz",
                    h.frequency_hz
                )));
            }
            if h.frequency_hz >= self.nyquist_hz {
                return Err(Error::InvalidArgument(format!(
                    "resonance {} Hz at or above Nyquist {}",
                    h.frequency_hz, self.nyquist_hz
                )));
            }
            if h.q <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "non-positive Q at {} Hz",
                    h.frequency_hz
                )));
            }
            prev = h.frequency_hz;
        }
        Ok(())
    }
}

/// Fundamental resonance `c_air / (2 (L + 0.8 d))` of an open-ended tube.
/// The `0.8 d` term is the empirical end correction.
pub fn fundamental_frequency(tube: &TubeSpec, env: &Environment) -> f64 {
    env.speed_of_sound() / (2.0 * tube.corrected_length())
}

/// Quality factor from radiation and wall losses:
/// `d_rad = 2 pi A f0^2 / c^2`, `d_wall = sqrt(mu / (rho A f0))`,
/// `Q0 = 1 / (d_rad + d_wall)`.
pub fn quality_factor(tube: &TubeSpec, env: &Environment) -> f64 {
    quality_factor_at(fundamental_frequency(tube, env), tube.diameter_m, env)
}

/// Quality factor of a resonance at `f0` for a tube of the given diameter.
pub fn quality_factor_at(f0_hz: f64, diameter_m: f64, env: &Environment) -> f64 {
    let c = env.speed_of_sound();
    let area = std::f64::consts::PI * (diameter_m / 2.0) * (diameter_m / 2.0);
    let d_rad = 2.0 * std::f64::consts::PI * area * f0_hz * f0_hz / (c * c);
    let d_wall = (AIR_VISCOSITY / (AIR_DENSITY * area * f0_hz)).sqrt();
    1.0 / (d_rad + d_wall)
}

/// Harmonic series of a single tube: `f_i = i * f0`, `Q_i = Q0 / i^(1/4)`
/// for every harmonic strictly below `nyquist_hz`.
pub fn resonance_profile_single(
    tube: &TubeSpec,
    env: &Environment,
    nyquist_hz: f64,
) -> Result<ResonanceProfile> {
    let f0 = fundamental_frequency(tube, env);
    if f0 >= nyquist_hz {
        return Err(Error::EmptyProfile(format!(
            "fundamental {f0:.1} Hz at or above Nyquist {nyquist_hz} Hz"
        )));
    }
    let q0 = quality_factor(tube, env);
    let mut count = (nyquist_hz / f0).floor() as usize;
    if count as f64 * f0 >= nyquist_hz {
        count -= 1;
    }
    let harmonics = (1..=count)
        .map(|i| Resonance {
            frequency_hz: i as f64 * f0,
            q: q0 / (i as f64).powf(0.25),
        })
        .collect();
    let profile = ResonanceProfile {
        harmonics,
        nyquist_hz,
    };
    profile.validate()?;
    Ok(profile)
}

/// Impedance-matching function for two connected tubes, zero at resonance:
/// `g(f) = A1 cot(2 pi f L1'/c) - A2 cot(2 pi f L2'/c)` with end-corrected
/// lengths.
fn two_tube_mismatch(f: f64, a1: f64, l1: f64, a2: f64, l2: f64, c: f64) -> f64 {
    let x1 = 2.0 * std::f64::consts::PI * f * l1 / c;
    let x2 = 2.0 * std::f64::consts::PI * f * l2 / c;
    a1 * x1.cos() / x1.sin() - a2 * x2.cos() / x2.sin()
}

/// Cotangent pole frequencies `k c / (2 L)` of both tubes inside
/// `(lo_hz, hi_hz)`, sorted, coincident poles merged.
fn pole_frequencies(l1: f64, l2: f64, c: f64, lo_hz: f64, hi_hz: f64) -> Vec<f64> {
    let mut poles = Vec::new();
    for &l in &[l1, l2] {
        let spacing = c / (2.0 * l);
        let mut k = 1.0;
        while k * spacing < hi_hz {
            if k * spacing > lo_hz {
                poles.push(k * spacing);
            }
            k += 1.0;
        }
    }
    poles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    poles.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    poles
}

/// All resonance roots of the two-tube impedance equation in
/// `(20 Hz, nyquist_hz)`.
///
/// A 0.5 Hz scan brackets sign changes of the mismatch function between
/// consecutive finite samples, with extra samples hugging each side of
/// every cotangent pole: near-equal tube lengths pinch roots against the
/// poles, where a bare grid would step over them. Brackets containing a
/// pole are discarded (the sign flips there without a root) and the rest
/// are refined by bisection to better than 0.01 Hz. Q values come from an
/// equivalent single tube of length `L1' + L2'` and area-weighted mean
/// diameter, decayed by `i^(1/4)`; an approximation, since the impedance
/// equation yields frequencies only.
pub fn resonances_two_tube(
    spec: &TwoTubeSpec,
    env: &Environment,
    nyquist_hz: f64,
) -> Result<ResonanceProfile> {
    spec.first.validate()?;
    spec.second.validate()?;
    if spec.is_degenerate() {
        return Err(Error::DegenerateTwoTube(
            spec.first.length_m + spec.second.length_m,
        ));
    }
    let c = env.speed_of_sound();
    let (a1, a2) = (spec.first.area(), spec.second.area());
    let (l1, l2) = (spec.first.corrected_length(), spec.second.corrected_length());
    let g = |f: f64| two_tube_mismatch(f, a1, l1, a2, l2, c);

    let poles = pole_frequencies(l1, l2, c, 20.0, nyquist_hz);
    let roots = scan_roots(g, 20.0, nyquist_hz, 0.5, &poles);

    // Equivalent single tube for Q assignment.
    let d_eq = (a1 * spec.first.diameter_m + a2 * spec.second.diameter_m) / (a1 + a2);
    let eq_tube = TubeSpec {
        length_m: l1 + l2,
        diameter_m: d_eq,
    };
    let q0 = quality_factor(&eq_tube, env);

    let tolerance = 1e-3 * a1.max(a2);
    let harmonics: Vec<Resonance> = roots
        .into_iter()
        .filter(|&f| g(f).abs() < tolerance)
        .enumerate()
        .map(|(i, f)| Resonance {
            frequency_hz: f,
            q: q0 / ((i + 1) as f64).powf(0.25),
        })
        .collect();

    let profile = ResonanceProfile {
        harmonics,
        nyquist_hz,
    };
    profile.validate()?;
    Ok(profile)
}

/// A sample may approach a pole no closer than this. Close enough that
/// the mismatch acceptance filter rejects anything nearer anyway, far
/// enough that the cotangent argument stays more than 1e-6 rad from a
/// multiple of pi for every admissible tube length.
const POLE_FLANK_HZ: f64 = 2e-3;

/// Scan `(lo_hz, hi_hz)` for sign changes of `g` between consecutive
/// finite samples and refine each bracket by bisection. Samples sit on a
/// fixed grid plus the interval's endpoint and one point on each flank
/// of every pole; brackets that straddle a pole are discarded since g
/// changes sign there without a root. Returned roots stay strictly
/// below `hi_hz`.
pub(crate) fn scan_roots(
    g: impl Fn(f64) -> f64,
    lo_hz: f64,
    hi_hz: f64,
    step_hz: f64,
    poles: &[f64],
) -> Vec<f64> {
    let mut points = Vec::new();
    let steps = ((hi_hz - lo_hz) / step_hz).ceil() as usize;
    for i in 0..steps {
        let f = lo_hz + i as f64 * step_hz;
        if f >= hi_hz {
            break;
        }
        points.push(f);
    }
    // The grid stops short of hi_hz; without the endpoint a root in the
    // final fractional segment would never get a closing bracket.
    points.push(hi_hz);
    for &p in poles {
        for f in [p - POLE_FLANK_HZ, p + POLE_FLANK_HZ] {
            if f > lo_hz && f < hi_hz {
                points.push(f);
            }
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    points.retain(|&f| poles.iter().all(|&p| (f - p).abs() >= POLE_FLANK_HZ - 1e-9));
    let contains_pole = |lo: f64, hi: f64| poles.iter().any(|&p| lo < p && p < hi);

    let mut roots = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &f in &points {
        let v = g(f);
        if !v.is_finite() {
            prev = None;
            continue;
        }
        if let Some((pf, pv)) = prev {
            if pv == 0.0 {
                roots.push(pf);
            } else if pv * v < 0.0 && !contains_pole(pf, f) {
                roots.push(bisect(&g, pf, f, pv));
            }
        }
        prev = Some((f, v));
    }
    roots.retain(|&r| r < hi_hz);
    roots
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut g_lo: f64) -> f64 {
    // Far tighter than the 0.01 Hz contract so the mismatch bound holds
    // even when the root sits on a steep flank.
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if g_lo * gm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            g_lo = gm;
        }
    }
    0.5 * (lo + hi)
}

/// Saturation status of an inverse design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Saturation {
    /// The requested Q0 was achievable exactly.
    None,
    /// Q0 above the achievable maximum; the Q-maximizing tube is returned.
    MaxQ,
    /// Q0 below what the largest admissible diameter reaches; that tube is
    /// returned.
    MinQ,
}

/// Result of [`tube_from_resonance`]: the realized tube plus the (f0, Q0)
/// it actually achieves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeDesign {
    pub tube: TubeSpec,
    pub f0_hz: f64,
    pub q0: f64,
    pub saturation: Saturation,
}

/// Invert the resonance formulas: find a tube whose fundamental is
/// `f0_hz` and whose quality factor is `q0` (within 0.1).
///
/// The diameter is found by bisection on the decreasing-Q branch (above
/// the Q-maximizing diameter); the length follows as `c/(2 f0) - 0.8 d`.
/// A Q0 outside the achievable band is clamped to the nearest achievable
/// tube and flagged so the search space stays rectangular. Errors only
/// when no admissible diameter leaves the length inside its bounds.
pub fn tube_from_resonance(f0_hz: f64, q0: f64, env: &Environment) -> Result<TubeDesign> {
    if !(50.0..=1000.0).contains(&f0_hz) {
        return Err(Error::InvalidArgument(format!(
            "f0 {f0_hz} Hz not in [50, 1000]"
        )));
    }
    if !(5.0..=100.0).contains(&q0) {
        return Err(Error::InvalidArgument(format!("Q0 {q0} not in [5, 100]")));
    }
    let c = env.speed_of_sound();
    let half_wave = c / (2.0 * f0_hz); // L + 0.8 d

    // Admissible diameter window from the tube invariants:
    //   L in [0.05, 3.0]  =>  d in [(half_wave - 3)/0.8, (half_wave - 0.05)/0.8]
    //   d < L             =>  d < half_wave / 1.8
    //   d in [0.005, 0.15]
    let d_min = 0.005_f64.max((half_wave - 3.0) / 0.8);
    let d_max = 0.15_f64
        .min((half_wave - 0.05) / 0.8)
        .min(half_wave / 1.8 - 1e-9);
    if d_min > d_max {
        return Err(Error::TubeOutOfRange(format!(
            "no diameter puts the length for f0 {f0_hz} Hz inside [0.05, 3.0] m"
        )));
    }

    // Q(d) at fixed f0 rises to a maximum at d* then falls; bisection runs
    // on the falling branch.
    let alpha = 2.0 * std::f64::consts::PI * f0_hz * f0_hz / (c * c);
    let beta = (AIR_VISCOSITY / (AIR_DENSITY * f0_hz)).sqrt();
    let area_star = (beta / (2.0 * alpha)).powf(2.0 / 3.0);
    let d_star = 2.0 * (area_star / std::f64::consts::PI).sqrt();

    let branch_lo = d_min.max(d_star).min(d_max);
    let q_at = |d: f64| quality_factor_at(f0_hz, d, env);

    let (d, saturation) = if q0 >= q_at(branch_lo) {
        (branch_lo, if (q0 - q_at(branch_lo)).abs() <= 0.1 {
            Saturation::None
        } else {
            Saturation::MaxQ
        })
    } else if q0 <= q_at(d_max) {
        (d_max, if (q0 - q_at(d_max)).abs() <= 0.1 {
            Saturation::None
        } else {
            Saturation::MinQ
        })
    } else {
        // Q decreasing on [branch_lo, d_max]: bisect Q(d) = q0.
        let mut lo = branch_lo;
        let mut hi = d_max;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if q_at(mid) > q0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if (q_at(0.5 * (lo + hi)) - q0).abs() < 0.01 {
                break;
            }
        }
        (0.5 * (lo + hi), Saturation::None)
    };

    let length = half_wave - 0.8 * d;
    let tube = TubeSpec {
        length_m: length,
        diameter_m: d,
    };
    tube.validate()?;
    Ok(TubeDesign {
        tube,
        f0_hz: fundamental_frequency(&tube, env),
        q0: quality_factor(&tube, env),
        saturation,
    })
}
