use super::{Arfcn, LinkError, SimTime, MAX_BASE_RANGE_KM};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "gsm850_900")]
    Gsm850_900,
    #[serde(rename = "gsm1800_1900")]
    Gsm1800_1900,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Macro,
    Micro,
    Pico,
    Femto,
    Umbrella,
}

impl CellKind {
    pub const ALL: [CellKind; 5] = [CellKind::Macro, CellKind::Micro, CellKind::Pico, CellKind::Femto, CellKind::Umbrella];

    pub fn default_range_km(self) -> f64 {
        match self {
            CellKind::Macro | CellKind::Umbrella => 35.0,
            CellKind::Micro => 2.0,
            CellKind::Pico => 0.05,
            CellKind::Femto => 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawCell")]
pub struct CellClass {
    pub kind: CellKind,
    pub max_range_km: f64,
    /// Extended cells reach twice the base range.
    pub extended: bool,
}

#[derive(Deserialize)]
struct RawCell {
    kind: CellKind,
    max_range_km: Option<f64>,
    #[serde(default)]
    extended: bool,
}

impl From<RawCell> for CellClass {
    fn from(raw: RawCell) -> Self {
        CellClass {
            kind: raw.kind,
            max_range_km: raw.max_range_km.unwrap_or_else(|| raw.kind.default_range_km()),
            extended: raw.extended,
        }
    }
}

impl CellClass {
    pub fn new(kind: CellKind) -> Self {
        Self {
            kind,
            max_range_km: kind.default_range_km(),
            extended: false,
        }
    }

    pub fn effective_range_km(&self) -> f64 {
        let base = self.max_range_km.min(MAX_BASE_RANGE_KM);
        if self.extended {
            base * 2.0
        } else {
            base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    Full,
    Half,
}

/// Interval of simulated seconds during which nothing gets through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisconnectWindow {
    pub start_s: f64,
    pub end_s: f64,
}

impl DisconnectWindow {
    pub fn start_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.start_s)
    }

    pub fn end_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.end_s)
    }
}

/// Link parameters. Serialized as the `[link]` section of a config file;
/// every field is optional there and falls back to [`LinkConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub arfcn: Arfcn,
    pub band: Band,
    pub cell: CellClass,
    pub distance_km: f64,
    pub timeslots: u8,
    pub rate: RateMode,
    /// Per-frame loss probability.
    pub loss_prob: f64,
    pub disconnect_windows: Vec<DisconnectWindow>,
    pub rng_seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            arfcn: Arfcn(62),
            band: Band::Gsm850_900,
            cell: CellClass::new(CellKind::Macro),
            distance_km: 1.0,
            timeslots: 1,
            rate: RateMode::Full,
            loss_prob: 0.0,
            disconnect_windows: Vec::new(),
            rng_seed: 0,
        }
    }
}

#[derive(Deserialize)]
struct LinkSection {
    #[serde(default)]
    link: LinkConfig,
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        let bad = |msg: String| Err(LinkError::InvalidConfig(msg));
        if !(1..=8).contains(&self.timeslots) {
            return bad(format!("timeslots must be 1..=8, got {}", self.timeslots));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return bad(format!("loss_prob must be within [0, 1], got {}", self.loss_prob));
        }
        if !(self.distance_km >= 0.0) {
            return bad(format!("distance_km must be non-negative, got {}", self.distance_km));
        }
        if !(self.cell.max_range_km > 0.0 && self.cell.max_range_km <= MAX_BASE_RANGE_KM) {
            return bad(format!("cell range must be in (0, 35] km, got {}", self.cell.max_range_km));
        }
        for w in &self.disconnect_windows {
            if !(w.start_s >= 0.0 && w.end_s > w.start_s && w.end_s.is_finite()) {
                return bad(format!("bad disconnect window {}..{}", w.start_s, w.end_s));
            }
        }
        Ok(())
    }

    /// Reads the `[link]` section of a TOML document. A missing section means defaults.
    pub fn from_toml(text: &str) -> Result<Self, LinkError> {
        let section: LinkSection = toml::from_str(text).map_err(|e| LinkError::InvalidConfig(e.to_string()))?;
        section.link.validate()?;
        Ok(section.link)
    }

    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            link: &'a LinkConfig,
        }
        toml::to_string(&Out { link: self }).expect("link config serializes")
    }
}
