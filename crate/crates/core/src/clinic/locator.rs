use crate::domain::PharmacyId;
use crate::error::ServiceError;
use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PharmacyDirectoryEntry {
    pub pharmacy_id: PharmacyId,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
}

impl PharmacyDirectoryEntry {
    pub fn new(id: &str, name: &str, latitude: f64, longitude: f64) -> Result<Self, ServiceError> {
        check_coordinates(latitude, longitude)?;
        Ok(Self {
            pharmacy_id: PharmacyId::new(id),
            name: name.to_owned(),
            latitude,
            longitude,
        })
    }
}

pub fn check_coordinates(lat: f64, lon: f64) -> Result<(), ServiceError> {
    if (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon) {
        Ok(())
    } else {
        Err(ServiceError::Invalid(format!("coordinates ({lat}, {lon}) out of range")))
    }
}

/// Great-circle distance on a sphere of radius 6371 km.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Source of pharmacy locations.
pub trait PharmacyLocator: Send + Sync {
    fn entries(&self) -> Result<Vec<PharmacyDirectoryEntry>, ServiceError>;
}

/// Fixed in-memory directory; the default provider.
#[derive(Debug, Clone, Default)]
pub struct FixtureDirectory(pub Vec<PharmacyDirectoryEntry>);

impl PharmacyLocator for FixtureDirectory {
    fn entries(&self) -> Result<Vec<PharmacyDirectoryEntry>, ServiceError> {
        Ok(self.0.clone())
    }
}

/// Tries `primary`, falling back when it reports `ProviderUnavailable`.
pub struct WithFallback<P, F> {
    pub primary: P,
    pub fallback: F,
}

impl<P: PharmacyLocator, F: PharmacyLocator> PharmacyLocator for WithFallback<P, F> {
    fn entries(&self) -> Result<Vec<PharmacyDirectoryEntry>, ServiceError> {
        match self.primary.entries() {
            Err(ServiceError::ProviderUnavailable(_)) => self.fallback.entries(),
            other => other,
        }
    }
}

/// Closest entry to the origin; ties go to the smallest pharmacy id.
pub fn find_nearest(lat: f64, lon: f64, provider: &dyn PharmacyLocator) -> Result<PharmacyDirectoryEntry, ServiceError> {
    check_coordinates(lat, lon)?;
    provider
        .entries()?
        .into_iter()
        .map(|e| (haversine_km(lat, lon, e.latitude, e.longitude), e))
        .min_by(|(da, a), (db, b)| da.total_cmp(db).then_with(|| a.pharmacy_id.cmp(&b.pharmacy_id)))
        .map(|(_, e)| e)
        .ok_or(ServiceError::EmptyDirectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> FixtureDirectory {
        FixtureDirectory(vec![
            PharmacyDirectoryEntry::new("north", "North", 52.52, 13.405).unwrap(),
            PharmacyDirectoryEntry::new("centre", "Centre", 48.8566, 2.3522).unwrap(),
            PharmacyDirectoryEntry::new("south", "South", 41.9028, 12.4964).unwrap(),
        ])
    }

    #[test]
    fn known_distances() {
        // Paris to London is about 343.5 km on this sphere
        let d = haversine_km(48.8566, 2.3522, 51.5074, -0.1278);
        assert!((d - 343.5).abs() < 1.0, "{d}");
        // a quarter meridian is pi/2 * R
        let q = haversine_km(0.0, 0.0, 90.0, 0.0);
        assert!((q - std::f64::consts::FRAC_PI_2 * EARTH_RADIUS_KM).abs() < 1e-9);
        assert_eq!(haversine_km(10.0, 20.0, 10.0, 20.0), 0.0);
    }

    #[test]
    fn origin_on_a_pharmacy_returns_it() {
        let e = find_nearest(41.9028, 12.4964, &fixture()).unwrap();
        assert_eq!(e.pharmacy_id.as_str(), "south");
    }

    #[test]
    fn ties_pick_smallest_id() {
        let dir = FixtureDirectory(vec![
            PharmacyDirectoryEntry::new("b", "B", 0.0, 1.0).unwrap(),
            PharmacyDirectoryEntry::new("a", "A", 0.0, -1.0).unwrap(),
        ]);
        assert_eq!(find_nearest(0.0, 0.0, &dir).unwrap().pharmacy_id.as_str(), "a");
    }

    #[test]
    fn empty_and_invalid() {
        assert_eq!(find_nearest(0.0, 0.0, &FixtureDirectory::default()).unwrap_err(), ServiceError::EmptyDirectory);
        assert!(find_nearest(91.0, 0.0, &fixture()).is_err());
        assert!(PharmacyDirectoryEntry::new("x", "X", 0.0, 181.0).is_err());
    }

    struct Down;
    impl PharmacyLocator for Down {
        fn entries(&self) -> Result<Vec<PharmacyDirectoryEntry>, ServiceError> {
            Err(ServiceError::ProviderUnavailable("offline".into()))
        }
    }

    #[test]
    fn fallback_used_only_when_unavailable() {
        let p = WithFallback { primary: Down, fallback: fixture() };
        assert_eq!(find_nearest(52.0, 13.0, &p).unwrap().pharmacy_id.as_str(), "north");
        assert!(matches!(find_nearest(0.0, 0.0, &Down), Err(ServiceError::ProviderUnavailable(_))));
    }

    proptest! {
        #[test]
        fn matches_exhaustive_scan(
            pts in prop::collection::vec((-90.0f64..=90.0, -180.0f64..=180.0), 1..12),
            lat in -90.0f64..=90.0, lon in -180.0f64..=180.0,
        ) {
            let dir = FixtureDirectory(pts.iter().enumerate()
                .map(|(i, (a, o))| PharmacyDirectoryEntry::new(&format!("p{i:02}"), "x", *a, *o).unwrap()).collect());
            let got = find_nearest(lat, lon, &dir).unwrap();
            // independent oracle: spherical law of cosines, clamped
            let dist = |a: f64, o: f64| {
                let c = lat.to_radians().sin() * a.to_radians().sin()
                    + lat.to_radians().cos() * a.to_radians().cos() * (o - lon).to_radians().cos();
                EARTH_RADIUS_KM * c.clamp(-1.0, 1.0).acos()
            };
            let best = pts.iter().map(|(a, o)| dist(*a, *o)).fold(f64::INFINITY, f64::min);
            prop_assert!((dist(got.latitude, got.longitude) - best).abs() < 1e-3);
        }
    }
}
