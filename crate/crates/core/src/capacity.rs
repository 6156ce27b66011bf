//! Data-capacity-only view of a cell: offered load against raw capacity,
//! ignoring the access reservation protocol entirely.

use num_traits::Float;

use crate::traffic::{DevicePopulation, UseCaseProfile, SECONDS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadSummary<T> {
    /// Bytes per second.
    pub offered_load: T,
    /// Bytes per second.
    pub capacity: T,
}

impl<T: Float> LoadSummary<T> {
    pub fn new(offered_load: T, capacity: T) -> Option<Self> {
        (offered_load >= T::zero() && capacity >= T::zero()).then_some(Self {
            offered_load,
            capacity,
        })
    }

    pub fn utilization(&self) -> T {
        self.offered_load / self.capacity
    }
}

/// Mean uplink bytes per second of every device in `population`.
pub fn offered_load(population: &DevicePopulation) -> f64 {
    population
        .devices
        .iter()
        .flat_map(|d| d.profiles.iter())
        .map(UseCaseProfile::daily_bytes)
        .sum::<f64>()
        / SECONDS_PER_DAY
}

/// Fraction of the offered load a saturated cell cannot carry:
/// `max(0, 1 - capacity / load)`.
pub fn d_only_outage<T: Float>(load: &LoadSummary<T>) -> T {
    if load.offered_load <= load.capacity {
        T::zero()
    } else {
        T::one() - load.capacity / load.offered_load
    }
}
