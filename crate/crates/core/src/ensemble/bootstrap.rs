use std::collections::BTreeMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::{DesignMatrix, PanelDataset, TripSeries};
use crate::rng::{seeded, Rng};

/// One subject-level bootstrap draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectDraw {
    /// Copies of each drawn subject.
    pub in_bag: BTreeMap<String, usize>,
    /// Subjects never drawn.
    pub oob: Vec<String>,
}

impl SubjectDraw {
    pub fn contains(&self, subject: &str) -> bool {
        self.in_bag.contains_key(subject)
    }
}

/// Draws `subjects.len()` subjects with replacement.
pub fn draw_subjects(subjects: &[String], rng: &mut Rng) -> SubjectDraw {
    let n = subjects.len();
    let mut in_bag = BTreeMap::new();
    for _ in 0..n {
        *in_bag.entry(subjects[rng.random_range(0..n)].clone()).or_insert(0) += 1;
    }
    let oob = subjects.iter().filter(|s| !in_bag.contains_key(*s)).cloned().collect();
    SubjectDraw { in_bag, oob }
}

/// Row indices of `design` grouped by subject, in first-appearance order.
pub fn rows_by_subject(design: &DesignMatrix) -> BTreeMap<&str, Vec<usize>> {
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in design.subject_of_row.iter().enumerate() {
        map.entry(s.as_str()).or_default().push(i);
    }
    map
}

/// Every row of each drawn subject, repeated once per copy.
pub fn in_bag_rows(by_subject: &BTreeMap<&str, Vec<usize>>, draw: &SubjectDraw) -> Vec<usize> {
    let mut rows = Vec::new();
    for (s, &copies) in &draw.in_bag {
        if let Some(r) = by_subject.get(s.as_str()) {
            for _ in 0..copies {
                rows.extend_from_slice(r);
            }
        }
    }
    rows
}

/// Subject bootstrap of a trip panel: whole trips drawn with replacement.
/// Returns the in-bag trips (repeats included) and the out-of-bag trip ids.
pub fn subject_bootstrap(panel: &PanelDataset, seed: u64) -> (Vec<TripSeries>, Vec<String>) {
    let ids: Vec<String> = panel.trip_ids().map(str::to_string).collect();
    let draw = draw_subjects(&ids, &mut seeded(seed));
    let mut trips = Vec::new();
    for (id, &copies) in &draw.in_bag {
        let trip = panel.get(id).expect("drawn from the panel");
        trips.extend(std::iter::repeat_n(trip, copies).cloned());
    }
    (trips, draw.oob)
}
