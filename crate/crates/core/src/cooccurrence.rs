//! Image-level category statistics: presence bits, co-occurrence counts,
//! phi correlation and the common-object rule.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;

pub const DEFAULT_TAU_COMMON: f64 = 0.1;
pub const DEFAULT_QUORUM: f64 = 0.75;

/// Per-image binary presence over category indices, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresenceMatrix {
    n_images: usize,
    n_categories: usize,
    bits: Vec<bool>,
}

impl PresenceMatrix {
    pub fn from_rows(n_categories: usize, rows: &[Vec<usize>]) -> Result<Self> {
        let mut bits = vec![false; rows.len() * n_categories];
        for (i, row) in rows.iter().enumerate() {
            for &c in row {
                if c >= n_categories {
                    return Err(Error::Parameter(format!(
                        "row {i}: category index {c} out of range ({n_categories} categories)"
                    )));
                }
                bits[i * n_categories + c] = true;
            }
        }
        Ok(Self {
            n_images: rows.len(),
            n_categories,
            bits,
        })
    }

    pub fn n_images(&self) -> usize {
        self.n_images
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn get(&self, image: usize, category: usize) -> bool {
        self.bits[image * self.n_categories + category]
    }

    pub fn row(&self, image: usize) -> &[bool] {
        &self.bits[image * self.n_categories..(image + 1) * self.n_categories]
    }

    /// Indices of the categories present in `image`.
    pub fn present(&self, image: usize) -> Vec<usize> {
        self.row(image)
            .iter()
            .enumerate()
            .filter_map(|(c, &b)| b.then_some(c))
            .collect()
    }
}

pub fn build_presence(dataset: &Dataset) -> PresenceMatrix {
    let n = dataset.n_categories();
    let mut bits = vec![false; dataset.n_images() * n];
    for (i, im) in dataset.images().iter().enumerate() {
        for c in dataset.instance_indices(im) {
            bits[i * n + c] = true;
        }
    }
    PresenceMatrix {
        n_images: dataset.n_images(),
        n_categories: n,
        bits,
    }
}

/// Symmetric count matrix; `get(a, b)` is the number of images containing
/// both `a` and `b`, the diagonal holds per-category image counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl CooccurrenceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize) -> u64 {
        self.counts[a * self.n + b]
    }

    pub fn to_csv(&self, names: &[String]) -> String {
        matrix_csv(names, self.n, |a, b| self.get(a, b).to_string())
    }
}

pub fn build_cooccurrence(presence: &PresenceMatrix) -> CooccurrenceMatrix {
    let n = presence.n_categories;
    let mut counts = vec![0u64; n * n];
    for i in 0..presence.n_images {
        let present = presence.present(i);
        for (x, &a) in present.iter().enumerate() {
            for &b in &present[x..] {
                counts[a * n + b] += 1;
                if a != b {
                    counts[b * n + a] += 1;
                }
            }
        }
    }
    CooccurrenceMatrix { n, counts }
}

/// Pairwise phi coefficients of the presence columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    n: usize,
    rho: Vec<f64>,
}

impl CorrelationMatrix {
    /// Builds a matrix from row-major values; checks shape, symmetry and range.
    pub fn from_values(n: usize, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != n * n {
            return Err(Error::Parameter(format!(
                "expected {} correlation entries, got {}",
                n * n,
                rho.len()
            )));
        }
        for a in 0..n {
            for b in 0..n {
                let v = rho[a * n + b];
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::Parameter(format!(
                        "rho[{a}][{b}] = {v} outside [-1, 1]"
                    )));
                }
                if v != rho[b * n + a] {
                    return Err(Error::Parameter(format!("rho not symmetric at ({a}, {b})")));
                }
            }
        }
        Ok(Self { n, rho })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.rho[a * self.n + b]
    }

    pub fn to_csv(&self, names: &[String]) -> String {
        matrix_csv(names, self.n, |a, b| format!("{:.6}", self.get(a, b)))
    }
}

/// Phi coefficient from 2x2 contingency counts over `n` images, where `na`
/// and `nb` are the column totals and `nab` the joint count. Constant
/// columns yield 0.
pub fn phi_from_counts(n: u64, na: u64, nb: u64, nab: u64) -> f64 {
    let (n11, n10, n01) = (nab, na - nab, nb - nab);
    let n00 = n + nab - na - nb;
    let denom = (na as f64) * ((n - na) as f64) * (nb as f64) * ((n - nb) as f64);
    if denom == 0.0 {
        return 0.0;
    }
    let num = (n11 as f64) * (n00 as f64) - (n10 as f64) * (n01 as f64);
    (num / denom.sqrt()).clamp(-1.0, 1.0)
}

pub fn phi_correlation(presence: &PresenceMatrix) -> Result<CorrelationMatrix> {
    if presence.n_images < 2 {
        return Err(Error::Parameter(format!(
            "phi correlation needs at least 2 images, got {}",
            presence.n_images
        )));
    }
    let c = build_cooccurrence(presence);
    let n = c.n;
    let total = presence.n_images as u64;
    let mut rho = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let v = phi_from_counts(total, c.get(a, a), c.get(b, b), c.get(a, b));
            rho[a * n + b] = v;
            rho[b * n + a] = v;
        }
    }
    Ok(CorrelationMatrix { n, rho })
}

/// Categories that correlate with most of the vocabulary and are therefore
/// served by every branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonObjectSet {
    pub members: BTreeSet<usize>,
    pub tau_common: f64,
    pub quorum: f64,
}

impl CommonObjectSet {
    pub fn empty() -> Self {
        Self {
            members: BTreeSet::new(),
            tau_common: DEFAULT_TAU_COMMON,
            quorum: DEFAULT_QUORUM,
        }
    }

    pub fn contains(&self, category: usize) -> bool {
        self.members.contains(&category)
    }
}

/// A category is common when it correlates above `tau_common` with more than
/// `quorum * (n - 1)` of the other categories.
pub fn extract_common_objects(
    rho: &CorrelationMatrix,
    tau_common: f64,
    quorum: f64,
) -> Result<CommonObjectSet> {
    if !(quorum > 0.0 && quorum < 1.0) {
        return Err(Error::Parameter(format!(
            "quorum must be in (0, 1), got {quorum}"
        )));
    }
    if !(tau_common >= 0.0) {
        return Err(Error::Parameter(format!(
            "tau_common must be >= 0, got {tau_common}"
        )));
    }
    let n = rho.n;
    let needed = quorum * n.saturating_sub(1) as f64;
    let members = (0..n)
        .filter(|&a| {
            let hits = (0..n)
                .filter(|&b| b != a && rho.get(a, b) > tau_common)
                .count();
            hits as f64 > needed
        })
        .collect();
    Ok(CommonObjectSet {
        members,
        tau_common,
        quorum,
    })
}

pub(crate) fn matrix_csv(
    names: &[String],
    n: usize,
    cell: impl Fn(usize, usize) -> String,
) -> String {
    let mut out = String::from("category");
    for name in &names[..n] {
        out.push(',');
        out.push_str(&csv_field(name));
    }
    out.push('\n');
    for a in 0..n {
        out.push_str(&csv_field(&names[a]));
        for b in 0..n {
            let _ = write!(out, ",{}", cell(a, b));
        }
        out.push('\n');
    }
    out
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_annotations;

    fn fixture() -> Dataset {
        parse_annotations(include_str!("../data/fixture_three_images.json")).unwrap()
    }

    #[test]
    fn multiplicity_collapses_and_empty_rows() {
        let ds = parse_annotations(
            r#"{"categories":[{"id":1,"name":"A"},{"id":2,"name":"B"},{"id":3,"name":"C"}],
               "images":[{"id":1},{"id":2}],
               "annotations":[{"image_id":1,"category_id":1,"bbox":[0,0,1,1]},
                              {"image_id":1,"category_id":1,"bbox":[0,0,1,1]},
                              {"image_id":1,"category_id":2,"bbox":[0,0,1,1]}]}"#,
        )
        .unwrap();
        let p = build_presence(&ds);
        assert_eq!(p.row(0), &[true, true, false]);
        assert_eq!(p.row(1), &[false, false, false]);
    }

    #[test]
    fn fixture_presence_rows() {
        let p = build_presence(&fixture());
        assert_eq!(p.present(0), vec![0, 1]);
        assert_eq!(p.present(1), vec![0]);
        assert_eq!(p.present(2), vec![1, 2]);
    }

    #[test]
    fn two_image_counts() {
        let p = PresenceMatrix::from_rows(2, &[vec![0, 1], vec![0]]).unwrap();
        let c = build_cooccurrence(&p);
        assert_eq!(c.get(0, 1), 1);
        assert_eq!(c.get(1, 0), 1);
        assert_eq!(c.get(0, 0), 2);
        assert_eq!(c.get(1, 1), 1);
    }

    #[test]
    fn disjoint_categories_have_zero_off_diagonal() {
        let p = PresenceMatrix::from_rows(3, &[vec![0], vec![1], vec![2], vec![0]]).unwrap();
        let c = build_cooccurrence(&p);
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    assert_eq!(c.get(a, b), 0);
                }
            }
        }
    }

    #[test]
    fn phi_cases() {
        // identical non-constant columns
        let p = PresenceMatrix::from_rows(2, &[vec![0, 1], vec![], vec![0, 1], vec![]]).unwrap();
        let r = phi_correlation(&p).unwrap();
        assert_eq!(r.get(0, 1), 1.0);
        assert_eq!(r.get(0, 0), 1.0);

        // A=[1,0,1,0], B=[1,0,0,1]
        let p = PresenceMatrix::from_rows(2, &[vec![0, 1], vec![], vec![0], vec![1]]).unwrap();
        assert_eq!(phi_correlation(&p).unwrap().get(0, 1), 0.0);

        // constant-1 column
        let p = PresenceMatrix::from_rows(2, &[vec![0, 1], vec![0], vec![0, 1], vec![0]]).unwrap();
        let r = phi_correlation(&p).unwrap();
        assert_eq!(r.get(0, 1), 0.0);
        assert_eq!(r.get(0, 0), 0.0);
        assert_eq!(r.get(1, 1), 1.0);
    }

    #[test]
    fn phi_needs_two_images() {
        let p = PresenceMatrix::from_rows(2, &[vec![0]]).unwrap();
        assert!(matches!(phi_correlation(&p), Err(Error::Parameter(_))));
    }

    #[test]
    fn anti_correlated_columns() {
        let p = PresenceMatrix::from_rows(2, &[vec![0], vec![1], vec![0], vec![1]]).unwrap();
        assert_eq!(phi_correlation(&p).unwrap().get(0, 1), -1.0);
    }

    fn rho_with_row(n: usize, a: usize, value: f64) -> CorrelationMatrix {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        for b in 0..n {
            if b != a {
                v[a * n + b] = value;
                v[b * n + a] = value;
            }
        }
        CorrelationMatrix::from_values(n, v).unwrap()
    }

    #[test]
    fn common_rule() {
        let rho = rho_with_row(10, 3, 0.5);
        let set = extract_common_objects(&rho, 0.1, 0.75).unwrap();
        assert_eq!(set.members.iter().copied().collect::<Vec<_>>(), vec![3]);

        let rho = rho_with_row(10, 3, 0.0);
        assert!(extract_common_objects(&rho, 0.1, 0.75)
            .unwrap()
            .members
            .is_empty());
    }

    #[test]
    fn common_parameters_validated() {
        let rho = rho_with_row(3, 0, 0.5);
        assert!(extract_common_objects(&rho, 0.1, 1.0).is_err());
        assert!(extract_common_objects(&rho, 0.1, 0.0).is_err());
        assert!(extract_common_objects(&rho, -0.1, 0.5).is_err());
    }

    #[test]
    fn csv_export_has_headers() {
        let ds = fixture();
        let c = build_cooccurrence(&build_presence(&ds));
        let csv = c.to_csv(&ds.category_names());
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("category,A,B,C"));
        assert_eq!(lines.next(), Some("A,2,1,0"));
    }
}
