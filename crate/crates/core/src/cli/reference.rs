//! Reported distances for the three comparison grids, used only to check
//! whether our runs rank the loss configs the same way.

use crate::metrics::CellSummary;

pub struct ReferenceTable {
    pub id: &'static str,
    pub title: &'static str,
    pub datasets: &'static [&'static str],
    /// `(loss config, value per dataset)`.
    pub rows: &'static [(&'static str, &'static [f64])],
}

pub const TABLES: [ReferenceTable; 3] = [
    ReferenceTable {
        id: "t1",
        title: "Gaussian mixtures",
        datasets: &["four_mode", "five_mode", "eight_mode"],
        rows: &[
            ("M1", &[2.759, 3.281, 3.321]),
            ("M2", &[11.089, 6.554, 10.830]),
            ("SC", &[6.761, 10.893, 7.646]),
            ("M1+M2", &[0.941, 1.097, 0.977]),
            ("M2+SC", &[8.708, 9.212, 4.801]),
            ("M1+SC", &[0.820, 1.067, 1.084]),
            ("M1+M2+SC", &[0.809, 0.917, 0.778]),
        ],
    },
    ReferenceTable {
        id: "t2",
        title: "complex shapes",
        datasets: &["circle", "irregular_ring", "spiral", "spin"],
        rows: &[
            ("M1+M2", &[0.642, 0.731, 7.233, 31.009]),
            ("M1+SC", &[0.736, 0.743, 3.289, 12.055]),
            ("M2+SC", &[7.233, 0.975, 10.096, 50.499]),
            ("M1+M2+SC", &[0.579, 0.678, 1.840, 10.066]),
        ],
    },
    ReferenceTable {
        id: "t3",
        title: "third order, VP path",
        datasets: &["two_round_spin", "three_round_spin", "dot_circle"],
        rows: &[
            ("SC", &[59.490, 50.981, 89.974]),
            ("M1+SC", &[17.866, 23.606, 37.550]),
            ("M1+M2+SC", &[9.417, 13.085, 30.679]),
            ("M1+M2+M3+SC", &[7.440, 10.679, 26.819]),
        ],
    },
];

pub fn table(id: &str) -> Option<&'static ReferenceTable> {
    TABLES.iter().find(|t| t.id == id)
}

impl ReferenceTable {
    pub fn value(&self, dataset: &str, config: &str) -> Option<f64> {
        let col = self.datasets.iter().position(|d| *d == dataset)?;
        self.rows.iter().find(|r| r.0 == config).map(|r| r.1[col])
    }

    pub fn configs(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.rows.iter().map(|r| r.0)
    }
}

/// Pairs of configs ranked the same way by `ours` and the reference, out of
/// all pairs present in both.
pub fn pairwise_agreement(reference: &ReferenceTable, ours: &[CellSummary], dataset: &str) -> (usize, usize) {
    let mine: Vec<(&str, f64, f64)> = ours
        .iter()
        .filter(|c| c.dataset == dataset)
        .filter_map(|c| reference.value(dataset, &c.loss_config).map(|r| (c.loss_config.as_str(), c.median, r)))
        .collect();
    let mut agree = 0;
    let mut total = 0;
    for i in 0..mine.len() {
        for j in i + 1..mine.len() {
            total += 1;
            if (mine[i].1 < mine[j].1) == (mine[i].2 < mine[j].2) {
                agree += 1;
            }
        }
    }
    (agree, total)
}

/// Configs sorted by median, best first.
pub fn ranking(ours: &[CellSummary], dataset: &str) -> Vec<String> {
    let mut cells: Vec<&CellSummary> = ours.iter().filter(|c| c.dataset == dataset).collect();
    cells.sort_by(|a, b| a.median.total_cmp(&b.median));
    cells.iter().map(|c| c.loss_config.clone()).collect()
}
