//! Per-session category statistics, rendered as the markdown table the
//! judge sees. Rows appear in insertion order and expand as new categories
//! emerge; a multi-category question increments every listed category.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub count: usize,
    pub max_difficulty: f64,
    pub min_difficulty: f64,
    /// Exact running sum; the average is derived, so recomputation from the
    /// session history matches bit for bit.
    pub sum_difficulty: f64,
    pub correct: usize,
}

impl CategoryStats {
    pub fn avg_difficulty(&self) -> f64 {
        self.sum_difficulty / self.count as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.count as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryTable {
    rows: Vec<(String, CategoryStats)>,
}

pub const MEMORY_HEADER: &str =
    "Category | Count | Max Difficulty | Min Difficulty | Avg Difficulty | Accuracy";

impl MemoryTable {
    pub fn new() -> Self {
        MemoryTable::default()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|(c, _)| c.as_str())
    }

    pub fn get(&self, category: &str) -> Option<&CategoryStats> {
        self.rows
            .iter()
            .find(|(c, _)| c == category)
            .map(|(_, s)| s)
    }

    /// Record one answered question under each of its categories.
    pub fn update(&mut self, categories: &[String], difficulty: f64, correct: bool) -> Result<()> {
        if !difficulty.is_finite() {
            return Err(Error::NonFinite("memory difficulty".into()));
        }
        let categories: Vec<&str> = if categories.is_empty() {
            vec!["uncategorized"]
        } else {
            categories.iter().map(|c| c.as_str()).collect()
        };
        for category in categories {
            match self.rows.iter_mut().find(|(c, _)| c == category) {
                Some((_, stats)) => {
                    stats.count += 1;
                    stats.max_difficulty = stats.max_difficulty.max(difficulty);
                    stats.min_difficulty = stats.min_difficulty.min(difficulty);
                    stats.sum_difficulty += difficulty;
                    if correct {
                        stats.correct += 1;
                    }
                }
                None => {
                    self.rows.push((
                        category.to_string(),
                        CategoryStats {
                            count: 1,
                            max_difficulty: difficulty,
                            min_difficulty: difficulty,
                            sum_difficulty: difficulty,
                            correct: correct as usize,
                        },
                    ));
                }
            }
        }
        Ok(())
    }

    /// Byte-stable markdown: header, then one row per category in insertion
    /// order, numbers to 2 decimals. An empty table renders "(empty)".
    pub fn render_markdown(&self) -> String {
        let mut out = String::from(MEMORY_HEADER);
        out.push('\n');
        if self.rows.is_empty() {
            out.push_str("(empty)\n");
            return out;
        }
        for (category, s) in &self.rows {
            out.push_str(&format!(
                "{category} | {} | {:.2} | {:.2} | {:.2} | {:.2}\n",
                s.count,
                s.max_difficulty,
                s.min_difficulty,
                s.avg_difficulty(),
                s.accuracy()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    #[test]
    fn single_update_row() {
        let mut table = MemoryTable::new();
        table.update(&["Botany".into()], -1.31, true).unwrap();
        let s = table.get("Botany").unwrap();
        assert_eq!(s.count, 1);
        assert_eq!(s.max_difficulty, -1.31);
        assert_eq!(s.min_difficulty, -1.31);
        assert_eq!(s.avg_difficulty(), -1.31);
        assert_eq!(s.accuracy(), 1.0);
        assert!(table
            .render_markdown()
            .contains("Botany | 1 | -1.31 | -1.31 | -1.31 | 1.00"));
    }

    /// Five updates whose stats land exactly on the reference row:
    /// count 5, max 5.21, min −1.02, mean 1.15, accuracy 0.60.
    #[test]
    fn reference_accounting_row() {
        let mut table = MemoryTable::new();
        let accounting = vec!["Accounting".to_string()];
        table.update(&accounting, 5.21, true).unwrap();
        table.update(&accounting, -1.02, true).unwrap();
        table.update(&accounting, 0.52, true).unwrap();
        table.update(&accounting, 0.52, false).unwrap();
        table.update(&accounting, 0.52, false).unwrap();
        let rendered = table.render_markdown();
        assert!(
            rendered.contains("Accounting | 5 | 5.21 | -1.02 | 1.15 | 0.60"),
            "got:\n{rendered}"
        );
    }

    #[test]
    fn multi_category_update_increments_each_row() {
        let mut table = MemoryTable::new();
        table
            .update(&["Art".into(), "History".into()], 0.5, true)
            .unwrap();
        assert_eq!(table.get("Art").unwrap().count, 1);
        assert_eq!(table.get("History").unwrap().count, 1);
    }

    #[test]
    fn empty_table_renders_placeholder() {
        let rendered = MemoryTable::new().render_markdown();
        assert_eq!(rendered, format!("{MEMORY_HEADER}\n(empty)\n"));
    }

    #[test]
    fn insertion_order_is_stable() {
        let mut table = MemoryTable::new();
        table.update(&["Accounting".into()], 1.0, true).unwrap();
        table.update(&["Botany".into()], 2.0, false).unwrap();
        table.update(&["Accounting".into()], 3.0, true).unwrap();
        let rendered = table.render_markdown();
        let accounting = rendered.find("Accounting").unwrap();
        let botany = rendered.find("Botany").unwrap();
        assert!(accounting < botany);
    }

    #[test]
    fn empty_categories_default_to_uncategorized() {
        let mut table = MemoryTable::new();
        table.update(&[], 0.0, true).unwrap();
        assert_eq!(table.get("uncategorized").unwrap().count, 1);
    }

    #[test]
    fn non_finite_difficulty_rejected() {
        let mut table = MemoryTable::new();
        assert!(table.update(&["X".into()], f64::NAN, true).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        /// Every cell equals a from-scratch recomputation over the history.
        #[test]
        fn recomputation_equivalence(
            updates in proptest::collection::vec(
                (
                    proptest::collection::vec(0usize..20, 1..3),
                    -10.0f64..10.0,
                    any::<bool>(),
                ),
                1..500,
            )
        ) {
            let mut table = MemoryTable::new();
            let mut history: Vec<(Vec<String>, f64, bool)> = Vec::new();
            for (cat_indices, difficulty, correct) in &updates {
                let cats: Vec<String> =
                    cat_indices.iter().map(|i| format!("cat{i}")).collect();
                table.update(&cats, *difficulty, *correct).unwrap();
                history.push((cats, *difficulty, *correct));
            }
            // recompute per category from the raw history
            let mut expected: HashMap<String, (usize, f64, f64, f64, usize)> = HashMap::new();
            for (cats, d, c) in &history {
                for cat in cats {
                    let e = expected.entry(cat.clone()).or_insert((0, f64::MIN, f64::MAX, 0.0, 0));
                    e.0 += 1;
                    e.1 = e.1.max(*d);
                    e.2 = e.2.min(*d);
                    e.3 += *d;
                    e.4 += *c as usize;
                }
            }
            for (cat, (count, max, min, sum, correct)) in &expected {
                let s = table.get(cat).unwrap();
                prop_assert_eq!(s.count, *count);
                prop_assert_eq!(s.max_difficulty, *max);
                prop_assert_eq!(s.min_difficulty, *min);
                prop_assert_eq!(s.sum_difficulty.to_bits(), sum.to_bits());
                prop_assert_eq!(s.correct, *correct);
                prop_assert!(s.accuracy() >= 0.0 && s.accuracy() <= 1.0);
                prop_assert!(s.min_difficulty <= s.avg_difficulty() + 1e-12);
                prop_assert!(s.avg_difficulty() <= s.max_difficulty + 1e-12);
            }
            prop_assert_eq!(table.categories().count(), expected.len());
        }
    }
}
