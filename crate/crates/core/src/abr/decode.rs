use serde::{Deserialize, Serialize};

use super::{AbrWindow, BufferForecast, VariableLayout};
use crate::qubo::BitAssignment;

/// Levels read from a solution, with a flag per position where the raw bits
/// were not a valid one-hot row within budget and had to be repaired.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    pub levels: Vec<usize>,
    pub violations: Vec<bool>,
}

impl Decoded {
    pub fn any_violation(&self) -> bool {
        self.violations.iter().any(|&v| v)
    }
}

/// Reads one level per position.
///
/// A row with no bit set becomes the lowest level. A row with several bits
/// keeps the highest set level that fits the budget, else the lowest set
/// level. A level whose size exceeds the budget is then replaced by the
/// highest level that fits, or the lowest level if none does.
pub fn decode(
    layout: &VariableLayout,
    assignment: &BitAssignment,
    window: &AbrWindow,
    forecast: &BufferForecast,
) -> Decoded {
    let mut levels = Vec::with_capacity(layout.segments);
    let mut violations = Vec::with_capacity(layout.segments);
    for n in 0..layout.segments {
        let budget = forecast.budgets[n] as f64;
        let fits = |l: usize| window.sizes[n][l] <= budget;
        let set: Vec<usize> = (0..layout.levels)
            .filter(|&l| assignment.get(layout.selection(n, l)))
            .collect();
        let (mut level, mut violated) = match set.as_slice() {
            [l] => (*l, false),
            [] => (0, true),
            many => {
                let l = many.iter().rev().copied().find(|&l| fits(l)).unwrap_or(many[0]);
                (l, true)
            }
        };
        if !fits(level) {
            let repaired = (0..layout.levels).rev().find(|&l| fits(l)).unwrap_or(0);
            if repaired != level {
                level = repaired;
                violated = true;
            }
        }
        levels.push(level);
        violations.push(violated);
    }
    Decoded { levels, violations }
}
