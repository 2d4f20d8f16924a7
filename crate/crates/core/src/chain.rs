//! Exact minimization of chain-structured QUBOs.
//!
//! Variables are partitioned into an ordered list of groups. Each group has
//! primary bits, which may interact with the primary bits of the groups
//! immediately before and after it, and private bits, which interact only
//! inside their own group. Under that structure the global minimum is a
//! dynamic program over groups whose state is the primary-bit pattern;
//! private bits are minimized by enumeration for every pattern.
//!
//! The ABR window models have this shape: one group per segment, the level
//! bits as primary and the slack bits as private.

use serde::{Deserialize, Serialize};

use crate::annealer::{SolveError, SolveResult};
use crate::qubo::{BitAssignment, QuboModel};

pub const MAX_PRIMARY_BITS: usize = 12;
pub const MAX_PRIVATE_BITS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainGroup {
    pub primary: Vec<usize>,
    pub private: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStructure {
    groups: Vec<ChainGroup>,
}

impl ChainStructure {
    pub fn new(groups: Vec<ChainGroup>) -> Self {
        ChainStructure { groups }
    }

    pub fn groups(&self) -> &[ChainGroup] {
        &self.groups
    }
}

#[derive(Clone, Copy)]
enum Role {
    Primary { group: usize, local: usize },
    Private { group: usize, local: usize },
}

impl Role {
    fn group(self) -> usize {
        match self {
            Role::Primary { group, .. } | Role::Private { group, .. } => group,
        }
    }
}

/// Terms of one group, indexed by local bit positions.
#[derive(Default)]
struct GroupTerms {
    primary_linear: Vec<f64>,
    primary_pairs: Vec<(usize, usize, f64)>,
    private_linear: Vec<f64>,
    /// (primary local, private local, q)
    mixed: Vec<(usize, usize, f64)>,
    private_pairs: Vec<(usize, usize, f64)>,
    /// Couplings to the next group's primary bits: (this local, next local, q).
    forward: Vec<(usize, usize, f64)>,
}

fn roles(model: &QuboModel, structure: &ChainStructure) -> Result<Vec<Role>, SolveError> {
    let n = model.num_vars();
    let mut roles: Vec<Option<Role>> = vec![None; n];
    for (g, group) in structure.groups.iter().enumerate() {
        if group.primary.len() > MAX_PRIMARY_BITS || group.private.len() > MAX_PRIVATE_BITS {
            return Err(SolveError::NotChainStructured(format!(
                "group {g} has {} primary and {} private bits (limits {MAX_PRIMARY_BITS}, {MAX_PRIVATE_BITS})",
                group.primary.len(),
                group.private.len()
            )));
        }
        let tagged = group
            .primary
            .iter()
            .enumerate()
            .map(|(local, &v)| (v, Role::Primary { group: g, local }))
            .chain(
                group
                    .private
                    .iter()
                    .enumerate()
                    .map(|(local, &v)| (v, Role::Private { group: g, local })),
            );
        for (v, role) in tagged {
            if v >= n {
                return Err(SolveError::NotChainStructured(format!(
                    "variable {v} out of range"
                )));
            }
            if roles[v].replace(role).is_some() {
                return Err(SolveError::NotChainStructured(format!(
                    "variable {v} assigned to more than one group"
                )));
            }
        }
    }
    roles
        .into_iter()
        .enumerate()
        .map(|(v, r)| {
            r.ok_or_else(|| SolveError::NotChainStructured(format!("variable {v} not in any group")))
        })
        .collect()
}

fn split_terms(
    model: &QuboModel,
    structure: &ChainStructure,
    roles: &[Role],
) -> Result<Vec<GroupTerms>, SolveError> {
    let mut groups: Vec<GroupTerms> = structure
        .groups
        .iter()
        .map(|g| GroupTerms {
            primary_linear: vec![0.0; g.primary.len()],
            private_linear: vec![0.0; g.private.len()],
            ..GroupTerms::default()
        })
        .collect();
    for ((i, j), q) in model.terms() {
        if q == 0.0 {
            continue;
        }
        let (a, b) = (roles[i], roles[j]);
        if i == j {
            match a {
                Role::Primary { group, local } => groups[group].primary_linear[local] += q,
                Role::Private { group, local } => groups[group].private_linear[local] += q,
            }
            continue;
        }
        if a.group() == b.group() {
            let t = &mut groups[a.group()];
            match (a, b) {
                (Role::Primary { local: x, .. }, Role::Primary { local: y, .. }) => {
                    t.primary_pairs.push((x, y, q))
                }
                (Role::Primary { local: p, .. }, Role::Private { local: s, .. })
                | (Role::Private { local: s, .. }, Role::Primary { local: p, .. }) => {
                    t.mixed.push((p, s, q))
                }
                (Role::Private { local: x, .. }, Role::Private { local: y, .. }) => {
                    t.private_pairs.push((x, y, q))
                }
            }
            continue;
        }
        match (a, b) {
            (Role::Primary { group: ga, local: la }, Role::Primary { group: gb, local: lb })
                if ga.abs_diff(gb) == 1 =>
            {
                let (first, lf, ls) = if ga < gb { (ga, la, lb) } else { (gb, lb, la) };
                groups[first].forward.push((lf, ls, q));
            }
            _ => {
                return Err(SolveError::NotChainStructured(format!(
                    "term ({i}, {j}) couples groups {} and {} outside the chain",
                    a.group(),
                    b.group()
                )))
            }
        }
    }
    Ok(groups)
}

/// For each primary pattern: the group's own energy with private bits at
/// their minimizing setting, and that setting.
fn group_table(terms: &GroupTerms) -> (Vec<f64>, Vec<u32>) {
    let p = terms.primary_linear.len();
    let s = terms.private_linear.len();
    let mut private_matrix = vec![0.0; s * s];
    for &(x, y, q) in &terms.private_pairs {
        private_matrix[x * s + y] += q;
        private_matrix[y * s + x] += q;
    }
    let mut unary = Vec::with_capacity(1 << p);
    let mut argmin = Vec::with_capacity(1 << p);
    for pattern in 0u32..(1 << p) {
        let on = |local: usize| (pattern >> local) & 1 == 1;
        let mut base = 0.0;
        for (local, &q) in terms.primary_linear.iter().enumerate() {
            if on(local) {
                base += q;
            }
        }
        for &(x, y, q) in &terms.primary_pairs {
            if on(x) && on(y) {
                base += q;
            }
        }
        let mut fields = terms.private_linear.clone();
        for &(pl, sl, q) in &terms.mixed {
            if on(pl) {
                fields[sl] += q;
            }
        }
        // Gray-code walk over the private bits.
        let mut best = 0.0;
        let mut best_mask = 0u32;
        let mut mask = 0u32;
        let mut current = 0.0;
        for step in 1u32..(1 << s) {
            let k = step.trailing_zeros() as usize;
            let sign = if (mask >> k) & 1 == 1 { -1.0 } else { 1.0 };
            current += sign * fields[k];
            mask ^= 1 << k;
            for (f, &q) in fields.iter_mut().zip(&private_matrix[k * s..(k + 1) * s]) {
                *f += sign * q;
            }
            if current < best || (current == best && mask < best_mask) {
                best = current;
                best_mask = mask;
            }
        }
        unary.push(base + best);
        argmin.push(best_mask);
    }
    (unary, argmin)
}

/// Exact global minimizer of a chain-structured model.
pub fn solve_chain(model: &QuboModel, structure: &ChainStructure) -> Result<SolveResult, SolveError> {
    let roles = roles(model, structure)?;
    let terms = split_terms(model, structure, &roles)?;
    if terms.is_empty() {
        return Ok(SolveResult {
            assignment: BitAssignment::zeros(0),
            energy: model.offset(),
            restarts_used: 0,
            sweeps_used: 0,
            seed: 0,
        });
    }
    let tables: Vec<(Vec<f64>, Vec<u32>)> = terms.iter().map(group_table).collect();

    let mut cost = tables[0].0.clone();
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(terms.len());
    back.push(Vec::new());
    for g in 1..terms.len() {
        let prev_p = terms[g - 1].primary_linear.len();
        let this_p = terms[g].primary_linear.len();
        let unary = &tables[g].0;
        let mut next_cost = vec![f64::INFINITY; 1 << this_p];
        let mut next_back = vec![0u32; 1 << this_p];
        for prev in 0u32..(1 << prev_p) {
            // Coupling field each current primary bit sees from `prev`.
            let mut field = vec![0.0; this_p];
            for &(lf, ls, q) in &terms[g - 1].forward {
                if (prev >> lf) & 1 == 1 {
                    field[ls] += q;
                }
            }
            let base = cost[prev as usize];
            for pattern in 0u32..(1 << this_p) {
                let mut e = base + unary[pattern as usize];
                for (local, &f) in field.iter().enumerate() {
                    if (pattern >> local) & 1 == 1 {
                        e += f;
                    }
                }
                if e < next_cost[pattern as usize] {
                    next_cost[pattern as usize] = e;
                    next_back[pattern as usize] = prev;
                }
            }
        }
        cost = next_cost;
        back.push(next_back);
    }

    let mut pattern = (0..cost.len())
        .min_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(a.cmp(&b)))
        .unwrap_or(0) as u32;
    let mut bits = BitAssignment::zeros(model.num_vars());
    for g in (0..terms.len()).rev() {
        let group = &structure.groups[g];
        for (local, &v) in group.primary.iter().enumerate() {
            bits.set(v, (pattern >> local) & 1 == 1);
        }
        let private_mask = tables[g].1[pattern as usize];
        for (local, &v) in group.private.iter().enumerate() {
            bits.set(v, (private_mask >> local) & 1 == 1);
        }
        if g > 0 {
            pattern = back[g][pattern as usize];
        }
    }
    let energy = model.energy(&bits)?;
    Ok(SolveResult {
        assignment: bits,
        energy,
        restarts_used: 0,
        sweeps_used: 0,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annealer::solve_exhaustive;

    #[test]
    fn rejects_non_chain_couplings() {
        let mut m = QuboModel::new(3);
        m.add_term(0, 2, 1.0).unwrap();
        let s = ChainStructure::new(
            (0..3)
                .map(|v| ChainGroup { primary: vec![v], private: vec![] })
                .collect(),
        );
        assert!(matches!(solve_chain(&m, &s), Err(SolveError::NotChainStructured(_))));

        // private bit coupled to a neighbouring group
        let mut m = QuboModel::new(3);
        m.add_term(1, 2, 1.0).unwrap();
        let s = ChainStructure::new(vec![
            ChainGroup { primary: vec![0], private: vec![1] },
            ChainGroup { primary: vec![2], private: vec![] },
        ]);
        assert!(matches!(solve_chain(&m, &s), Err(SolveError::NotChainStructured(_))));
    }

    #[test]
    fn rejects_bad_partitions() {
        let m = QuboModel::new(2);
        let missing = ChainStructure::new(vec![ChainGroup { primary: vec![0], private: vec![] }]);
        assert!(solve_chain(&m, &missing).is_err());
        let twice = ChainStructure::new(vec![
            ChainGroup { primary: vec![0, 1], private: vec![] },
            ChainGroup { primary: vec![1], private: vec![] },
        ]);
        assert!(solve_chain(&m, &twice).is_err());
    }

    #[test]
    fn matches_exhaustive_on_a_small_chain() {
        // three groups of (2 primary, 2 private) with arbitrary in-structure terms
        let mut m = QuboModel::new(12);
        let mut groups = Vec::new();
        let mut value = 0.37_f64;
        let mut next = || {
            value = (value * 7.31 + 0.113).fract();
            value * 2.0 - 1.0
        };
        for g in 0..3 {
            let base = 4 * g;
            let group = ChainGroup { primary: vec![base, base + 1], private: vec![base + 2, base + 3] };
            for a in base..base + 4 {
                for b in a..base + 4 {
                    m.add_term(a, b, next()).unwrap();
                }
            }
            if g > 0 {
                for a in base - 4..base - 2 {
                    for b in base..base + 2 {
                        m.add_term(a, b, next()).unwrap();
                    }
                }
            }
            groups.push(group);
        }
        m.add_offset(0.5).unwrap();
        let chain = solve_chain(&m, &ChainStructure::new(groups)).unwrap();
        let brute = solve_exhaustive(&m).unwrap();
        assert!((chain.energy - brute.energy).abs() < 1e-12);
        assert_eq!(chain.energy, m.energy(&chain.assignment).unwrap());
    }
}
