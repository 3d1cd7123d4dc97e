use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::domain::{Domain, DomainError, MetaComponent, Point, TypeGroup};

/// Latin hypercube over the normalized standard variables of `xm` with
/// uniform categorical draws. `n` points, one per stratum in every coordinate.
pub fn latin_hypercube(
    domain: &Domain,
    xm: &MetaComponent,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Point>, DomainError> {
    let std_pos = domain.acting_positions(xm, TypeGroup::Standard)?;
    let cat_pos = domain.acting_positions(xm, TypeGroup::Categorical)?;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for _ in &std_pos {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        columns.push(
            strata
                .into_iter()
                .map(|s| (s as f64 + rng.gen_range(0.0..1.0)) / n as f64)
                .collect(),
        );
    }
    let mut out = Vec::with_capacity(n);
    for row in 0..n {
        let mut p = Point::new(xm.clone());
        for &i in &cat_pos {
            let s = &domain.variables()[i];
            let k = s.scope.n_categories().expect("categorical");
            p.categorical.insert(s.id.clone(), rng.gen_range(1..=k));
        }
        for (column, &i) in columns.iter().zip(&std_pos) {
            let s = &domain.variables()[i];
            let v = s.scope.project(s.scope.denormalize(column[row]), 1e-9);
            p.standard.insert(s.id.clone(), v);
        }
        out.push(p);
    }
    Ok(out)
}

/// The stratified initial design: `d + 1` points per meta component where
/// `d = n^q + n^s` under that component, in enumeration order.
pub fn initial_design(domain: &Domain, rng: &mut impl Rng) -> Result<Vec<Point>, DomainError> {
    let mut out = Vec::new();
    for xm in domain.enumerate_meta_set()? {
        let d = domain.dimension(&xm, TypeGroup::Categorical)? + domain.dimension(&xm, TypeGroup::Standard)?;
        out.extend(latin_hypercube(domain, &xm, d + 1, rng)?);
    }
    Ok(out)
}

/// Uniform point under `xm`: categorical values uniform over their scopes,
/// standard values uniform in normalized coordinates.
pub fn uniform_point(domain: &Domain, xm: &MetaComponent, rng: &mut impl Rng) -> Result<Point, DomainError> {
    let mut p = Point::new(xm.clone());
    for i in domain.acting_positions(xm, TypeGroup::Categorical)? {
        let s = &domain.variables()[i];
        p.categorical.insert(
            s.id.clone(),
            rng.gen_range(1..=s.scope.n_categories().expect("categorical")),
        );
    }
    let mut std = BTreeMap::new();
    for i in domain.acting_positions(xm, TypeGroup::Standard)? {
        let s = &domain.variables()[i];
        std.insert(
            s.id.clone(),
            s.scope.project(s.scope.denormalize(rng.gen_range(0.0..=1.0)), 1e-9),
        );
    }
    p.standard = std;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Problem;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn design_is_stratified_and_in_domain() {
        let problem = Problem::mlp();
        let d = &problem.domain;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let design = initial_design(d, &mut rng).unwrap();
        // (Adam,2): 1 + 6, (Adam,3): 1 + 7, (ASGD,2): 1 + 6, (ASGD,3): 1 + 7.
        assert_eq!(design.len(), 8 + 9 + 8 + 9);
        assert!(design.iter().all(|p| d.contains(p)));
        let adam2: Vec<&Point> = design[..8].iter().collect();
        let mut bins: Vec<usize> = adam2
            .iter()
            .map(|p| (d.variable("r").unwrap().scope.normalize(p.standard["r"]) * 8.0) as usize)
            .collect();
        bins.sort();
        assert_eq!(bins, (0..8).collect::<Vec<_>>());
    }
}
