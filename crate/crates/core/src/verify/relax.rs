use crate::prob::{ProbDist, TokenId};

/// Target distribution with mass moved onto one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedDist {
    pub base_q: ProbDist,
    pub boosted_token: TokenId,
    pub added_mass: f64,
    /// Tokens whose mass was transferred, when known. Empty for mass-only
    /// relaxations built by [`relax_q`].
    pub sources: Vec<TokenId>,
}

impl RelaxedDist {
    /// `q^R(boosted) = q(boosted) + added`, capped at 1.
    pub fn boosted_prob(&self) -> f64 {
        (self.base_q.prob(self.boosted_token) + self.added_mass).min(1.0)
    }

    /// Full relaxed distribution: every source token's mass moved onto the
    /// boosted token. `None` if the sources are unknown.
    pub fn transfer_dist(&self) -> Option<ProbDist> {
        if self.sources.is_empty() && self.added_mass > 0.0 {
            return None;
        }
        let mut mass = self.base_q.as_slice().to_vec();
        for s in &self.sources {
            mass[self.boosted_token.0] += mass[s.0];
            mass[s.0] = 0.0;
        }
        ProbDist::new(mass).ok()
    }
}

/// Adds the interchangeable-set mass, then the convergent-set mass, each only
/// if it fits in what is left of the budget. Returns the relaxed
/// distribution and the budget consumed.
pub fn relax_q(q: &ProbDist, candidate: TokenId, set_mass_i: f64, set_mass_c: f64, budget_left: f64) -> (RelaxedDist, f64) {
    let (added_i, added_c) = split_fit(set_mass_i, set_mass_c, budget_left);
    let added = added_i + added_c;
    (RelaxedDist { base_q: q.clone(), boosted_token: candidate, added_mass: added, sources: Vec::new() }, added)
}

/// Per-set all-or-nothing fitting, in I-then-C order.
pub(crate) fn split_fit(mass_i: f64, mass_c: f64, budget_left: f64) -> (f64, f64) {
    let mut left = budget_left;
    let mut take = |m: f64| {
        if m > 0.0 && m <= left {
            left -= m;
            m
        } else {
            0.0
        }
    };
    let i = take(mass_i);
    let c = take(mass_c);
    (i, c)
}

/// Token-level relaxation: `interchangeable` and `convergent` are the token
/// sets whose `q` mass may move onto `candidate`. Callers pass disjoint sets
/// that exclude `candidate`.
pub(crate) fn relax_tokens(
    q: &ProbDist,
    candidate: TokenId,
    interchangeable: &[TokenId],
    convergent: &[TokenId],
    budget_left: f64,
) -> (RelaxedDist, f64, f64) {
    let mass = |ts: &[TokenId]| ts.iter().map(|&t| q.prob(t)).sum::<f64>();
    let (mass_i, mass_c) = (mass(interchangeable), mass(convergent));
    let (added_i, added_c) = split_fit(mass_i, mass_c, budget_left);
    let mut sources = Vec::new();
    if added_i > 0.0 {
        sources.extend_from_slice(interchangeable);
    }
    if added_c > 0.0 {
        sources.extend_from_slice(convergent);
    }
    let relaxed = RelaxedDist { base_q: q.clone(), boosted_token: candidate, added_mass: added_i + added_c, sources };
    (relaxed, added_i, added_c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::tvd;

    fn q4() -> ProbDist {
        ProbDist::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap()
    }

    #[test]
    fn both_sets_fit() {
        let (r, used) = relax_q(&q4(), TokenId(0), 0.3, 0.2, 0.5);
        assert!((r.boosted_prob() - 0.9).abs() < 1e-15);
        assert!((used - 0.5).abs() < 1e-15);
    }

    #[test]
    fn second_set_skipped_when_it_overflows() {
        let (r, used) = relax_q(&q4(), TokenId(0), 0.4, 0.2, 0.5);
        assert!((r.boosted_prob() - 0.8).abs() < 1e-15);
        assert!((used - 0.4).abs() < 1e-15);
    }

    #[test]
    fn first_set_skipped_second_applied() {
        let (r, used) = relax_q(&q4(), TokenId(0), 0.6, 0.2, 0.5);
        assert!((r.boosted_prob() - 0.6).abs() < 1e-15);
        assert!((used - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_budget_is_identity() {
        let (r, used) = relax_q(&q4(), TokenId(0), 0.3, 0.2, 0.0);
        assert_eq!(r.boosted_prob(), 0.4);
        assert_eq!(used, 0.0);
    }

    #[test]
    fn boosted_prob_capped() {
        let q = ProbDist::new(vec![0.9, 0.1]).unwrap();
        let r = RelaxedDist { base_q: q, boosted_token: TokenId(0), added_mass: 0.2, sources: vec![] };
        assert_eq!(r.boosted_prob(), 1.0);
    }

    #[test]
    fn transfer_tvd_equals_added_mass() {
        let (r, ai, ac) = relax_tokens(&q4(), TokenId(1), &[TokenId(2)], &[TokenId(3)], 0.5);
        assert_eq!((ai, ac), (0.2, 0.1));
        let t = r.transfer_dist().unwrap();
        assert!((tvd(&r.base_q, &t).unwrap() - r.added_mass).abs() < 1e-15);
        assert!((t.prob(TokenId(1)) - r.boosted_prob()).abs() < 1e-15);
    }
}
