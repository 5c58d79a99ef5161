//! Enumeration guards.
//!
//! Every operation that materializes or sweeps an exponentially large set
//! checks the relevant count against a [`Budget`] first and fails with
//! [`Error::BudgetExceeded`] instead of allocating.

use crate::error::{Error, Result};

/// Environment variable overriding the point-count guard.
pub const BUDGET_ENV: &str = "REGULAB_BUDGET";

/// Default limit on `p^n`, the number of points of the ambient space.
pub const DEFAULT_MAX_POINTS: u128 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    /// Limit on the number of points of any enumerated space or table.
    pub max_points: u128,
    /// Limit on `p^(2n)`, the pair sweep used by the Gowers U^3 norm.
    pub max_pair_work: u128,
    /// Limit on the number of quadratic parts swept by bias computations.
    pub max_quadratic_parts: u128,
    /// Limit on the number of projective classes scanned by rank computations.
    pub max_rank_classes: u128,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_points: DEFAULT_MAX_POINTS,
            max_pair_work: 1 << 34,
            max_quadratic_parts: 1 << 20,
            max_rank_classes: 1 << 20,
        }
    }
}

impl Budget {
    /// Default budget with `max_points` taken from `REGULAB_BUDGET` when set.
    pub fn from_env() -> Result<Self> {
        let mut budget = Budget::default();
        if let Ok(raw) = std::env::var(BUDGET_ENV) {
            let max_points: u128 = raw.trim().parse().map_err(|_| {
                Error::InvalidParameter(format!("{BUDGET_ENV}={raw:?} is not a point count"))
            })?;
            budget.max_points = max_points;
        }
        Ok(budget)
    }

    pub fn with_max_points(mut self, max_points: u128) -> Self {
        self.max_points = max_points;
        self
    }

    pub fn check_points(&self, what: &'static str, required: u128) -> Result<()> {
        check(what, required, self.max_points)
    }

    pub fn check_pair_work(&self, what: &'static str, required: u128) -> Result<()> {
        check(what, required, self.max_pair_work)
    }

    pub fn check_quadratic_parts(&self, what: &'static str, required: u128) -> Result<()> {
        check(what, required, self.max_quadratic_parts)
    }

    pub fn check_rank_classes(&self, what: &'static str, required: u128) -> Result<()> {
        check(what, required, self.max_rank_classes)
    }
}

fn check(what: &'static str, required: u128, limit: u128) -> Result<()> {
    if required > limit {
        Err(Error::BudgetExceeded {
            what,
            required,
            limit,
        })
    } else {
        Ok(())
    }
}

/// `p^k` saturating at `u128::MAX`.
pub fn checked_pow(p: u32, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for _ in 0..k {
        acc = match acc.checked_mul(p as u128) {
            Some(v) => v,
            None => return u128::MAX,
        };
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_guard_is_two_to_the_24() {
        let b = Budget::default();
        assert!(b.check_points("points", 1 << 24).is_ok());
        assert!(matches!(
            b.check_points("points", (1 << 24) + 1),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn checked_pow_saturates() {
        assert_eq!(checked_pow(3, 4), 81);
        assert_eq!(checked_pow(2, 200), u128::MAX);
    }
}
