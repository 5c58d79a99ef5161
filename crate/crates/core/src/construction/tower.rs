//! Tower-height integers: exact below 2^64, symbolic above.
//!
//! A large value is stored as `exp2^h(t)`, the h-fold iterated power of
//! two applied to a top `t` in `[64, 2^64)`. Keeping the top in that window
//! makes the form canonical, so values compare lexicographically by
//! `(h, t)`. Heights are themselves exact integers or a symbolic value
//! shifted by a small offset, which is what `twr` of a symbolic argument
//! needs.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;
use num_traits::ToPrimitive;

/// Offsets on symbolic heights stay far below the gap between two
/// distinct symbolic values (at least 2^63).
const MAX_SHIFT: i64 = 1 << 32;

/// Smallest allowed top of a symbolic value.
const MIN_TOP: u64 = 64;

/// `twr(4)`.
const TWR4: u64 = 65536;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TowerInt {
    Exact(u64),
    /// `exp2^height(top)` with `top ∈ [64, 2^64)` and `height ≥ 1`.
    Tower { height: Box<Height>, top: u64 },
}

/// Height of a symbolic tower.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Height {
    Exact(u128),
    /// `base + shift`, with `base` symbolic and `|shift| < 2^32`.
    Shifted { base: TowerInt, shift: i64 },
}

/// Three-valued outcome of a symbolic comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Proven,
    Refuted,
    Inconclusive,
}

impl Height {
    fn shifted(base: &TowerInt, shift: i64) -> Height {
        assert!(shift.abs() < MAX_SHIFT, "height offset {shift} too large");
        match base {
            TowerInt::Exact(v) => {
                let value = *v as i128 + shift as i128;
                assert!(value >= 0, "negative height");
                Height::Exact(value as u128)
            }
            TowerInt::Tower { height, top } => {
                if let Some(v) = small_value(height, *top) {
                    let value = v + shift as i128;
                    assert!(value >= 0, "negative height");
                    return Height::Exact(value as u128);
                }
                Height::Shifted {
                    base: base.clone(),
                    shift,
                }
            }
        }
    }

    fn plus(&self, delta: i64) -> Height {
        match self {
            Height::Exact(v) => {
                let value = *v as i128 + delta as i128;
                assert!(value >= 0, "negative height");
                Height::Exact(value as u128)
            }
            Height::Shifted { base, shift } => Height::shifted(base, shift + delta),
        }
    }

    fn is_one(&self) -> bool {
        matches!(self, Height::Exact(1))
    }
}

/// Exact value of `exp2^h(t)` when it is below 2^127.
fn small_value(height: &Height, top: u64) -> Option<i128> {
    match height {
        Height::Exact(1) if top < 127 => Some(1i128 << top),
        _ => None,
    }
}

impl Ord for Height {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Height::Exact(a), Height::Exact(b)) => a.cmp(b),
            // A shifted symbolic height is at least 2^127 − 2^32, above
            // every exact height that arises.
            (Height::Exact(_), Height::Shifted { .. }) => Ordering::Less,
            (Height::Shifted { .. }, Height::Exact(_)) => Ordering::Greater,
            (
                Height::Shifted { base: a, shift: da },
                Height::Shifted { base: b, shift: db },
            ) => a.cmp(b).then(da.cmp(db)),
        }
    }
}

impl PartialOrd for Height {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TowerInt {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (TowerInt::Exact(a), TowerInt::Exact(b)) => a.cmp(b),
            (TowerInt::Exact(_), TowerInt::Tower { .. }) => Ordering::Less,
            (TowerInt::Tower { .. }, TowerInt::Exact(_)) => Ordering::Greater,
            (
                TowerInt::Tower { height: ha, top: ta },
                TowerInt::Tower { height: hb, top: tb },
            ) => ha.cmp(hb).then(ta.cmp(tb)),
        }
    }
}

impl PartialOrd for TowerInt {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl From<u64> for TowerInt {
    fn from(v: u64) -> Self {
        TowerInt::Exact(v)
    }
}

impl TowerInt {
    fn tower(height: Height, top: u64) -> TowerInt {
        debug_assert!(top >= MIN_TOP);
        TowerInt::Tower {
            height: Box::new(height),
            top,
        }
    }

    pub fn exact(&self) -> Option<u64> {
        match self {
            TowerInt::Exact(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self, TowerInt::Tower { .. })
    }

    /// `2^self`.
    pub fn exp2(&self) -> TowerInt {
        match self {
            TowerInt::Exact(v) if *v < 64 => TowerInt::Exact(1 << v),
            TowerInt::Exact(v) => TowerInt::tower(Height::Exact(1), *v),
            TowerInt::Tower { height, top } => TowerInt::tower(height.plus(1), *top),
        }
    }

    /// `twr(self)`, with `twr(0) = 1` and `twr(k+1) = 2^twr(k)`.
    pub fn twr(&self) -> TowerInt {
        self.twr_offset(0)
    }

    /// `twr(self + offset)` for a small offset keeping the argument
    /// nonnegative.
    pub fn twr_offset(&self, offset: i64) -> TowerInt {
        match self {
            TowerInt::Exact(v) => {
                let k = *v as i128 + offset as i128;
                assert!(k >= 0, "twr of a negative argument");
                twr_exact(k as u128)
            }
            TowerInt::Tower { .. } => TowerInt::tower(Height::shifted(self, offset - 4), TWR4),
        }
    }

    /// `twr(k)` for an exact argument.
    pub fn twr_of(k: u64) -> TowerInt {
        twr_exact(k as u128)
    }

    /// `wwz(k)`, with `wwz(1) = 2` and `wwz(k+1) = twr(wwz(k))`.
    pub fn wwz(k: u64) -> TowerInt {
        assert!(k >= 1, "wwz is defined from 1");
        let mut value = TowerInt::Exact(2);
        for _ in 1..k {
            value = value.twr();
        }
        value
    }

    /// Exact value, when it has at most `max_bits` bits.
    pub fn to_biguint(&self, max_bits: u64) -> Option<BigUint> {
        match self {
            TowerInt::Exact(v) => Some(BigUint::from(*v)),
            TowerInt::Tower { height, top } => {
                let mut value = BigUint::from(*top);
                let Height::Exact(h) = **height else {
                    return None;
                };
                for _ in 0..h {
                    let e = value.to_u64()?;
                    if e >= max_bits {
                        return None;
                    }
                    value = BigUint::from(1u8) << e;
                }
                Some(value)
            }
        }
    }

    /// Lower bound for `self − k`.
    pub fn minus_lower(&self, k: u64) -> TowerInt {
        match self {
            TowerInt::Exact(v) => TowerInt::Exact(v.saturating_sub(k)),
            // x − k ≥ x/2 ≥ exp2^h(t − 1) once x ≥ 2^64 and k < 2^63.
            TowerInt::Tower { height, top } => lower_top(height, top - 1),
        }
    }

    /// Upper bound for `2^m · self`.
    fn times_pow2_upper(&self, m: u32) -> TowerInt {
        match self {
            TowerInt::Exact(v) => {
                let bits = 64 - v.leading_zeros() as u64;
                from_bits_upper(bits + m as u64)
            }
            TowerInt::Tower { height, top } => {
                if height.is_one() {
                    match top.checked_add(m as u64) {
                        Some(t) => TowerInt::tower(Height::Exact(1), t),
                        None => TowerInt::tower(Height::Exact(2), MIN_TOP),
                    }
                } else {
                    // 2^m·exp2^h(t) ≤ exp2^h(t+1) for h ≥ 2.
                    bump_top(height, *top)
                }
            }
        }
    }
}

fn bump_top(height: &Height, top: u64) -> TowerInt {
    match top.checked_add(1) {
        Some(t) => TowerInt::tower(height.clone(), t),
        None => TowerInt::tower(height.plus(1), MIN_TOP + 1),
    }
}

/// `exp2^h(t)` for a top that may have dropped below 64.
fn lower_top(height: &Height, top: u64) -> TowerInt {
    if top >= MIN_TOP {
        return TowerInt::tower(height.clone(), top);
    }
    // exp2^h(t) = exp2^{h−1}(2^t) with 2^t < 2^64.
    let value = 1u64 << top;
    match height {
        Height::Exact(1) => TowerInt::Exact(value),
        _ => {
            let lowered = height.plus(-1);
            if value >= MIN_TOP {
                TowerInt::tower(lowered, value)
            } else {
                lower_top(&lowered, value)
            }
        }
    }
}

/// Smallest symbolic value at least `2^bits`.
fn from_bits_upper(bits: u64) -> TowerInt {
    if bits < 64 {
        TowerInt::Exact(1 << bits)
    } else {
        TowerInt::tower(Height::Exact(1), bits)
    }
}

fn twr_exact(k: u128) -> TowerInt {
    match k {
        0 => TowerInt::Exact(1),
        1 => TowerInt::Exact(2),
        2 => TowerInt::Exact(4),
        3 => TowerInt::Exact(16),
        4 => TowerInt::Exact(TWR4),
        _ => TowerInt::tower(Height::Exact(k - 4), TWR4),
    }
}

impl fmt::Display for TowerInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TowerInt::Exact(v) => write!(f, "{v}"),
            TowerInt::Tower { height, top } => write!(f, "exp2^[{height}]({top})"),
        }
    }
}

impl fmt::Display for Height {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Height::Exact(h) => write!(f, "{h}"),
            Height::Shifted { base, shift } if *shift >= 0 => write!(f, "{base}+{shift}"),
            Height::Shifted { base, shift } => write!(f, "{base}{shift}"),
        }
    }
}

/// A value known to lie in `[lo, hi]`; `hi = None` means unbounded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TowerRange {
    pub lo: TowerInt,
    pub hi: Option<TowerInt>,
}

impl TowerRange {
    pub fn exact(v: TowerInt) -> TowerRange {
        TowerRange {
            lo: v.clone(),
            hi: Some(v),
        }
    }

    pub fn at_least(lo: TowerInt) -> TowerRange {
        TowerRange { lo, hi: None }
    }

    pub fn is_exact(&self) -> bool {
        self.hi.as_ref() == Some(&self.lo)
    }

    pub fn exact_value(&self) -> Option<&TowerInt> {
        if self.is_exact() {
            Some(&self.lo)
        } else {
            None
        }
    }

    /// Range for a big integer: exact below 2^64, else bracketed by bit length.
    pub fn from_biguint(v: &BigUint) -> TowerRange {
        if let Some(x) = v.to_u64() {
            return TowerRange::exact(TowerInt::Exact(x));
        }
        let bits = v.bits();
        TowerRange {
            lo: TowerInt::tower(Height::Exact(1), bits - 1),
            hi: Some(TowerInt::tower(Height::Exact(1), bits)),
        }
    }

    /// `⌊(num·x + add)/den⌋` for `x` in the range; requires `num ≥ den`.
    pub fn scaled_floor(&self, num: u64, add: u64, den: u64) -> TowerRange {
        assert!(num >= den && den > 0);
        let point = |x: &TowerInt| -> Option<TowerRange> {
            let v = x.exact()?;
            let value = (v as u128 * num as u128 + add as u128) / den as u128;
            Some(TowerRange::from_biguint(&BigUint::from(value)))
        };
        let lo = match point(&self.lo) {
            Some(r) => r.lo,
            None => self.lo.clone(),
        };
        let hi = self.hi.as_ref().map(|h| match point(h) {
            Some(r) => r.hi.expect("exact range"),
            None => {
                let factor = (num as u128 + add as u128).next_power_of_two().trailing_zeros();
                h.times_pow2_upper(factor)
            }
        });
        TowerRange { lo, hi }
    }

    /// Range of `self + other`.
    pub fn add(&self, other: &TowerRange) -> TowerRange {
        let lo = match (self.lo.exact(), other.lo.exact()) {
            (Some(a), Some(b)) => exact_or_bracket_lo(a as u128 + b as u128),
            _ => self.lo.clone().max(other.lo.clone()),
        };
        let hi = match (&self.hi, &other.hi) {
            (Some(a), Some(b)) => Some(match (a.exact(), b.exact()) {
                (Some(x), Some(y)) => exact_or_bracket_hi(x as u128 + y as u128),
                _ => a.clone().max(b.clone()).times_pow2_upper(1),
            }),
            _ => None,
        };
        TowerRange { lo, hi }
    }

    pub fn add_small(&self, k: u64) -> TowerRange {
        self.add(&TowerRange::exact(TowerInt::Exact(k)))
    }

    pub fn sub_small(&self, k: u64) -> TowerRange {
        TowerRange {
            lo: self.lo.minus_lower(k),
            hi: self.hi.as_ref().map(|h| match h.exact() {
                Some(v) => TowerInt::Exact(v.saturating_sub(k)),
                None => h.clone(),
            }),
        }
    }

    /// Range of `twr(x)`; `twr` is increasing.
    pub fn twr(&self) -> TowerRange {
        TowerRange {
            lo: self.lo.twr(),
            hi: self.hi.as_ref().map(TowerInt::twr),
        }
    }

    /// Whether every value in the range exceeds every value in `other`.
    pub fn greater_than(&self, other: &TowerRange) -> Verdict {
        compare(self, other, true)
    }

    /// Whether every value in the range is at least every value in `other`.
    pub fn at_least_as(&self, other: &TowerRange) -> Verdict {
        compare(self, other, false)
    }
}

fn compare(a: &TowerRange, b: &TowerRange, strict: bool) -> Verdict {
    if let Some(bh) = &b.hi {
        let proven = if strict { a.lo > *bh } else { a.lo >= *bh };
        if proven {
            return Verdict::Proven;
        }
    }
    if let Some(ah) = &a.hi {
        let refuted = if strict { *ah <= b.lo } else { *ah < b.lo };
        if refuted {
            return Verdict::Refuted;
        }
    }
    Verdict::Inconclusive
}

fn exact_or_bracket_lo(v: u128) -> TowerInt {
    TowerRange::from_biguint(&BigUint::from(v)).lo
}

fn exact_or_bracket_hi(v: u128) -> TowerInt {
    TowerRange::from_biguint(&BigUint::from(v))
        .hi
        .expect("bracket has an upper end")
}

impl fmt::Display for TowerRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.hi {
            Some(h) if *h == self.lo => write!(f, "{}", self.lo),
            Some(h) => write!(f, "[{}, {}]", self.lo, h),
            None => write!(f, "[{}, ∞)", self.lo),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(bits: u64) -> BigUint {
        BigUint::from(1u8) << bits
    }

    #[test]
    fn small_towers_are_exact() {
        assert_eq!(TowerInt::twr_of(0), TowerInt::Exact(1));
        assert_eq!(TowerInt::twr_of(3), TowerInt::Exact(16));
        assert_eq!(TowerInt::twr_of(4), TowerInt::Exact(65536));
        assert_eq!(TowerInt::wwz(1), TowerInt::Exact(2));
        assert_eq!(TowerInt::wwz(2), TowerInt::Exact(4));
        assert_eq!(TowerInt::wwz(3), TowerInt::Exact(65536));
    }

    #[test]
    fn twr_five_is_two_to_the_65536() {
        let t5 = TowerInt::twr_of(5);
        assert_eq!(t5.to_biguint(1 << 20), Some(big(65536)));
        assert_eq!(TowerInt::Exact(65536).exp2(), t5);
        assert_eq!(TowerInt::Exact(4).twr(), TowerInt::wwz(3));
    }

    #[test]
    fn comparisons_agree_with_big_integers() {
        let mut values = Vec::new();
        for e in [0u64, 1, 5, 40, 63, 64, 65, 100, 127, 128, 1000, 4000] {
            values.push(TowerInt::Exact(e.min(63)).exp2());
            values.push(TowerInt::Exact(e).exp2());
            values.push(TowerInt::Exact(e));
        }
        values.push(TowerInt::Exact(11).exp2().exp2());
        values.push(TowerInt::Exact(12).exp2().exp2());
        for a in &values {
            for b in &values {
                let (x, y) = (a.to_biguint(1 << 16).unwrap(), b.to_biguint(1 << 16).unwrap());
                assert_eq!(a.cmp(b), x.cmp(&y), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn normalized_tops_round_trip() {
        // 2^(2^70) seen as a height-two tower is stored with top 70.
        let v = TowerInt::Exact(70).exp2().exp2();
        assert_eq!(
            v,
            TowerInt::Tower {
                height: Box::new(Height::Exact(2)),
                top: 70
            }
        );
        let lowered = v.minus_lower(5);
        assert!(lowered < v);
        assert_eq!(
            TowerInt::Exact(64).exp2().minus_lower(3),
            TowerInt::Exact(1 << 63)
        );
    }

    #[test]
    fn symbolic_heights_order() {
        let a = TowerInt::twr_of(20);
        let b = TowerInt::twr_of(21);
        assert!(a < b);
        assert!(a.twr() < b.twr());
        assert!(a.twr() > TowerInt::twr_of(1_000_000));
        assert!(a.twr_offset(-3) < a.twr());
        assert!(a.twr().twr() > a.twr());
    }

    #[test]
    fn scaled_floor_brackets() {
        let exact = TowerRange::exact(TowerInt::Exact(3)).scaled_floor(320, 320, 16);
        assert_eq!(exact, TowerRange::exact(TowerInt::Exact(80)));
        let r = TowerRange::exact(TowerInt::Exact(100).exp2()).scaled_floor(320, 320, 16);
        let lo = r.lo.to_biguint(1 << 12).unwrap();
        let hi = r.hi.clone().unwrap().to_biguint(1 << 12).unwrap();
        let truth = (big(100) * 320u32 + 320u32) / 16u32;
        assert!(lo <= truth && truth <= hi);
    }

    #[test]
    fn biguint_brackets() {
        let v = big(200) + 7u32;
        let r = TowerRange::from_biguint(&v);
        assert!(r.lo.to_biguint(1 << 10).unwrap() <= v);
        assert!(v <= r.hi.unwrap().to_biguint(1 << 10).unwrap());
    }

    #[test]
    fn verdicts_are_three_valued() {
        let four = TowerRange::exact(TowerInt::Exact(4));
        let big = TowerRange::exact(TowerInt::twr_of(9));
        let vague = TowerRange::at_least(TowerInt::Exact(3));
        assert_eq!(big.greater_than(&four), Verdict::Proven);
        assert_eq!(four.greater_than(&big), Verdict::Refuted);
        assert_eq!(vague.greater_than(&four), Verdict::Inconclusive);
        assert_eq!(four.at_least_as(&four), Verdict::Proven);
    }
}
