//! Angular-momentum algebra for the D1 hyperfine couplings.
//!
//! Wigner symbols are evaluated with the Racah sums in exact rational
//! arithmetic; the only floating point step is the final square root.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// A non-negative or signed half-integer, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);

    pub const fn from_doubled(twice: i32) -> Self {
        HalfInt(twice)
    }

    pub const fn int(value: i32) -> Self {
        HalfInt(2 * value)
    }

    pub const fn doubled(self) -> i32 {
        self.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl From<i32> for HalfInt {
    fn from(value: i32) -> Self {
        HalfInt::int(value)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// A pair (j, m) with m in {-j, -j+1, ..., j}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AngularQuantum {
    j: HalfInt,
    m: HalfInt,
}

impl AngularQuantum {
    pub fn new(j: impl Into<HalfInt>, m: impl Into<HalfInt>) -> Result<Self> {
        let (j, m) = (j.into(), m.into());
        check_pair(j, m)?;
        Ok(AngularQuantum { j, m })
    }

    pub fn j(&self) -> HalfInt {
        self.j
    }

    pub fn m(&self) -> HalfInt {
        self.m
    }
}

fn check_j(j: HalfInt) -> Result<()> {
    if j.0 < 0 {
        return Err(Error::InvalidAngularMomentum(format!("negative j = {j}")));
    }
    Ok(())
}

fn check_pair(j: HalfInt, m: HalfInt) -> Result<()> {
    check_j(j)?;
    if (j.0 - m.0) % 2 != 0 {
        return Err(Error::InvalidAngularMomentum(format!(
            "j - |m| is not an integer (j = {j}, m = {m})"
        )));
    }
    if m.0.abs() > j.0 {
        return Err(Error::InvalidAngularMomentum(format!("|m| > j (j = {j}, m = {m})")));
    }
    Ok(())
}

fn factorial(n: i32) -> BigInt {
    debug_assert!(n >= 0);
    (2..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

// Arguments are doubled values; the sum must be even.
fn half(twice: i32) -> i32 {
    debug_assert!(twice % 2 == 0);
    twice / 2
}

fn triangle(a: HalfInt, b: HalfInt, c: HalfInt) -> bool {
    let (a, b, c) = (a.0, b.0, c.0);
    c >= (a - b).abs() && c <= a + b && (a + b + c) % 2 == 0
}

/// Triangle coefficient Δ(abc) = (a+b-c)!(a-b+c)!(-a+b+c)!/(a+b+c+1)!.
fn triangle_coefficient(a: HalfInt, b: HalfInt, c: HalfInt) -> BigRational {
    let (a, b, c) = (a.0, b.0, c.0);
    BigRational::new(
        factorial(half(a + b - c)) * factorial(half(a - b + c)) * factorial(half(-a + b + c)),
        factorial(half(a + b + c) + 1),
    )
}

/// sign * sqrt(radicand) * series, evaluated as one exact rational before the root.
fn finish(radicand: BigRational, series: BigRational) -> f64 {
    if series.is_zero() {
        return 0.0;
    }
    let negative = series.is_negative();
    let squared = radicand * &series * &series;
    let magnitude = squared.to_f64().unwrap_or(f64::NAN).sqrt();
    if negative {
        -magnitude
    } else {
        magnitude
    }
}

/// Wigner 3-j symbol (j1 j2 j3; m1 m2 m3).
pub fn wigner3j(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    m1: HalfInt,
    m2: HalfInt,
    m3: HalfInt,
) -> Result<f64> {
    check_pair(j1, m1)?;
    check_pair(j2, m2)?;
    check_pair(j3, m3)?;
    if m1.0 + m2.0 + m3.0 != 0 || !triangle(j1, j2, j3) {
        return Ok(0.0);
    }
    let (j1, j2, j3, m1, m2, m3) = (j1.0, j2.0, j3.0, m1.0, m2.0, m3.0);

    let radicand = triangle_coefficient(HalfInt(j1), HalfInt(j2), HalfInt(j3))
        * BigRational::from_integer(
            factorial(half(j1 + m1))
                * factorial(half(j1 - m1))
                * factorial(half(j2 + m2))
                * factorial(half(j2 - m2))
                * factorial(half(j3 + m3))
                * factorial(half(j3 - m3)),
        );

    // k runs over all values keeping every factorial argument non-negative.
    let k_min = 0.max(half(j2 - j3 - m1)).max(half(j1 - j3 + m2));
    let k_max = half(j1 + j2 - j3).min(half(j1 - m1)).min(half(j2 + m2));
    let mut series = BigRational::zero();
    for k in k_min..=k_max {
        let denom = factorial(k)
            * factorial(half(j3 - j2 + m1) + k)
            * factorial(half(j3 - j1 - m2) + k)
            * factorial(half(j1 + j2 - j3) - k)
            * factorial(half(j1 - m1) - k)
            * factorial(half(j2 + m2) - k);
        let term = BigRational::new(BigInt::one(), denom);
        if k % 2 == 0 {
            series += term;
        } else {
            series -= term;
        }
    }
    if half(j1 - j2 - m3).rem_euclid(2) == 1 {
        series = -series;
    }
    Ok(finish(radicand, series))
}

/// Wigner 6-j symbol {j1 j2 j3; j4 j5 j6}.
pub fn wigner6j(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    j4: HalfInt,
    j5: HalfInt,
    j6: HalfInt,
) -> Result<f64> {
    for j in [j1, j2, j3, j4, j5, j6] {
        check_j(j)?;
    }
    if !(triangle(j1, j2, j3) && triangle(j1, j5, j6) && triangle(j4, j2, j6) && triangle(j4, j5, j3))
    {
        return Ok(0.0);
    }
    let radicand = triangle_coefficient(j1, j2, j3)
        * triangle_coefficient(j1, j5, j6)
        * triangle_coefficient(j4, j2, j6)
        * triangle_coefficient(j4, j5, j3);

    let (j1, j2, j3, j4, j5, j6) = (j1.0, j2.0, j3.0, j4.0, j5.0, j6.0);
    let a = [
        half(j1 + j2 + j3),
        half(j1 + j5 + j6),
        half(j4 + j2 + j6),
        half(j4 + j5 + j3),
    ];
    let b = [
        half(j1 + j2 + j4 + j5),
        half(j2 + j3 + j5 + j6),
        half(j3 + j1 + j6 + j4),
    ];
    let t_min = *a.iter().max().unwrap();
    let t_max = *b.iter().min().unwrap();
    let mut series = BigRational::zero();
    for t in t_min..=t_max {
        let denom = a.iter().map(|&ai| factorial(t - ai)).product::<BigInt>()
            * b.iter().map(|&bi| factorial(bi - t)).product::<BigInt>();
        let term = BigRational::new(factorial(t + 1), denom);
        if t % 2 == 0 {
            series += term;
        } else {
            series -= term;
        }
    }
    Ok(finish(radicand, series))
}

/// Nuclear spin of 87Rb.
pub const NUCLEAR_SPIN: HalfInt = HalfInt::from_doubled(3);
/// Electronic angular momentum of both 5S1/2 and 5P1/2.
pub const ELECTRON_J: HalfInt = HalfInt::from_doubled(1);

/// Matrix element <F_e m_e| d_q |F_g m_g> of the D1 line with the reduced
/// element <J_e||d||J_g> set to one (Condon-Shortley phases).
///
/// Summed over q, m_g and both ground hyperfine levels, |element|^2 equals
/// 1/(2J_e+1) for every excited sublevel.
pub fn dipole_element(ground: AngularQuantum, excited: AngularQuantum, q: i32) -> Result<f64> {
    if !(-1..=1).contains(&q) {
        return Err(Error::InvalidAngularMomentum(format!("polarization index q = {q}")));
    }
    for level in [ground, excited] {
        if !level.j.is_integer() || !(1..=2).contains(&(level.j.0 / 2)) {
            return Err(Error::InvalidAngularMomentum(format!(
                "hyperfine F = {} is not a D1 level of 87Rb",
                level.j
            )));
        }
    }
    if excited.m.0 != ground.m.0 + 2 * q {
        return Err(Error::SelectionRule {
            m_ground: ground.m.value(),
            m_excited: excited.m.value(),
            q,
        });
    }
    let (fe, fg) = (excited.j, ground.j);
    let three_j = wigner3j(fe, HalfInt::int(1), fg, HalfInt(-excited.m.0), HalfInt::int(q), ground.m)?;
    let six_j = wigner6j(ELECTRON_J, fe, NUCLEAR_SPIN, fg, ELECTRON_J, HalfInt::int(1))?;
    let wigner_eckart_phase = parity(half(fe.0 - excited.m.0));
    let recoupling_phase = parity(half(fg.0 + ELECTRON_J.0 + 2 + NUCLEAR_SPIN.0));
    let recoupling = ((fe.0 + 1) as f64 * (fg.0 + 1) as f64).sqrt();
    Ok(wigner_eckart_phase * recoupling_phase * recoupling * six_j * three_j)
}

fn parity(n: i32) -> f64 {
    if n.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn h(twice: i32) -> HalfInt {
        HalfInt::from_doubled(twice)
    }

    fn w3(j: [i32; 3], m: [i32; 3]) -> f64 {
        wigner3j(h(j[0]), h(j[1]), h(j[2]), h(m[0]), h(m[1]), h(m[2])).unwrap()
    }

    #[test]
    fn three_j_reference_values() {
        assert_abs_diff_eq!(w3([2, 2, 0], [0, 0, 0]), -1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(w3([2, 2, 4], [2, 2, -4]), 1.0 / 5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(w3([2, 2, 2], [2, 2, 0]), 0.0);
        // half-integer case: (1/2 1/2 1; 1/2 -1/2 0) = 1/sqrt(6)
        assert_abs_diff_eq!(w3([1, 1, 2], [1, -1, 0]), 1.0 / 6f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn six_j_reference_values() {
        let v = wigner6j(h(1), h(1), h(2), h(1), h(1), h(2)).unwrap();
        assert_abs_diff_eq!(v, 1.0 / 6.0, epsilon = 1e-15);
        // {0 j j; k j j} = (-1)^(2j+k) / ((2j+1)(2k+1))^(1/2)
        let v = wigner6j(h(0), h(2), h(2), h(2), h(2), h(2)).unwrap();
        assert_abs_diff_eq!(v, -1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(wigner6j(h(4), h(4), h(10), h(4), h(4), h(4)).unwrap(), 0.0);
    }

    #[test]
    fn rejects_invalid_arguments() {
        assert!(wigner3j(h(-2), h(2), h(2), h(0), h(0), h(0)).is_err());
        assert!(wigner3j(h(2), h(2), h(2), h(1), h(0), h(-1)).is_err());
        assert!(wigner3j(h(2), h(2), h(2), h(4), h(0), h(-4)).is_err());
        assert!(wigner6j(h(2), h(-2), h(2), h(2), h(2), h(2)).is_err());
        assert!(AngularQuantum::new(h(3), h(0)).is_err());
    }

    /// Independent route: 6-j symbol from its definition as a contraction
    /// of four 3-j symbols.
    fn six_j_from_three_j(j: [i32; 6]) -> f64 {
        let [j1, j2, j3, j4, j5, j6] = j;
        let ms = |jj: i32| (-jj..=jj).step_by(2);
        let mut sum = 0.0;
        for m1 in ms(j1) {
            for m2 in ms(j2) {
                let m3 = -m1 - m2;
                if m3.abs() > j3 {
                    continue;
                }
                for m4 in ms(j4) {
                    for m5 in ms(j5) {
                        for m6 in ms(j6) {
                            let phase = (j1 - m1 + j2 - m2 + j3 - m3 + j4 - m4 + j5 - m5 + j6 - m6) / 2;
                            let a = w3([j1, j2, j3], [-m1, -m2, -m3]);
                            let b = w3([j1, j5, j6], [m1, -m5, m6]);
                            let c = w3([j4, j2, j6], [m4, m2, -m6]);
                            let d = w3([j4, j5, j3], [-m4, m5, m3]);
                            let sign = if phase.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                            sum += sign * a * b * c * d;
                        }
                    }
                }
            }
        }
        sum
    }

    #[test]
    fn six_j_matches_three_j_contraction() {
        let cases = [
            [1, 1, 2, 1, 1, 2],
            [2, 2, 2, 2, 2, 2],
            [1, 2, 3, 3, 4, 1],
            [4, 2, 2, 1, 3, 3],
            [3, 1, 2, 1, 3, 2],
            [1, 2, 3, 4, 1, 2],
            [4, 4, 2, 3, 3, 1],
        ];
        for j in cases {
            let direct = wigner6j(h(j[0]), h(j[1]), h(j[2]), h(j[3]), h(j[4]), h(j[5])).unwrap();
            assert_abs_diff_eq!(direct, six_j_from_three_j(j), epsilon = 1e-12);
        }
    }

    #[test]
    fn three_j_orthogonality() {
        for (j1, j2) in [(2, 2), (1, 3), (2, 4), (3, 3)] {
            for j3 in ((j1 - j2 as i32).abs()..=j1 + j2).step_by(2) {
                for j3p in ((j1 - j2 as i32).abs()..=j1 + j2).step_by(2) {
                    for m3 in (-j3.min(j3p)..=j3.min(j3p)).step_by(2) {
                        let mut sum = 0.0;
                        for m1 in (-j1..=j1).step_by(2) {
                            let m2 = -m1 - m3;
                            if m2.abs() > j2 {
                                continue;
                            }
                            sum += (j3 + 1) as f64
                                * w3([j1, j2, j3], [m1, m2, m3])
                                * w3([j1, j2, j3p], [m1, m2, m3]);
                        }
                        let expected = if j3 == j3p { 1.0 } else { 0.0 };
                        assert_abs_diff_eq!(sum, expected, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    fn valid_three_j() -> impl Strategy<Value = ([i32; 3], [i32; 3])> {
        (0..6i32, 0..6i32, 0..12i32)
            .prop_flat_map(|(j1, j2, pick)| {
                let lo = (j1 - j2).abs();
                let count = (j1 + j2 - lo) / 2 + 1;
                let j3 = lo + 2 * (pick % count);
                let m1 = (0..=j1).prop_map(move |k| -j1 + 2 * k);
                let m2 = (0..=j2).prop_map(move |k| -j2 + 2 * k);
                (Just([j1, j2, j3]), m1, m2)
            })
            .prop_filter_map("m3 out of range", |(j, m1, m2)| {
                let m3 = -m1 - m2;
                (m3.abs() <= j[2] && (j[2] - m3) % 2 == 0).then_some((j, [m1, m2, m3]))
            })
    }

    proptest! {
        #[test]
        fn three_j_permutation_symmetry((j, m) in valid_three_j()) {
            let base = w3(j, m);
            let cyclic = w3([j[1], j[2], j[0]], [m[1], m[2], m[0]]);
            prop_assert!((base - cyclic).abs() < 1e-12);
            let sign = if ((j[0] + j[1] + j[2]) / 2) % 2 == 0 { 1.0 } else { -1.0 };
            let swapped = w3([j[1], j[0], j[2]], [m[1], m[0], m[2]]);
            prop_assert!((sign * base - swapped).abs() < 1e-12);
            let flipped = w3(j, [-m[0], -m[1], -m[2]]);
            prop_assert!((sign * base - flipped).abs() < 1e-12);
        }
    }

    fn level(f: i32, m: i32) -> AngularQuantum {
        AngularQuantum::new(HalfInt::int(f), HalfInt::int(m)).unwrap()
    }

    #[test]
    fn dipole_reflection_and_forbidden_line() {
        let up = dipole_element(level(2, 2), level(2, 2), 0).unwrap();
        let down = dipole_element(level(2, -2), level(2, -2), 0).unwrap();
        assert!(up.abs() > 0.1);
        assert_abs_diff_eq!(up, -down, epsilon = 1e-15);
        assert_eq!(dipole_element(level(2, 0), level(2, 0), 0).unwrap(), 0.0);
        assert!(dipole_element(level(2, 0), level(1, 0), 0).unwrap().abs() > 0.1);
    }

    #[test]
    fn dipole_rejects_selection_rule_violation() {
        let err = dipole_element(level(2, 0), level(1, 1), 0).unwrap_err();
        assert!(matches!(err, Error::SelectionRule { .. }));
        assert!(dipole_element(level(3, 0), level(1, 0), 0).is_err());
    }

    #[test]
    fn excited_sublevels_share_one_total_decay() {
        for fe in [1, 2] {
            for me in -fe..=fe {
                let mut total = 0.0;
                let mut to_upper_ground = 0.0;
                for fg in [1, 2] {
                    for q in -1..=1 {
                        let mg = me - q;
                        if mg.abs() > fg {
                            continue;
                        }
                        let d = dipole_element(level(fg, mg), level(fe, me), q).unwrap();
                        total += d * d;
                        if fg == 2 {
                            to_upper_ground += d * d;
                        }
                    }
                }
                assert_abs_diff_eq!(total, 0.5, epsilon = 1e-14);
                // branching into F_g = 2: 5/6 from F_e = 1, 1/2 from F_e = 2
                let branching = if fe == 1 { 5.0 / 6.0 } else { 0.5 };
                assert_abs_diff_eq!(to_upper_ground / total, branching, epsilon = 1e-14);
            }
        }
    }
}
