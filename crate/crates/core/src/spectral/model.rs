use super::ModeIndex;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// The four catalogued dispersive models `(d_t + L) u + eps J(u^2) = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispersionModel {
    Kdv,
    Bbm,
    #[serde(rename = "kp-i")]
    KpI,
    #[serde(rename = "kp-ii")]
    KpII,
}

impl DispersionModel {
    pub const ALL: [DispersionModel; 4] = [
        DispersionModel::Kdv,
        DispersionModel::Bbm,
        DispersionModel::KpI,
        DispersionModel::KpII,
    ];

    pub fn dimension(&self) -> usize {
        match self {
            DispersionModel::Kdv | DispersionModel::Bbm => 1,
            DispersionModel::KpI | DispersionModel::KpII => 2,
        }
    }

    /// Integer tag used by the binary snapshot header.
    pub fn tag(&self) -> u32 {
        match self {
            DispersionModel::Kdv => 0,
            DispersionModel::Bbm => 1,
            DispersionModel::KpI => 2,
            DispersionModel::KpII => 3,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }

    /// Sobolev regularity the covariance expansion requires (`s >` this value).
    /// KdV inherits the KP-II threshold through `x_2`-independent data.
    pub fn required_regularity(&self) -> f64 {
        match self {
            DispersionModel::Bbm => 3.0 / 8.0,
            DispersionModel::Kdv | DispersionModel::KpII => 2.0,
            DispersionModel::KpI => 3.0,
        }
    }

    fn check(&self, n: ModeIndex) -> Result<()> {
        if n.dim() != self.dimension() {
            return Err(Error::DimensionMismatch {
                mode: n,
                expected: self.dimension(),
                got: n.dim(),
            });
        }
        if !n.is_active() {
            return Err(Error::InactiveMode(n));
        }
        Ok(())
    }

    /// Pulsation `omega(n)`.
    pub fn omega(&self, n: ModeIndex) -> Result<f64> {
        self.check(n)?;
        Ok(self.omega_raw(n))
    }

    /// Nonlinearity multiplier `phi(n)`.
    pub fn phi(&self, n: ModeIndex) -> Result<f64> {
        self.check(n)?;
        Ok(self.phi_raw(n))
    }

    /// `omega(k) + omega(l) - omega(n)` for a triad `k + l = n`.
    pub fn delta(&self, n: ModeIndex, k: ModeIndex, l: ModeIndex) -> Result<f64> {
        self.check(n)?;
        self.check(k)?;
        self.check(l)?;
        if k + l != n {
            return Err(Error::TriadMismatch { n, k, l });
        }
        Ok(self.delta_raw(n, k, l))
    }

    /// Unchecked pulsation; zero on the `n_1 = 0` hyperplane.
    #[inline]
    pub fn omega_raw(&self, n: ModeIndex) -> f64 {
        let n1 = n.first() as f64;
        if n.first() == 0 {
            return 0.0;
        }
        match self {
            DispersionModel::Kdv => n1 * n1 * n1,
            DispersionModel::Bbm => -n1 / (1.0 + n1 * n1),
            DispersionModel::KpI => {
                let n2 = n.second() as f64;
                n1 * n1 * n1 + n2 * n2 / n1
            }
            DispersionModel::KpII => {
                let n2 = n.second() as f64;
                n1 * n1 * n1 - n2 * n2 / n1
            }
        }
    }

    #[inline]
    pub fn phi_raw(&self, n: ModeIndex) -> f64 {
        let n1 = n.first() as f64;
        match self {
            DispersionModel::Bbm => n1 / (1.0 + n1 * n1),
            _ => n1,
        }
    }

    /// Unchecked divisor `omega(k) + omega(l) - omega(n)`.
    ///
    /// For a genuine triad with `n_1 k_1 l_1 != 0` it is evaluated from the
    /// factored integer form, so small divisors keep full relative accuracy.
    #[inline]
    pub fn delta_raw(&self, n: ModeIndex, k: ModeIndex, l: ModeIndex) -> f64 {
        let (n1, k1, l1) = (n.first() as i128, k.first() as i128, l.first() as i128);
        if n1 * k1 * l1 == 0 || k + l != n {
            return self.delta_direct(n, k, l);
        }
        let p = n1 * k1 * l1;
        match self {
            DispersionModel::Kdv => (-3 * p) as f64,
            DispersionModel::Bbm => {
                let num = -p * (3 + n1 * n1 - k1 * l1);
                let den = (1 + n1 * n1) * (1 + k1 * k1) * (1 + l1 * l1);
                num as f64 / den as f64
            }
            DispersionModel::KpI | DispersionModel::KpII => {
                let w = k1 * l.second() as i128 - k.second() as i128 * l1;
                let sign = if *self == DispersionModel::KpI { 1 } else { -1 };
                (-3 * p * p + sign * w * w) as f64 / p as f64
            }
        }
    }

    /// `omega(k) + omega(l) - omega(n)` straight from the pulsations.
    #[inline]
    pub fn delta_direct(&self, n: ModeIndex, k: ModeIndex, l: ModeIndex) -> f64 {
        self.omega_raw(k) + self.omega_raw(l) - self.omega_raw(n)
    }
}

impl fmt::Display for DispersionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DispersionModel::Kdv => "kdv",
            DispersionModel::Bbm => "bbm",
            DispersionModel::KpI => "kp-i",
            DispersionModel::KpII => "kp-ii",
        })
    }
}

impl FromStr for DispersionModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "kdv" => Ok(DispersionModel::Kdv),
            "bbm" => Ok(DispersionModel::Bbm),
            "kp-i" | "kpi" | "kp1" => Ok(DispersionModel::KpI),
            "kp-ii" | "kpii" | "kp2" => Ok(DispersionModel::KpII),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m1(n: i32) -> ModeIndex {
        ModeIndex::new_1d(n)
    }
    fn m2(a: i32, b: i32) -> ModeIndex {
        ModeIndex::new_2d(a, b)
    }

    #[test]
    fn omega_examples() {
        assert_eq!(DispersionModel::Kdv.omega(m1(2)).unwrap(), 8.0);
        assert_eq!(DispersionModel::Bbm.omega(m1(1)).unwrap(), -0.5);
        assert_eq!(DispersionModel::KpII.omega(m2(2, 1)).unwrap(), 7.5);
    }

    #[test]
    fn phi_examples() {
        assert_eq!(DispersionModel::KpI.phi(m2(3, -7)).unwrap(), 3.0);
        assert!((DispersionModel::Bbm.phi(m1(2)).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(DispersionModel::Kdv.phi(m1(-1)).unwrap(), -1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            DispersionModel::Kdv.omega(m2(1, 1)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            DispersionModel::KpI.omega(m2(0, 3)),
            Err(Error::InactiveMode(_))
        ));
        assert!(matches!(
            DispersionModel::Bbm.delta(m1(3), m1(1), m1(1)),
            Err(Error::TriadMismatch { .. })
        ));
        assert_eq!(DispersionModel::KpII.omega_raw(m2(0, 5)), 0.0);
        assert_eq!(DispersionModel::KpII.phi_raw(m2(0, 5)), 0.0);
    }

    #[test]
    fn delta_examples() {
        let bbm = DispersionModel::Bbm.delta(m1(3), m1(1), m1(2)).unwrap();
        assert!((bbm + 0.6).abs() < 1e-15, "{bbm}");
        let kp2 = DispersionModel::KpII
            .delta(m2(3, 0), m2(1, 0), m2(2, 0))
            .unwrap();
        assert_eq!(kp2, -18.0);
        let kp1 = DispersionModel::KpI
            .delta(m2(8, 15), m2(1, 14), m2(7, 1))
            .unwrap();
        assert_eq!(kp1, 1.0 / 56.0);
    }

    #[test]
    fn parses_tags() {
        for m in DispersionModel::ALL {
            assert_eq!(m.to_string().parse::<DispersionModel>().unwrap(), m);
            assert_eq!(DispersionModel::from_tag(m.tag()), Some(m));
        }
    }

    proptest! {
        #[test]
        fn omega_and_phi_are_odd(a in -40i32..40, b in -40i32..40) {
            prop_assume!(a != 0);
            for model in DispersionModel::ALL {
                let n = if model.dimension() == 1 { m1(a) } else { m2(a, b) };
                prop_assert_eq!(model.omega(-n).unwrap(), -model.omega(n).unwrap());
                prop_assert_eq!(model.phi(-n).unwrap(), -model.phi(n).unwrap());
            }
        }

        #[test]
        fn factored_divisor_matches_pulsations(k1 in -30i32..30, k2 in -30i32..30, l1 in -30i32..30, l2 in -30i32..30) {
            for model in DispersionModel::ALL {
                let (k, l) = if model.dimension() == 1 {
                    (m1(k1), m1(l1))
                } else {
                    (m2(k1, k2), m2(l1, l2))
                };
                let n = k + l;
                let scale = 1.0 + model.omega_raw(n).abs() + model.omega_raw(k).abs() + model.omega_raw(l).abs();
                let diff = model.delta_raw(n, k, l) - model.delta_direct(n, k, l);
                prop_assert!(diff.abs() <= 1e-14 * scale, "{} {} {}", model, k, l);
            }
        }
    }
}
