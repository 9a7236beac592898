//! Explicit constants of the finite-size bounds and the bound expressions.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ConstantName {
    /// `C(d, ε) ≤ C̃ d ε^{-5}`, edge isotropic local law.
    LocalLaw,
    /// `C_1 = 12 d^3 ε^{-2}`, overlap SDE error.
    OverlapSde,
    /// `C_2 = 5 d^2 ε^{-8}`, second-moment error.
    SecondMoment,
    /// `C_3 = 12 d^3 ε^{-10}`, fourth-moment error.
    FourthMoment,
    /// `C_4 = 8 d ε^{-6}`, decorrelation.
    Decorrelation,
    /// `C_5 = 10 d^2 ε^{-9}`, backward stability.
    BackwardStability,
    /// `C_d ≤ C̃ d^3 ε^{-10}`, final Berry–Esseen constant.
    BerryEsseen,
}

/// One row of the constants table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantEntry {
    pub name: ConstantName,
    pub symbol: &'static str,
    pub description: &'static str,
    pub formula: &'static str,
    /// Whether the formula is an upper bound carrying an unpinned prefactor.
    pub inequality: bool,
    coefficient: f64,
    d_power: i32,
    eps_power: i32,
}

impl ConstantEntry {
    fn value(&self, d: f64, epsilon: f64, prefactor: f64) -> f64 {
        let scale = if self.inequality { prefactor } else { 1.0 };
        scale * self.coefficient * d.powi(self.d_power) * epsilon.powi(-self.eps_power)
    }
}

pub const TABLE: [ConstantEntry; 7] = [
    ConstantEntry {
        name: ConstantName::LocalLaw,
        symbol: "C(d,eps)",
        description: "edge isotropic local law",
        formula: "<= Ct * d * eps^-5",
        inequality: true,
        coefficient: 1.0,
        d_power: 1,
        eps_power: 5,
    },
    ConstantEntry {
        name: ConstantName::OverlapSde,
        symbol: "C1",
        description: "overlap SDE error coefficient",
        formula: "12 * d^3 * eps^-2",
        inequality: false,
        coefficient: 12.0,
        d_power: 3,
        eps_power: 2,
    },
    ConstantEntry {
        name: ConstantName::SecondMoment,
        symbol: "C2",
        description: "second moment error bound",
        formula: "5 * d^2 * eps^-8",
        inequality: false,
        coefficient: 5.0,
        d_power: 2,
        eps_power: 8,
    },
    ConstantEntry {
        name: ConstantName::FourthMoment,
        symbol: "C3",
        description: "fourth moment error bound",
        formula: "12 * d^3 * eps^-10",
        inequality: false,
        coefficient: 12.0,
        d_power: 3,
        eps_power: 10,
    },
    ConstantEntry {
        name: ConstantName::Decorrelation,
        symbol: "C4",
        description: "decorrelation bound constant",
        formula: "8 * d * eps^-6",
        inequality: false,
        coefficient: 8.0,
        d_power: 1,
        eps_power: 6,
    },
    ConstantEntry {
        name: ConstantName::BackwardStability,
        symbol: "C5",
        description: "backward stability constant",
        formula: "10 * d^2 * eps^-9",
        inequality: false,
        coefficient: 10.0,
        d_power: 2,
        eps_power: 9,
    },
    ConstantEntry {
        name: ConstantName::BerryEsseen,
        symbol: "C_d",
        description: "final Berry-Esseen constant",
        formula: "<= Ct * d^3 * eps^-10",
        inequality: true,
        coefficient: 1.0,
        d_power: 3,
        eps_power: 10,
    },
];

pub fn entry(name: ConstantName) -> &'static ConstantEntry {
    TABLE.iter().find(|s| s.name == name).expect("every constant has a table row")
}

/// Absolute prefactors `C̃` of the two inequality-form constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prefactors {
    pub local_law: f64,
    pub berry_esseen: f64,
}

impl Default for Prefactors {
    fn default() -> Self {
        Self { local_law: 1.0, berry_esseen: 1.0 }
    }
}

impl Prefactors {
    /// The values implied by the worked example at `(d, ε) = (3, 0.01)`:
    /// `C(3, 0.01) ≤ 3e12` gives 100, `C_3 ≤ 27e20` gives 1.
    pub fn worked_example() -> Self {
        Self { local_law: 100.0, berry_esseen: 1.0 }
    }

    fn for_constant(&self, name: ConstantName) -> f64 {
        match name {
            ConstantName::LocalLaw => self.local_law,
            ConstantName::BerryEsseen => self.berry_esseen,
            _ => 1.0,
        }
    }
}

fn check_domain(d: usize, epsilon: f64) -> Result<()> {
    if d < 3 {
        return Err(invalid(format!("constants need d >= 3, got {d}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(invalid(format!("constants need 0 < eps < 1, got {epsilon}")));
    }
    Ok(())
}

pub fn evaluate_constant(name: ConstantName, d: usize, epsilon: f64, prefactors: &Prefactors) -> Result<f64> {
    check_domain(d, epsilon)?;
    Ok(entry(name).value(d as f64, epsilon, prefactors.for_constant(name)))
}

/// `C_d N^{-1/6+ε}` together with its pieces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundValue {
    pub n_factor: f64,
    pub constant: f64,
    pub bound: f64,
}

/// `N^{-1/6+ε}`.
pub fn smooth_n_factor(n: f64, epsilon: f64) -> f64 {
    n.powf(-1.0 / 6.0 + epsilon)
}

/// `N^{-5/36+ε}`, the rate for indicator test functions.
pub fn indicator_n_factor(n: f64, epsilon: f64) -> f64 {
    n.powf(-5.0 / 36.0 + epsilon)
}

/// The Berry–Esseen bound `C̃ d^3 ε^{-10} · N^{-1/6+ε}`. At `ε = 0` the
/// constant is infinite but the N-factor is still reported.
pub fn berry_esseen_bound(n: f64, d: usize, epsilon: f64, prefactor: f64) -> Result<BoundValue> {
    if !(n >= 2.0) {
        return Err(invalid(format!("bound needs N >= 2, got {n}")));
    }
    if d < 3 || !(0.0..1.0).contains(&epsilon) {
        return Err(invalid(format!("bound needs d >= 3 and 0 <= eps < 1, got d = {d}, eps = {epsilon}")));
    }
    let n_factor = smooth_n_factor(n, epsilon);
    let constant = entry(ConstantName::BerryEsseen).value(d as f64, epsilon, prefactor);
    Ok(BoundValue { n_factor, constant, bound: constant * n_factor })
}

/// Full evaluation of the constants table at one `(d, ε, N)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerReport {
    pub d: usize,
    pub epsilon: f64,
    pub n: f64,
    pub prefactors: Prefactors,
    pub constants: Vec<LedgerRow>,
    pub smooth_n_factor: f64,
    pub indicator_n_factor: f64,
    pub berry_esseen_bound: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub symbol: &'static str,
    pub description: &'static str,
    pub formula: &'static str,
    pub value: f64,
}

/// Worked-example claim for the final constant at `(3, 0.01)`.
pub const WORKED_EXAMPLE_FINAL_CONSTANT: f64 = 27e20;

pub fn ledger_report(d: usize, epsilon: f64, n: f64, prefactors: Prefactors) -> Result<LedgerReport> {
    check_domain(d, epsilon)?;
    let constants = TABLE
        .iter()
        .map(|s| LedgerRow {
            symbol: s.symbol,
            description: s.description,
            formula: s.formula,
            value: s.value(d as f64, epsilon, prefactors.for_constant(s.name)),
        })
        .collect();
    let bound = berry_esseen_bound(n, d, epsilon, prefactors.berry_esseen)?;
    let fourth = evaluate_constant(ConstantName::FourthMoment, 3, 0.01, &prefactors)?;
    let final_unit = evaluate_constant(ConstantName::BerryEsseen, 3, 0.01, &Prefactors::default())?;
    let notes = vec![format!(
        "worked example quotes C_3 <= {WORKED_EXAMPLE_FINAL_CONSTANT:.3e} at (d, eps) = (3, 0.01); \
         this equals the final constant C_d at unit prefactor ({final_unit:.3e}), while the \
         fourth-moment formula C3 = 12 d^3 eps^-10 gives {fourth:.3e}"
    )];
    Ok(LedgerReport {
        d,
        epsilon,
        n,
        prefactors,
        constants,
        smooth_n_factor: bound.n_factor,
        indicator_n_factor: indicator_n_factor(n, epsilon),
        berry_esseen_bound: bound.bound,
        notes,
    })
}

impl LedgerReport {
    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "d = {}, eps = {}, N = {}, prefactors: local law {}, Berry-Esseen {}",
            self.d, self.epsilon, self.n, self.prefactors.local_law, self.prefactors.berry_esseen
        );
        let _ = writeln!(out, "{:<10} {:<32} {:<24} {:>14}", "constant", "description", "formula", "value");
        for r in &self.constants {
            let _ = writeln!(out, "{:<10} {:<32} {:<24} {:>14.6e}", r.symbol, r.description, r.formula, r.value);
        }
        let _ = writeln!(out, "{:<67} {:>14.7}", "N^(-1/6+eps)", self.smooth_n_factor);
        let _ = writeln!(out, "{:<67} {:>14.7}", "N^(-5/36+eps)", self.indicator_n_factor);
        let _ = writeln!(out, "{:<67} {:>14.6e}", "C_d * N^(-1/6+eps)", self.berry_esseen_bound);
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(name: ConstantName, d: usize, eps: f64) -> f64 {
        evaluate_constant(name, d, eps, &Prefactors::default()).unwrap()
    }

    #[test]
    fn table_arithmetic() {
        assert!((value(ConstantName::OverlapSde, 3, 0.1) - 32_400.0).abs() < 1e-6);
        assert!((value(ConstantName::Decorrelation, 3, 0.1) - 2.4e7).abs() < 1e-3);
        let local = evaluate_constant(ConstantName::LocalLaw, 3, 0.01, &Prefactors::worked_example()).unwrap();
        assert!(local <= 3e12 * (1.0 + 1e-12));
    }

    #[test]
    fn domain_is_enforced() {
        assert!(evaluate_constant(ConstantName::OverlapSde, 2, 0.1, &Prefactors::default()).is_err());
        assert!(evaluate_constant(ConstantName::OverlapSde, 3, 1.0, &Prefactors::default()).is_err());
        assert!(evaluate_constant(ConstantName::OverlapSde, 3, 0.0, &Prefactors::default()).is_err());
    }

    #[test]
    fn n_factors() {
        let b = berry_esseen_bound(1e6, 3, 0.01, 1.0).unwrap();
        assert!((b.n_factor - 0.115).abs() < 0.001);
        let b0 = berry_esseen_bound(1e6, 3, 0.0, 1.0).unwrap();
        assert!((b0.n_factor - 0.1).abs() < 1e-15);
        assert!((indicator_n_factor(1e6, 0.0) - 0.1467799).abs() < 1e-7);
        assert!(berry_esseen_bound(1.0, 3, 0.01, 1.0).is_err());
    }

    #[test]
    fn report_flags_final_constant_discrepancy() {
        let r = ledger_report(3, 0.01, 1e6, Prefactors::default()).unwrap();
        assert_eq!(r.constants.len(), 7);
        assert!(r.notes[0].contains("3.240e22"), "{}", r.notes[0]);
        assert!(r.notes[0].contains("2.700e21"), "{}", r.notes[0]);
        assert!(r.to_text().contains("C4"));
    }
}
