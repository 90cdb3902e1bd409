//! DBP formation models: the built-in regression equations and
//! operator-supplied formulas.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envdata::EnvRecord;
use crate::formula::{parse_formula, Formula, FormulaError};

/// pH exponent of the Sohn HAA9 model as applied in practice. The
/// alternative published sign (+0.799) is available as an override.
pub const SOHN_HAA9_PH_EXPONENT: f64 = -0.799;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DbpError {
    #[error("missing variable {0}")]
    MissingVariable(String),
    #[error("variable {variable} = {value} must be positive")]
    NonPositiveBase { variable: String, value: f64 },
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("unknown model {0}")]
    UnknownModel(String),
}

/// A DBP family. Serialized as `THM`, `HAA`, `HAN`, or the custom label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Thm,
    Haa,
    Han,
    Custom(String),
}

impl Family {
    pub fn label(&self) -> &str {
        match self {
            Family::Thm => "THM",
            Family::Haa => "HAA",
            Family::Han => "HAN",
            Family::Custom(s) => s,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Family {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "THM" | "THMS" => Family::Thm,
            "HAA" | "HAAS" | "HAA9" => Family::Haa,
            "HAN" | "HANS" => Family::Han,
            _ => Family::Custom(s.to_string()),
        })
    }
}

impl Serialize for Family {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Family {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(s.parse().unwrap_or_else(|e| match e {}))
    }
}

/// Regulatory threshold presets, µg/L.
pub mod thresholds {
    pub const THM_EU: f64 = 100.0;
    pub const THM_US: f64 = 80.0;
    pub const HAA_US: f64 = 60.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinModel {
    SohnThm,
    SohnHaa9,
    UyakThm,
    OkojiHaa9,
    HongHans,
}

impl BuiltinModel {
    pub const ALL: [BuiltinModel; 5] = [
        BuiltinModel::SohnThm,
        BuiltinModel::SohnHaa9,
        BuiltinModel::UyakThm,
        BuiltinModel::OkojiHaa9,
        BuiltinModel::HongHans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinModel::SohnThm => "sohn_thm",
            BuiltinModel::SohnHaa9 => "sohn_haa9",
            BuiltinModel::UyakThm => "uyak_thm",
            BuiltinModel::OkojiHaa9 => "okoji_haa9",
            BuiltinModel::HongHans => "hong_hans",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

fn var(r: &EnvRecord, name: &str) -> Result<f64, DbpError> {
    r.get(name).ok_or_else(|| DbpError::MissingVariable(name.to_string()))
}

/// `coeff · Π xᵢ^eᵢ · time^e_t` with time ≥ 0 and every xᵢ > 0, or
/// xᵢ = 0 under a positive exponent.
fn power_law(coeff: f64, factors: &[(&str, f64, f64)], time: f64, time_exp: f64) -> Result<f64, DbpError> {
    let mut value = coeff;
    for &(name, x, e) in factors {
        if !(x > 0.0 || (x == 0.0 && e > 0.0)) {
            return Err(DbpError::NonPositiveBase { variable: name.to_string(), value: x });
        }
        value *= x.powf(e);
    }
    if !(time >= 0.0) {
        return Err(DbpError::NonPositiveBase { variable: "time".into(), value: time });
    }
    Ok(value * time.powf(time_exp))
}

/// Sohn THM: 0.04121·TOC^1.098·Cl₂^0.152·Br^0.068·Temp^0.609·pH^1.601·time^0.263.
pub fn eval_sohn_thm(r: &EnvRecord, time: f64) -> Result<f64, DbpError> {
    power_law(
        0.04121,
        &[
            ("TOC", var(r, "TOC")?, 1.098),
            ("Chlorine", var(r, "Chlorine")?, 0.152),
            ("BR", var(r, "BR")?, 0.068),
            ("Temperature", var(r, "Temperature")?, 0.609),
            ("pH", var(r, "pH")?, 1.601),
        ],
        time,
        0.263,
    )
}

/// Sohn HAA9 with the default pH exponent.
pub fn eval_sohn_haa9(r: &EnvRecord, time: f64) -> Result<f64, DbpError> {
    eval_sohn_haa9_with(r, time, SOHN_HAA9_PH_EXPONENT)
}

/// Sohn HAA9: 30.0·TOC^0.997·Cl₂^0.278·Br^−0.138·Temp^0.341·pH^e·time^0.169.
pub fn eval_sohn_haa9_with(r: &EnvRecord, time: f64, ph_exponent: f64) -> Result<f64, DbpError> {
    power_law(
        30.0,
        &[
            ("TOC", var(r, "TOC")?, 0.997),
            ("Chlorine", var(r, "Chlorine")?, 0.278),
            ("BR", var(r, "BR")?, -0.138),
            ("Temperature", var(r, "Temperature")?, 0.341),
            ("pH", var(r, "pH")?, ph_exponent),
        ],
        time,
        0.169,
    )
}

pub fn eval_builtin(model: BuiltinModel, r: &EnvRecord, time: f64) -> Result<f64, DbpError> {
    match model {
        BuiltinModel::SohnThm => eval_sohn_thm(r, time),
        BuiltinModel::SohnHaa9 => eval_sohn_haa9(r, time),
        BuiltinModel::UyakThm => power_law(
            10f64.powf(-0.038),
            &[
                ("Chlorine", var(r, "Chlorine")?, 0.654),
                ("pH", var(r, "pH")?, 1.322),
                ("SUVA", var(r, "SUVA")?, 0.712),
            ],
            time,
            0.174,
        ),
        BuiltinModel::OkojiHaa9 => {
            let t = var(r, "Temperature")?;
            let ph = var(r, "pH")?;
            let uva = var(r, "UVA254")?;
            let cl = var(r, "Chlorine")?;
            let no2 = var(r, "NO2_N")?;
            let doc = var(r, "DOC")?;
            let nh4 = var(r, "NH4_N")?;
            let v = -345.0 + 1.695 * t + 93.1 * ph - 226.0 * uva + 4.95 * cl + 5.66 * no2 + 16.6 * doc
                + 0.325 * nh4
                - 0.0693 * t * t
                - 6.41 * ph * ph
                + 190821.0 * uva * uva
                - 1.73 * no2 * no2
                - 3.77 * doc * doc
                - 0.01663 * nh4 * nh4;
            Ok(v.max(0.0))
        }
        BuiltinModel::HongHans => {
            let doc = var(r, "DOC")?;
            let cl = var(r, "Chlorine")?;
            if !(doc > 0.0) {
                return Err(DbpError::NonPositiveBase { variable: "DOC".into(), value: doc });
            }
            power_law(
                10f64.powf(-1.065),
                &[
                    ("BR", var(r, "BR")?, 0.346),
                    ("DOC", doc, 0.369),
                    ("Chlorine/DOC", cl / doc, 0.520),
                    ("Temperature", var(r, "Temperature")?, 0.373),
                ],
                time,
                0.238,
            )
        }
    }
}

/// A model bound to one DBP family.
#[derive(Debug, Clone, PartialEq)]
pub enum DbpModel {
    Builtin(BuiltinModel),
    /// Sohn HAA9 with an explicit pH exponent.
    SohnHaa9Ph(f64),
    Custom(Formula),
}

impl DbpModel {
    /// Built-in name, `sohn_haa9(pH^E)`, or a formula source.
    pub fn parse(spec: &str) -> Result<Self, DbpError> {
        let spec = spec.trim();
        if let Some(m) = BuiltinModel::from_name(spec) {
            return Ok(DbpModel::Builtin(m));
        }
        if let Some(e) = spec.strip_prefix("sohn_haa9(pH^").and_then(|r| r.strip_suffix(')')) {
            let e: f64 = e.trim().parse().map_err(|_| DbpError::UnknownModel(spec.to_string()))?;
            return Ok(DbpModel::SohnHaa9Ph(e));
        }
        Ok(DbpModel::Custom(parse_formula(spec)?))
    }

    pub fn describe(&self) -> String {
        match self {
            DbpModel::Builtin(m) => m.name().to_string(),
            DbpModel::SohnHaa9Ph(e) => format!("sohn_haa9(pH^{e})"),
            DbpModel::Custom(f) => f.source.clone(),
        }
    }

    /// Concentration in µg/L for a record and reaction time in hours.
    /// Custom formulas see every record variable plus `time`.
    pub fn evaluate(&self, r: &EnvRecord, time: f64) -> Result<f64, DbpError> {
        match self {
            DbpModel::Builtin(m) => eval_builtin(*m, r, time),
            DbpModel::SohnHaa9Ph(e) => eval_sohn_haa9_with(r, time, *e),
            DbpModel::Custom(f) => {
                let lookup = |name: &str| if name == "time" { Some(time) } else { r.get(name) };
                Ok(f.eval_with(&lookup)?)
            }
        }
    }

    pub fn default_for(family: &Family) -> Option<Self> {
        match family {
            Family::Thm => Some(DbpModel::Builtin(BuiltinModel::SohnThm)),
            Family::Haa => Some(DbpModel::Builtin(BuiltinModel::SohnHaa9)),
            Family::Han => Some(DbpModel::Builtin(BuiltinModel::HongHans)),
            Family::Custom(_) => None,
        }
    }
}

/// Per-family model set.
pub type ModelSet = BTreeMap<Family, DbpModel>;

#[cfg(test)]
mod tests {
    use super::*;

    fn record(values: &[(&str, f64)]) -> EnvRecord {
        let mut r = EnvRecord::empty("N1", crate::envdata::parse_timestamp("20-10-24 0:00").unwrap());
        for (k, v) in values {
            r.set(k, *v);
        }
        r
    }

    fn unit_record() -> EnvRecord {
        record(&[("TOC", 1.0), ("Chlorine", 1.0), ("BR", 1.0), ("Temperature", 1.0), ("pH", 1.0)])
    }

    #[test]
    fn zero_time_gives_zero() {
        let r = unit_record();
        assert_eq!(eval_sohn_thm(&r, 0.0).unwrap(), 0.0);
        assert_eq!(eval_sohn_haa9(&r, 0.0).unwrap(), 0.0);
        let uyak = record(&[("Chlorine", 1.0), ("pH", 7.0), ("SUVA", 2.0)]);
        assert_eq!(eval_builtin(BuiltinModel::UyakThm, &uyak, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn unit_inputs_expose_coefficients() {
        let r = unit_record();
        assert_eq!(eval_sohn_haa9(&r, 1.0).unwrap(), 30.0);
        assert_eq!(eval_sohn_thm(&r, 1.0).unwrap(), 0.04121);
        let hong = record(&[("BR", 1.0), ("DOC", 1.0), ("Chlorine", 1.0), ("Temperature", 1.0)]);
        let v = eval_builtin(BuiltinModel::HongHans, &hong, 1.0).unwrap();
        assert!((v - 0.086099).abs() < 1e-6, "{v}");
    }

    #[test]
    fn okoji_clamps_negative_polynomial() {
        let r = record(&[
            ("Temperature", 0.0),
            ("pH", 0.0),
            ("UVA254", 0.0),
            ("Chlorine", 0.0),
            ("NO2_N", 0.0),
            ("DOC", 0.0),
            ("NH4_N", 0.0),
        ]);
        assert_eq!(eval_builtin(BuiltinModel::OkojiHaa9, &r, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn missing_and_nonpositive_inputs() {
        let r = record(&[("TOC", 1.0)]);
        assert_eq!(eval_sohn_thm(&r, 1.0).unwrap_err(), DbpError::MissingVariable("Chlorine".into()));
        let mut r = unit_record();
        r.set("BR", 0.0);
        assert!(matches!(eval_sohn_haa9(&r, 1.0), Err(DbpError::NonPositiveBase { .. })));
        let mut r = unit_record();
        r.set("Chlorine", 0.0);
        assert_eq!(eval_sohn_thm(&r, 1.0).unwrap(), 0.0);
        r.set("Chlorine", -0.1);
        assert!(eval_sohn_thm(&r, 1.0).is_err());
        let r = record(&[("Chlorine", 1.0), ("pH", 7.0)]);
        assert_eq!(
            eval_builtin(BuiltinModel::UyakThm, &r, 1.0).unwrap_err(),
            DbpError::MissingVariable("SUVA".into())
        );
    }

    #[test]
    fn suva_is_derived_from_uva_and_doc() {
        let r = record(&[("Chlorine", 1.0), ("pH", 1.0), ("UVA254", 0.05), ("DOC", 2.5)]);
        let v = eval_builtin(BuiltinModel::UyakThm, &r, 1.0).unwrap();
        let expected = 10f64.powf(-0.038) * 2.0f64.powf(0.712);
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn toc_doubling_scales_by_power() {
        let mut r = unit_record();
        r.set("TOC", 3.0);
        let a = eval_sohn_thm(&r, 12.0).unwrap();
        r.set("TOC", 6.0);
        let b = eval_sohn_thm(&r, 12.0).unwrap();
        assert!((b / a - 2f64.powf(1.098)).abs() < 1e-12);
    }

    #[test]
    fn model_specs() {
        assert_eq!(DbpModel::parse("sohn_thm").unwrap(), DbpModel::Builtin(BuiltinModel::SohnThm));
        let custom = DbpModel::parse("2 * TOC * time").unwrap();
        let r = record(&[("TOC", 4.0)]);
        assert_eq!(custom.evaluate(&r, 3.0).unwrap(), 24.0);
        assert!(matches!(DbpModel::parse("2 *"), Err(DbpError::Formula(_))));
        let flipped = DbpModel::SohnHaa9Ph(0.799);
        let mut r = unit_record();
        r.set("pH", 2.0);
        let v = flipped.evaluate(&r, 1.0).unwrap();
        assert!((v - 30.0 * 2f64.powf(0.799)).abs() < 1e-12);
        assert_eq!(DbpModel::parse(&flipped.describe()).unwrap(), flipped);
    }

    #[test]
    fn family_labels() {
        assert_eq!("thm".parse::<Family>().unwrap(), Family::Thm);
        assert_eq!("HAA9".parse::<Family>().unwrap(), Family::Haa);
        assert_eq!("NDMA".parse::<Family>().unwrap(), Family::Custom("NDMA".into()));
        assert_eq!(serde_json::to_string(&Family::Haa).unwrap(), "\"HAA\"");
    }
}
