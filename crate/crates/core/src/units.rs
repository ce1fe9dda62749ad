//! Quantities written either as bare SI numbers or as `"<value> <unit>"`
//! strings, converted to SI on input.

use serde::{Deserialize, Deserializer};
use thiserror::Error;

/// Marker that lets callers recognize unit failures inside serde errors.
pub const UNIT_ERROR_TAG: &str = "unit error";

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unit error: cannot read `{text}` as {dimension}: {reason}")]
pub struct UnitError {
    pub text: String,
    pub dimension: &'static str,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Time,
    Mass,
    Temperature,
    Amount,
    Molality,
    Volume,
    Angle,
    Length,
    Area,
    SpecificHeat,
    Conductivity,
    HeatTransferCoefficient,
    Conductance,
    MolarEnergy,
    MolarMass,
    Density,
    FlowCoefficient,
    /// Pre-exponential factors and rate constants: units depend on order,
    /// so only bare numbers are accepted.
    RateConstant,
    Dimensionless,
}

impl Dimension {
    pub fn name(self) -> &'static str {
        match self {
            Dimension::Time => "time",
            Dimension::Mass => "mass",
            Dimension::Temperature => "temperature",
            Dimension::Amount => "amount",
            Dimension::Molality => "molality",
            Dimension::Volume => "volume",
            Dimension::Angle => "angle",
            Dimension::Length => "length",
            Dimension::Area => "area",
            Dimension::SpecificHeat => "specific heat",
            Dimension::Conductivity => "thermal conductivity",
            Dimension::HeatTransferCoefficient => "heat transfer coefficient",
            Dimension::Conductance => "thermal conductance",
            Dimension::MolarEnergy => "molar energy",
            Dimension::MolarMass => "molar mass",
            Dimension::Density => "density",
            Dimension::FlowCoefficient => "flow coefficient",
            Dimension::RateConstant => "rate constant",
            Dimension::Dimensionless => "number",
        }
    }

    /// `(symbol, factor, offset)`: SI value = value·factor + offset.
    fn units(self) -> &'static [(&'static str, f64, f64)] {
        match self {
            Dimension::Time => &[
                ("s", 1.0, 0.0),
                ("ms", 1e-3, 0.0),
                ("min", 60.0, 0.0),
                ("h", 3600.0, 0.0),
            ],
            Dimension::Mass => &[("kg", 1.0, 0.0), ("g", 1e-3, 0.0), ("mg", 1e-6, 0.0)],
            Dimension::Temperature => &[
                ("K", 1.0, 0.0),
                ("degC", 1.0, 273.15),
                ("°C", 1.0, 273.15),
                ("C", 1.0, 273.15),
            ],
            Dimension::Amount => &[
                ("mol", 1.0, 0.0),
                ("mmol", 1e-3, 0.0),
                ("umol", 1e-6, 0.0),
                ("µmol", 1e-6, 0.0),
            ],
            Dimension::Molality => &[("mol/kg", 1.0, 0.0), ("mmol/kg", 1e-3, 0.0)],
            Dimension::Volume => &[("uL", 1.0, 0.0), ("µL", 1.0, 0.0), ("mL", 1e3, 0.0), ("L", 1e6, 0.0)],
            Dimension::Angle => &[("rad", 1.0, 0.0), ("deg", std::f64::consts::PI / 180.0, 0.0)],
            Dimension::Length => &[("m", 1.0, 0.0), ("cm", 1e-2, 0.0), ("mm", 1e-3, 0.0)],
            Dimension::Area => &[("m2", 1.0, 0.0), ("cm2", 1e-4, 0.0), ("mm2", 1e-6, 0.0)],
            Dimension::SpecificHeat => &[("J/(kg*K)", 1.0, 0.0), ("J/kg/K", 1.0, 0.0)],
            Dimension::Conductivity => &[("W/(m*K)", 1.0, 0.0), ("W/m/K", 1.0, 0.0)],
            Dimension::HeatTransferCoefficient => &[("W/(m2*K)", 1.0, 0.0), ("W/m2/K", 1.0, 0.0)],
            Dimension::Conductance => &[("W/K", 1.0, 0.0)],
            Dimension::MolarEnergy => &[("J/mol", 1.0, 0.0), ("kJ/mol", 1e3, 0.0)],
            Dimension::MolarMass => &[("g/mol", 1.0, 0.0), ("kg/mol", 1e3, 0.0)],
            Dimension::Density => &[("kg/L", 1.0, 0.0), ("g/mL", 1.0, 0.0), ("kg/m3", 1e-3, 0.0)],
            Dimension::FlowCoefficient => &[("kg/(s*rad)", 1.0, 0.0), ("kg/s/rad", 1.0, 0.0)],
            Dimension::RateConstant | Dimension::Dimensionless => &[],
        }
    }
}

/// Volumes are kept in µL, the liquid handler's unit; everything else in SI.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, UnitError> {
    let err = |reason: &str| UnitError {
        text: text.to_string(),
        dimension: dim.name(),
        reason: reason.to_string(),
    };
    let trimmed = text.trim();
    let split = trimmed
        .find(|c: char| c.is_whitespace())
        .ok_or_else(|| err("expected `<number> <unit>`"))?;
    let (num, unit) = trimmed.split_at(split);
    let value: f64 = num.parse().map_err(|_| err("not a number"))?;
    if !value.is_finite() {
        return Err(err("not finite"));
    }
    let unit = unit.trim();
    let (_, factor, offset) = dim
        .units()
        .iter()
        .find(|(sym, _, _)| *sym == unit)
        .ok_or_else(|| err(&format!("unknown unit `{unit}`")))?;
    Ok(value * factor + offset)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Raw {
    Number(f64),
    Text(String),
}

fn read<'de, D: Deserializer<'de>>(d: D, dim: Dimension) -> Result<f64, D::Error> {
    match Raw::deserialize(d)? {
        Raw::Number(v) => Ok(v),
        Raw::Text(t) => parse_quantity(&t, dim).map_err(serde::de::Error::custom),
    }
}

fn read_opt<'de, D: Deserializer<'de>>(d: D, dim: Dimension) -> Result<Option<f64>, D::Error> {
    match Option::<Raw>::deserialize(d)? {
        None => Ok(None),
        Some(Raw::Number(v)) => Ok(Some(v)),
        Some(Raw::Text(t)) => parse_quantity(&t, dim).map(Some).map_err(serde::de::Error::custom),
    }
}

/// Reads an already-parsed JSON value as a quantity.
pub fn from_value(v: &serde_json::Value, dim: Dimension) -> Result<f64, UnitError> {
    match v {
        serde_json::Value::Number(n) => n.as_f64().ok_or_else(|| UnitError {
            text: n.to_string(),
            dimension: dim.name(),
            reason: "not representable".into(),
        }),
        serde_json::Value::String(s) => parse_quantity(s, dim),
        other => Err(UnitError {
            text: other.to_string(),
            dimension: dim.name(),
            reason: "expected a number or `<number> <unit>` string".into(),
        }),
    }
}

fn read_pair<'de, D: Deserializer<'de>>(d: D, dim: Dimension) -> Result<Option<(f64, f64)>, D::Error> {
    match Option::<[Raw; 2]>::deserialize(d)? {
        None => Ok(None),
        Some([a, b]) => {
            let conv = |r: Raw| match r {
                Raw::Number(v) => Ok(v),
                Raw::Text(t) => parse_quantity(&t, dim).map_err(serde::de::Error::custom),
            };
            Ok(Some((conv(a)?, conv(b)?)))
        }
    }
}

macro_rules! quantity_fns {
    ($($name:ident, $opt:ident => $dim:ident;)*) => {
        $(
            pub fn $name<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                read(d, Dimension::$dim)
            }

            pub fn $opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
                read_opt(d, Dimension::$dim)
            }
        )*
    };
}

/// `deserialize_with` helpers, one pair per dimension.
pub mod de {
    use super::*;

    quantity_fns! {
        time, time_opt => Time;
        mass, mass_opt => Mass;
        temperature, temperature_opt => Temperature;
        amount, amount_opt => Amount;
        molality, molality_opt => Molality;
        volume, volume_opt => Volume;
        angle, angle_opt => Angle;
        length, length_opt => Length;
        area, area_opt => Area;
        specific_heat, specific_heat_opt => SpecificHeat;
        conductivity, conductivity_opt => Conductivity;
        heat_transfer, heat_transfer_opt => HeatTransferCoefficient;
        conductance, conductance_opt => Conductance;
        molar_energy, molar_energy_opt => MolarEnergy;
        molar_mass, molar_mass_opt => MolarMass;
        density, density_opt => Density;
        flow_coefficient, flow_coefficient_opt => FlowCoefficient;
    }

    pub fn temperature_pair_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<(f64, f64)>, D::Error> {
        read_pair(d, Dimension::Temperature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert_eq!(parse_quantity("70 degC", Dimension::Temperature).unwrap(), 343.15);
        assert_eq!(parse_quantity("48 g", Dimension::Mass).unwrap(), 0.048);
        assert_eq!(parse_quantity("4 mmol", Dimension::Amount).unwrap(), 0.004);
        assert_eq!(parse_quantity("2 min", Dimension::Time).unwrap(), 120.0);
        assert_eq!(parse_quantity("0.1 mL", Dimension::Volume).unwrap(), 100.0);
        assert_eq!(parse_quantity("60 kJ/mol", Dimension::MolarEnergy).unwrap(), 60000.0);
    }

    #[test]
    fn rejects_unknown_units() {
        assert!(parse_quantity("3 furlongs", Dimension::Length).is_err());
        assert!(parse_quantity("48g", Dimension::Mass).is_err());
        assert!(parse_quantity("x kg", Dimension::Mass).is_err());
        assert!(parse_quantity("1 s", Dimension::Mass).is_err());
        assert!(parse_quantity("3 1/s", Dimension::RateConstant).is_err());
        let e = parse_quantity("1 s", Dimension::Mass).unwrap_err();
        assert!(e.to_string().starts_with(UNIT_ERROR_TAG));
    }
}
