//! The Mono Lake lake/aquifer water balance in three mutually consistent
//! forms: an HFGT system model, an HFNMCF specification with device
//! models, and a stock-flow model for the independent engine.
//!
//! Volumes are in KAF, flows in KAF/yr, precipitation in ft/yr and areas
//! in kilo-acres. Temperature is an index (the evaporation regression
//! gives `η_T = 1` at 18).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::parse_expr;
use crate::hfnmcf::{
    BoundaryPin, Condition, DeviceBlock, DeviceModel, DeviceParams, DeviceSet, HfnmcfSpec,
    PinValue, Side,
};
use crate::model::{
    build_system, Capability, ModelError, Operand, OperandFlow, Process, ProcessKind, Resource,
    ResourceKind, SystemModel,
};
use crate::sd::{AuxDef, Auxiliary, Endpoint, ExoSource, ExoTrack, Flow, Stock, StockFlowModel};
use crate::series::SeriesTable;

pub const LAKE: &str = "V_Mono";
pub const AQUIFER: &str = "V_Aqui";
pub const PRECIP: &str = "precip_ft_yr";
pub const TEMP: &str = "temp";
pub const SGR: &str = "sgr_kaf_yr";
pub const SERIES_SCHEMA: [&str; 3] = [PRECIP, TEMP, SGR];

/// Capability ids, which double as stock-flow flow names.
pub const FLOWS: [&str; 6] = ["V_P", "V_FPDP", "V_Evap", "V_GWWith", "V_Perc", "V_GDis"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonoError {
    #[error("specific gravity undefined at zero lake volume")]
    DivisionByZero,
    #[error("exogenous series has {len} steps, horizon {horizon} needs {needed}")]
    ShortSeries {
        len: usize,
        horizon: usize,
        needed: usize,
    },
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("parameter `{0}` must be finite")]
    NonFinite(String),
    #[error("initial volume `{0}` must be positive")]
    NonPositiveVolume(String),
    #[error("exogenous table: {0}")]
    MissingColumn(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonoParams {
    pub lambda_perc: f64,
    pub lambda_fw: f64,
    pub rho_water: f64,
    pub m_tds: f64,
    pub v_la: f64,
    pub gw_with: f64,
    pub g_dis: f64,
    pub elevation_slope: f64,
    pub elevation_intercept: f64,
    pub area_slope: f64,
    pub area_intercept: f64,
    pub eta_t_slope: f64,
    pub eta_t_intercept: f64,
    pub eta_rho_slope: f64,
    pub eta_rho_intercept: f64,
    pub v_mono0: f64,
    pub v_aqui0: f64,
    pub dt: f64,
}

impl Default for MonoParams {
    fn default() -> Self {
        Self {
            lambda_perc: 0.01,
            lambda_fw: 3.75,
            rho_water: 1.36,
            m_tds: 250.0,
            v_la: 16.0,
            gw_with: 6800.0,
            g_dis: 0.0,
            elevation_slope: 0.0265,
            elevation_intercept: 6288.5,
            area_slope: 0.008,
            area_intercept: 15.44,
            eta_t_slope: 0.06,
            eta_t_intercept: -0.08,
            eta_rho_slope: -0.9,
            eta_rho_intercept: 1.9,
            v_mono0: 2228.0,
            v_aqui0: 6800.0,
            dt: 1.0,
        }
    }
}

macro_rules! param_table {
    ($($key:literal => $field:ident),* $(,)?) => {
        impl MonoParams {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Flat key/value view, as stored in model files.
            pub fn to_map(&self) -> DeviceParams {
                let mut m = BTreeMap::new();
                $(m.insert($key.to_string(), self.$field);)*
                m
            }

            /// Defaults overridden by `map`; unknown keys are rejected.
            pub fn from_map(map: &DeviceParams) -> Result<Self, MonoError> {
                let mut p = Self::default();
                for (k, &v) in map {
                    if !v.is_finite() {
                        return Err(MonoError::NonFinite(k.clone()));
                    }
                    match k.as_str() {
                        $($key => p.$field = v,)*
                        other => return Err(MonoError::UnknownParameter(other.to_string())),
                    }
                }
                Ok(p)
            }
        }
    };
}

param_table! {
    "lambda_perc" => lambda_perc,
    "lambda_fw" => lambda_fw,
    "rho_water" => rho_water,
    "m_tds" => m_tds,
    "v_la" => v_la,
    "gw_with" => gw_with,
    "g_dis" => g_dis,
    "elevation_slope" => elevation_slope,
    "elevation_intercept" => elevation_intercept,
    "area_slope" => area_slope,
    "area_intercept" => area_intercept,
    "eta_t_slope" => eta_t_slope,
    "eta_t_intercept" => eta_t_intercept,
    "eta_rho_slope" => eta_rho_slope,
    "eta_rho_intercept" => eta_rho_intercept,
    "v_mono0" => v_mono0,
    "v_aqui0" => v_aqui0,
    "dt" => dt,
}

impl MonoParams {
    /// Lake elevation, ft.
    pub fn elevation(&self, v: f64) -> f64 {
        self.elevation_slope * v + self.elevation_intercept
    }

    /// Lake surface area, kilo-acres.
    pub fn surface_area(&self, v: f64) -> f64 {
        self.area_slope * v + self.area_intercept
    }

    pub fn specific_gravity(&self, v: f64) -> Result<f64, MonoError> {
        if v == 0.0 {
            return Err(MonoError::DivisionByZero);
        }
        Ok((self.rho_water * v + self.m_tds) / (self.rho_water * v))
    }

    pub fn eta_t(&self, t: f64) -> f64 {
        self.eta_t_slope * t + self.eta_t_intercept
    }

    pub fn eta_rho(&self, rho: f64) -> f64 {
        self.eta_rho_slope * rho + self.eta_rho_intercept
    }

    /// Evaporation rate, ft/yr. Negative for very low temperatures.
    pub fn evap_rate(&self, eta_rho: f64, eta_t: f64) -> f64 {
        self.lambda_fw * eta_rho * eta_t
    }

    /// The six flows in [`FLOWS`] order.
    pub fn flows(
        &self,
        v_mono: f64,
        precip: f64,
        temp: f64,
        sgr: f64,
    ) -> Result<[f64; 6], MonoError> {
        let area = self.surface_area(v_mono);
        let rho = self.specific_gravity(v_mono)?;
        let lambda = self.evap_rate(self.eta_rho(rho), self.eta_t(temp));
        Ok([
            precip * area,
            sgr - self.v_la,
            lambda * area,
            self.gw_with,
            self.lambda_perc * v_mono,
            self.g_dis,
        ])
    }
}

pub fn elevation(v: f64) -> f64 {
    MonoParams::default().elevation(v)
}

pub fn surface_area(v: f64) -> f64 {
    MonoParams::default().surface_area(v)
}

pub fn specific_gravity(v: f64) -> Result<f64, MonoError> {
    MonoParams::default().specific_gravity(v)
}

pub fn eta_t(t: f64) -> f64 {
    MonoParams::default().eta_t(t)
}

pub fn eta_rho(rho: f64) -> f64 {
    MonoParams::default().eta_rho(rho)
}

pub fn evap_rate(eta_rho: f64, eta_t: f64) -> f64 {
    MonoParams::default().evap_rate(eta_rho, eta_t)
}

/// Per-step precipitation, temperature and Sierra gauged runoff.
#[derive(Debug, Clone, PartialEq)]
pub struct ExogenousSeries {
    pub precip: Vec<f64>,
    pub temp: Vec<f64>,
    pub sgr: Vec<f64>,
}

impl ExogenousSeries {
    pub fn constant(steps: usize, precip: f64, temp: f64, sgr: f64) -> Self {
        Self {
            precip: vec![precip; steps],
            temp: vec![temp; steps],
            sgr: vec![sgr; steps],
        }
    }

    pub fn len(&self) -> usize {
        self.precip.len().min(self.temp.len()).min(self.sgr.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_table(table: &SeriesTable) -> Result<Self, MonoError> {
        let col = |n: &str| {
            table
                .column(n)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| MonoError::MissingColumn(n.into()))
        };
        Ok(Self {
            precip: col(PRECIP)?,
            temp: col(TEMP)?,
            sgr: col(SGR)?,
        })
    }

    pub fn to_table(&self) -> SeriesTable {
        let n = self.len();
        SeriesTable::new(
            SERIES_SCHEMA.iter().map(|s| s.to_string()).collect(),
            vec![
                self.precip[..n].to_vec(),
                self.temp[..n].to_vec(),
                self.sgr[..n].to_vec(),
            ],
        )
    }
}

/// Water, a lake, an aquifer, a percolator and a groundwater discharger.
pub fn system_model() -> Result<SystemModel, MonoError> {
    let water = || vec![OperandFlow::unit("water")];
    let transform = |id: &str, name: &str, inputs, outputs| Process {
        id: id.into(),
        name: name.into(),
        kind: ProcessKind::Transformation,
        inputs,
        outputs,
    };
    let processes = vec![
        transform(
            "accept_precipitation",
            "accept precipitated water",
            vec![],
            water(),
        ),
        transform(
            "accept_runoff",
            "accept flow past diversion point",
            vec![],
            water(),
        ),
        transform("evaporate", "evaporate water", water(), vec![]),
        transform("withdraw", "withdraw groundwater", water(), vec![]),
        Process {
            id: "transport_lake_aquifer".into(),
            name: "transport water from lake to aquifer".into(),
            kind: ProcessKind::RefinedTransportation,
            inputs: water(),
            outputs: water(),
        },
        Process {
            id: "transport_aquifer_lake".into(),
            name: "transport water from aquifer to lake".into(),
            kind: ProcessKind::RefinedTransportation,
            inputs: water(),
            outputs: water(),
        },
    ];
    let resources = vec![
        Resource::new("mono_lake", "Mono Lake", ResourceKind::Transformation),
        Resource::new(
            "mono_aquifer",
            "Mono Aquifer",
            ResourceKind::IndependentBuffer,
        ),
        Resource::new(
            "percolator",
            "Mono Lake Percolator",
            ResourceKind::Transportation,
        ),
        Resource::new(
            "discharger",
            "Mono Groundwater Discharger",
            ResourceKind::Transportation,
        ),
    ];
    let cap =
        |id: &str, resource: &str, process: &str, origin: &str, destination: &str| Capability {
            id: id.into(),
            resource: resource.into(),
            process: process.into(),
            origin: origin.into(),
            destination: destination.into(),
            duration: 0,
        };
    let capabilities = vec![
        cap(
            "V_P",
            "mono_lake",
            "accept_precipitation",
            "mono_lake",
            "mono_lake",
        ),
        cap(
            "V_FPDP",
            "mono_lake",
            "accept_runoff",
            "mono_lake",
            "mono_lake",
        ),
        cap("V_Evap", "mono_lake", "evaporate", "mono_lake", "mono_lake"),
        cap(
            "V_GWWith",
            "mono_aquifer",
            "withdraw",
            "mono_aquifer",
            "mono_aquifer",
        ),
        cap(
            "V_Perc",
            "percolator",
            "transport_lake_aquifer",
            "mono_lake",
            "mono_aquifer",
        ),
        cap(
            "V_GDis",
            "discharger",
            "transport_aquifer_lake",
            "mono_aquifer",
            "mono_lake",
        ),
    ];
    Ok(build_system(
        vec![Operand::new("water", "Water")],
        resources,
        processes,
        capabilities,
    )?)
}

/// Auxiliary variables in declaration order.
pub const AUX: [&str; 10] = [
    "P",
    "V_SGR",
    "T",
    "H",
    "A_S",
    "rho_bar",
    "eta_T",
    "eta_rho",
    "lambda_Evap",
    "V_LA",
];

/// Device models relating flows to the lake state and exogenous tracks.
pub fn device_set(p: &MonoParams) -> DeviceSet {
    use DeviceBlock::{Auxiliary as Aux, Primary};
    let p = p.clone();
    let (es, ei) = (p.elevation_slope, p.elevation_intercept);
    let (as_, ai) = (p.area_slope, p.area_intercept);
    let (rw, tds) = (p.rho_water, p.m_tds);
    let (ts, ti) = (p.eta_t_slope, p.eta_t_intercept);
    let (rs, ri) = (p.eta_rho_slope, p.eta_rho_intercept);
    let (fw, perc, la) = (p.lambda_fw, p.lambda_perc, p.v_la);
    let models = vec![
        DeviceModel::assign("precipitation", Primary, "P", &[PRECIP], true, |a| a[0]),
        DeviceModel::assign("runoff", Primary, "V_SGR", &[SGR], true, |a| a[0]),
        DeviceModel::assign("elevation", Primary, "H", &[LAKE], true, move |a| {
            es * a[0] + ei
        }),
        DeviceModel::assign("surface-area", Primary, "A_S", &[LAKE], true, move |a| {
            as_ * a[0] + ai
        }),
        DeviceModel::assign(
            "evaporation-rate",
            Primary,
            "lambda_Evap",
            &["eta_rho", "eta_T"],
            false,
            move |a| fw * a[0] * a[1],
        ),
        DeviceModel::assign(
            "specific-gravity",
            Primary,
            "rho_bar",
            &[LAKE],
            false,
            move |a| (rw * a[0] + tds) / (rw * a[0]),
        ),
        DeviceModel::assign(
            "precipitation-inflow",
            Primary,
            "U-:V_P",
            &["P", "A_S"],
            false,
            |a| a[0] * a[1],
        ),
        DeviceModel::assign(
            "percolation",
            Primary,
            "U-:V_Perc",
            &[LAKE],
            true,
            move |a| perc * a[0],
        ),
        DeviceModel::assign(
            "evaporation",
            Primary,
            "U-:V_Evap",
            &["lambda_Evap", "A_S"],
            false,
            |a| a[0] * a[1],
        ),
        DeviceModel::assign(
            "diversion",
            Primary,
            "U-:V_FPDP",
            &["V_SGR", "V_LA"],
            true,
            |a| a[0] - a[1],
        ),
        DeviceModel::assign("temperature", Aux, "T", &[TEMP], true, |a| a[0]),
        DeviceModel::assign("temperature-effect", Aux, "eta_T", &["T"], true, move |a| {
            ts * a[0] + ti
        }),
        DeviceModel::assign(
            "salinity-effect",
            Aux,
            "eta_rho",
            &["rho_bar"],
            true,
            move |a| rs * a[0] + ri,
        ),
        DeviceModel::assign("export", Aux, "V_LA", &[], true, move |_| la),
    ];
    DeviceSet {
        aux_names: AUX.iter().map(|s| s.to_string()).collect(),
        models,
    }
}

pub fn device_set_from_params(params: &DeviceParams) -> Result<DeviceSet, String> {
    MonoParams::from_map(params)
        .map(|p| device_set(&p))
        .map_err(|e| e.to_string())
}

/// HFNMCF specification: pins, initial volumes and device models.
pub fn hfnmcf_spec(
    p: &MonoParams,
    exo: &ExogenousSeries,
    horizon: usize,
) -> Result<HfnmcfSpec, MonoError> {
    check_series(exo, horizon)?;
    for (name, v) in [(LAKE, p.v_mono0), (AQUIFER, p.v_aqui0)] {
        if !(v > 0.0) {
            return Err(MonoError::NonPositiveVolume(name.into()));
        }
    }
    let mut spec = HfnmcfSpec::new(horizon, p.dt);
    spec.place_names = Some(vec![LAKE.into(), AQUIFER.into()]);
    spec.exogenous = exo.to_table();
    spec.boundary = vec![
        BoundaryPin {
            capability: "V_GWWith".into(),
            side: Side::Input,
            value: PinValue::Constant(p.gw_with),
        },
        BoundaryPin {
            capability: "V_GDis".into(),
            side: Side::Input,
            value: PinValue::Constant(p.g_dis),
        },
    ];
    spec.initial = vec![
        Condition {
            variable: LAKE.into(),
            value: p.v_mono0,
        },
        Condition {
            variable: AQUIFER.into(),
            value: p.v_aqui0,
        },
    ];
    spec.devices = device_set(p);
    Ok(spec)
}

fn check_series(exo: &ExogenousSeries, horizon: usize) -> Result<(), MonoError> {
    if exo.len() < horizon + 1 {
        return Err(MonoError::ShortSeries {
            len: exo.len(),
            horizon,
            needed: horizon + 1,
        });
    }
    Ok(())
}

/// The same lake as a two-stock model, independent of the HFGT machinery.
pub fn stock_flow_model(
    p: &MonoParams,
    exo: &ExogenousSeries,
    horizon: usize,
) -> Result<StockFlowModel, MonoError> {
    check_series(exo, horizon)?;
    let e = |s: String| parse_expr(&s).expect("generated expression parses");
    let n = |v: f64| format!("({v:?})");
    let aux = |name: &str, expr: String| Auxiliary {
        name: name.into(),
        def: AuxDef::Expr(e(expr)),
    };
    let stock = |name: &str| Endpoint::Stock(name.into());
    let flow = |name: &str, from, to, rate: String| Flow {
        name: name.into(),
        from,
        to,
        rate: e(rate),
    };
    let series = |name: &str, v: &[f64]| ExoTrack {
        name: name.into(),
        source: ExoSource::Series(v.to_vec()),
    };
    Ok(StockFlowModel {
        stocks: vec![
            Stock {
                name: LAKE.into(),
                initial: p.v_mono0,
                units: "KAF".into(),
            },
            Stock {
                name: AQUIFER.into(),
                initial: p.v_aqui0,
                units: "KAF".into(),
            },
        ],
        flows: vec![
            flow(
                "V_P",
                Endpoint::Boundary,
                stock(LAKE),
                format!("{PRECIP} * A_S"),
            ),
            flow(
                "V_FPDP",
                Endpoint::Boundary,
                stock(LAKE),
                format!("{SGR} - {}", n(p.v_la)),
            ),
            flow(
                "V_Evap",
                stock(LAKE),
                Endpoint::Boundary,
                "lambda_Evap * A_S".into(),
            ),
            flow(
                "V_GWWith",
                stock(AQUIFER),
                Endpoint::Boundary,
                "GWWith".into(),
            ),
            flow(
                "V_Perc",
                stock(LAKE),
                stock(AQUIFER),
                format!("{} * {LAKE}", n(p.lambda_perc)),
            ),
            flow("V_GDis", stock(AQUIFER), stock(LAKE), "GDis".into()),
        ],
        auxiliaries: vec![
            aux(
                "H",
                format!(
                    "{} * {LAKE} + {}",
                    n(p.elevation_slope),
                    n(p.elevation_intercept)
                ),
            ),
            aux(
                "A_S",
                format!("{} * {LAKE} + {}", n(p.area_slope), n(p.area_intercept)),
            ),
            aux(
                "rho_bar",
                format!(
                    "({} * {LAKE} + {}) / ({} * {LAKE})",
                    n(p.rho_water),
                    n(p.m_tds),
                    n(p.rho_water)
                ),
            ),
            aux(
                "eta_T",
                format!("{} * {TEMP} + {}", n(p.eta_t_slope), n(p.eta_t_intercept)),
            ),
            aux(
                "eta_rho",
                format!(
                    "{} * rho_bar + {}",
                    n(p.eta_rho_slope),
                    n(p.eta_rho_intercept)
                ),
            ),
            aux(
                "lambda_Evap",
                format!("{} * eta_rho * eta_T", n(p.lambda_fw)),
            ),
        ],
        exogenous: vec![
            series(PRECIP, &exo.precip[..=horizon]),
            series(TEMP, &exo.temp[..=horizon]),
            series(SGR, &exo.sgr[..=horizon]),
            ExoTrack {
                name: "GWWith".into(),
                source: ExoSource::Constant(p.gw_with),
            },
            ExoTrack {
                name: "GDis".into(),
                source: ExoSource::Constant(p.g_dis),
            },
        ],
        dt: p.dt,
        horizon,
    })
}

/// All three representations from one parameter set.
pub fn build_monolake(
    p: &MonoParams,
    exo: &ExogenousSeries,
    horizon: usize,
) -> Result<(SystemModel, HfnmcfSpec, StockFlowModel), MonoError> {
    Ok((
        system_model()?,
        hfnmcf_spec(p, exo, horizon)?,
        stock_flow_model(p, exo, horizon)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_map() {
        let p = MonoParams::default();
        assert_eq!(MonoParams::from_map(&p.to_map()).unwrap(), p);
        let mut m = DeviceParams::new();
        m.insert("bogus".into(), 1.0);
        assert!(matches!(
            MonoParams::from_map(&m),
            Err(MonoError::UnknownParameter(_))
        ));
    }

    #[test]
    fn flow_examples() {
        let p = MonoParams::default();
        let f = p.flows(1000.0, 0.0, 18.0, 16.0).unwrap();
        assert_eq!(f[0], 0.0);
        assert_eq!(f[1], 0.0);
        assert!((f[4] - 10.0).abs() < 1e-12);
        let f = p.flows(1000.0, 1.0, 18.0, 150.0).unwrap();
        assert!((f[0] - 23.44).abs() < 1e-12);
        assert_eq!(f[1], 134.0);
        assert_eq!(
            p.flows(0.0, 1.0, 18.0, 150.0),
            Err(MonoError::DivisionByZero)
        );
    }

    #[test]
    fn short_series_rejected() {
        let exo = ExogenousSeries::constant(3, 1.0, 18.0, 150.0);
        assert!(matches!(
            build_monolake(&MonoParams::default(), &exo, 3),
            Err(MonoError::ShortSeries {
                len: 3,
                needed: 4,
                ..
            })
        ));
    }
}
