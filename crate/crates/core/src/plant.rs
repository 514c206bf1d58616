//! Reference capture plant: an absorber and a desorber column (five well-mixed
//! stages each), a lean/rich heat exchanger and a reboiler.
//!
//! The model keeps the state layout, the input channels and the term structure
//! of a post-combustion capture plant but replaces the solvent property
//! correlations by lumped closed-form rate expressions:
//!
//! * liquid moves down and gas moves up each column; the axial derivative is
//!   first-order upwind, so the liquid terms read `+F_L/S_c * dC/dl` and the gas
//!   terms `-F_G/S_c * dC/dl` with `l` the height above the column bottom;
//! * interphase transfer of N2, CO2, MEA and H2O is bilinear in the phase
//!   concentrations, with an exponential temperature factor on the liquid-side
//!   equilibrium terms (this is where the algebraic property states live);
//! * stage temperatures carry transport, interphase heat exchange and the heat
//!   released by CO2 absorption and water condensation, divided by the phase
//!   heat capacity `sum_i C(i) * Cp_i`;
//! * the exchanger sides and the reboiler follow the usual
//!   `flow * (T_in - T) + duty` energy balances.
//!
//! Stage index 0 is the column bottom. The desorber is fed with the absorber
//! bottoms (rich solvent at the exchanger tube outlet temperature) and the
//! absorber top is fed with desorber bottoms (lean solvent) blended with fresh
//! make-up solvent and trim-cooled. The make-up stream removes the solvent
//! inventory conservation law, which gives an isolated steady state.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Result, RomError};

pub const NUM_INPUTS: usize = 3;
pub const NUM_SPECIES: usize = 4;
pub const SPECIES_NAMES: [&str; NUM_SPECIES] = ["N2", "CO2", "MEA", "H2O"];

const N2: usize = 0;
const CO2: usize = 1;
const MEA: usize = 2;
const H2O: usize = 3;

pub const ABSORBER: usize = 0;
pub const DESORBER: usize = 1;

/// Index arithmetic for the flat state vector.
///
/// Per column, with `S` stages: liquid species blocks (`4 * S`), liquid
/// temperature (`S`), gas species blocks (`4 * S`), gas temperature (`S`). The
/// absorber comes first, then the desorber, then `T_h1`, `T_h2`, `T_reb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub stages: usize,
}

impl StateLayout {
    pub fn new(stages: usize) -> Self {
        Self { stages }
    }

    pub fn column_len(&self) -> usize {
        10 * self.stages
    }

    pub fn dim(&self) -> usize {
        2 * self.column_len() + 3
    }

    pub fn column_offset(&self, column: usize) -> usize {
        column * self.column_len()
    }

    pub fn liquid(&self, column: usize, species: usize, stage: usize) -> usize {
        self.column_offset(column) + species * self.stages + stage
    }

    pub fn liquid_temp(&self, column: usize, stage: usize) -> usize {
        self.column_offset(column) + 4 * self.stages + stage
    }

    pub fn gas(&self, column: usize, species: usize, stage: usize) -> usize {
        self.column_offset(column) + 5 * self.stages + species * self.stages + stage
    }

    pub fn gas_temp(&self, column: usize, stage: usize) -> usize {
        self.column_offset(column) + 9 * self.stages + stage
    }

    pub fn t_h1(&self) -> usize {
        2 * self.column_len()
    }

    pub fn t_h2(&self) -> usize {
        2 * self.column_len() + 1
    }

    pub fn t_reb(&self) -> usize {
        2 * self.column_len() + 2
    }

    pub fn is_temperature(&self, index: usize) -> bool {
        if index >= 2 * self.column_len() {
            return index < self.dim();
        }
        let within = index % self.column_len();
        let block = within / self.stages;
        block == 4 || block == 9
    }

    /// Zero-based indices of every temperature state, in state order.
    pub fn temperature_indices(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.is_temperature(i)).collect()
    }

    /// Human-readable label, e.g. `absorber.CL(CO2)[2]` or `T_reb`.
    pub fn label(&self, index: usize) -> String {
        if index == self.t_h1() {
            return "T_h1".into();
        }
        if index == self.t_h2() {
            return "T_h2".into();
        }
        if index == self.t_reb() {
            return "T_reb".into();
        }
        let column = if index < self.column_len() { "absorber" } else { "desorber" };
        let within = index % self.column_len();
        let block = within / self.stages;
        let stage = within % self.stages;
        let what = match block {
            0..=3 => format!("CL({})", SPECIES_NAMES[block]),
            4 => "TL".to_string(),
            5..=8 => format!("CG({})", SPECIES_NAMES[block - 5]),
            _ => "TG".to_string(),
        };
        format!("{column}.{what}[{}]", stage + 1)
    }
}

/// Manipulated inputs `[F_L (L/s), Q_reb (kJ/s), F_G (m^3/s)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Input(pub [f64; NUM_INPUTS]);

impl Input {
    pub fn new(solvent_flow: f64, reboiler_duty: f64, flue_gas_flow: f64) -> Self {
        Input([solvent_flow, reboiler_duty, flue_gas_flow])
    }

    pub fn solvent_flow(&self) -> f64 {
        self.0[0]
    }

    pub fn reboiler_duty(&self) -> f64 {
        self.0[1]
    }

    pub fn flue_gas_flow(&self) -> f64 {
        self.0[2]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Lumped transport coefficients of one column (1/s per unit of flow).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnFlow {
    pub liquid: f64,
    pub gas: f64,
}

/// Interphase transfer and equilibrium constants of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransfer {
    /// Transfer rate gain per species (N2, CO2, MEA, H2O).
    pub rate_gains: [f64; NUM_SPECIES],
    /// CO2 back-pressure constant at the reference temperature.
    pub co2_equilibrium: f64,
    /// Gas/liquid heat transfer coefficient (kJ/(m^3 s K)).
    pub heat_transfer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatGains {
    /// Exchanger through-flow rate per unit of solvent flow.
    pub exchanger_flow: f64,
    /// Exchanger UA over tube-side heat capacity.
    pub exchanger_tube: f64,
    /// Exchanger UA over shell-side heat capacity.
    pub exchanger_shell: f64,
    /// Reboiler through-flow rate per unit of solvent flow.
    pub reboiler_flow: f64,
    /// Temperature rise rate per unit of reboiler duty.
    pub reboiler_duty: f64,
    /// Reboiler ambient loss rate.
    pub reboiler_loss: f64,
    /// Trim-cooler effectiveness on the lean stream, in [0, 1].
    pub trim_cooler: f64,
}

/// Inlet compositions and fixed physical constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantConstants {
    pub flue_gas: [f64; NUM_SPECIES],
    pub flue_gas_temp: f64,
    pub fresh_solvent: [f64; NUM_SPECIES],
    pub makeup_fraction: f64,
    pub vapor_base: [f64; NUM_SPECIES],
    pub vapor_temp_sensitivity: f64,
    pub vapor_flow_per_duty: f64,
    pub reference_temp: f64,
    pub reboiler_reference_temp: f64,
    pub cooling_water_temp: f64,
    pub ambient_temp: f64,
    pub n2_solubility: f64,
    pub mea_volatility: f64,
    pub water_volatility: f64,
    pub co2_temp_sensitivity: f64,
    pub volatility_temp_sensitivity: f64,
    pub mea_reference: f64,
    pub heat_of_absorption: f64,
    pub heat_of_vaporization: f64,
    pub liquid_heat_capacity: [f64; NUM_SPECIES],
    pub gas_heat_capacity: [f64; NUM_SPECIES],
    pub liquid_holdup: f64,
    pub gas_holdup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    pub stages_per_column: usize,
    /// Absorber, desorber.
    pub column_flow_coefficients: [ColumnFlow; 2],
    pub reaction_rate_gains: [ColumnTransfer; 2],
    pub heat_transfer_gains: HeatGains,
    pub constants: PlantConstants,
    /// `[lo, hi]` per input channel.
    pub input_bounds: [[f64; 2]; NUM_INPUTS],
    pub sample_interval_s: f64,
    pub integrator_substeps: usize,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            stages_per_column: 5,
            column_flow_coefficients: [
                ColumnFlow { liquid: 0.009, gas: 0.05 },
                ColumnFlow { liquid: 0.009, gas: 0.04 },
            ],
            reaction_rate_gains: [
                ColumnTransfer {
                    rate_gains: [0.02, 0.13, 0.05, 0.05],
                    co2_equilibrium: 5.0e-4,
                    heat_transfer: 0.02,
                },
                ColumnTransfer {
                    rate_gains: [0.02, 0.13, 0.05, 0.05],
                    co2_equilibrium: 5.0e-3,
                    heat_transfer: 0.02,
                },
            ],
            heat_transfer_gains: HeatGains {
                exchanger_flow: 0.0175,
                exchanger_tube: 0.01,
                exchanger_shell: 0.01,
                reboiler_flow: 0.005,
                reboiler_duty: 0.8,
                reboiler_loss: 2.0e-4,
                trim_cooler: 0.7,
            },
            constants: PlantConstants {
                flue_gas: [30.0, 5.0, 0.0, 2.0],
                flue_gas_temp: 320.0,
                fresh_solvent: [0.0, 200.0, 5000.0, 40000.0],
                makeup_fraction: 0.1,
                vapor_base: [0.05, 2.0, 0.02, 50.0],
                vapor_temp_sensitivity: 0.02,
                vapor_flow_per_duty: 5.0,
                reference_temp: 330.0,
                reboiler_reference_temp: 390.0,
                cooling_water_temp: 313.0,
                ambient_temp: 300.0,
                n2_solubility: 0.02,
                mea_volatility: 2.0e-6,
                water_volatility: 1.2e-4,
                co2_temp_sensitivity: 0.03,
                volatility_temp_sensitivity: 0.045,
                mea_reference: 4000.0,
                heat_of_absorption: 85.0,
                heat_of_vaporization: 40.0,
                liquid_heat_capacity: [0.029, 0.037, 0.17, 0.075],
                gas_heat_capacity: [0.029, 0.037, 0.17, 0.034],
                liquid_holdup: 1.0,
                gas_holdup: 1.0,
            },
            input_bounds: [[0.48, 0.66], [0.14, 0.20], [0.8, 1.2]],
            sample_interval_s: 30.0,
            integrator_substeps: 10,
        }
    }
}

impl PlantConfig {
    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.stages_per_column)
    }

    pub fn state_dim(&self) -> usize {
        self.layout().dim()
    }

    /// Midpoint of the input bounds.
    pub fn nominal_input(&self) -> Input {
        let mut u = [0.0; NUM_INPUTS];
        for (ui, [lo, hi]) in u.iter_mut().zip(self.input_bounds) {
            *ui = 0.5 * (lo + hi);
        }
        Input(u)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages_per_column == 0 {
            return Err(RomError::config("stages_per_column must be at least 1"));
        }
        if !(self.sample_interval_s > 0.0) {
            return Err(RomError::config("sample_interval_s must be positive"));
        }
        if self.integrator_substeps == 0 {
            return Err(RomError::config("integrator_substeps must be at least 1"));
        }
        for (k, [lo, hi]) in self.input_bounds.iter().enumerate() {
            if !(lo <= hi) {
                return Err(RomError::config(format!("input channel {k}: bounds [{lo}, {hi}] are inverted")));
            }
        }
        Ok(())
    }

    pub fn check_input(&self, u: &Input) -> Result<()> {
        for (k, (&v, [lo, hi])) in u.0.iter().zip(self.input_bounds).enumerate() {
            if !(v >= lo && v <= hi) {
                return Err(RomError::contract(format!("input channel {k} = {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Rejects states with negative concentrations or non-positive temperatures.
pub fn check_physical(layout: StateLayout, x: &DVector<f64>) -> Result<()> {
    ensure_len("plant state", x.len(), layout.dim())?;
    for (i, &v) in x.iter().enumerate() {
        let ok = if layout.is_temperature(i) { v > 0.0 } else { v >= 0.0 };
        if !ok || !v.is_finite() {
            return Err(RomError::contract(format!("state {} ({}) = {v} is not physical", i + 1, layout.label(i))));
        }
    }
    Ok(())
}

/// Phase inlet streams of one column.
struct Inlets {
    liquid: [f64; NUM_SPECIES],
    liquid_temp: f64,
    gas: [f64; NUM_SPECIES],
    gas_temp: f64,
    liquid_rate: f64,
    gas_rate: f64,
}

fn column_inlets(config: &PlantConfig, x: &[f64], u: &Input, column: usize) -> Inlets {
    let lay = config.layout();
    let c = &config.constants;
    let flow = config.column_flow_coefficients[column];
    let liquid_rate = flow.liquid * u.solvent_flow();
    if column == ABSORBER {
        let t_h2 = x[lay.t_h2()];
        let mut liquid = [0.0; NUM_SPECIES];
        for (s, l) in liquid.iter_mut().enumerate() {
            *l = (1.0 - c.makeup_fraction) * x[lay.liquid(DESORBER, s, 0)] + c.makeup_fraction * c.fresh_solvent[s];
        }
        Inlets {
            liquid,
            liquid_temp: t_h2 - config.heat_transfer_gains.trim_cooler * (t_h2 - c.cooling_water_temp),
            gas: c.flue_gas,
            gas_temp: c.flue_gas_temp,
            liquid_rate,
            gas_rate: flow.gas * u.flue_gas_flow(),
        }
    } else {
        let t_reb = x[lay.t_reb()];
        let shift = (c.vapor_temp_sensitivity * (t_reb - c.reboiler_reference_temp)).exp();
        let mut liquid = [0.0; NUM_SPECIES];
        for (s, l) in liquid.iter_mut().enumerate() {
            *l = x[lay.liquid(ABSORBER, s, 0)];
        }
        Inlets {
            liquid,
            liquid_temp: x[lay.t_h1()],
            gas: c.vapor_base.map(|v| v * shift),
            gas_temp: t_reb,
            liquid_rate,
            gas_rate: flow.gas * c.vapor_flow_per_duty * u.reboiler_duty(),
        }
    }
}

/// Upwind transport for one stage-profile block: liquid enters at the top,
/// gas at the bottom.
fn add_liquid_transport(out: &mut [f64], profile: &[f64], inlet: f64, rate: f64) {
    let n = profile.len();
    for j in 0..n {
        let above = if j + 1 < n { profile[j + 1] } else { inlet };
        out[j] += rate * (above - profile[j]);
    }
}

fn add_gas_transport(out: &mut [f64], profile: &[f64], inlet: f64, rate: f64) {
    for j in 0..profile.len() {
        let below = if j > 0 { profile[j - 1] } else { inlet };
        out[j] -= rate * (profile[j] - below);
    }
}

/// Which term groups `plant_derivative` evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terms {
    All,
    TransportOnly,
}

pub fn plant_derivative(config: &PlantConfig, x: &DVector<f64>, u: &Input) -> Result<DVector<f64>> {
    plant_derivative_terms(config, x, u, Terms::All)
}

pub fn plant_derivative_terms(config: &PlantConfig, x: &DVector<f64>, u: &Input, terms: Terms) -> Result<DVector<f64>> {
    let lay = config.layout();
    ensure_len("plant state", x.len(), lay.dim())?;
    let mut dx = DVector::zeros(lay.dim());
    derivative_into(config, x.as_slice(), u, terms, dx.as_mut_slice());
    if let Some(index) = dx.iter().position(|v| !v.is_finite()) {
        return Err(RomError::NumericalDomain { index: index + 1, context: lay.label(index) });
    }
    Ok(dx)
}

fn derivative_into(config: &PlantConfig, x: &[f64], u: &Input, terms: Terms, dx: &mut [f64]) {
    let lay = config.layout();
    let s_n = lay.stages;
    let c = &config.constants;
    for column in [ABSORBER, DESORBER] {
        let inlets = column_inlets(config, x, u, column);
        let off = lay.column_offset(column);
        let block = |b: usize| off + b * s_n..off + (b + 1) * s_n;

        for s in 0..NUM_SPECIES {
            let r = block(s);
            add_liquid_transport(&mut dx[r.clone()], &x[r], inlets.liquid[s], inlets.liquid_rate);
            let r = block(5 + s);
            add_gas_transport(&mut dx[r.clone()], &x[r], inlets.gas[s], inlets.gas_rate);
        }
        let r = block(4);
        add_liquid_transport(&mut dx[r.clone()], &x[r], inlets.liquid_temp, inlets.liquid_rate);
        let r = block(9);
        add_gas_transport(&mut dx[r.clone()], &x[r], inlets.gas_temp, inlets.gas_rate);

        if terms == Terms::TransportOnly {
            continue;
        }

        let tr = &config.reaction_rate_gains[column];
        for j in 0..s_n {
            let cl: [f64; NUM_SPECIES] = std::array::from_fn(|s| x[off + s * s_n + j]);
            let cg: [f64; NUM_SPECIES] = std::array::from_fn(|s| x[off + (5 + s) * s_n + j]);
            let tl = x[off + 4 * s_n + j];
            let tg = x[off + 9 * s_n + j];

            let co2_k = tr.co2_equilibrium * (c.co2_temp_sensitivity * (tl - c.reference_temp)).exp();
            let vol = (c.volatility_temp_sensitivity * (tl - c.reference_temp)).exp();
            // Positive rates move material from gas to liquid.
            let rate = [
                tr.rate_gains[N2] * (c.n2_solubility * cg[N2] - cl[N2]),
                tr.rate_gains[CO2] * (cg[CO2] * cl[MEA] / c.mea_reference - co2_k * cl[CO2]),
                tr.rate_gains[MEA] * (cg[MEA] - c.mea_volatility * vol * cl[MEA]),
                tr.rate_gains[H2O] * (cg[H2O] - c.water_volatility * vol * cl[H2O]),
            ];
            for s in 0..NUM_SPECIES {
                dx[off + s * s_n + j] += c.liquid_holdup * rate[s];
                dx[off + (5 + s) * s_n + j] -= c.gas_holdup * rate[s];
            }
            // Absorbed CO2 binds free amine.
            dx[off + MEA * s_n + j] -= c.liquid_holdup * rate[CO2];

            let liquid_cap: f64 = cl.iter().zip(c.liquid_heat_capacity).map(|(a, b)| a * b).sum();
            let gas_cap: f64 = cg.iter().zip(c.gas_heat_capacity).map(|(a, b)| a * b).sum();
            let exchange = tr.heat_transfer * (tg - tl);
            let released = c.liquid_holdup * (c.heat_of_absorption * rate[CO2] + c.heat_of_vaporization * rate[H2O]);
            dx[off + 4 * s_n + j] += (exchange + released) / liquid_cap;
            dx[off + 9 * s_n + j] -= exchange / gas_cap;
        }
    }

    let h = &config.heat_transfer_gains;
    let f_l = u.solvent_flow();
    let (t_h1, t_h2, t_reb) = (x[lay.t_h1()], x[lay.t_h2()], x[lay.t_reb()]);
    let rich_out = x[lay.liquid_temp(ABSORBER, 0)];
    let lean_out = x[lay.liquid_temp(DESORBER, 0)];
    dx[lay.t_h1()] = h.exchanger_flow * f_l * (rich_out - t_h1);
    dx[lay.t_h2()] = h.exchanger_flow * f_l * (t_reb - t_h2);
    dx[lay.t_reb()] = h.reboiler_flow * f_l * (lean_out - t_reb);
    if terms == Terms::All {
        dx[lay.t_h1()] += h.exchanger_tube * (t_h2 - t_h1);
        dx[lay.t_h2()] += h.exchanger_shell * (t_h1 - t_h2);
        dx[lay.t_reb()] += h.reboiler_duty * u.reboiler_duty() - h.reboiler_loss * (t_reb - c.ambient_temp);
    }
}

/// Advances one sample interval with fixed-step RK4 and adds `process_noise`.
pub fn step(config: &PlantConfig, x: &DVector<f64>, u: &Input, process_noise: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    let n = config.state_dim();
    ensure_len("plant state", x.len(), n)?;
    if let Some(w) = process_noise {
        ensure_len("process noise", w.len(), n)?;
    }
    let mut out = x.clone();
    integrate(config, out.as_mut_slice(), u, Terms::All)?;
    if let Some(w) = process_noise {
        out += w;
    }
    Ok(out)
}

fn integrate(config: &PlantConfig, x: &mut [f64], u: &Input, terms: Terms) -> Result<()> {
    let n = x.len();
    let substeps = config.integrator_substeps;
    let h = config.sample_interval_s / substeps as f64;
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let eval = |state: &[f64], k: &mut [f64]| {
        k.fill(0.0);
        derivative_into(config, state, u, terms, k);
    };
    for substep in 0..substeps {
        eval(x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        eval(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        eval(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        eval(&tmp, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(RomError::IntegrationBlowup { substep, index: index + 1 });
        }
    }
    Ok(())
}

/// Transport-only discrete step; used to check the transport term group in
/// isolation.
pub fn step_transport_only(config: &PlantConfig, x: &DVector<f64>, u: &Input) -> Result<DVector<f64>> {
    ensure_len("plant state", x.len(), config.state_dim())?;
    let mut out = x.clone();
    integrate(config, out.as_mut_slice(), u, Terms::TransportOnly)?;
    Ok(out)
}

/// Linear state selection `y = x[selection] + v`. Indices are one-based.
pub fn measure(config: &PlantConfig, selection: &[usize], x: &DVector<f64>, noise: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    let n = config.state_dim();
    ensure_len("plant state", x.len(), n)?;
    validate_selection(selection, n)?;
    if let Some(v) = noise {
        ensure_len("measurement noise", v.len(), selection.len())?;
    }
    let mut y = DVector::from_iterator(selection.len(), selection.iter().map(|&i| x[i - 1]));
    if let Some(v) = noise {
        y += v;
    }
    Ok(y)
}

pub fn validate_selection(selection: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in selection {
        if i == 0 || i > n {
            return Err(RomError::config(format!("measurement index {i} outside [1, {n}]")));
        }
        if std::mem::replace(&mut seen[i - 1], true) {
            return Err(RomError::config(format!("measurement index {i} listed twice")));
        }
    }
    Ok(())
}

/// One-based indices of every temperature state.
pub fn temperature_selection(config: &PlantConfig) -> Vec<usize> {
    config.layout().temperature_indices().into_iter().map(|i| i + 1).collect()
}

/// Uniform column profiles built from the feed streams; the default starting
/// point for the steady-state search.
pub fn initial_guess(config: &PlantConfig) -> DVector<f64> {
    let lay = config.layout();
    let c = &config.constants;
    let mut x = DVector::zeros(lay.dim());
    for column in [ABSORBER, DESORBER] {
        let gas_temp = if column == ABSORBER { c.flue_gas_temp } else { c.reboiler_reference_temp };
        for j in 0..lay.stages {
            for s in 0..NUM_SPECIES {
                x[lay.liquid(column, s, j)] = c.fresh_solvent[s].max(1.0);
                x[lay.gas(column, s, j)] = if column == ABSORBER { c.flue_gas[s] } else { c.vapor_base[s] }.max(0.01);
            }
            x[lay.liquid_temp(column, j)] = c.reference_temp;
            x[lay.gas_temp(column, j)] = gas_temp;
        }
    }
    x[lay.t_h1()] = c.reference_temp;
    x[lay.t_h2()] = c.reference_temp;
    x[lay.t_reb()] = c.reboiler_reference_temp;
    x
}

#[derive(Debug, Clone, Copy)]
pub struct SteadyStateOptions {
    /// Samples integrated before the Newton polish starts.
    pub settle_samples: usize,
    pub newton_iterations: usize,
    pub tolerance: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        Self { settle_samples: 3000, newton_iterations: 30, tolerance: 1e-10 }
    }
}

pub fn steady_state(config: &PlantConfig, u_nominal: &Input) -> Result<DVector<f64>> {
    steady_state_from(config, u_nominal, &initial_guess(config), SteadyStateOptions::default())
}

/// Long-horizon integration from `x0`, then damped Newton on the derivative
/// with a finite-difference Jacobian.
pub fn steady_state_from(config: &PlantConfig, u: &Input, x0: &DVector<f64>, opts: SteadyStateOptions) -> Result<DVector<f64>> {
    config.validate()?;
    config.check_input(u)?;
    let n = config.state_dim();
    ensure_len("initial guess", x0.len(), n)?;
    let mut x = x0.clone();
    for _ in 0..opts.settle_samples {
        x = step(config, &x, u, None)?;
    }
    let max_abs = |v: &DVector<f64>| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let mut f = plant_derivative(config, &x, u)?;
    let mut res = max_abs(&f);
    for _ in 0..opts.newton_iterations {
        if res < opts.tolerance {
            return Ok(x);
        }
        let jac = derivative_jacobian(config, &x, u)?;
        let Some(dx) = jac.lu().solve(&(-&f)) else {
            break;
        };
        let mut alpha = 1.0;
        loop {
            let trial = &x + &dx * alpha;
            if let Ok(ft) = plant_derivative(config, &trial, u) {
                let r = max_abs(&ft);
                if r < res {
                    x = trial;
                    f = ft;
                    res = r;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return Err(RomError::SteadyState { residual: res, iterations: opts.newton_iterations });
            }
        }
    }
    if res < opts.tolerance {
        Ok(x)
    } else {
        Err(RomError::SteadyState { residual: res, iterations: opts.newton_iterations })
    }
}

/// Central-difference Jacobian of the continuous-time derivative.
pub fn derivative_jacobian(config: &PlantConfig, x: &DVector<f64>, u: &Input) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut xp = x.clone();
    for i in 0..n {
        let h = 1e-6 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = plant_derivative(config, &xp, u)?;
        xp[i] = x[i] - h;
        let fm = plant_derivative(config, &xp, u)?;
        xp[i] = x[i];
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    Ok(jac)
}
